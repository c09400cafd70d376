"""Finkelstein-Schoenfeld pairwise scoring for the death > CVH > function hierarchy.

Subjects are compared level by level:

1. all-cause death, when it is known which subject survived longer;
2. number of CV hospitalizations inside the shorter of the two follow-ups;
3. response on the 12-month functional test (missing counts as non-response).

Scores are computed on a columnar :class:`Cohort`; lists of
:class:`PatientRecord` are converted on the way in.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

FOLLOW_UP_MONTHS = 12.0


class Arm(str, enum.Enum):
    ACTIVE = "Active"
    CONTROL = "Control"


class DegenerateStatisticError(ValueError):
    """Raised when every pairwise score is zero, so the null variance vanishes."""


class InfiniteRatioError(ZeroDivisionError):
    """Raised when a win ratio has no losses in the denominator."""


@dataclass(frozen=True)
class PatientRecord:
    id: int
    arm: Arm
    follow_up_months: float
    death_time_months: Optional[float] = None
    cvh_event_times_months: tuple = ()
    functional_response: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "arm", Arm(self.arm))
        object.__setattr__(self, "cvh_event_times_months",
                           tuple(float(t) for t in self.cvh_event_times_months))
        fu = self.follow_up_months
        if not (0.0 <= fu <= FOLLOW_UP_MONTHS):
            raise ValueError(f"record {self.id}: follow_up_months={fu} outside [0, 12]")
        if self.death_time_months is not None and self.death_time_months != fu:
            raise ValueError(f"record {self.id}: death time must equal follow-up")
        times = self.cvh_event_times_months
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError(f"record {self.id}: CVH times not sorted")
        if times and (times[0] <= 0.0 or times[-1] > fu):
            raise ValueError(f"record {self.id}: CVH times must lie in (0, follow_up]")
        if self.functional_response is not None:
            if fu < FOLLOW_UP_MONTHS:
                raise ValueError(f"record {self.id}: response recorded before month 12")
            if self.functional_response not in (0, 1):
                raise ValueError(f"record {self.id}: response must be 0 or 1")

    @property
    def died(self) -> bool:
        return self.death_time_months is not None


@dataclass
class Cohort:
    """Columnar cohort. CVH times are stored CSR-style: subject ``i`` owns
    ``cvh_times[cvh_offsets[i]:cvh_offsets[i + 1]]``."""

    active: np.ndarray        # bool, Z_i
    follow_up: np.ndarray     # float
    died: np.ndarray          # bool
    response: np.ndarray      # int8, -1 = missing
    cvh_times: np.ndarray     # float, concatenated per subject
    cvh_offsets: np.ndarray   # int64, len n + 1
    ids: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.ids is None:
            self.ids = np.arange(1, len(self.active) + 1)

    def __len__(self):
        return len(self.active)

    @property
    def cvh_counts(self) -> np.ndarray:
        return np.diff(self.cvh_offsets)

    @classmethod
    def from_records(cls, records: Sequence[PatientRecord]) -> "Cohort":
        counts = [len(r.cvh_event_times_months) for r in records]
        offsets = np.zeros(len(records) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        times = [t for r in records for t in r.cvh_event_times_months]
        return cls(
            active=np.array([r.arm is Arm.ACTIVE for r in records], dtype=bool),
            follow_up=np.array([r.follow_up_months for r in records], dtype=float),
            died=np.array([r.died for r in records], dtype=bool),
            response=np.array([-1 if r.functional_response is None else r.functional_response
                               for r in records], dtype=np.int8),
            cvh_times=np.array(times, dtype=float),
            cvh_offsets=offsets,
            ids=np.array([r.id for r in records]),
        )

    def to_records(self) -> list[PatientRecord]:
        out = []
        for i in range(len(self)):
            fu = float(self.follow_up[i])
            resp = int(self.response[i])
            out.append(PatientRecord(
                id=int(self.ids[i]),
                arm=Arm.ACTIVE if self.active[i] else Arm.CONTROL,
                follow_up_months=fu,
                death_time_months=fu if self.died[i] else None,
                cvh_event_times_months=tuple(
                    float(t) for t in self.cvh_times[self.cvh_offsets[i]:self.cvh_offsets[i + 1]]),
                functional_response=None if resp < 0 else resp,
            ))
        return out

    def subset(self, idx) -> "Cohort":
        idx = np.asarray(idx)
        counts = self.cvh_counts[idx]
        offsets = np.zeros(len(idx) + 1, dtype=np.int64)
        np.cumsum(counts, out=offsets[1:])
        times = np.concatenate(
            [self.cvh_times[self.cvh_offsets[i]:self.cvh_offsets[i + 1]] for i in idx]
        ) if len(idx) else np.empty(0)
        return Cohort(self.active[idx], self.follow_up[idx], self.died[idx],
                      self.response[idx], times, offsets, self.ids[idx])


CohortLike = Union[Cohort, Sequence[PatientRecord]]


def as_cohort(cohort: CohortLike) -> Cohort:
    if isinstance(cohort, Cohort):
        return cohort
    return Cohort.from_records(list(cohort))


@dataclass(frozen=True)
class FsResult:
    t_stat: float
    null_variance: float
    z: float
    theta_hat: float
    win_count: int
    loss_count: int
    tie_count: int
    u_scores: np.ndarray

    @property
    def sum_u_squared(self) -> int:
        return int(np.sum(self.u_scores.astype(np.int64) ** 2))


def compare_pair(a: PatientRecord, b: PatientRecord) -> int:
    """Return +1 if ``a`` beats ``b`` on the hierarchy, -1 if it loses, 0 on a full tie."""
    # step 1: a survivor beats a subject whose death it outlived
    if b.died and a.follow_up_months > b.follow_up_months:
        return 1
    if a.died and b.follow_up_months > a.follow_up_months:
        return -1
    # step 2: fewer hospitalizations over the common window (0, min follow-up]
    window = min(a.follow_up_months, b.follow_up_months)
    n_a = sum(1 for t in a.cvh_event_times_months if t <= window)
    n_b = sum(1 for t in b.cvh_event_times_months if t <= window)
    if n_a != n_b:
        return 1 if n_a < n_b else -1
    # step 3: responder beats non-responder; missing counts as non-response
    r_a = a.functional_response or 0
    r_b = b.functional_response or 0
    if r_a != r_b:
        return 1 if r_a > r_b else -1
    return 0


def _padded_events(c: Cohort) -> np.ndarray:
    counts = c.cvh_counts
    k = int(counts.max()) if len(counts) else 0
    padded = np.full((len(c), k), np.inf)
    if k:
        rows = np.repeat(np.arange(len(c)), counts)
        cols = np.arange(len(c.cvh_times)) - np.repeat(c.cvh_offsets[:-1], counts)
        padded[rows, cols] = c.cvh_times
    return padded


def pairwise_matrix(cohort: CohortLike) -> np.ndarray:
    """Antisymmetric int8 matrix with entry ``[i, j] = compare_pair(i, j)``."""
    c = as_cohort(cohort)
    fu = c.follow_up
    # i wins on death iff j died and i was followed strictly past j's death
    death_win = c.died[None, :] & (fu[:, None] > fu[None, :])
    death = death_win.astype(np.int8) - death_win.T.astype(np.int8)

    window = np.minimum(fu[:, None], fu[None, :])
    counts = np.zeros(window.shape, dtype=np.int16)
    for col in _padded_events(c).T:
        counts += col[:, None] <= window
    cvh = np.sign(counts.T - counts).astype(np.int8)

    resp = np.maximum(c.response, 0).astype(np.int8)
    func = np.sign(resp[:, None] - resp[None, :]).astype(np.int8)

    return np.where(death != 0, death, np.where(cvh != 0, cvh, func))


def fs_scores(cohort: CohortLike) -> np.ndarray:
    """Per-subject score U_i: the sum of its pairwise results against everyone else."""
    c = as_cohort(cohort)
    if len(c) < 2:
        raise ValueError("fs_scores needs at least two subjects")
    return pairwise_matrix(c).sum(axis=1, dtype=np.int64)


def fs_statistic(cohort: CohortLike) -> FsResult:
    c = as_cohort(cohort)
    n_active = int(c.active.sum())
    n_control = len(c) - n_active
    if n_active == 0 or n_control == 0:
        raise ValueError("cohort needs at least one subject in each arm")
    u = pairwise_matrix(c)
    scores = u.sum(axis=1, dtype=np.int64)
    t_stat = int(scores[c.active].sum())
    total = len(c)
    # equal arms: n^2 / (2n (2n - 1)) * sum U^2
    variance = n_active * n_control / (total * (total - 1)) * float(np.sum(scores ** 2))
    if variance == 0.0:
        raise DegenerateStatisticError("all pairwise scores are zero")

    cross = u[np.ix_(c.active, ~c.active)]
    wins = int(np.count_nonzero(cross == 1))
    losses = int(np.count_nonzero(cross == -1))
    ties = cross.size - wins - losses
    return FsResult(
        t_stat=float(t_stat),
        null_variance=variance,
        z=t_stat / math.sqrt(variance),
        theta_hat=(wins + 0.5 * ties) / cross.size,
        win_count=wins,
        loss_count=losses,
        tie_count=ties,
        u_scores=scores,
    )


def win_ratio(cohort: CohortLike) -> tuple[float, float]:
    """Wins over losses among Active-vs-Control pairs, and the tie fraction."""
    c = as_cohort(cohort)
    u = pairwise_matrix(c)
    cross = u[np.ix_(c.active, ~c.active)]
    if cross.size == 0:
        raise ValueError("cohort needs at least one subject in each arm")
    wins = int(np.count_nonzero(cross == 1))
    losses = int(np.count_nonzero(cross == -1))
    if losses == 0:
        raise InfiniteRatioError(f"no losses among {cross.size} pairs ({wins} wins)")
    return wins / losses, (cross.size - wins - losses) / cross.size
