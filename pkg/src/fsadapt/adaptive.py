"""Interim and final decision rules for the two-stage design.

The interim uses an approximate predictive probability of final success to
pick a zone (futility stop, continue as planned, or enlarge stage 2).  The
final test combines per-stage z statistics with weights fixed by the planned
stage sizes, which keeps the type I error at its nominal level regardless of
how the stage-2 size was chosen.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import log_ndtr, ndtr, ndtri

from fsadapt.endpoint import DegenerateStatisticError, FsResult, fs_statistic
from fsadapt.patient_sim import ScenarioSpec, calibrate_jfm, simulate_cohort

log = logging.getLogger(__name__)

P_CLAMP = 1e-15


class Zone(str, enum.Enum):
    FUTILITY = "Futility"
    UNFAVORABLE = "Unfavorable"
    PROMISING_LOW = "PromisingLow"
    PROMISING_HIGH = "PromisingHigh"
    FAVORABLE = "Favorable"


ZONE_ORDER = (Zone.FUTILITY, Zone.UNFAVORABLE, Zone.PROMISING_LOW,
              Zone.PROMISING_HIGH, Zone.FAVORABLE)


@dataclass(frozen=True)
class DesignSpec:
    n_planned_total: int = 400
    n_stage1_total: int = 200
    alpha_one_sided: float = 0.025
    zone_cutpoints: Tuple[float, ...] = (0.1, 0.3, 0.75, 0.9)
    zone_stage2_sizes: Tuple[int, ...] = (200, 400, 300, 200)
    max_stage2_total: int = 400
    ssr_enabled: bool = True
    futility_binding_in_sim: bool = True

    def __post_init__(self):
        object.__setattr__(self, "zone_cutpoints", tuple(float(c) for c in self.zone_cutpoints))
        object.__setattr__(self, "zone_stage2_sizes", tuple(int(s) for s in self.zone_stage2_sizes))
        cuts = self.zone_cutpoints
        if len(cuts) != 4:
            raise ValueError("zone_cutpoints needs four values")
        if any(not 0.0 < c < 1.0 for c in cuts) or any(b <= a for a, b in zip(cuts, cuts[1:])):
            raise ValueError(f"zone_cutpoints must be strictly increasing in (0, 1), got {cuts}")
        if len(self.zone_stage2_sizes) != 4:
            raise ValueError("zone_stage2_sizes needs four values")
        if not 0 < self.n_stage1_total < self.n_planned_total:
            raise ValueError("need 0 < n_stage1_total < n_planned_total")
        sizes = (self.n_stage1_total, self.n_planned_total, self.max_stage2_total,
                 *self.zone_stage2_sizes)
        if any(s % 2 for s in sizes):
            raise ValueError("all cohort sizes must be even for 1:1 allocation")
        if self.max_stage2_total < self.n_planned_total - self.n_stage1_total:
            raise ValueError("max_stage2_total is below the planned stage-2 size")
        if max(self.zone_stage2_sizes) > self.max_stage2_total:
            raise ValueError("a zone stage-2 size exceeds max_stage2_total")
        if not 0.0 < self.alpha_one_sided < 0.5:
            raise ValueError("alpha_one_sided must lie in (0, 0.5)")

    @property
    def n_stage2_planned(self) -> int:
        return self.n_planned_total - self.n_stage1_total

    @property
    def weights(self) -> Tuple[float, float]:
        frac = self.n_stage1_total / self.n_planned_total
        return math.sqrt(frac), math.sqrt(1.0 - frac)

    @property
    def z_alpha(self) -> float:
        return float(-ndtri(self.alpha_one_sided))


@dataclass(frozen=True)
class InterimDecision:
    pp: float
    zone: Zone
    stage2_total: int
    interim_z: float
    interim_p: float


def predictive_probability(p_n: float, r: float, alpha: float, log: bool = False) -> float:
    """Approximate probability of rejecting at the planned final analysis.

    ``p_n`` is the one-sided interim p-value and ``r`` the information fraction.
    With ``log=True`` the natural log is returned, which stays strictly
    monotone where the probability itself rounds to 0 or 1.
    """
    for name, v in (("p_n", p_n), ("r", r), ("alpha", alpha)):
        if not 0.0 < v < 1.0:
            raise ValueError(f"{name} must lie strictly inside (0, 1), got {v}")
    # Phi^-1(1 - p) computed as -Phi^-1(p) to keep precision for small p
    z_n = -ndtri(p_n)
    z_a = -ndtri(alpha)
    x = (z_n - z_a * math.sqrt(r)) / math.sqrt(1.0 - r)
    return float(log_ndtr(x)) if log else float(ndtr(x))


def information_fraction(design: DesignSpec) -> float:
    return design.n_stage1_total / design.n_planned_total


def zone_for(prob: float, design: DesignSpec) -> Zone:
    """Zone of a probability under half-open intervals [lower, upper)."""
    k = sum(prob >= c for c in design.zone_cutpoints)
    return ZONE_ORDER[k]


def stage2_size_for(zone: Zone, design: DesignSpec) -> int:
    if zone is Zone.FUTILITY:
        return 0
    if not design.ssr_enabled:
        return design.n_stage2_planned
    return design.zone_stage2_sizes[ZONE_ORDER.index(zone) - 1]


def decision_from_z(z1: float, design: DesignSpec) -> InterimDecision:
    p = float(ndtr(-z1))
    p_clamped = min(max(p, P_CLAMP), 1.0 - P_CLAMP)
    pp = predictive_probability(p_clamped, information_fraction(design), design.alpha_one_sided)
    zone = zone_for(pp, design)
    return InterimDecision(pp=pp, zone=zone, stage2_total=stage2_size_for(zone, design),
                           interim_z=float(z1), interim_p=p)


def interim_decision(fs1: FsResult, design: DesignSpec) -> InterimDecision:
    return decision_from_z(fs1.z, design)


def chw_combine(z1: float, z2: float, design: DesignSpec) -> Tuple[float, bool]:
    """Weighted z combination with weights from the planned, not realized, stage sizes."""
    w1, w2 = design.weights
    combined = w1 * z1 + w2 * z2
    return combined, combined >= design.z_alpha


def yu_ganju_variance(tie_fraction: float, allocation: float = 0.5) -> float:
    """Null variance of sqrt(N) * log(WR) for a given tie probability."""
    return 4.0 * (1.0 + tie_fraction) / (3.0 * allocation * (1.0 - allocation))


def initial_sample_size(wr: float, log_wr_variance: Optional[float], tie_fraction: float,
                        power: float, alpha: float) -> int:
    """Total sample size for a one-sided win-ratio test, rounded up to an even number.

    ``log_wr_variance`` is the per-subject variance of log(WR), i.e. the limit of
    ``N * Var(log WR_hat)``. When it is ``None`` the tie-based null variance
    ``4 (1 + tie) / (3 k (1 - k))`` with k = 1/2 is used instead.
    """
    if wr <= 1.0:
        raise ValueError(f"win ratio must exceed 1 for a finite sample size, got {wr}")
    if not 0.5 < power < 1.0:
        raise ValueError(f"power must lie in (0.5, 1), got {power}")
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 0.5), got {alpha}")
    if not 0.0 <= tie_fraction < 1.0:
        raise ValueError(f"tie_fraction must lie in [0, 1), got {tie_fraction}")
    var = yu_ganju_variance(tie_fraction) if log_wr_variance is None else log_wr_variance
    if var <= 0.0:
        raise ValueError("log_wr_variance must be positive")
    z_sum = -ndtri(alpha) - ndtri(1.0 - power)
    n = var * z_sum ** 2 / math.log(wr) ** 2
    return 2 * math.ceil(n / 2.0 - 1e-9)


def conditional_power(z1: float, n2_total: int, expected_z2_per_sqrt: float,
                      design: DesignSpec) -> float:
    """CP = 1 - Phi(z_alpha - w1 z1 - w2 * drift * sqrt(n2))."""
    if n2_total < 2:
        raise ValueError("n2_total must be at least 2")
    w1, w2 = design.weights
    x = design.z_alpha - w1 * z1 - w2 * expected_z2_per_sqrt * math.sqrt(n2_total)
    return float(ndtr(-x))


def interim_drift(z1: float, design: DesignSpec) -> float:
    """Per-sqrt(n) drift implied by taking the interim effect as the truth."""
    return z1 / math.sqrt(design.n_stage1_total)


class DriftEstimate(NamedTuple):
    drift: float
    std_error: float
    resimulated: int


def estimate_stage2_drift(spec: ScenarioSpec, n2_total: int, reps: int,
                          rng: np.random.Generator) -> DriftEstimate:
    """Monte Carlo mean of z_2 / sqrt(n2) over fresh cohorts simulated under ``spec``."""
    if reps < 100:
        raise ValueError("reps must be at least 100")
    params = calibrate_jfm(spec)
    values = np.empty(reps)
    resimulated = 0
    for i in range(reps):
        while True:
            try:
                z = fs_statistic(simulate_cohort(params, spec, n2_total, rng)).z
                break
            except DegenerateStatisticError:
                resimulated += 1
        values[i] = z / math.sqrt(n2_total)
    if resimulated:
        log.warning("estimate_stage2_drift: resimulated %d degenerate cohorts", resimulated)
    return DriftEstimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(reps)),
                         resimulated)


def optimize_stage2_size(z1: float, spec: Optional[ScenarioSpec], design: DesignSpec,
                         target_cp: float = 0.9, *, drift: Optional[float] = None,
                         rng: Optional[np.random.Generator] = None, reps: int = 200) -> int:
    """Smallest even stage-2 size reaching ``target_cp``, capped at ``max_stage2_total``.

    The drift is estimated once under ``spec`` at the planned stage-2 size unless
    given explicitly; with an estimated drift the chosen size is re-checked.
    """
    lo, hi = design.n_stage2_planned, design.max_stage2_total
    estimated = drift is None
    if estimated:
        if spec is None:
            raise ValueError("need either a scenario or an explicit drift")
        rng = rng if rng is not None else np.random.default_rng()
        est = estimate_stage2_drift(spec, lo, reps, rng)
        drift = est.drift

    def cp(n2):
        return conditional_power(z1, n2, drift, design)

    if cp(lo) >= target_cp:
        best = lo
    elif cp(hi) < target_cp:
        best = hi
    else:
        # invariant: cp(lo) < target <= cp(hi), both even
        while hi - lo > 2:
            mid = lo + ((hi - lo) // 4) * 2
            if cp(mid) >= target_cp:
                hi = mid
            else:
                lo = mid
        best = hi

    if estimated and best != design.n_stage2_planned:
        check = estimate_stage2_drift(spec, best, reps, rng)
        gap = abs(check.drift - drift)
        if gap > 3.0 * math.hypot(check.std_error, est.std_error):
            log.warning("drift at n2=%d (%.4f) differs from planned-size estimate (%.4f)",
                        best, check.drift, drift)
    return best
