"""Patient-level simulation under a log-normal joint frailty model.

Each subject carries a frailty ``omega`` with ``log(omega) ~ N(0, theta)``.
Conditional on it, CV hospitalizations arrive as a homogeneous Poisson
process with intensity ``omega * exp(beta1 * z) * r0`` and death is
exponential with hazard ``omega**alpha * exp(beta2 * z) * lambda0``.
Follow-up stops at death, dropout or month 12.

Scenario rates are marginal: 12-month death probability and expected CVH
count per 12 at-risk months, integrated over the frailty law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import NamedTuple, Union

import numpy as np
from scipy import optimize

from fsadapt.endpoint import FOLLOW_UP_MONTHS, Arm, Cohort, PatientRecord

QUADRATURE_NODES = 96
BLOCK_SIZE = 100   # subjects per independent random stream inside a cohort
PERMUTED_BLOCK = 4


class CalibrationError(RuntimeError):
    pass


class PerArm(NamedTuple):
    active: float
    control: float

    def of(self, arm: Arm) -> float:
        return self.active if Arm(arm) is Arm.ACTIVE else self.control


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    death_prob_12mo: PerArm
    cvh_rate: PerArm
    func_response_prob: PerArm
    frailty_variance_theta: float = 0.5
    alpha_link: float = 1.0
    dropout_rate_12mo: float = 0.0

    def __post_init__(self):
        for attr in ("death_prob_12mo", "cvh_rate", "func_response_prob"):
            object.__setattr__(self, attr, PerArm(*getattr(self, attr)))
        for p in (*self.death_prob_12mo, *self.func_response_prob):
            if not 0.0 < p < 1.0:
                raise ValueError(f"{self.name}: probabilities must lie in (0, 1), got {p}")
        if min(self.cvh_rate) <= 0.0:
            raise ValueError(f"{self.name}: CVH rates must be positive")
        if self.frailty_variance_theta < 0.0:
            raise ValueError(f"{self.name}: frailty variance must be >= 0")
        if not 0.0 <= self.dropout_rate_12mo < 1.0:
            raise ValueError(f"{self.name}: dropout_rate_12mo must lie in [0, 1)")


PRESETS = {
    "Null": dict(death_prob_12mo=(0.40, 0.40), cvh_rate=(0.40, 0.40),
                 func_response_prob=(0.25, 0.25)),
    "Alternative": dict(death_prob_12mo=(0.30, 0.40), cvh_rate=(0.25, 0.375),
                        func_response_prob=(0.50, 0.25)),
    "Alternative2": dict(death_prob_12mo=(0.40, 0.40), cvh_rate=(0.10, 0.40),
                         func_response_prob=(0.60, 0.25)),
    "Middling": dict(death_prob_12mo=(0.325, 0.40), cvh_rate=(0.275, 0.40),
                     func_response_prob=(0.45, 0.30)),
    "Middling2": dict(death_prob_12mo=(0.35, 0.40), cvh_rate=(0.28, 0.40),
                      func_response_prob=(0.40, 0.25)),
}


def scenario(name: str, **overrides) -> ScenarioSpec:
    """One of the five built-in scenarios, optionally with frailty/dropout overrides."""
    try:
        rates = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return ScenarioSpec(name=name, **{**rates, **overrides})


@dataclass(frozen=True)
class JfmParams:
    r0: float        # baseline CVH intensity per month
    lambda0: float   # baseline death hazard per month (control arm)
    beta1: float
    beta2: float
    theta: float
    alpha: float

    def cvh_intensity(self, arm: Arm) -> float:
        return self.r0 * (math.exp(self.beta1) if Arm(arm) is Arm.ACTIVE else 1.0)

    def death_hazard(self, arm: Arm) -> float:
        return self.lambda0 * (math.exp(self.beta2) if Arm(arm) is Arm.ACTIVE else 1.0)


def frailty_quadrature(theta: float, nodes: int = QUADRATURE_NODES):
    """Nodes and weights integrating against the law of omega = exp(N(0, theta))."""
    if theta == 0.0:
        return np.ones(1), np.ones(1)
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return np.exp(math.sqrt(theta) * x), w / math.sqrt(2.0 * math.pi)


def marginal_death_prob(hazard: float, theta: float, alpha: float,
                        horizon: float = FOLLOW_UP_MONTHS) -> float:
    omega, w = frailty_quadrature(theta)
    return float(np.sum(w * -np.expm1(-omega ** alpha * hazard * horizon)))


def _solve_hazard(target: float, theta: float, alpha: float) -> float:
    if theta == 0.0 or alpha == 0.0:
        return -math.log1p(-target) / FOLLOW_UP_MONTHS

    def gap(log_h):
        return marginal_death_prob(math.exp(log_h), theta, alpha) - target

    lo, hi = -40.0, 10.0
    if gap(lo) > 0 or gap(hi) < 0:
        raise CalibrationError(
            f"death probability {target} unreachable for theta={theta}, alpha={alpha}: "
            f"range [{gap(lo) + target:.3g}, {gap(hi) + target:.3g}]")
    root, info = optimize.brentq(gap, lo, hi, xtol=1e-14, full_output=True)
    if not info.converged:
        raise CalibrationError(f"root-finding did not converge: {info.flag}")
    return math.exp(root)


def calibrate_jfm(spec: ScenarioSpec) -> JfmParams:
    """Map marginal 12-month rates onto constant conditional baselines."""
    theta, alpha = spec.frailty_variance_theta, spec.alpha_link
    lam_c = _solve_hazard(spec.death_prob_12mo.control, theta, alpha)
    lam_a = _solve_hazard(spec.death_prob_12mo.active, theta, alpha)
    mean_frailty = math.exp(theta / 2.0)
    r0 = spec.cvh_rate.control / (mean_frailty * FOLLOW_UP_MONTHS)
    return JfmParams(
        r0=r0,
        lambda0=lam_c,
        beta1=math.log(spec.cvh_rate.active / spec.cvh_rate.control),
        beta2=math.log(lam_a / lam_c),
        theta=theta,
        alpha=alpha,
    )


def _simulate_block(params: JfmParams, spec: ScenarioSpec, active: np.ndarray,
                    rng: np.random.Generator, first_id: int = 1):
    """Simulate subjects with the given arm flags; returns (cohort, frailties)."""
    n = len(active)
    omega = np.exp(math.sqrt(params.theta) * rng.standard_normal(n))
    death_rate = omega ** params.alpha * params.lambda0 * np.where(active, math.exp(params.beta2), 1.0)
    death = rng.standard_exponential(n) / death_rate
    if spec.dropout_rate_12mo > 0.0:
        dropout_hazard = -math.log1p(-spec.dropout_rate_12mo) / FOLLOW_UP_MONTHS
        dropout = rng.standard_exponential(n) / dropout_hazard
    else:
        dropout = np.full(n, np.inf)
    follow_up = np.minimum(np.minimum(death, dropout), FOLLOW_UP_MONTHS)
    died = death < np.minimum(dropout, FOLLOW_UP_MONTHS)

    cvh_rate = omega * params.r0 * np.where(active, math.exp(params.beta1), 1.0)
    counts = rng.poisson(cvh_rate * follow_up)
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    owner = np.repeat(np.arange(n), counts)
    # 1 - U lies in (0, 1], keeping every event inside (0, follow_up]
    times = follow_up[owner] * (1.0 - rng.random(len(owner)))
    times = times[np.lexsort((times, owner))]

    p_resp = np.where(active, spec.func_response_prob.active, spec.func_response_prob.control)
    responded = rng.random(n) < p_resp
    completed = (follow_up >= FOLLOW_UP_MONTHS) & ~died
    response = np.where(completed, responded.astype(np.int8), np.int8(-1)).astype(np.int8)

    cohort = Cohort(active=np.asarray(active, dtype=bool), follow_up=follow_up, died=died,
                    response=response, cvh_times=times, cvh_offsets=offsets,
                    ids=np.arange(first_id, first_id + n))
    return cohort, omega


def simulate_patient(params: JfmParams, arm: Arm, spec: ScenarioSpec,
                     rng: np.random.Generator, patient_id: int = 1) -> PatientRecord:
    active = np.array([Arm(arm) is Arm.ACTIVE])
    cohort, _ = _simulate_block(params, spec, active, rng, first_id=patient_id)
    return cohort.to_records()[0]


def _block_arms(n: int, rng: np.random.Generator) -> np.ndarray:
    """1:1 permuted-block allocation for an even number of subjects."""
    arms = []
    for start in range(0, n, PERMUTED_BLOCK):
        size = min(PERMUTED_BLOCK, n - start)
        block = np.arange(size) < size // 2
        arms.append(rng.permutation(block))
    return np.concatenate(arms) if arms else np.zeros(0, dtype=bool)


Stream = Union[int, np.random.SeedSequence, np.random.Generator]


def _concat(parts: list) -> Cohort:
    offsets = [np.zeros(1, dtype=np.int64)]
    shift = 0
    for c in parts:
        offsets.append(c.cvh_offsets[1:] + shift)
        shift += len(c.cvh_times)
    return Cohort(
        active=np.concatenate([c.active for c in parts]),
        follow_up=np.concatenate([c.follow_up for c in parts]),
        died=np.concatenate([c.died for c in parts]),
        response=np.concatenate([c.response for c in parts]),
        cvh_times=np.concatenate([c.cvh_times for c in parts]),
        cvh_offsets=np.concatenate(offsets),
        ids=np.concatenate([c.ids for c in parts]),
    )


def simulate_cohort(params: JfmParams, spec: ScenarioSpec, n_total: int, stream: Stream,
                    first_id: int = 1, return_frailty: bool = False):
    """Randomize ``n_total`` subjects 1:1 and simulate their outcomes.

    With an integer seed or ``SeedSequence`` each block of 100 subjects draws
    from its own child stream, so a larger cohort from the same seed extends a
    smaller one subject for subject. A ``Generator`` is consumed sequentially.
    """
    if n_total % 2 or n_total < 2:
        raise ValueError(f"n_total must be a positive even integer, got {n_total}")
    if isinstance(stream, np.random.Generator):
        rngs = [stream] * math.ceil(n_total / BLOCK_SIZE)
    else:
        seq = stream if isinstance(stream, np.random.SeedSequence) else np.random.SeedSequence(stream)
        rngs = [np.random.default_rng(_child(seq, k)) for k in range(math.ceil(n_total / BLOCK_SIZE))]
    parts, frailties = [], []
    for k, rng in enumerate(rngs):
        size = min(BLOCK_SIZE, n_total - k * BLOCK_SIZE)
        active = _block_arms(size, rng)
        c, omega = _simulate_block(params, spec, active, rng, first_id=first_id + k * BLOCK_SIZE)
        parts.append(c)
        frailties.append(omega)
    cohort = _concat(parts)
    if return_frailty:
        return cohort, np.concatenate(frailties)
    return cohort


def _child(seq: np.random.SeedSequence, k: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seq.entropy, spawn_key=(*seq.spawn_key, k))


def with_frailty(spec: ScenarioSpec, theta: float, alpha: float | None = None) -> ScenarioSpec:
    kw = {"frailty_variance_theta": theta}
    if alpha is not None:
        kw["alpha_link"] = alpha
    return replace(spec, **kw)
