"""Replicate two-stage trials and aggregate their operating characteristics."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence

import numpy as np

from fsadapt.adaptive import DesignSpec, InterimDecision, Zone, chw_combine, interim_decision
from fsadapt.endpoint import DegenerateStatisticError, FsResult, fs_statistic
from fsadapt.patient_sim import JfmParams, ScenarioSpec, calibrate_jfm, simulate_cohort

MAX_RESIMULATIONS = 100
STAGE1_KEY, STAGE2_KEY = 1, 2


@dataclass(frozen=True)
class TrialResult:
    rejected: bool
    stopped_futility: bool
    zone: Zone
    total_enrolled: int
    interim: InterimDecision
    stage1_z: Optional[float]
    stage2_z: Optional[float]
    combined_z: Optional[float]
    replicate_seed: int
    stage2_enrolled: int = 0
    resimulated: int = 0


@dataclass(frozen=True)
class OperatingCharacteristics:
    scenario: str
    design: str
    power_pct: float
    average_n: float
    futility_stop_pct: float
    max_ssr_pct: float
    replicates: int
    seed: int
    power_se: float
    average_n_se: float
    futility_stop_se: float
    max_ssr_se: float
    resimulated: int = 0


def design_label(design: DesignSpec) -> str:
    return "ssr" if design.ssr_enabled else "fixed"


def replicate_seed(master_seed: int, index: int) -> int:
    """64-bit seed for replicate ``index``, derived by counter from the master seed."""
    state = np.random.SeedSequence(master_seed, spawn_key=(index,)).generate_state(2, np.uint32)
    return int(state[0]) << 32 | int(state[1])


def _stage_cohort_stats(params: JfmParams, spec: ScenarioSpec, n: int, seed: int,
                        key: int, first_id: int) -> tuple[FsResult, int]:
    for attempt in range(MAX_RESIMULATIONS):
        seq = np.random.SeedSequence(seed, spawn_key=(key, attempt))
        try:
            return fs_statistic(simulate_cohort(params, spec, n, seq, first_id=first_id)), attempt
        except DegenerateStatisticError:
            continue
    raise DegenerateStatisticError(
        f"stage {key} cohort degenerate after {MAX_RESIMULATIONS} attempts (seed {seed})")


def run_trial(spec: ScenarioSpec, design: DesignSpec, replicate_seed: int,
              params: Optional[JfmParams] = None,
              decide: Callable[[FsResult, DesignSpec], InterimDecision] = interim_decision,
              ) -> TrialResult:
    """Simulate one trial: stage 1, interim decision, stage 2, combined final test.

    Stage cohorts draw from fixed child streams of ``replicate_seed``, so designs
    run with the same seed share their stage-1 data and the leading subjects of
    stage 2.
    """
    params = params if params is not None else calibrate_jfm(spec)
    n1 = design.n_stage1_total
    fs1, redo1 = _stage_cohort_stats(params, spec, n1, replicate_seed, STAGE1_KEY, 1)
    interim = decide(fs1, design)

    stage2_n = interim.stage2_total
    if interim.zone is Zone.FUTILITY:
        if design.futility_binding_in_sim:
            return TrialResult(False, True, interim.zone, n1, interim, fs1.z, None, None,
                               replicate_seed, 0, redo1)
        stage2_n = design.n_stage2_planned

    fs2, redo2 = _stage_cohort_stats(params, spec, stage2_n, replicate_seed, STAGE2_KEY, n1 + 1)
    combined, reject = chw_combine(fs1.z, fs2.z, design)
    return TrialResult(bool(reject), False, interim.zone, n1 + stage2_n, interim,
                       fs1.z, fs2.z, combined, replicate_seed, stage2_n, redo1 + redo2)


def _run_chunk(args) -> list[TrialResult]:
    spec, design, seeds = args
    params = calibrate_jfm(spec)
    return [run_trial(spec, design, s, params) for s in seeds]


def resolve_workers(workers: Optional[int]) -> int:
    if workers is None:
        workers = int(os.environ.get("FS_ADAPT_WORKERS", "1"))
    return max(1, int(workers))


def simulate_trials(spec: ScenarioSpec, design: DesignSpec, replicates: int,
                    master_seed: int, workers: Optional[int] = None) -> list[TrialResult]:
    """All replicate results, in replicate order, for any worker count."""
    seeds = [replicate_seed(master_seed, i) for i in range(replicates)]
    workers = resolve_workers(workers)
    if workers == 1:
        return _run_chunk((spec, design, seeds))
    size = math.ceil(len(seeds) / (4 * workers))
    chunks = [(spec, design, seeds[i:i + size]) for i in range(0, len(seeds), size)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return [t for part in pool.map(_run_chunk, chunks) for t in part]


def summarize(trials: Sequence[TrialResult], design: DesignSpec, scenario: str,
              seed: int) -> OperatingCharacteristics:
    if not trials:
        raise ValueError("no completed replicates to summarize")
    n = len(trials)
    rejected = np.array([t.rejected for t in trials], dtype=float)
    futile = np.array([t.stopped_futility for t in trials], dtype=float)
    enrolled = np.array([t.total_enrolled for t in trials], dtype=np.int64)
    maxed = np.array([t.stage2_enrolled == design.max_stage2_total for t in trials], dtype=float)

    def pct(x):
        p = x.mean()
        return 100.0 * p, 100.0 * math.sqrt(p * (1.0 - p) / n)

    power, power_se = pct(rejected)
    fut, fut_se = pct(futile)
    mx, mx_se = pct(maxed)
    avg_se = float(enrolled.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return OperatingCharacteristics(
        scenario=scenario, design=design_label(design),
        power_pct=power, average_n=int(enrolled.sum()) / n,
        futility_stop_pct=fut, max_ssr_pct=mx, replicates=n, seed=seed,
        power_se=power_se, average_n_se=avg_se, futility_stop_se=fut_se, max_ssr_se=mx_se,
        resimulated=sum(t.resimulated for t in trials),
    )


def run_simulation(spec: ScenarioSpec, design: DesignSpec, replicates: int, master_seed: int,
                   workers: Optional[int] = None) -> OperatingCharacteristics:
    if replicates < 100:
        raise ValueError("replicates must be at least 100")
    trials = simulate_trials(spec, design, replicates, master_seed, workers)
    return summarize(trials, design, spec.name, master_seed)


@dataclass(frozen=True)
class DesignComparison:
    fixed: OperatingCharacteristics
    ssr: OperatingCharacteristics
    fixed_trials: list
    ssr_trials: list

    @property
    def deltas(self) -> dict:
        return {k: getattr(self.ssr, k) - getattr(self.fixed, k)
                for k in ("power_pct", "average_n", "futility_stop_pct", "max_ssr_pct")}

    def paired_power_se(self) -> float:
        """Standard error (pp) of the SSR-minus-fixed power difference on paired replicates."""
        d = np.array([float(s.rejected) - float(f.rejected)
                      for f, s in zip(self.fixed_trials, self.ssr_trials)])
        return 100.0 * float(d.std(ddof=1) / math.sqrt(len(d)))


def compare_designs(spec: ScenarioSpec, design: DesignSpec, replicates: int, master_seed: int,
                    workers: Optional[int] = None) -> DesignComparison:
    """Run the fixed and SSR variants of ``design`` on common random numbers."""
    fixed_design = replace(design, ssr_enabled=False)
    ssr_design = replace(design, ssr_enabled=True)
    fixed = simulate_trials(spec, fixed_design, replicates, master_seed, workers)
    ssr = simulate_trials(spec, ssr_design, replicates, master_seed, workers)
    return DesignComparison(
        fixed=summarize(fixed, fixed_design, spec.name, master_seed),
        ssr=summarize(ssr, ssr_design, spec.name, master_seed),
        fixed_trials=fixed, ssr_trials=ssr,
    )
