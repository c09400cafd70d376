"""Two-stage adaptive designs with a Finkelstein-Schoenfeld hierarchical endpoint."""

from fsadapt.endpoint import (
    Arm,
    DegenerateStatisticError,
    FsResult,
    InfiniteRatioError,
    PatientRecord,
    compare_pair,
    fs_scores,
    fs_statistic,
    win_ratio,
)
from fsadapt.patient_sim import (
    CalibrationError,
    JfmParams,
    ScenarioSpec,
    calibrate_jfm,
    scenario,
    simulate_cohort,
    simulate_patient,
)
from fsadapt.adaptive import (
    DesignSpec,
    InterimDecision,
    Zone,
    chw_combine,
    conditional_power,
    estimate_stage2_drift,
    information_fraction,
    initial_sample_size,
    interim_decision,
    optimize_stage2_size,
    predictive_probability,
)
from fsadapt.harness import (
    OperatingCharacteristics,
    TrialResult,
    compare_designs,
    run_simulation,
    run_trial,
)

__version__ = "0.1.0"
