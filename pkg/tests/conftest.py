import numpy as np
import pytest
from hypothesis import strategies as st

from fsadapt.endpoint import Arm, PatientRecord

ACCEPTANCE_LINES = []


@st.composite
def records(draw, record_id=1, arm=None):
    """Valid PatientRecords on a coarse time grid so ties at every level are common."""
    arm = draw(st.sampled_from(list(Arm))) if arm is None else arm
    fu = draw(st.sampled_from([0.5, 2.0, 3.0, 5.0, 6.0, 8.0, 12.0, 12.0, 12.0]))
    died = fu < 12.0 and draw(st.booleans())
    times = sorted(draw(st.lists(st.sampled_from([0.5, 1.0, 2.0, 3.0, 4.0, 6.0, 9.0, 12.0]),
                                 max_size=4)))
    times = [t for t in times if t <= fu]
    resp = draw(st.sampled_from([0, 1])) if fu == 12.0 else None
    return PatientRecord(record_id, arm, fu, fu if died else None, tuple(times), resp)


@st.composite
def cohorts(draw, min_size=2, max_size=20):
    n = draw(st.integers(min_size, max_size))
    out = [draw(records(record_id=i + 1)) for i in range(n)]
    # at least one subject per arm
    out[0] = PatientRecord(1, Arm.ACTIVE, *_fields(out[0]))
    out[1] = PatientRecord(2, Arm.CONTROL, *_fields(out[1]))
    return out


def _fields(r):
    return (r.follow_up_months, r.death_time_months, r.cvh_event_times_months,
            r.functional_response)


def random_records(rng: np.random.Generator, n: int) -> list[PatientRecord]:
    """Random valid cohort with censoring, deaths, recurrent events and ties."""
    out = []
    arms = rng.permutation(np.arange(n) % 2 == 0)
    for i in range(n):
        fu = 12.0 if rng.random() < 0.5 else float(rng.choice([1.0, 3.0, 6.0, rng.uniform(0.1, 12)]))
        died = fu < 12.0 and rng.random() < 0.6
        k = rng.poisson(1.0)
        times = sorted(float(t) for t in rng.choice([0.5, 2.0, 4.0, rng.uniform(0.01, 12)], size=k))
        times = [t for t in times if t <= fu]
        resp = int(rng.random() < 0.4) if fu == 12.0 else None
        out.append(PatientRecord(i + 1, Arm.ACTIVE if arms[i] else Arm.CONTROL, fu,
                                 fu if died else None, tuple(times), resp))
    return out


@pytest.fixture
def example_cohort():
    return [
        PatientRecord(1, Arm.ACTIVE, 12.0, None, (), 1),
        PatientRecord(2, Arm.ACTIVE, 12.0, None, (4.0,), 0),
        PatientRecord(3, Arm.CONTROL, 6.0, 6.0, (), None),
        PatientRecord(4, Arm.CONTROL, 12.0, None, (2.0, 7.0), 0),
    ]


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
