import itertools
from dataclasses import replace
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import cohorts, random_records, records
from fsadapt.endpoint import (
    Arm,
    Cohort,
    DegenerateStatisticError,
    InfiniteRatioError,
    PatientRecord,
    compare_pair,
    fs_scores,
    fs_statistic,
    pairwise_matrix,
    win_ratio,
)
from oracle import as_dicts, brute_force_fs, rank


def alive(pid=1, arm=Arm.ACTIVE, cvh=(), resp=0):
    return PatientRecord(pid, arm, 12.0, None, cvh, resp)


class TestCompare:
    def test_survivor_beats_death(self):
        b = PatientRecord(2, Arm.CONTROL, 6.0, 6.0)
        assert compare_pair(alive(), b) == 1

    def test_identical_records_tie(self):
        a = alive(cvh=(3.0,), resp=1)
        assert compare_pair(a, replace(a, id=2)) == 0

    def test_fewer_hospitalizations_win(self):
        assert compare_pair(alive(cvh=(3.0,)), alive(2, cvh=(1.0, 5.0, 9.0))) == 1

    def test_dropout_vs_later_death_falls_to_cvh(self):
        a = PatientRecord(1, Arm.ACTIVE, 5.0, None, ())
        b = PatientRecord(2, Arm.CONTROL, 8.0, 8.0, (2.0,))
        assert compare_pair(a, b) == 1
        assert rank(*as_dicts([a, b])) == 1

    def test_cvh_after_common_window_ignored(self):
        a = PatientRecord(1, Arm.ACTIVE, 12.0, None, (10.0,), 0)
        b = PatientRecord(2, Arm.CONTROL, 8.0, None, ())
        # death unknown for b, CVH window is (0, 8]; a's event at 10 does not count
        assert compare_pair(a, b) == 0

    def test_window_is_closed_on_the_right(self):
        a = PatientRecord(1, Arm.ACTIVE, 12.0, None, (8.0,), 1)
        b = PatientRecord(2, Arm.CONTROL, 8.0, None, ())
        assert compare_pair(a, b) == -1

    def test_both_dead_later_death_wins(self):
        a = PatientRecord(1, Arm.ACTIVE, 9.0, 9.0)
        b = PatientRecord(2, Arm.CONTROL, 4.0, 4.0, ())
        assert compare_pair(a, b) == 1

    def test_equal_death_times_tie_at_death(self):
        a = PatientRecord(1, Arm.ACTIVE, 4.0, 4.0, ())
        b = PatientRecord(2, Arm.CONTROL, 4.0, 4.0, (1.0,))
        assert compare_pair(a, b) == 1

    def test_missing_response_is_non_response(self):
        dead_early = PatientRecord(2, Arm.CONTROL, 7.0, None, ())
        assert compare_pair(alive(resp=1), dead_early) == 1
        assert compare_pair(alive(resp=0), dead_early) == 0

    def test_exhaustive_small_grid_matches_oracle(self):
        grid = []
        pid = itertools.count(1)
        for fu, died, cvh, resp in itertools.product(
                (3.0, 5.0, 12.0), (False, True), ((), (2.0,), (1.0, 4.0)), (None, 0, 1)):
            if died and fu == 12.0:
                continue
            if (resp is None) != (fu < 12.0):
                continue
            cvh = tuple(t for t in cvh if t <= fu)
            grid.append(PatientRecord(next(pid), Arm.ACTIVE, fu, fu if died else None, cvh, resp))
        dicts = as_dicts(grid)
        for (a, da), (b, db) in itertools.product(zip(grid, dicts), repeat=2):
            assert compare_pair(a, b) == rank(da, db)

    @given(records(), records(record_id=2))
    def test_antisymmetry(self, a, b):
        assert compare_pair(a, b) == -compare_pair(b, a)


class TestRecord:
    def test_rejects_death_not_at_follow_up(self):
        with pytest.raises(ValueError):
            PatientRecord(1, Arm.ACTIVE, 8.0, 6.0)

    def test_rejects_events_after_follow_up(self):
        with pytest.raises(ValueError):
            PatientRecord(1, Arm.ACTIVE, 5.0, None, (6.0,))

    def test_rejects_early_response(self):
        with pytest.raises(ValueError):
            PatientRecord(1, Arm.ACTIVE, 5.0, None, (), 1)

    def test_cohort_round_trip(self, example_cohort):
        assert Cohort.from_records(example_cohort).to_records() == example_cohort


class TestScores:
    def test_worked_example(self, example_cohort):
        assert fs_scores(example_cohort).tolist() == [3, 1, -3, -1]

    def test_identical_records_score_zero(self):
        cohort = [alive(i, cvh=(2.0,)) for i in range(1, 6)]
        assert fs_scores(cohort).tolist() == [0] * 5

    def test_two_subjects(self):
        assert fs_scores([alive(1), PatientRecord(2, Arm.CONTROL, 6.0, 6.0)]).tolist() == [1, -1]

    def test_needs_two_subjects(self):
        with pytest.raises(ValueError):
            fs_scores([alive()])

    @given(cohorts())
    def test_matrix_matches_pairwise_loop(self, cohort):
        m = pairwise_matrix(cohort)
        expected = [[compare_pair(a, b) for b in cohort] for a in cohort]
        assert m.tolist() == expected
        assert (m == -m.T).all()

    @given(cohorts())
    def test_zero_sum(self, cohort):
        assert fs_scores(cohort).sum() == 0


class TestStatistic:
    def test_worked_example(self, example_cohort):
        res = fs_statistic(example_cohort)
        assert res.t_stat == 4
        assert res.null_variance == pytest.approx(20 / 3, rel=1e-15)
        assert res.z == pytest.approx(4 / np.sqrt(20 / 3), rel=1e-15)
        assert round(res.z, 3) == 1.549
        assert (res.win_count, res.loss_count, res.tie_count) == (4, 0, 0)
        assert res.theta_hat == 1.0

    def test_degenerate(self):
        cohort = [alive(1), alive(2), alive(3, Arm.CONTROL), alive(4, Arm.CONTROL)]
        with pytest.raises(DegenerateStatisticError):
            fs_statistic(cohort)

    def test_needs_both_arms(self):
        with pytest.raises(ValueError):
            fs_statistic([alive(1), alive(2, resp=1)])

    def test_arm_swap_negates(self, example_cohort):
        swapped = [replace(r, arm=Arm.CONTROL if r.arm is Arm.ACTIVE else Arm.ACTIVE)
                   for r in example_cohort]
        a, b = fs_statistic(example_cohort), fs_statistic(swapped)
        assert b.t_stat == -a.t_stat
        assert b.null_variance == a.null_variance

    def test_unequal_arms_variance(self):
        rng = np.random.default_rng(3)
        cohort = random_records(rng, 9)
        u, t, ssq, var = brute_force_fs(as_dicts(cohort))
        res = fs_statistic(cohort)
        n_a = sum(r.arm is Arm.ACTIVE for r in cohort)
        assert Fraction(res.null_variance).limit_denominator(10**6) == var
        assert res.null_variance == pytest.approx(n_a * (9 - n_a) / (9 * 8) * ssq)

    @settings(max_examples=200)
    @given(cohorts())
    def test_matches_brute_force(self, cohort):
        u, t, ssq, var = brute_force_fs(as_dicts(cohort))
        if ssq == 0:
            with pytest.raises(DegenerateStatisticError):
                fs_statistic(cohort)
            return
        res = fs_statistic(cohort)
        assert res.u_scores.tolist() == u
        assert res.t_stat == t
        assert res.sum_u_squared == ssq
        assert res.null_variance == pytest.approx(float(var), rel=1e-14)
        assert res.win_count + res.loss_count + res.tie_count == (
            sum(r.arm is Arm.ACTIVE for r in cohort) * sum(r.arm is Arm.CONTROL for r in cohort))
        assert 0.0 <= res.theta_hat <= 1.0

    def test_permutation_null(self):
        # U does not depend on labels, so relabelling only changes which scores are summed
        rng = np.random.default_rng(17)
        cohort = random_records(rng, 20)
        res = fs_statistic(cohort)
        n_perm = 20_000
        picks = np.argsort(rng.random((n_perm, 20)), axis=1)[:, :10]
        t = res.u_scores[picks].sum(axis=1)
        assert abs(t.mean()) < 3 * t.std(ddof=1) / np.sqrt(n_perm)
        assert t.var(ddof=1) == pytest.approx(res.null_variance, rel=0.10)

    @given(cohorts(min_size=3, max_size=10), st.integers(0, 2))
    def test_monotone_dominance(self, cohort, level):
        a = cohort[0]
        if level == 0:
            if not a.died:
                return
            better = replace(a, follow_up_months=min(12.0, a.follow_up_months + 1.0),
                             death_time_months=min(12.0, a.follow_up_months + 1.0))
            if better.follow_up_months == 12.0:
                better = replace(better, death_time_months=None, functional_response=0)
        elif level == 1:
            if not a.cvh_event_times_months:
                return
            better = replace(a, cvh_event_times_months=a.cvh_event_times_months[:-1])
        else:
            if a.functional_response != 0:
                return
            better = replace(a, functional_response=1)
        before = fs_scores(cohort)[0]
        after = fs_scores([better] + cohort[1:])[0]
        assert after >= before


class TestWinRatio:
    def test_no_losses_is_infinite(self, example_cohort):
        with pytest.raises(InfiniteRatioError):
            win_ratio(example_cohort)

    def test_mirror_cohorts(self):
        rng = np.random.default_rng(5)
        base = random_records(rng, 6)
        active = [replace(r, id=i + 1, arm=Arm.ACTIVE) for i, r in enumerate(base)]
        control = [replace(r, id=i + 7, arm=Arm.CONTROL) for i, r in enumerate(base)]
        wr, tie = win_ratio(active + control)
        assert wr == 1.0
        assert 0.0 <= tie < 1.0

    def test_counts(self):
        # vs 2: tie, vs 3: win on CVH, vs 4: loss on response
        cohort = [alive(1, resp=0), alive(2, Arm.CONTROL, resp=0),
                  alive(3, Arm.CONTROL, cvh=(1.0,)), alive(4, Arm.CONTROL, resp=1)]
        assert win_ratio(cohort) == (1.0, pytest.approx(1 / 3))
