"""Estimator moment algebra, its Monte Carlo check, burn-in and difficulty."""

import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import censored_normal_moments_numeric
from trackbench.analysis import (
    AnnotationSimParams,
    DifficultyReport,
    Moments,
    ReinitSimParams,
    annotation_moments,
    burnin_curve,
    burnin_curve_all,
    clipped_normal_moments,
    clipped_normal_params,
    difficulty,
    difficulty_level,
    mixture_moments,
    rank_variance_study,
    reinit_component_moments,
    reinit_moments,
    sample_unit_overlaps,
    simulate_estimators,
    write_burnin_csv,
    write_difficulty_csv,
    write_difficulty_curves,
)
from trackbench.dataset import SequenceRecord
from trackbench.errors import ContractError, ParameterError
from trackbench.geometry import AxisAligned
from trackbench.measures import ResultsView
from trackbench.runner import FAIL, INIT, SKIP, Trajectory

# Closed forms evaluated by hand at the pinned thought-experiment parameters
# (mean 0.63, std 0.4, 25 sequences of 150 frames, failure prob 0.5, gap 15).
NOR_MEAN = 0.4725
NOR_VARIANCE = 0.00168575
WIR_VARIANCE = 4.503703703703705e-05

BASE = AxisAligned(0.0, 0.0, 10.0, 10.0)
FAR = AxisAligned(500.0, 500.0, 10.0, 10.0)


def shifted_box(iou):
    """Axis-aligned box whose overlap with BASE is the requested value."""
    if iou == 0.0:
        return FAR
    dx = BASE.width * (1.0 - iou) / (1.0 + iou)
    return AxisAligned(BASE.x + dx, BASE.y, BASE.width, BASE.height)


def make_record(name, length, tags=None, gamma=0.05):
    frames = [Path(f"/data/{name}/frames/{i + 1:08d}.ppm") for i in range(length)]
    return SequenceRecord(
        name=name,
        frames=frames,
        groundtruth=[BASE] * length,
        tags=tags or {},
        gamma=gamma,
    )


def traj_from(entries, n_burnin=0, n_skip=0):
    return Trajectory.from_entries(
        entries, n_skip=n_skip, n_burnin=n_burnin, seed=0
    )


def overlap_traj(overlaps, codes=None, n_burnin=0):
    codes = codes or {}
    entries = []
    for t, value in enumerate(overlaps):
        entries.append(codes[t] if t in codes else shifted_box(value))
    return traj_from(entries, n_burnin=n_burnin)


class TestMixture:
    def test_degenerate_weights(self):
        f = Moments(0.2, 0.01)
        s = Moments(0.7, 0.04)
        assert mixture_moments(0.0, f, s) == s
        assert mixture_moments(1.0, f, s) == f

    def test_bernoulli_by_hand(self):
        out = mixture_moments(0.5, Moments(0.0, 0.0), Moments(1.0, 0.0))
        assert out.mean == 0.5
        assert out.variance == 0.25

    def test_weight_validated(self):
        with pytest.raises(ParameterError):
            mixture_moments(-0.1, Moments(0, 0), Moments(0, 0))
        with pytest.raises(ParameterError):
            mixture_moments(1.0001, Moments(0, 0), Moments(0, 0))

    @given(
        p=st.floats(0, 1),
        mf=st.floats(0, 1),
        ms=st.floats(0, 1),
        vf=st.floats(0, 0.25),
        vs=st.floats(0, 0.25),
    )
    @settings(max_examples=60, deadline=None)
    def test_variance_nonnegative_mean_between(self, p, mf, ms, vf, vs):
        out = mixture_moments(p, Moments(mf, vf), Moments(ms, vs))
        assert out.variance >= -1e-15
        assert min(mf, ms) - 1e-12 <= out.mean <= max(mf, ms) + 1e-12


class TestReinitMoments:
    def test_pinned_means(self):
        params = ReinitSimParams()
        assert reinit_moments("NOR", params).mean == pytest.approx(NOR_MEAN, abs=1e-12)
        assert reinit_moments("WIR", params).mean == pytest.approx(0.63, abs=1e-12)

    def test_pinned_variances(self):
        params = ReinitSimParams()
        nor = reinit_moments("NOR", params)
        wir = reinit_moments("WIR", params)
        assert nor.variance == pytest.approx(NOR_VARIANCE, rel=1e-12)
        assert wir.variance == pytest.approx(WIR_VARIANCE, rel=1e-12)
        assert nor.std == pytest.approx(0.0410578859660358, rel=1e-9)
        assert wir.std == pytest.approx(0.0067109639424629, rel=1e-9)

    def test_mixture_route_agrees(self):
        # Same moments assembled from the per-sequence fast/slow components.
        for kind in ("NOR", "WIR"):
            params = ReinitSimParams()
            p, fast, slow = reinit_component_moments(kind, params)
            mixed = mixture_moments(p, fast, slow)
            direct = reinit_moments(kind, params)
            assert mixed.mean == pytest.approx(direct.mean, rel=1e-12)
            assert mixed.variance / params.sequences == pytest.approx(
                direct.variance, rel=1e-12
            )

    def test_no_failures_collapses_both(self):
        params = ReinitSimParams(failure_prob=0.0)
        nor = reinit_moments("NOR", params)
        wir = reinit_moments("WIR", params)
        assert nor.mean == wir.mean == params.mean_overlap
        expected = params.overlap_std**2 / (params.sequences * params.frames)
        assert nor.variance == pytest.approx(expected, rel=1e-12)
        assert wir.variance == pytest.approx(expected, rel=1e-12)

    def test_variance_gap_identity(self):
        # var(NOR) - var(WIR) collapses to a single product, which makes the
        # sign structure explicit: the reset wins unless the mean overlap is
        # vanishing or the discarded gap rivals the sequence length.
        rng = np.random.default_rng(8)
        for _ in range(50):
            params = ReinitSimParams(
                mean_overlap=rng.uniform(0.0, 1.0),
                overlap_std=rng.uniform(0.0, 0.5),
                sequences=int(rng.integers(2, 60)),
                frames=int(rng.integers(20, 400)),
                failure_prob=rng.uniform(0.0, 1.0),
                reinit_gap=int(rng.integers(0, 19)),
            )
            mu, var = params.mean_overlap, params.overlap_std**2
            n_seq, n_frames, p = params.sequences, params.frames, params.failure_prob
            gap = params.reinit_gap
            expected = (p / n_seq) * (
                (4 - 3 * p) * mu**2 / 12
                - var * (n_frames + gap) / (2 * n_frames * (n_frames - gap))
            )
            got = (
                reinit_moments("NOR", params).variance
                - reinit_moments("WIR", params).variance
            )
            assert got == pytest.approx(expected, abs=1e-15)

    def test_reset_cost_never_helps_nor(self):
        # Within the regime the model describes (overlaps bounded on [0, 1],
        # non-vanishing mean, gap at most a tenth of the sequence) the reset
        # estimator's variance never exceeds the no-reset one.
        rng = np.random.default_rng(42)
        for _ in range(50):
            mu = rng.uniform(0.15, 0.9)
            params = ReinitSimParams(
                mean_overlap=mu,
                overlap_std=rng.uniform(0.0, 1.0) * math.sqrt(mu * (1 - mu)),
                sequences=int(rng.integers(2, 60)),
                frames=int(rng.integers(50, 400)),
                failure_prob=rng.uniform(0.0, 1.0),
                reinit_gap=int(rng.integers(1, 6)),
            )
            nor = reinit_moments("NOR", params)
            wir = reinit_moments("WIR", params)
            assert wir.variance <= nor.variance + 1e-18

    def test_validation(self):
        with pytest.raises(ParameterError):
            ReinitSimParams(reinit_gap=150)
        with pytest.raises(ParameterError):
            ReinitSimParams(mean_overlap=1.2)
        with pytest.raises(ParameterError):
            ReinitSimParams(failure_prob=-0.1)
        with pytest.raises(ParameterError):
            reinit_moments("GLA", ReinitSimParams())


class TestAnnotationMoments:
    def test_pinned_bias(self):
        params = AnnotationSimParams(
            mean_overlap=0.0, other_mean_overlap=1.0, contamination=2.0,
            false_rate=0.1,
        )
        gla = annotation_moments("GLA", params)
        pfa = annotation_moments("PFA", params)
        assert gla.mean == pytest.approx(2.0 / 3.0, abs=1e-12)
        assert pfa.mean == pytest.approx(1.0 / 11.0, abs=1e-12)

    def test_clean_annotation_unbiased(self):
        params = AnnotationSimParams(contamination=0.0)
        assert annotation_moments("GLA", params).mean == params.mean_overlap

    def test_variance_ratio(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            params = AnnotationSimParams(
                mean_overlap=rng.uniform(0, 1),
                other_mean_overlap=rng.uniform(0, 1),
                overlap_std=rng.uniform(0.01, 0.3),
                sequences=int(rng.integers(2, 50)),
                attribute_frames=int(rng.integers(10, 300)),
                contamination=rng.uniform(0.5, 4.0),
                false_rate=rng.uniform(0.0, 0.5),
            )
            gla = annotation_moments("GLA", params)
            pfa = annotation_moments("PFA", params)
            expected = (1 + params.false_rate) / (1 + params.contamination)
            assert gla.variance / pfa.variance == pytest.approx(expected, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ParameterError):
            AnnotationSimParams(contamination=-1.0)
        with pytest.raises(ParameterError):
            annotation_moments("NOR", AnnotationSimParams())


class TestClippedSampler:
    def test_closed_form_matches_quadrature(self):
        for m, s in [(0.6, 0.3), (0.1, 0.5), (1.4, 0.8), (-0.2, 0.4)]:
            mean, var = clipped_normal_moments(m, s)
            ref_mean, ref_var = censored_normal_moments_numeric(m, s)
            assert mean == pytest.approx(ref_mean, abs=1e-8)
            assert var == pytest.approx(ref_var, abs=1e-8)

    def test_solver_hits_targets(self):
        for mu, sd in [(0.63, 0.4), (0.2, 0.1), (0.5, 0.45), (0.85, 0.2)]:
            m, s = clipped_normal_params(mu, sd)
            mean, var = clipped_normal_moments(m, s)
            assert mean == pytest.approx(mu, abs=1e-9)
            assert math.sqrt(var) == pytest.approx(sd, abs=1e-9)

    def test_sampled_moments(self):
        rng = np.random.default_rng(15)
        draws = sample_unit_overlaps(rng, 0.63, 0.4, 400_000)
        assert draws.min() >= 0.0 and draws.max() <= 1.0
        assert abs(draws.mean() - 0.63) < 4 * 0.4 / math.sqrt(400_000)
        assert abs(draws.std() - 0.4) < 0.004

    def test_zero_spread_is_constant(self):
        rng = np.random.default_rng(0)
        draws = sample_unit_overlaps(rng, 0.3, 0.0, 100)
        assert np.all(draws == 0.3)

    def test_infeasible_spread_rejected(self):
        # No distribution on [0,1] with mean 0.5 has std above 0.5.
        with pytest.raises(ParameterError):
            clipped_normal_params(0.5, 0.55)
        with pytest.raises(ParameterError):
            clipped_normal_params(0.9, 0.31)
        with pytest.raises(ParameterError):
            clipped_normal_params(1.0, 0.1)


def _se_mean(variance, trials):
    return math.sqrt(variance / trials)


def _se_variance(variance, trials):
    # Normal-theory standard error of a sample variance; the estimators are
    # means over many sequences, so their excess kurtosis is near zero.
    return variance * math.sqrt(2.0 / (trials - 1))


class TestSimulation:
    def test_reinit_matches_closed_forms(self):
        params = ReinitSimParams()
        for kind in ("NOR", "WIR"):
            closed = reinit_moments(kind, params)
            emp = simulate_estimators(kind, params, trials=10_000, seed=7)
            assert abs(emp.mean - closed.mean) <= 3 * _se_mean(closed.variance, 10_000)
            assert abs(emp.variance - closed.variance) <= 3 * _se_variance(
                closed.variance, 10_000
            )

    def test_annotation_matches_closed_forms(self):
        params = AnnotationSimParams(
            mean_overlap=0.3,
            other_mean_overlap=0.6,
            overlap_std=0.2,
            sequences=10,
            attribute_frames=40,
            contamination=2.0,
            false_rate=0.1,
        )
        for kind in ("GLA", "PFA"):
            closed = annotation_moments(kind, params)
            emp = simulate_estimators(kind, params, trials=6_000, seed=3)
            assert abs(emp.mean - closed.mean) <= 3 * _se_mean(closed.variance, 6_000)
            assert abs(emp.variance - closed.variance) <= 3 * _se_variance(
                closed.variance, 6_000
            )

    def test_no_failures_makes_estimators_agree(self):
        params = ReinitSimParams(failure_prob=0.0, sequences=10, frames=60)
        closed = reinit_moments("NOR", params)
        for kind in ("NOR", "WIR"):
            emp = simulate_estimators(kind, params, trials=4_000, seed=1)
            assert abs(emp.mean - params.mean_overlap) <= 3 * _se_mean(
                closed.variance, 4_000
            )

    def test_zero_overlap_spread(self):
        params = ReinitSimParams(overlap_std=0.0, sequences=10, frames=60)
        wir = simulate_estimators("WIR", params, trials=500, seed=2)
        assert wir.variance <= 1e-30
        assert wir.mean == pytest.approx(params.mean_overlap, abs=1e-12)
        nor = simulate_estimators("NOR", params, trials=8_000, seed=2)
        closed = reinit_moments("NOR", params)
        assert abs(nor.variance - closed.variance) <= 3 * _se_variance(
            closed.variance, 8_000
        )

    def test_seeding(self):
        params = ReinitSimParams(sequences=5, frames=30)
        a = simulate_estimators("NOR", params, trials=300, seed=9)
        b = simulate_estimators("NOR", params, trials=300, seed=9)
        c = simulate_estimators("NOR", params, trials=300, seed=10)
        assert a == b
        assert a != c

    def test_kind_params_mismatch(self):
        with pytest.raises(ParameterError):
            simulate_estimators("NOR", AnnotationSimParams(), trials=200, seed=0)
        with pytest.raises(ParameterError):
            simulate_estimators("GLA", ReinitSimParams(), trials=200, seed=0)
        with pytest.raises(ParameterError):
            simulate_estimators("NOR", ReinitSimParams(), trials=99, seed=0)

    def test_random_sweep_three_se(self):
        # Every closed form checked empirically over a random parameter sweep.
        rng = np.random.default_rng(2024)
        trials = 1_500
        for _ in range(25):
            mu = rng.uniform(0.2, 0.8)
            sd = rng.uniform(0.0, 0.45) * math.sqrt(mu * (1 - mu))
            params = ReinitSimParams(
                mean_overlap=mu,
                overlap_std=sd,
                sequences=int(rng.integers(3, 15)),
                frames=int(rng.integers(30, 120)),
                failure_prob=rng.uniform(0.0, 1.0),
                reinit_gap=int(rng.integers(1, 19)),
            )
            kind = ("NOR", "WIR")[int(rng.integers(2))]
            closed = reinit_moments(kind, params)
            emp = simulate_estimators(kind, params, trials=trials, seed=77)
            assert abs(emp.mean - closed.mean) <= 3 * _se_mean(closed.variance, trials)
            assert abs(emp.variance - closed.variance) <= 3 * _se_variance(
                closed.variance, trials
            )
        for _ in range(25):
            mu_a = rng.uniform(0.2, 0.8)
            mu_b = rng.uniform(0.2, 0.8)
            cap = min(mu_a * (1 - mu_a), mu_b * (1 - mu_b))
            attribute_frames = int(rng.integers(10, 60))
            params = AnnotationSimParams(
                mean_overlap=mu_a,
                other_mean_overlap=mu_b,
                overlap_std=rng.uniform(0.05, 0.45) * math.sqrt(cap),
                sequences=int(rng.integers(3, 15)),
                attribute_frames=attribute_frames,
                contamination=int(rng.integers(0, 4 * attribute_frames))
                / attribute_frames,
                false_rate=int(rng.integers(0, attribute_frames)) / attribute_frames,
            )
            kind = ("GLA", "PFA")[int(rng.integers(2))]
            closed = annotation_moments(kind, params)
            emp = simulate_estimators(kind, params, trials=trials, seed=78)
            assert abs(emp.mean - closed.mean) <= 3 * _se_mean(closed.variance, trials)
            assert abs(emp.variance - closed.variance) <= 3 * _se_variance(
                closed.variance, trials
            )


class TestBurninCurve:
    def test_perfect_tracker_flat(self):
        entries = [INIT] + [BASE] * 30
        curve, deriv = burnin_curve([traj_from(entries)], [BASE] * 31, horizon=20)
        assert curve.shape == (20,)
        assert deriv.shape == (19,)
        assert np.all(curve == 1.0)
        assert np.all(deriv == 0.0)

    def test_scripted_ramp(self):
        # Overlap climbs 0.5 -> 0.8 in 0.03 steps, then holds.
        values = [0.5 + 0.03 * k for k in range(11)] + [0.8] * 20
        entries = [INIT] + [shifted_box(v) for v in values]
        curve, deriv = burnin_curve(
            [traj_from(entries)], [BASE] * len(entries), horizon=25
        )
        assert np.allclose(deriv[:10], 0.03, atol=1e-9)
        assert np.allclose(deriv[10:], 0.0, atol=1e-12)

    def test_windows_stop_at_codes(self):
        # First window must not bleed past the failure marker.
        entries = [INIT, shifted_box(0.4), shifted_box(0.4), FAIL, SKIP,
                   INIT, shifted_box(0.8), shifted_box(0.8), shifted_box(0.8)]
        curve, deriv = burnin_curve(
            [traj_from(entries)], [BASE] * len(entries), horizon=4
        )
        assert curve[0] == pytest.approx(0.6)
        assert curve[1] == pytest.approx(0.6)
        assert curve[2] == pytest.approx(0.8)
        assert np.isnan(curve[3])

    def test_offsets_past_data_are_nan(self):
        entries = [INIT] + [BASE] * 5
        curve, _ = burnin_curve([traj_from(entries)], [BASE] * 6, horizon=10)
        assert np.all(curve[:5] == 1.0)
        assert np.all(np.isnan(curve[5:]))

    def test_burnin_frames_are_included(self):
        # The whole point of the curve is to look inside the burn-in window.
        entries = [INIT] + [shifted_box(0.5)] * 12
        trajectory = traj_from(entries, n_burnin=10)
        assert not any(trajectory.valid[1:11])
        curve, _ = burnin_curve([trajectory], [BASE] * 13, horizon=5)
        assert np.allclose(curve, 0.5)

    def test_no_reinit_gives_empty_signal(self):
        entries = [SKIP] * 8
        curve, deriv = burnin_curve([traj_from(entries)], [BASE] * 8, horizon=5)
        assert curve.size == 0 and deriv.size == 0

    def test_dataset_aggregate_matches_manual_merge(self):
        rec_a = make_record("a", 9)
        rec_b = make_record("b", 9)
        traj_a = overlap_traj([0.4] * 9, codes={0: INIT})
        traj_b = overlap_traj([0.8] * 9, codes={0: INIT})
        runs = {"a": [traj_a], "b": [traj_b]}
        curve, _ = burnin_curve_all(runs, {"a": rec_a, "b": rec_b}, horizon=6)
        assert np.allclose(curve, 0.6)

    def test_validates_horizon(self):
        with pytest.raises(ParameterError):
            burnin_curve([traj_from([INIT, BASE])], [BASE, BASE], horizon=0)


def _jittered_view(n_seq=18, length=20, reps=2):
    """Three near-tie trackers whose pooled order depends on the subset."""
    records = {}
    runs = {"a": {}, "b": {}, "c": {}}
    delta = 0.002
    for s in range(n_seq):
        name = f"seq{s:02d}"
        records[name] = make_record(name, length, gamma=0.05)
        base = [0.8] * length
        bump = [0.8 + delta] * length
        half = [0.8 + delta / 2] * length
        a_vals = bump if s % 2 == 0 else base
        b_vals = base if s % 2 == 0 else bump
        runs["a"][name] = [overlap_traj(a_vals, codes={0: INIT}) for _ in range(reps)]
        runs["b"][name] = [overlap_traj(b_vals, codes={0: INIT}) for _ in range(reps)]
        runs["c"][name] = [overlap_traj(half, codes={0: INIT}) for _ in range(reps)]
    return ResultsView(runs, records)


class TestRankVariance:
    def test_single_subset_has_zero_variance(self):
        view = _jittered_view(n_seq=6)
        out = rank_variance_study(view, subset_size=4, n_subsets=1, seed=0)
        assert out == 0.0

    def test_identical_trackers_fully_stable_with_tests(self):
        records = {}
        runs = {"x": {}, "y": {}}
        for s in range(8):
            name = f"seq{s}"
            records[name] = make_record(name, 12)
            for t in runs:
                runs[t][name] = [overlap_traj([0.7] * 12, codes={0: INIT})]
        view = ResultsView(runs, records)
        out = rank_variance_study(
            view, subset_size=5, n_subsets=10, with_tests=True, seed=4
        )
        assert out == 0.0

    def test_equivalence_tests_reduce_variance(self):
        view = _jittered_view()
        kwargs = dict(subset_size=15, n_subsets=20, seed=11)
        with_tests = rank_variance_study(view, with_tests=True, **kwargs)
        without = rank_variance_study(view, with_tests=False, **kwargs)
        assert with_tests <= without
        assert without > 0.0

    def test_subset_size_validated(self):
        view = _jittered_view(n_seq=6)
        with pytest.raises(ParameterError):
            rank_variance_study(view, subset_size=7, n_subsets=2, seed=0)
        with pytest.raises(ParameterError):
            rank_variance_study(view, subset_size=3, n_subsets=0, seed=0)


def _fail_traj(length, fail_frames=()):
    entries = []
    for t in range(length):
        if t == 0:
            entries.append(INIT)
        elif t in fail_frames:
            entries.append(FAIL)
        else:
            entries.append(BASE)
    return traj_from(entries, n_skip=0)


class TestDifficulty:
    def test_no_failures_is_easy(self):
        records = {"calm": make_record("calm", 10)}
        runs = {t: {"calm": [_fail_traj(10)]} for t in ("t1", "t2")}
        report = difficulty(runs, records)["calm"]
        assert report.area == 0.0
        assert report.peak == 0
        assert report.level == "easy"

    def test_single_spike_arithmetic(self):
        records = {"s": make_record("s", 10)}
        runs = {
            f"t{k}": {"s": [_fail_traj(10, fail_frames={2})]} for k in range(4)
        }
        report = difficulty(runs, records)["s"]
        assert report.area == pytest.approx(0.4)
        assert report.peak == 4
        assert report.peak_frame == 3
        assert report.level == "easy"

    def test_levels_partition_the_line(self):
        assert difficulty_level(0.5) == "easy"
        assert difficulty_level(1.0) == "easy"
        assert difficulty_level(1.5) == "intermediate/easy"
        assert difficulty_level(2.0) == "intermediate/easy"
        assert difficulty_level(2.5) == "intermediate"
        assert difficulty_level(3.0) == "intermediate"
        assert difficulty_level(3.5) == "hard"

    def test_repetitions_count_once(self):
        records = {"s": make_record("s", 10)}
        runs = {
            "only": {"s": [_fail_traj(10, fail_frames={4}) for _ in range(3)]}
        }
        report = difficulty(runs, records)["s"]
        assert report.peak == 1
        assert report.counts[4] == 1

    def test_tracker_order_is_irrelevant(self):
        records = {"s": make_record("s", 12)}
        per = {
            "t1": [_fail_traj(12, fail_frames={2, 5})],
            "t2": [_fail_traj(12, fail_frames={5})],
            "t3": [_fail_traj(12, fail_frames={8})],
        }
        fwd = difficulty({k: {"s": per[k]} for k in ["t1", "t2", "t3"]}, records)
        rev = difficulty({k: {"s": per[k]} for k in ["t3", "t2", "t1"]}, records)
        assert fwd == rev
        assert max(fwd["s"].counts) <= 3

    def test_first_peak_wins_ties(self):
        records = {"s": make_record("s", 10)}
        runs = {"t": {"s": [_fail_traj(10, fail_frames={3, 7})]}}
        report = difficulty(runs, records)["s"]
        assert report.peak_frame == 4

    def test_report_factory_consistency(self):
        counts = (0, 2, 1, 0)
        report = DifficultyReport.from_counts("s", counts)
        assert report.area == pytest.approx(0.75)
        assert report.peak == 2
        assert report.peak_frame == 2

    def test_reference_row_format(self, tmp_path):
        counts = [0] * 597
        counts[565] = 19
        for i in range(304):
            counts[i] = 2
        report = DifficultyReport.from_counts("woman", tuple(counts))
        assert report.level == "intermediate/easy"
        out = tmp_path / "difficulty.csv"
        write_difficulty_csv(out, {"woman": report})
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "sequence,area,max,max_frame,level"
        assert lines[1] == "woman,1.05,19,566,intermediate/easy"

    def test_curve_files(self, tmp_path):
        report = DifficultyReport.from_counts("s", (0, 3, 1))
        write_difficulty_curves(tmp_path, {"s": report})
        lines = (tmp_path / "s.csv").read_text().strip().splitlines()
        assert lines == ["frame,count", "1,0", "2,3", "3,1"]


class TestBurninCsv:
    def test_rows(self, tmp_path):
        curve = np.array([0.5, 0.6, np.nan])
        deriv = np.array([0.1, np.nan])
        out = tmp_path / "burnin.csv"
        write_burnin_csv(out, curve, deriv)
        lines = out.read_text().strip().splitlines()
        assert lines[0] == "offset,overlap,derivative"
        assert lines[1] == "1,0.5000,0.1000"
        assert lines[2] == "2,0.6000,"
        assert lines[3] == "3,,"
