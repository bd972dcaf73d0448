"""Accuracy, robustness and reliability semantics over pooling scopes."""

import csv
import math
from pathlib import Path

import numpy as np
import pytest

from trackbench.dataset import SequenceRecord
from trackbench.errors import ContractError, ParameterError
from trackbench.geometry import AxisAligned
from trackbench.measures import (
    ResultsView,
    Scope,
    accuracy,
    default_scopes,
    measure_table,
    reliability,
    robustness,
    write_measures_csv,
)
from trackbench.runner import FAIL, INIT, SKIP, Trajectory

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


def overlap_traj(overlaps, codes=None, n_burnin=0, error="none", seed=0):
    """Trajectory over BASE ground truth hitting the given per-frame IoUs."""
    codes = codes or {}
    entries = []
    for t, value in enumerate(overlaps):
        entries.append(codes[t] if t in codes else shifted_box(value))
    return Trajectory.from_entries(
        entries, n_skip=0, n_burnin=n_burnin, seed=seed, error=error
    )


def single_view(record, trajectories, tracker="t"):
    return ResultsView({tracker: {record.name: trajectories}}, [record])


class TestScopes:
    def test_labels(self):
        assert Scope("pooled").label == "pooled"
        assert Scope("attribute", "occlusion").label == "attribute:occlusion"
        assert Scope("sequence", "woman").label == "sequence:woman"

    def test_validation(self):
        with pytest.raises(ParameterError):
            Scope("pooled", "x")
        with pytest.raises(ParameterError):
            Scope("attribute")
        with pytest.raises(ParameterError):
            Scope("attribute", "sunshine")
        with pytest.raises(ParameterError):
            Scope("galaxy", "x")

    def test_default_scopes(self):
        dataset = {"a": make_record("a", 3), "b": make_record("b", 3)}
        scopes = default_scopes(dataset)
        labels = [s.label for s in scopes]
        assert labels[0] == "pooled"
        assert sum(1 for s in scopes if s.kind == "attribute") == 6
        assert labels[-2:] == ["sequence:a", "sequence:b"]


class TestAccuracy:
    def test_mean_of_valid_overlaps(self):
        record = make_record("s", 2)
        view = single_view(record, [overlap_traj([0.5, 0.7])])
        assert view.accuracy("t", Scope("pooled")) == pytest.approx(0.6, abs=1e-12)

    def test_average_over_repetitions_first(self):
        record = make_record("s", 1)
        reps = [overlap_traj([1.0]), overlap_traj([0.0])]
        view = single_view(record, reps)
        assert view.phi("t", "s")[0] == pytest.approx(0.5, abs=1e-12)
        assert view.accuracy("t", Scope("pooled")) == pytest.approx(0.5, abs=1e-12)

    def test_pooled_equals_weighted_average_and_concatenation(self):
        a = make_record("a", 10)
        b = make_record("b", 30)
        runs = {
            "t": {
                "a": [overlap_traj([0.8] * 10)],
                "b": [overlap_traj([0.4] * 30)],
            }
        }
        view = ResultsView(runs, [a, b])
        pooled = view.accuracy("t", Scope("pooled"))
        assert pooled == pytest.approx(0.5, abs=1e-9)
        # two-path: explicit super-sequence concatenation gives the identical
        # number, not merely a close one
        stream = np.concatenate([view.phi("t", "a"), view.phi("t", "b")])
        assert pooled == float(stream[~np.isnan(stream)].mean())

    def test_codes_and_burnin_are_invalid(self):
        record = make_record("s", 6)
        traj = overlap_traj(
            [1.0, 0.9, 0.9, 0.9, 0.9, 0.9], codes={0: INIT}, n_burnin=2
        )
        view = single_view(record, [traj])
        assert view.valid_frames("t", Scope("pooled")) == 3
        assert view.accuracy("t", Scope("pooled")) == pytest.approx(0.9, abs=1e-9)

    def test_frame_valid_if_any_repetition_valid(self):
        record = make_record("s", 1)
        reps = [overlap_traj([0.8]), overlap_traj([0.0], codes={0: SKIP})]
        view = single_view(record, reps)
        assert view.valid_frames("t", Scope("pooled")) == 1
        assert view.accuracy("t", Scope("pooled")) == pytest.approx(0.8, abs=1e-9)

    def test_no_valid_frames_is_undefined(self):
        record = make_record("s", 2)
        traj = overlap_traj([0, 0], codes={0: INIT, 1: SKIP})
        view = single_view(record, [traj])
        assert view.accuracy("t", Scope("pooled")) is None

    def test_monotone_in_any_single_overlap(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0.1, 0.9, size=12)
        record = make_record("s", 12)
        base_view = single_view(record, [overlap_traj(values)])
        base_acc = base_view.accuracy("t", Scope("pooled"))
        for j in (0, 5, 11):
            raised = values.copy()
            raised[j] = min(1.0, raised[j] + 0.05)
            view = single_view(record, [overlap_traj(raised)])
            assert view.accuracy("t", Scope("pooled")) >= base_acc - 1e-12

    def test_functional_wrapper(self):
        record = make_record("s", 2)
        runs = {"t": {"s": [overlap_traj([0.5, 0.7])]}}
        out = accuracy(runs, [record], Scope("pooled"))
        assert out["t"] == pytest.approx(0.6, abs=1e-12)


class TestRobustness:
    def test_mean_over_repetitions(self):
        record = make_record("s", 10)
        reps = []
        for n_fails in (2, 3, 1):
            codes = {t: FAIL for t in range(n_fails)}
            reps.append(overlap_traj([0.9] * 10, codes=codes))
        view = single_view(record, reps)
        assert view.robustness("t", Scope("pooled")) == pytest.approx(2.0)

    def test_no_failures_is_zero(self):
        record = make_record("s", 5)
        view = single_view(record, [overlap_traj([0.9] * 5)])
        assert view.robustness("t", Scope("pooled")) == 0.0

    def test_failure_counted_in_every_carrying_attribute(self):
        tags = {
            "occlusion": [0, 0, 0, 1, 0],
            "camera_motion": [0, 0, 0, 1, 0],
        }
        record = make_record("s", 5, tags=tags)
        traj = overlap_traj([0.9] * 5, codes={3: FAIL})
        view = single_view(record, [traj])
        assert view.robustness("t", Scope("attribute", "occlusion")) == 1.0
        assert view.robustness("t", Scope("attribute", "camera_motion")) == 1.0
        assert view.robustness("t", Scope("pooled")) == 1.0
        # channel with no frames in this dataset: undefined, not zero
        assert view.robustness("t", Scope("attribute", "size_change")) is None

    def test_attribute_counts_bound_total(self):
        rng = np.random.default_rng(11)
        length = 40
        tags = {
            "occlusion": list(rng.integers(0, 2, size=length)),
            "camera_motion": list(rng.integers(0, 2, size=length)),
            "illumination_change": list(rng.integers(0, 2, size=length)),
            "size_change": list(rng.integers(0, 2, size=length)),
            "motion_change": list(rng.integers(0, 2, size=length)),
        }
        record = make_record("s", length, tags=tags)
        fail_frames = rng.choice(length, size=8, replace=False)
        traj = overlap_traj([0.9] * length, codes={int(t): FAIL for t in fail_frames})
        view = single_view(record, [traj])
        total = view.robustness("t", Scope("pooled"))
        per_attribute = 0.0
        for channel in ("occlusion", "camera_motion", "illumination_change",
                        "size_change", "motion_change", "neutral"):
            value = view.robustness("t", Scope("attribute", channel))
            per_attribute += 0.0 if value is None else value
        assert per_attribute >= total - 1e-12

    def test_error_repetition_excluded(self):
        record = make_record("s", 6)
        good = overlap_traj([0.9] * 6, codes={2: FAIL})
        # aborted repetition: a FAIL before the crash must not count
        broken = overlap_traj(
            [0.9] * 6, codes={1: FAIL, 3: SKIP, 4: SKIP, 5: SKIP}, error="crash"
        )
        view = single_view(record, [good, broken])
        assert view.robustness("t", Scope("pooled")) == 1.0
        assert view.error_count("t") == 1
        samples = view.failure_samples("t", Scope("pooled"))
        assert samples[0] == 1.0
        assert np.isnan(samples[1])

    def test_all_error_sequence_is_undefined(self):
        record = make_record("s", 4)
        broken = overlap_traj([0.9] * 4, error="timeout")
        view = single_view(record, [broken])
        assert view.robustness("t", Scope("pooled")) is None

    def test_pooled_samples_sum_sequences(self):
        a = make_record("a", 6)
        b = make_record("b", 6)
        runs = {
            "t": {
                "a": [overlap_traj([0.9] * 6, codes={0: FAIL})],
                "b": [overlap_traj([0.9] * 6, codes={1: FAIL, 4: FAIL})],
            }
        }
        view = ResultsView(runs, [a, b])
        assert view.robustness("t", Scope("pooled")) == 3.0
        assert list(view.failure_samples("t", Scope("pooled"))) == [3.0]
        assert view.robustness("t", Scope("sequence", "b")) == 2.0

    def test_functional_wrapper(self):
        record = make_record("s", 5)
        runs = {"t": {"s": [overlap_traj([0.9] * 5, codes={0: FAIL})]}}
        assert robustness(runs, [record], Scope("pooled"))["t"] == 1.0


class TestReliability:
    def test_zero_failures(self):
        assert reliability(0.0, 500) == 1.0

    def test_known_rate(self):
        # one failure per hundred frames over the default horizon
        assert reliability(4.0, 400) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_zero_horizon(self):
        assert reliability(3.0, 100, horizon=0) == 1.0

    def test_strictly_decreasing_and_bounded(self):
        values = [reliability(r, 200) for r in (0.0, 0.5, 1.0, 2.0, 8.0)]
        assert all(0.0 < v <= 1.0 for v in values)
        assert all(a > b for a, b in zip(values, values[1:]))
        assert values[0] == 1.0

    def test_validation(self):
        with pytest.raises(ParameterError):
            reliability(1.0, 0)
        with pytest.raises(ParameterError):
            reliability(-1.0, 10)
        with pytest.raises(ParameterError):
            reliability(1.0, 10, horizon=-1)

    def test_view_reliability_matches_formula(self):
        record = make_record("s", 50)
        traj = overlap_traj([0.9] * 50, codes={3: FAIL})
        view = single_view(record, [traj])
        expected = math.exp(-100 * 1.0 / 50)
        assert view.reliability("t", Scope("pooled")) == pytest.approx(expected)


class TestTable:
    def test_rows_and_csv(self, tmp_path):
        tags = {"occlusion": [0, 1, 0, 0]}
        record = make_record("s", 4, tags=tags)
        runs = {
            "good": {"s": [overlap_traj([0.9] * 4)]},
            "bad": {"s": [overlap_traj([0.2] * 4, codes={2: FAIL})]},
        }
        view = ResultsView(runs, [record])
        rows = measure_table(view)
        scopes = default_scopes(view.records)
        assert len(rows) == len(scopes) * 2
        out = write_measures_csv(tmp_path / "measures.csv", rows)
        with out.open() as fh:
            parsed = list(csv.reader(fh))
        assert parsed[0][:4] == ["tracker", "scope", "accuracy", "robustness"]
        assert len(parsed) == len(rows) + 1
        # undefined cells stay empty rather than becoming zeros
        empty_cells = [r for r in parsed[1:] if r[2] == "" and r[3] == ""]
        assert empty_cells  # channels with no frames

    def test_row_values(self):
        record = make_record("s", 4)
        runs = {"good": {"s": [overlap_traj([0.8] * 4)]}}
        rows = measure_table(ResultsView(runs, [record]), [Scope("pooled")])
        row = rows[0]
        assert row.accuracy == pytest.approx(0.8, abs=1e-9)
        assert row.robustness == 0.0
        assert row.reliability == 1.0
        assert row.failures_per_hundred == 0.0
        assert row.valid_frames == 4
        assert row.scope_frames == 4


class TestViewContracts:
    def test_sequence_set_mismatch(self):
        a = make_record("a", 3)
        b = make_record("b", 3)
        runs = {
            "t1": {"a": [overlap_traj([0.9] * 3)]},
            "t2": {"b": [overlap_traj([0.9] * 3)]},
        }
        with pytest.raises(ContractError):
            ResultsView(runs, [a, b])

    def test_length_mismatch(self):
        record = make_record("a", 3)
        runs = {"t": {"a": [overlap_traj([0.9] * 5)]}}
        with pytest.raises(ContractError):
            ResultsView(runs, [record])

    def test_missing_record(self):
        runs = {"t": {"ghost": [overlap_traj([0.9] * 3)]}}
        with pytest.raises(ContractError):
            ResultsView(runs, [])
