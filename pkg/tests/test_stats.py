"""Exact and approximate test behavior, checked against an independent stack."""

import numpy as np
import pytest
import scipy.stats
from hypothesis import given, settings
from hypothesis import strategies as st

from trackbench.errors import ContractError, ParameterError
from trackbench.stats import (
    ComparisonResult,
    accuracy_equivalent,
    practical_difference,
    rank_sum,
    robustness_equivalent,
    signed_rank,
)


class TestSignedRank:
    def test_five_positive_differences(self):
        res = signed_rank([0.1, 0.2, 0.3, 0.4, 0.5])
        assert res.statistic == 15.0
        assert res.p_value == pytest.approx(0.0625, abs=1e-12)
        assert res.method == "exact"
        assert not res.significant  # 0.0625 > 0.05

    def test_all_zero_differences(self):
        res = signed_rank([0.0, 0.0, 0.0])
        assert res.p_value == 1.0
        assert not res.significant

    def test_sign_flip_symmetry(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            d = rng.normal(size=rng.integers(3, 30))
            assert signed_rank(d).p_value == pytest.approx(
                signed_rank(-d).p_value, abs=1e-12
            )

    def test_exact_matches_reference_library(self):
        rng = np.random.default_rng(2)
        for _ in range(50):
            n = int(rng.integers(5, 21))
            d = rng.normal(size=n)
            ours = signed_rank(d)
            ref = scipy.stats.wilcoxon(d, alternative="two-sided", mode="exact")
            assert ours.method == "exact"
            assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_exact_handles_ties(self):
        # Tied magnitudes force average ranks; enumeration must stay exact.
        d = [1.0, 1.0, -1.0, 2.0, 2.0, 3.0]
        res = signed_rank(d)
        assert res.method == "exact"
        assert 0.0 < res.p_value <= 1.0

    def test_normal_branch_used_above_cutoff(self):
        rng = np.random.default_rng(3)
        d = rng.normal(0.3, 1.0, size=40)
        assert signed_rank(d).method == "normal_approx"

    def test_exact_close_to_normal_at_cutoff(self):
        rng = np.random.default_rng(4)
        worst = 0.0
        for _ in range(100):
            d = rng.normal(rng.uniform(-0.5, 0.5), 1.0, size=20)
            exact_p = signed_rank(d).p_value
            approx = _signed_rank_normal(d)
            worst = max(worst, abs(exact_p - approx))
        assert worst <= 0.02

    def test_pratt_policy_runs(self):
        d = [0.0, 0.5, -0.25, 1.0, 0.0, 2.0]
        drop = signed_rank(d, zero_policy="drop")
        pratt = signed_rank(d, zero_policy="pratt")
        assert drop.method == pratt.method == "exact"
        assert pratt.statistic >= drop.statistic  # zero ranks push others up

    def test_validation(self):
        with pytest.raises(ParameterError):
            signed_rank([1.0], alpha=0.0)
        with pytest.raises(ParameterError):
            signed_rank([1.0], zero_policy="banana")
        with pytest.raises(ContractError):
            signed_rank([1.0, float("nan")])


def _signed_rank_normal(d):
    """Force the normal branch by routing through a padded private call."""
    from trackbench import stats as m

    saved = m.SIGNED_RANK_EXACT_LIMIT
    m.SIGNED_RANK_EXACT_LIMIT = 0
    try:
        return signed_rank(d).p_value
    finally:
        m.SIGNED_RANK_EXACT_LIMIT = saved


def _rank_sum_normal(a, b):
    from trackbench import stats as m

    saved = m.RANK_SUM_EXACT_LIMIT
    m.RANK_SUM_EXACT_LIMIT = 0
    try:
        return rank_sum(a, b).p_value
    finally:
        m.RANK_SUM_EXACT_LIMIT = saved


class TestRankSum:
    def test_disjoint_triples(self):
        res = rank_sum([1.0, 2.0, 3.0], [4.0, 5.0, 6.0])
        assert res.p_value == pytest.approx(0.1, abs=1e-12)
        assert res.method == "exact"
        assert not res.significant

    def test_identical_samples_not_significant(self):
        res = rank_sum([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert res.p_value == 1.0
        assert not res.significant

    def test_swap_symmetry(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            a = rng.normal(size=int(rng.integers(3, 10)))
            b = rng.normal(size=int(rng.integers(3, 10)))
            assert rank_sum(a, b).p_value == pytest.approx(
                rank_sum(b, a).p_value, abs=1e-12
            )

    def test_exact_matches_reference_library(self):
        rng = np.random.default_rng(6)
        for _ in range(50):
            n1 = int(rng.integers(3, 7))
            n2 = int(rng.integers(3, 13 - n1))
            a = rng.normal(size=n1)
            b = rng.normal(0.5, 1.0, size=n2)
            ours = rank_sum(a, b)
            ref = scipy.stats.mannwhitneyu(a, b, alternative="two-sided", method="exact")
            assert ours.method == "exact"
            assert ours.p_value == pytest.approx(ref.pvalue, abs=1e-10)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(7)
        a = rng.uniform(0.1, 2.0, size=8)
        b = rng.uniform(0.5, 2.5, size=9)
        p1 = rank_sum(a, b).p_value
        p2 = rank_sum(np.exp(a), np.exp(b)).p_value
        assert p1 == pytest.approx(p2, abs=1e-12)

    def test_exact_close_to_normal_at_cutoff(self):
        rng = np.random.default_rng(8)
        worst = 0.0
        for _ in range(100):
            a = rng.normal(size=6)
            b = rng.normal(rng.uniform(-1, 1), 1.0, size=6)
            exact_p = rank_sum(a, b).p_value
            approx_p = _rank_sum_normal(a, b)
            worst = max(worst, abs(exact_p - approx_p))
        assert worst <= 0.02

    def test_tied_everything_gives_p_one(self):
        res = _rank_sum_normal([1.0] * 8, [1.0] * 8)
        assert res == 1.0

    def test_validation(self):
        with pytest.raises(ParameterError):
            rank_sum([], [1.0])
        with pytest.raises(ContractError):
            rank_sum([1.0, float("inf")], [1.0])


class TestPracticalDifference:
    def test_boundary_mean_exactly_one_is_not_different(self):
        # Scaled differences 3 and -1: |3 - 1| / 2 = 1, not > 1.
        assert not practical_difference([0.3, 0.0], [0.0, 0.1], [0.1, 0.1])

    def test_clear_difference(self):
        assert practical_difference([0.5, 0.5], [0.1, 0.1], [0.1, 0.1])

    def test_zero_floor_frames_dropped(self):
        # Only the second frame counts: |0.4 / 0.1| / 1 = 4 > 1.
        assert practical_difference([0.9, 0.5], [0.1, 0.1], [0.0, 0.1])

    def test_no_usable_frames(self):
        assert not practical_difference([0.9], [0.1], [0.0])

    def test_symmetry(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            a = rng.uniform(0, 1, 15)
            b = rng.uniform(0, 1, 15)
            g = rng.uniform(0, 0.2, 15)
            assert practical_difference(a, b, g) == practical_difference(b, a, g)

    def test_validation(self):
        with pytest.raises(ContractError):
            practical_difference([1.0], [1.0], [1.0, 2.0])
        with pytest.raises(ContractError):
            practical_difference([1.0], [1.0], [-0.5])


class TestEquivalence:
    def test_self_equivalence(self):
        rng = np.random.default_rng(10)
        acc = rng.uniform(0, 1, 30)
        g = np.full(30, 0.1)
        assert accuracy_equivalent(acc, acc, g)
        fails = rng.integers(0, 5, 15).astype(float)
        assert robustness_equivalent(fails, fails)

    def test_nan_frames_excluded_pairwise(self):
        a = np.array([0.5, np.nan, 0.7, 0.9])
        b = np.array([0.5, 0.6, np.nan, 0.9])
        g = np.full(4, 0.1)
        assert accuracy_equivalent(a, b, g)

    def test_large_gap_not_equivalent(self):
        rng = np.random.default_rng(11)
        a = rng.uniform(0.8, 0.95, 60)
        b = rng.uniform(0.2, 0.35, 60)
        g = np.full(60, 0.05)
        assert not accuracy_equivalent(a, b, g)

    def test_sub_noise_gap_is_equivalent(self):
        rng = np.random.default_rng(12)
        a = rng.uniform(0.5, 0.52, 60)
        b = a + 0.005  # consistently better but far below the noise floor
        g = np.full(60, 0.1)
        assert accuracy_equivalent(a, b, g)

    def test_robustness_separation(self):
        zeros = np.zeros(10)
        many = np.full(10, 6.0)
        assert not robustness_equivalent(zeros, many)


@given(st.lists(st.floats(-5, 5), min_size=1, max_size=15))
@settings(max_examples=50, deadline=None)
def test_signed_rank_p_in_unit_interval(d):
    res = signed_rank(d)
    assert 0.0 <= res.p_value <= 1.0
    assert isinstance(res, ComparisonResult)
