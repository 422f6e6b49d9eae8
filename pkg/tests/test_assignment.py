"""Exact assignment solver: brute-force agreement, backends, tie policy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from numpy.testing import assert_array_equal

from otrank.assignment import (AssignmentResult, TiedDataError,
                               brute_force_solve, build_squared_cost,
                               empirical_rank_map, jitter_duplicates, solve,
                               validate_optimality)
from otrank.reference import gaussian_grid, regular_grid_1d

small_costs = hnp.arrays(
    dtype=np.float64,
    shape=st.integers(min_value=1, max_value=6).map(lambda n: (n, n)),
    elements=st.floats(min_value=0.0, max_value=100.0, allow_nan=False),
)


@given(small_costs)
@settings(max_examples=60, deadline=None)
def test_jv_equals_brute_force_cost(c):
    assert solve(c, backend="jv").total_cost == pytest.approx(
        brute_force_solve(c).total_cost, rel=1e-12, abs=1e-12)


@given(small_costs)
@settings(max_examples=40, deadline=None)
def test_scipy_backend_equals_brute_force_cost(c):
    assert solve(c, backend="scipy").total_cost == pytest.approx(
        brute_force_solve(c).total_cost, rel=1e-12, abs=1e-12)


def test_jv_matches_scipy_at_moderate_size():
    rng = np.random.default_rng(42)
    for _ in range(10):
        c = rng.random((60, 60))
        a = solve(c, backend="jv")
        b = solve(c, backend="scipy")
        assert a.total_cost == pytest.approx(b.total_cost, rel=1e-12)


def test_distinct_costs_give_identical_permutation():
    # with a.s.-distinct costs the optimum is unique, so sigma must agree
    rng = np.random.default_rng(7)
    for _ in range(50):
        n = int(rng.integers(2, 8))
        c = rng.random((n, n))
        assert_array_equal(solve(c, backend="jv").sigma,
                           brute_force_solve(c).sigma)


def test_tie_break_prefers_lowest_indices():
    # all-equal costs: every permutation is optimal, policy picks identity
    for n in (1, 2, 5):
        c = np.ones((n, n))
        assert_array_equal(solve(c, backend="jv").sigma, np.arange(n))
        assert_array_equal(brute_force_solve(c).sigma, np.arange(n))


def test_tie_break_is_deterministic_on_block_ties():
    c = np.array([[1.0, 1.0, 5.0],
                  [1.0, 1.0, 5.0],
                  [5.0, 5.0, 0.0]])
    first = solve(c, backend="jv").sigma
    for _ in range(5):
        assert_array_equal(solve(c, backend="jv").sigma, first)
    assert_array_equal(first, brute_force_solve(c).sigma)


def test_empty_matrix():
    res = solve(np.empty((0, 0)))
    assert res.total_cost == 0.0
    assert res.sigma.size == 0


def test_rejects_bad_matrices():
    with pytest.raises(ValueError):
        solve(np.ones((2, 3)))
    with pytest.raises(ValueError):
        solve(np.array([[1.0, np.inf], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        solve(np.array([[1.0, -0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        solve(np.ones((2, 2)), backend="nope")


def test_validate_optimality_accepts_and_rejects():
    rng = np.random.default_rng(3)
    c = rng.random((6, 6))
    res = solve(c, backend="jv")
    validate_optimality(c, res)
    # corrupt the permutation: swap two assignments
    bad = res.sigma.copy()
    bad[[0, 1]] = bad[[1, 0]]
    with pytest.raises(AssertionError):
        validate_optimality(c, AssignmentResult(bad, float(c[np.arange(6), bad].sum())))


def test_build_squared_cost_exact():
    z = np.array([[0.0, 0.0], [1.0, 2.0]])
    h = np.array([[1.0, 0.0], [0.0, 2.0]])
    want = np.array([[1.0, 4.0], [4.0, 1.0]])
    assert_array_equal(build_squared_cost(z, h), want)


class TestEmpiricalRankMap:
    def test_ranks_are_a_permutation_of_the_grid(self):
        rng = np.random.default_rng(0)
        grid = gaussian_grid(40, 2)
        sample = rng.normal(size=(40, 2))
        ranked = empirical_rank_map(sample, grid)
        got = ranked.ranks[np.lexsort(ranked.ranks.T)]
        want = grid.points[np.lexsort(grid.points.T)]
        assert_array_equal(got, want)
        # sigma is a permutation of 0..N-1
        assert_array_equal(np.sort(ranked.sigma), np.arange(40))

    def test_backends_agree_on_the_same_sample(self):
        rng = np.random.default_rng(1)
        grid = gaussian_grid(50, 3)
        sample = rng.normal(size=(50, 3))
        a = empirical_rank_map(sample, grid, backend="jv")
        b = empirical_rank_map(sample, grid, backend="scipy")
        assert a.total_cost == pytest.approx(b.total_cost, rel=1e-12)
        assert_array_equal(a.sigma, b.sigma)  # distinct data: unique optimum

    def test_d1_ranks_are_classical(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=37)
        grid = regular_grid_1d(37)
        ranked = empirical_rank_map(x[:, None], grid)
        from scipy.stats import rankdata

        classical = rankdata(x) / 37.0
        assert_array_equal(ranked.ranks[:, 0], classical)

    def test_duplicate_rows_raise(self):
        grid = regular_grid_1d(4)
        sample = np.array([[0.3], [0.3], [0.7], [0.9]])
        with pytest.raises(TiedDataError):
            empirical_rank_map(sample, grid)

    def test_jitter_seed_resolves_ties_deterministically(self):
        grid = gaussian_grid(6, 2)
        sample = np.array([[0.5, 0.5]] * 3 + [[1.0, -1.0]] * 3)
        a = empirical_rank_map(sample, grid, jitter_seed=11)
        b = empirical_rank_map(sample, grid, jitter_seed=11)
        assert_array_equal(a.sigma, b.sigma)
        c = empirical_rank_map(sample, grid, jitter_seed=12)
        assert c.sigma.shape == a.sigma.shape  # may or may not differ; just runs

    def test_jitter_is_skipped_for_distinct_rows(self):
        # the rank map only perturbs when duplicates are present
        rng = np.random.default_rng(4)
        grid = gaussian_grid(12, 2)
        sample = rng.normal(size=(12, 2))
        a = empirical_rank_map(sample, grid)
        b = empirical_rank_map(sample, grid, jitter_seed=99)
        assert_array_equal(a.sigma, b.sigma)
        assert a.total_cost == b.total_cost

    def test_jitter_scale_is_tiny(self):
        sample = np.array([[0.0, 1.0], [2.0, 3.0]])
        out = jitter_duplicates(sample, seed=5)
        assert np.abs(out - sample).max() <= 1e-10 * 3.0
        assert_array_equal(jitter_duplicates(sample, seed=5), out)  # seeded


def test_cyclical_monotonicity_spot_check():
    """<R(x) - R(y), x - y> >= 0 for pairs from one optimal assignment.

    The rank map is the restriction of the gradient of a convex function to
    the sample, so the inner product can only be nonnegative up to roundoff.
    """
    rng = np.random.default_rng(9)
    grid = gaussian_grid(120, 2)
    sample = rng.normal(size=(120, 2))
    ranks = empirical_rank_map(sample, grid).ranks
    idx = rng.integers(0, 120, size=(1000, 2))
    gap = np.einsum("ij,ij->i",
                    ranks[idx[:, 0]] - ranks[idx[:, 1]],
                    sample[idx[:, 0]] - sample[idx[:, 1]])
    assert gap.min() >= -1e-10
