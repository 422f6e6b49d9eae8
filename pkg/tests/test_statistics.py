"""Test statistics against their univariate classical reductions."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal
from scipy import stats

from otrank.reference import (build_grid, erd_covariance, gaussian_grid,
                              regular_grid_1d)
from otrank.statistics import (RankHotellingResult, TestReport, hotelling_t2,
                               rank_hotelling, rank_spearman, rdcov,
                               scored_ranks, wilks)


def wilcoxon_oracle(x, y):
    """Two-sided Wilcoxon rank-sum, squared and scaled: 12(W - m(N+1)/2)^2/(Nmn)."""
    m, n = len(x), len(y)
    big_n = m + n
    ranks = stats.rankdata(np.concatenate([x, y]))
    w = ranks[:m].sum()
    return 12.0 * (w - m * (big_n + 1) / 2.0) ** 2 / (big_n * m * n)


class TestRankHotelling:
    def test_wilcoxon_identity_d1(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            m = int(rng.integers(5, 30))
            n = int(rng.integers(5, 30))
            x = rng.normal(size=(m, 1))
            y = rng.normal(0.5, 1.0, size=(n, 1))
            grid = regular_grid_1d(m + n)
            got = rank_hotelling(x, y, grid).statistic
            assert got == pytest.approx(wilcoxon_oracle(x[:, 0], y[:, 0]),
                                        rel=1e-10)

    def test_swap_symmetry(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=(12, 2))
        y = rng.normal(size=(15, 2))
        grid = gaussian_grid(27, 2)
        assert rank_hotelling(x, y, grid).statistic == pytest.approx(
            rank_hotelling(y, x, grid).statistic, rel=1e-12)

    def test_returns_delta(self):
        rng = np.random.default_rng(2)
        x = rng.normal(size=(10, 2))
        y = rng.normal(size=(10, 2))
        grid = gaussian_grid(20, 2)
        res = rank_hotelling(x, y, grid)
        assert isinstance(res, RankHotellingResult)
        assert res.delta.shape == (2,)
        sr = scored_ranks(np.vstack([x, y]), grid)
        assert_allclose(res.delta, sr[:10].mean(axis=0) - sr[10:].mean(axis=0),
                        rtol=1e-12)

    def test_statistic_invariant_to_monotone_margins(self):
        # ranks only see the ordering structure: exp() each coordinate
        rng = np.random.default_rng(3)
        x = rng.normal(size=(15, 2))
        y = rng.normal(size=(15, 2))
        grid = gaussian_grid(30, 2)
        a = rank_hotelling(x, y, grid).statistic
        b = rank_hotelling(np.exp(x), np.exp(y), grid).statistic
        # not identical in general (the coupling is on joint geometry), but
        # the d=1 special case must be exactly invariant
        x1, y1 = x[:, :1], y[:, :1]
        g1 = regular_grid_1d(30)
        assert rank_hotelling(x1, y1, g1).statistic == pytest.approx(
            rank_hotelling(np.exp(x1), np.exp(y1), g1).statistic, rel=1e-12)
        assert np.isfinite(a) and np.isfinite(b)

    def test_custom_erd_changes_scale(self):
        rng = np.random.default_rng(4)
        x = rng.normal(size=(10, 2))
        y = rng.normal(size=(10, 2))
        grid = gaussian_grid(20, 2)
        base = rank_hotelling(x, y, grid).statistic
        doubled = rank_hotelling(x, y, grid,
                                 erd=2.0 * np.eye(2)).statistic
        assert doubled == pytest.approx(base / 2.0, rel=1e-12)

    def test_validation_errors(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(5, 2))
        y = rng.normal(size=(5, 3))
        with pytest.raises(ValueError):
            rank_hotelling(x, y, gaussian_grid(10, 2))
        with pytest.raises(ValueError):
            rank_hotelling(x[:1], x, gaussian_grid(6, 2))
        with pytest.raises(ValueError):
            rank_hotelling(x, x, gaussian_grid(11, 2))  # wrong grid size
        with pytest.raises(ValueError):
            rank_hotelling(x, np.full((5, 2), np.nan), gaussian_grid(10, 2))


class TestHotellingT2:
    def test_d1_is_squared_t(self):
        rng = np.random.default_rng(6)
        x = rng.normal(size=(14, 1))
        y = rng.normal(0.3, 1.0, size=(11, 1))
        t = stats.ttest_ind(x[:, 0], y[:, 0], equal_var=True).statistic
        assert hotelling_t2(x, y) == pytest.approx(t * t, rel=1e-12)

    def test_affine_invariance(self):
        rng = np.random.default_rng(7)
        x = rng.normal(size=(20, 3))
        y = rng.normal(size=(25, 3)) + 0.4
        a = rng.normal(size=(3, 3)) + 3 * np.eye(3)
        shift = rng.normal(size=3)
        base = hotelling_t2(x, y)
        moved = hotelling_t2(x @ a.T + shift, y @ a.T + shift)
        assert moved == pytest.approx(base, rel=1e-9)

    def test_rank_deficiency_raises(self):
        x = np.zeros((3, 4))
        y = np.ones((3, 4))
        with pytest.raises(ValueError):
            hotelling_t2(x, y)  # m + n - 2 = 4 = d boundary is fine, singular is not

    def test_known_two_point_case(self):
        x = np.array([[0.0], [2.0]])
        y = np.array([[1.0], [5.0]])
        # pooled s^2 = (2 + 8)/2 = 5, diff = -2, mn/N = 1 -> T = 4/5
        assert hotelling_t2(x, y) == pytest.approx(0.8, rel=1e-12)


class TestRankSpearman:
    def test_d1_classical_reduction(self):
        rng = np.random.default_rng(8)
        n = 40
        x = rng.normal(size=(n, 1))
        y = 0.5 * x + rng.normal(size=(n, 1))
        g = regular_grid_1d(n)
        rho = stats.spearmanr(x[:, 0], y[:, 0]).statistic
        want = rho * rho * (n * n - 1.0) ** 2 / n ** 3
        got = rank_spearman(x, y, g, g)
        assert got == pytest.approx(want, rel=1e-10)

    def test_zero_when_one_block_constant_ranks(self):
        # independence of permutations: statistic is nonnegative, symmetric
        rng = np.random.default_rng(9)
        n = 30
        x = rng.normal(size=(n, 2))
        y = rng.normal(size=(n, 2))
        g = gaussian_grid(n, 2)
        s_xy = rank_spearman(x, y, g, g)
        s_yx = rank_spearman(y, x, g, g)
        assert s_xy >= 0.0
        assert s_xy == pytest.approx(s_yx, rel=1e-10)

    def test_matrix_form_equals_kron_vec_form(self):
        rng = np.random.default_rng(10)
        n, d1, d2 = 25, 2, 3
        x = rng.normal(size=(n, d1))
        y = rng.normal(size=(n, d2))
        gx = gaussian_grid(n, d1)
        gy = gaussian_grid(n, d2)
        got = rank_spearman(x, y, gx, gy)
        # oracle: whiten the row-major vectorization by the Kronecker product
        sx = scored_ranks(x, gx)
        sy = scored_ranks(y, gy)
        cross = (sx - sx.mean(0)).T @ (sy - sy.mean(0)) / np.sqrt(n)
        s1 = erd_covariance("gaussian", "identity", d1).sigma_erd
        s2 = erd_covariance("gaussian", "identity", d2).sigma_erd
        kron = np.kron(s1, s2)
        from otrank._linalg import sym_inv_sqrt

        vec = sym_inv_sqrt(kron) @ cross.reshape(-1)
        assert got == pytest.approx(float(vec @ vec), rel=1e-10)

    def test_mismatched_grid_sizes_raise(self):
        rng = np.random.default_rng(11)
        x = rng.normal(size=(10, 1))
        with pytest.raises(ValueError):
            rank_spearman(x, x + 1.0, regular_grid_1d(9), regular_grid_1d(10))
        with pytest.raises(ValueError):
            rank_spearman(x[:3], x[:4], regular_grid_1d(3), regular_grid_1d(4))


class TestWilks:
    def test_d1_pearson_reduction(self):
        rng = np.random.default_rng(12)
        n = 50
        x = rng.normal(size=(n, 1))
        y = 0.6 * x + rng.normal(size=(n, 1))
        r = np.corrcoef(x[:, 0], y[:, 0])[0, 1]
        assert wilks(x, y) == pytest.approx(-n * np.log1p(-r * r), rel=1e-10)

    def test_zero_iff_sample_cross_covariance_zero(self):
        x = np.array([[1.0], [-1.0], [2.0], [-2.0]])
        y = np.array([[1.0], [1.0], [-1.0], [-1.0]])  # exactly uncorrelated
        assert wilks(x, y) == pytest.approx(0.0, abs=1e-12)

    def test_degenerate_block_raises(self):
        x = np.ones((10, 1))
        y = np.arange(10.0)[:, None]
        with pytest.raises(ValueError):
            wilks(x, y)


class TestRdcov:
    @staticmethod
    def dcov_v_oracle(a, b):
        """Double-centered V-statistic: mean(Atil * Btil)."""
        def center(m):
            return m - m.mean(0) - m.mean(1)[:, None] + m.mean()

        return float((center(a) * center(b)).mean())

    def test_matches_double_centering_identity(self):
        from scipy.spatial.distance import cdist

        rng = np.random.default_rng(13)
        n = 35
        x = rng.normal(size=(n, 2))
        y = rng.normal(size=(n, 2))
        g = gaussian_grid(n, 2)
        got = rdcov(x, y, g, g)
        sx = scored_ranks(x, g)
        sy = scored_ranks(y, g)
        want = self.dcov_v_oracle(cdist(sx, sx), cdist(sy, sy))
        assert got == pytest.approx(want, rel=1e-10)

    def test_nonnegative_and_zero_under_identical_singletons(self):
        rng = np.random.default_rng(14)
        n = 20
        x = rng.normal(size=(n, 1))
        y = rng.normal(size=(n, 1))
        g = regular_grid_1d(n)
        assert rdcov(x, y, g, g) >= -1e-12

    def test_detects_functional_dependence(self):
        rng = np.random.default_rng(15)
        n = 60
        x = rng.normal(size=(n, 2))
        g = gaussian_grid(n, 2)
        dependent = rdcov(x, x.copy(), g, g, jitter_seed=None)
        rng2 = np.random.default_rng(16)
        independent = rdcov(x, rng2.normal(size=(n, 2)), g, g)
        assert dependent > independent


class TestTestReport:
    def test_decision_must_match_cutoff(self):
        with pytest.raises(ValueError):
            TestReport(statistic=1.0, df=2, cutoff=2.0, p_value=0.5,
                       calibration="asymptotic", decision=True)

    def test_p_value_range(self):
        with pytest.raises(ValueError):
            TestReport(statistic=1.0, df=2, cutoff=2.0, p_value=1.5,
                       calibration="asymptotic", decision=False)

    def test_to_dict_round_trip(self):
        rep = TestReport(statistic=3.0, df=2, cutoff=2.0, p_value=0.01,
                         calibration="permutation", decision=True,
                         diagnostics={"b": 99})
        d = rep.to_dict()
        assert d["decision"] is True
        assert d["diagnostics"] == {"b": 99}
        assert d["calibration"] == "permutation"

    def test_unknown_calibration(self):
        with pytest.raises(ValueError):
            TestReport(statistic=0.0, df=1, cutoff=1.0, p_value=0.9,
                       calibration="bootstrap", decision=False)
