"""Permutation calibration: add-one consistency, caching, determinism."""

import os
from pathlib import Path

import numpy as np
import pytest
from numpy.testing import assert_array_equal
from scipy import stats

from otrank.calibration import (NullTable, NullTableKey, _addone_cutoff,
                                _addone_p, asymptotic_cutoff,
                                default_cache_dir, grid_fingerprint,
                                permutation_null, resolve_threads,
                                run_independence_test, run_two_sample_test)
from otrank.reference import gaussian_grid, regular_grid_1d


def small_key(grid, m=10, b=200, seed=0, route="labels", **kw):
    return NullTableKey.two_sample(grid, m, b=b, seed=seed, route=route, **kw)


class TestAddOne:
    def test_p_value_definition(self):
        draws = np.array([1.0, 2.0, 3.0, 4.0])
        assert _addone_p(draws, 5.0) == pytest.approx(1 / 5)
        assert _addone_p(draws, 2.5) == pytest.approx(3 / 5)
        assert _addone_p(draws, 2.0) == pytest.approx(4 / 5)  # ties count
        assert _addone_p(draws, 0.0) == pytest.approx(5 / 5)

    def test_cutoff_consistency_exhaustive(self):
        """decision == (p <= alpha) for every draw and a grid of alphas."""
        rng = np.random.default_rng(0)
        draws = np.sort(np.round(rng.chisquare(2, 199), 1))  # force ties
        for alpha in (0.01, 0.049, 0.05, 0.1, 0.25, 0.5):
            cut = _addone_cutoff(draws, alpha)
            for obs in np.r_[draws, draws + 0.05, 0.0, 100.0]:
                assert (obs >= cut) == (_addone_p(draws, obs) <= alpha), (alpha, obs)

    def test_tiny_alpha_never_rejects(self):
        draws = np.arange(100.0)
        assert _addone_cutoff(draws, 0.005) == np.inf

    def test_super_uniformity_exact_table(self):
        # p-values of the table's own draws: P(p <= alpha) <= alpha
        draws = np.sort(np.random.default_rng(1).chisquare(3, 499))
        for alpha in (0.01, 0.05, 0.2):
            frac = np.mean([_addone_p(draws, v) <= alpha for v in draws])
            assert frac <= alpha + 1e-12


class TestNullTableKey:
    def test_token_fields_and_filename(self):
        g = gaussian_grid(20, 2)
        key = small_key(g)
        tok = key.token()
        assert "rank_hotelling" in tok and "B200" in tok and "labels" in tok
        assert key.filename().endswith(".null")
        assert key.filename() == key.filename()

    def test_labels_route_forces_no_data_law(self):
        g = gaussian_grid(20, 2)
        key = small_key(g, data_law="lognormal")
        assert key.data_law == "none"
        fresh = small_key(g, route="fresh", data_law="lognormal")
        assert fresh.data_law == "lognormal"

    def test_different_b_different_digest(self):
        g = gaussian_grid(20, 2)
        assert small_key(g, b=200).digest() != small_key(g, b=300).digest()

    def test_validation(self):
        g = gaussian_grid(20, 2)
        with pytest.raises(ValueError):
            small_key(g, m=0)
        with pytest.raises(ValueError):
            small_key(g, m=20)
        with pytest.raises(ValueError):
            small_key(g, b=99)
        with pytest.raises(ValueError):
            NullTableKey("rank_hotelling", (5, 5), (1,), "f", ("identity",),
                         200, 0, route="bogus")
        with pytest.raises(ValueError):
            NullTableKey.independence("wilks", g, g)

    def test_independence_key_needs_equal_sizes(self):
        with pytest.raises(ValueError):
            NullTableKey.independence("rank_spearman", gaussian_grid(10, 1),
                                      gaussian_grid(12, 1))


class TestNullTable:
    def test_requires_sorted_draws_of_right_length(self):
        g = gaussian_grid(20, 2)
        key = small_key(g, b=200)
        with pytest.raises(ValueError):
            NullTable(np.ones(100), key)
        with pytest.raises(ValueError):
            NullTable(np.r_[np.ones(199), 0.0], key)

    def test_accessors(self):
        g = gaussian_grid(20, 2)
        key = small_key(g, b=200)
        table = NullTable(np.arange(200.0), key)
        assert table.b == 200
        assert table.quantile(1.0) == 199.0
        assert table.p_value(199.0) == pytest.approx(2 / 201)


class TestGridFingerprint:
    def test_sensitive_to_points_and_tag(self):
        a = gaussian_grid(16, 2)
        b = gaussian_grid(17, 2)
        assert grid_fingerprint(a) == grid_fingerprint(a)
        assert grid_fingerprint(a) != grid_fingerprint(b)


class TestPermutationNull:
    def test_labels_deterministic_and_thread_independent(self):
        g = gaussian_grid(24, 2)
        key = small_key(g, m=12, b=150, seed=3)
        t1 = permutation_null(key, grid=g, threads=1, use_cache=False)
        t2 = permutation_null(key, grid=g, threads=3, use_cache=False)
        assert_array_equal(t1.draws, t2.draws)

    def test_labels_null_is_distribution_free_by_construction(self):
        # the labels route never touches data, only the grid
        g = regular_grid_1d(30)
        key = small_key(g, m=15, b=300, seed=1)
        table = permutation_null(key, grid=g, use_cache=False)
        # d=1 identity: statistic is the scaled squared Wilcoxon, bounded
        assert table.draws.min() >= 0.0
        assert np.isfinite(table.draws).all()

    def test_fresh_route_runs(self):
        g = gaussian_grid(16, 2)
        key = small_key(g, m=8, b=120, seed=2, route="fresh",
                        data_law="gaussian")
        table = permutation_null(key, grid=g, use_cache=False)
        assert table.b == 120

    def test_fingerprint_mismatch_rejected(self):
        g = gaussian_grid(20, 2)
        other = gaussian_grid(22, 2)
        key = small_key(g, b=150)
        with pytest.raises(ValueError):
            permutation_null(key, grid=other, use_cache=False)

    def test_cache_round_trip(self, tmp_path):
        g = gaussian_grid(18, 2)
        key = small_key(g, m=9, b=1000, seed=5)
        t1 = permutation_null(key, grid=g, cache_dir=tmp_path)
        fname = tmp_path / key.filename()
        assert fname.exists()
        index = (tmp_path / "index.txt").read_text()
        assert key.digest() in index
        mtime = fname.stat().st_mtime_ns
        t2 = permutation_null(key, grid=g, cache_dir=tmp_path)
        assert fname.stat().st_mtime_ns == mtime  # not rewritten
        assert_array_equal(t1.draws, t2.draws)

    def test_small_b_not_cached(self, tmp_path):
        g = gaussian_grid(18, 2)
        key = small_key(g, m=9, b=500, seed=5)
        permutation_null(key, grid=g, cache_dir=tmp_path)
        assert not (tmp_path / key.filename()).exists()

    def test_corrupted_cache_entry_is_regenerated(self, tmp_path):
        g = gaussian_grid(18, 2)
        key = small_key(g, m=9, b=1000, seed=6)
        t1 = permutation_null(key, grid=g, cache_dir=tmp_path)
        fname = tmp_path / key.filename()
        fname.write_bytes(b"garbage that is not a null table")
        t2 = permutation_null(key, grid=g, cache_dir=tmp_path)
        assert_array_equal(t1.draws, t2.draws)


class TestThreadResolution:
    def test_explicit_wins(self):
        assert resolve_threads(4) == 4

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("OTRANK_THREADS", "3")
        assert resolve_threads(None) == 3

    def test_default_positive(self, monkeypatch):
        monkeypatch.delenv("OTRANK_THREADS", raising=False)
        assert resolve_threads(None) >= 1

    def test_cache_dir_env(self, monkeypatch, tmp_path):
        monkeypatch.setenv("OTRANK_CACHE", str(tmp_path / "c"))
        assert default_cache_dir() == Path(str(tmp_path / "c"))


class TestAsymptoticCutoff:
    def test_matches_chi2(self):
        assert asymptotic_cutoff(2, 0.05) == pytest.approx(
            stats.chi2.ppf(0.95, 2), rel=1e-10)
        with pytest.raises(ValueError):
            asymptotic_cutoff(2, 0.0)


class TestRunTwoSample:
    def test_asymptotic_report_consistency(self):
        rng = np.random.default_rng(21)
        x = rng.normal(size=(20, 2))
        y = rng.normal(size=(20, 2)) + 2.0
        rep = run_two_sample_test(x, y)
        assert rep.calibration == "asymptotic"
        assert rep.df == 2
        assert rep.decision == (rep.statistic >= rep.cutoff)
        assert rep.decision  # shift of 2 sigma at n=20 is unmissable

    def test_permutation_three_way_consistency(self):
        rng = np.random.default_rng(22)
        x = rng.normal(size=(15, 2))
        y = rng.normal(size=(15, 2)) + 0.6
        for alpha in (0.01, 0.05, 0.2):
            rep = run_two_sample_test(x, y, calibration="permutation", b=199,
                                      alpha=alpha, seed=4, use_cache=False)
            assert rep.decision == (rep.p_value <= alpha)
            assert rep.decision == (rep.statistic >= rep.cutoff)
            assert rep.p_value >= 1.0 / 200.0

    def test_flat_vectors_are_univariate_samples(self):
        rng = np.random.default_rng(23)
        rep = run_two_sample_test(rng.normal(size=30), rng.normal(size=30))
        assert rep.df == 1
        assert rep.diagnostics["m"] == 30.0

    def test_permutation_matches_labels_and_fresh_size(self):
        # both routes calibrate to level alpha under the null
        rng = np.random.default_rng(24)
        hits = {"labels": 0, "fresh": 0}
        n_rep = 60
        for i in range(n_rep):
            x = rng.normal(size=(12, 1))
            y = rng.normal(size=(12, 1))
            for route in hits:
                rep = run_two_sample_test(
                    x, y, calibration="permutation", b=119, seed=7, route=route,
                    use_cache=False)
                hits[route] += rep.decision
        for route, k in hits.items():
            # binomial(60, 0.05): P(X > 9) < 1e-4
            assert k <= 9, (route, k)

    def test_alpha_validation(self):
        rng = np.random.default_rng(25)
        x = rng.normal(size=(8, 1))
        with pytest.raises(ValueError):
            run_two_sample_test(x, x + 1.0, alpha=1.0)


class TestRunIndependence:
    def test_spearman_asymptotic(self):
        rng = np.random.default_rng(26)
        x = rng.normal(size=(40, 2))
        y = 0.9 * x + 0.1 * rng.normal(size=(40, 2))
        rep = run_independence_test(x, y)
        assert rep.df == 4
        assert rep.decision

    def test_rdcov_requires_permutation(self):
        rng = np.random.default_rng(27)
        x = rng.normal(size=(20, 1))
        y = rng.normal(size=(20, 1))
        with pytest.raises(ValueError):
            run_independence_test(x, y, "rdcov")
        rep = run_independence_test(x, y, "rdcov", calibration="permutation",
                                    b=119, use_cache=False)
        assert rep.calibration == "permutation"
        assert rep.df == 0

    def test_wilks_permutation_is_data_conditional(self):
        rng = np.random.default_rng(28)
        x = rng.normal(size=(25, 1))
        y = rng.normal(size=(25, 1))
        rep = run_independence_test(x, y, "wilks", calibration="permutation",
                                    b=99, seed=1, use_cache=False)
        assert rep.decision == (rep.p_value <= 0.05)

    def test_unknown_kind(self):
        rng = np.random.default_rng(29)
        x = rng.normal(size=(10, 1))
        with pytest.raises(ValueError):
            run_independence_test(x, x + 1.0, "kendall")

    def test_thread_count_does_not_change_report(self):
        rng = np.random.default_rng(30)
        x = rng.normal(size=(14, 2))
        y = rng.normal(size=(14, 2))
        a = run_independence_test(x, y, calibration="permutation", b=149,
                                  seed=9, threads=1, use_cache=False)
        b = run_independence_test(x, y, calibration="permutation", b=149,
                                  seed=9, threads=4, use_cache=False)
        assert a.statistic == b.statistic
        assert a.p_value == b.p_value
        assert a.cutoff == b.cutoff
