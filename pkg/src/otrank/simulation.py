"""Samplers and Monte-Carlo power/size harnesses.

Families covered: Gaussian, independent logistic, elliptical Laplace,
log-normal, product Epanechnikov, spherical uniform, plus the Konijn
cross-mixing construction for dependence alternatives.  The harnesses
produce rejection-rate curves with binomial standard errors and are
deterministic for a fixed spec regardless of thread count (per-replication
counter-seeded substreams, reduced in replication order).
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import specfun
from ._linalg import sym_sqrt
from .assignment import empirical_rank_map
from .calibration import NullTableKey, _addone_cutoff, _map_reps, permutation_null
from .reference import gaussian_grid, halton_grid, regular_grid_1d
from .statistics import _erd_matrix, hotelling_t2, rank_spearman, wilks

__all__ = [
    "ScenarioSpec",
    "PowerCurve",
    "HlMatchReport",
    "FAMILIES",
    "sample_family",
    "konijn_mix",
    "epanechnikov_quantile",
    "epanechnikov_pdf",
    "power_curve",
    "hl_sample_size_match",
    "konijn_power",
]

FAMILIES = ("gaussian", "logistic", "laplace_elliptical", "lognormal",
            "epanechnikov", "spherical_uniform")

_SETTINGS = ("H1", "H2", "A1", "A2", "A3", "A4", "konijn", "custom")
_TWO_SAMPLE_TESTS = ("rank_gaussian", "rank_uniform", "hotelling")
_INDEPENDENCE_TESTS = ("rank_spearman", "wilks")

_SQRT5 = math.sqrt(5.0)


# --------------------------------------------------------------------------
# samplers


def epanechnikov_quantile(u, loc: float = 0.0, sigma: float = 1.0):
    """Inverse CDF of the Epanechnikov location family with variance sigma^2.

    The standardized CDF is the cubic (3t - t^3 + 2)/4 on [-1, 1]; its
    inverse has the closed trigonometric form below (the middle root of the
    depressed cubic is the one inside the support).  Support is
    |x - loc| <= sqrt(5) sigma.
    """
    u = np.asarray(u, dtype=float)
    if np.any(u < 0.0) or np.any(u > 1.0):
        raise ValueError("quantile arguments must lie in [0, 1]")
    t = 2.0 * np.cos(np.arccos(1.0 - 2.0 * u) / 3.0 - 2.0 * math.pi / 3.0)
    return loc + _SQRT5 * sigma * np.clip(t, -1.0, 1.0)


def epanechnikov_pdf(x, loc: float = 0.0, sigma: float = 1.0):
    """Density 3 (5 sigma^2 - (x-loc)^2) / (20 sqrt(5) sigma^3) on its support."""
    x = np.asarray(x, dtype=float)
    z = x - loc
    inside = np.abs(z) <= _SQRT5 * sigma
    vals = 3.0 * (5.0 * sigma * sigma - z * z) / (20.0 * _SQRT5 * sigma ** 3)
    return np.where(inside, vals, 0.0)


def _loc_vector(params: dict, d: int) -> np.ndarray:
    loc = params.get("loc", 0.0)
    if np.ndim(loc) == 0:
        return np.full(d, float(loc))
    loc = np.asarray(loc, dtype=float)
    if loc.shape != (d,):
        raise ValueError(f"location must be scalar or length-{d}, got shape {loc.shape}")
    return loc


def _draw_family(family: str, params: dict, n: int, d: int,
                 rng: np.random.Generator) -> np.ndarray:
    loc = _loc_vector(params, d)
    if family == "gaussian":
        return rng.standard_normal((n, d)) + loc
    if family == "logistic":
        scale = float(params.get("scale", 1.0))
        return rng.logistic(0.0, scale, (n, d)) + loc
    if family == "lognormal":
        # the location acts on the log scale
        return np.exp(rng.standard_normal((n, d)) + loc)
    if family == "epanechnikov":
        sigma = float(params.get("sigma", 1.0))
        return epanechnikov_quantile(rng.random((n, d)), 0.0, sigma) + loc
    if family == "laplace_elliptical":
        scale = params.get("scale_matrix")
        scale = np.eye(d) if scale is None else np.asarray(scale, dtype=float)
        root = sym_sqrt(scale)  # rejects non-PD scale matrices
        mix = np.sqrt(rng.exponential(1.0, n))
        return loc + mix[:, None] * (rng.standard_normal((n, d)) @ root.T)
    if family == "spherical_uniform":
        g = rng.standard_normal((n, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        return loc + g * rng.random((n, 1))
    raise ValueError(f"unknown family {family!r}")


def sample_family(family: str, params: dict, n: int, d: int, seed: int) -> np.ndarray:
    """Seeded n x d draw from a named family; see FAMILIES."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    return _draw_family(family, dict(params), n, d, np.random.default_rng(seed))


def konijn_mix(x, y, delta: float, m_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Cross-mix two independent blocks at rate delta/sqrt(n).

    Returns (a x + b y M', b x M + a y) with a = 1 - delta/sqrt(n) and
    b = delta/sqrt(n); delta=0 reproduces the inputs exactly.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape[0] != y.shape[0]:
        raise ValueError("blocks must have equal row counts")
    m = np.asarray(m_matrix, dtype=float)
    if m.shape != (x.shape[1], y.shape[1]):
        raise ValueError(f"mixing matrix must be {x.shape[1]}x{y.shape[1]}, got {m.shape}")
    b = delta / math.sqrt(x.shape[0])
    a = 1.0 - b
    return a * x + b * (y @ m.T), b * (x @ m) + a * y


# --------------------------------------------------------------------------
# scenario plumbing


@dataclass
class ScenarioSpec:
    """One Monte-Carlo experiment: family, sizes, alternative grid, tests.

    thetas is the location-shift grid for the two-sample settings and the
    delta grid for konijn; ns is only used by the sample-size matching
    protocol.
    """

    setting: str
    d: int
    n: int
    thetas: tuple[float, ...] = (0.1,)
    m: int | None = None
    b: int = 500
    alpha: float = 0.05
    tests: tuple[str, ...] = ()
    seed: int = 0
    ns: tuple[int, ...] = ()
    d2: int | None = None
    base_family: str = "gaussian"
    m_matrix: np.ndarray | None = None
    family: str | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.setting not in _SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if self.b < 1:
            raise ValueError("need at least one replication")
        if not self.thetas:
            raise ValueError("the alternative grid must be non-empty")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.d < 1 or self.n < 2:
            raise ValueError("need d >= 1 and n >= 2")
        self.thetas = tuple(float(t) for t in self.thetas)
        self.tests = tuple(self.tests)


@dataclass
class PowerCurve:
    """Rejection rates over the alternative grid, one row of arrays per test."""

    grid: np.ndarray
    tests: tuple[str, ...]
    power: dict
    se: dict
    b: int
    alpha: float
    seed: int
    meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        self.grid = np.asarray(self.grid, dtype=float)
        for t in self.tests:
            p = np.asarray(self.power[t], dtype=float)
            if p.shape != self.grid.shape:
                raise ValueError(f"power for {t!r} must match the grid shape")
            if np.any(p < 0.0) or np.any(p > 1.0):
                raise ValueError("rejection rates must lie in [0, 1]")
            self.power[t] = p
            self.se[t] = np.asarray(self.se[t], dtype=float)

    def to_rows(self) -> list[dict]:
        rows = []
        for i, theta in enumerate(self.grid):
            for t in self.tests:
                rows.append({"theta": float(theta), "test": t,
                             "power": float(self.power[t][i]),
                             "se": float(self.se[t][i]),
                             "b": self.b, "seed": self.seed})
        return rows


def _binom_se(p: np.ndarray, b: int) -> np.ndarray:
    return np.sqrt(p * (1.0 - p) / b)


_SETTING_FAMILIES = {
    "H1": ("epanechnikov", {"sigma": 1.0}),
    "H2": ("gaussian", {}),
    "A1": ("gaussian", {}),
    "A2": ("logistic", {"scale": 1.0}),
    "A3": ("laplace_elliptical", {}),
    "A4": ("lognormal", {}),
}


def _setting_drawer(spec: ScenarioSpec):
    """Returns drawer(rng, k, shift) -> k x d sample at the given location shift."""
    if spec.setting == "custom":
        if spec.family is None:
            raise ValueError("custom scenarios must name a family")
        family, params = spec.family, dict(spec.params)
    else:
        family, params = _SETTING_FAMILIES[spec.setting]
        params = dict(params)
        if spec.setting == "A3":
            params["scale_matrix"] = 0.5 * np.eye(spec.d) + 0.5 * np.ones((spec.d, spec.d))

    def drawer(rng: np.random.Generator, k: int, shift: float) -> np.ndarray:
        p = dict(params)
        p["loc"] = shift
        return _draw_family(family, p, k, spec.d, rng)

    return drawer


def _uniform_grid(n: int, d: int):
    return regular_grid_1d(n) if d == 1 else halton_grid(n, d)


def _pooled_rank_stat(pooled: np.ndarray, m: int, grid, inv_sigma: np.ndarray,
                      backend: str) -> float:
    ranks = empirical_rank_map(pooled, grid, backend=backend).ranks
    delta = ranks[:m].mean(axis=0) - ranks[m:].mean(axis=0)
    n = pooled.shape[0] - m
    return (m * n / pooled.shape[0]) * float(delta @ inv_sigma @ delta)


def power_curve(spec: ScenarioSpec, *, threads: int | None = None,
                backend: str = "auto") -> PowerCurve:
    """Rejection-rate curve over spec.thetas with asymptotic cutoffs.

    Each rank test solves its own assignment per replication (the two
    reference laws use different grids); Hotelling shares the same draws.
    """
    if spec.setting == "konijn":
        return konijn_power(spec, threads=threads, backend=backend)
    tests = spec.tests or _TWO_SAMPLE_TESTS
    bad = set(tests) - set(_TWO_SAMPLE_TESTS)
    if bad:
        raise ValueError(f"unknown two-sample tests: {sorted(bad)}")
    m = spec.m if spec.m is not None else spec.n
    total = m + spec.n
    d = spec.d
    grid_g = gaussian_grid(total, d) if "rank_gaussian" in tests else None
    grid_u = _uniform_grid(total, d) if "rank_uniform" in tests else None
    inv_g = np.linalg.inv(_erd_matrix(None, "gaussian", "identity", d))
    inv_u = np.linalg.inv(_erd_matrix(None, "uniform_cube", "identity", d))
    cutoff = specfun.chi2_quantile(d, 1.0 - spec.alpha)
    drawer = _setting_drawer(spec)

    power = {t: [] for t in tests}
    runtimes = []
    for ti, theta in enumerate(spec.thetas):
        def rep(i: int, _theta=theta, _ti=ti) -> tuple:
            rng = np.random.default_rng((spec.seed, _ti, i))
            x = drawer(rng, m, 0.0)
            y = drawer(rng, spec.n, _theta)
            pooled = np.vstack([x, y])
            out = []
            for t in tests:
                if t == "rank_gaussian":
                    stat = _pooled_rank_stat(pooled, m, grid_g, inv_g, backend)
                elif t == "rank_uniform":
                    stat = _pooled_rank_stat(pooled, m, grid_u, inv_u, backend)
                else:
                    stat = hotelling_t2(x, y)
                out.append(stat >= cutoff)
            return tuple(out)

        t0 = time.perf_counter()
        rows = _map_reps(rep, spec.b, threads)
        runtimes.append(time.perf_counter() - t0)
        arr = np.asarray(rows, dtype=float)
        for j, t in enumerate(tests):
            power[t].append(arr[:, j].mean())

    power = {t: np.asarray(v) for t, v in power.items()}
    se = {t: _binom_se(power[t], spec.b) for t in tests}
    meta = {"setting": spec.setting, "m": m, "n": spec.n, "d": d,
            "calibration": "asymptotic", "runtime_s": runtimes}
    return PowerCurve(np.asarray(spec.thetas), tests, power, se, spec.b,
                      spec.alpha, spec.seed, meta)


# --------------------------------------------------------------------------
# sample-size matching (efficiency made visible at finite n)


@dataclass
class HlMatchReport:
    """Power curves over n with the parametric test run at ratio * n.

    max_gap is the largest |rank-uniform power at n minus Hotelling power at
    the reduced size|; min_margin is the worst-case amount by which the
    rank-Gaussian test (at the reduced size) leads Hotelling.
    """

    ns: np.ndarray
    reduced_ns: np.ndarray
    ratio: float
    shift: float
    power: dict
    se: dict
    b: int
    alpha: float
    seed: int
    max_gap: float
    min_margin: float
    meta: dict = field(default_factory=dict)

    def to_rows(self) -> list[dict]:
        rows = []
        for i, n in enumerate(self.ns):
            for t in ("rank_uniform", "rank_gaussian", "hotelling"):
                rows.append({"n": int(n), "test": t,
                             "power": float(self.power[t][i]),
                             "se": float(self.se[t][i]),
                             "b": self.b, "seed": self.seed})
        return rows


_HL_RATIOS = {"H1": 0.864, "H2": 0.95}
_HL_TABLE_B = 4999
_HL_NULL_B = 20000
_HL_NULL_STREAM = 1_000_003


def _hl_cutoffs(spec: ScenarioSpec, ni: int, n: int, nr: int, grid_u, grid_g,
                drawer, threads: int | None) -> tuple[float, float, float]:
    """Level-alpha critical values for the three tests at one size pair.

    The rank statistics are distribution-free, so their exact cutoffs come
    from the permutation law of a random grid split (no assignment solve
    needed).  Hotelling is not, so its cutoff is the empirical null quantile
    under the same data law at the reduced size, on a substream disjoint
    from the power replications.
    """
    key_u = NullTableKey.two_sample(grid_u, n, b=_HL_TABLE_B, seed=spec.seed)
    key_g = NullTableKey.two_sample(grid_g, nr, b=_HL_TABLE_B, seed=spec.seed)
    cut_u = permutation_null(key_u, grid=grid_u, threads=threads).cutoff(spec.alpha)
    cut_g = permutation_null(key_g, grid=grid_g, threads=threads).cutoff(spec.alpha)

    def null_rep(i: int, _nr=nr, _ni=ni) -> float:
        rng = np.random.default_rng((spec.seed, _ni, _HL_NULL_STREAM, i))
        return hotelling_t2(drawer(rng, _nr, 0.0), drawer(rng, _nr, 0.0))

    draws = np.sort(np.asarray(_map_reps(null_rep, _HL_NULL_B, threads), dtype=float))
    return cut_u, cut_g, _addone_cutoff(draws, spec.alpha)


def hl_sample_size_match(spec: ScenarioSpec, *, threads: int | None = None,
                         backend: str = "auto") -> HlMatchReport:
    """Match rank-test power at n against the parametric test at ratio * n.

    The rank-uniform test runs at full m=n; Hotelling and the rank-Gaussian
    test run on the first floor(ratio*n) rows of the same draw, so all three
    power estimates per replication are coupled (still unbiased, much less
    Monte-Carlo noise in the gap and the dominance margin).  The ratio is
    the efficiency of the uniform-ERD test in the given setting (0.864 for
    the Epanechnikov product, 0.95 for the Gaussian).

    Every test is carried out at its own level-alpha critical value instead
    of the shared chi-square approximation, which at the smaller sizes is
    conservative for the rank statistics and anti-conservative for
    Hotelling and would contaminate the comparison with calibration error
    rather than power.  See _hl_cutoffs for the three cutoff constructions.
    """
    if spec.setting not in _HL_RATIOS:
        raise ValueError(f"sample-size matching needs setting H1 or H2, got {spec.setting!r}")
    ratio = _HL_RATIOS[spec.setting]
    shift = spec.thetas[0]
    ns = tuple(spec.ns) if spec.ns else (100, 300, 500, 700, 900, 1100)
    d = spec.d
    inv_g = np.linalg.inv(_erd_matrix(None, "gaussian", "identity", d))
    inv_u = np.linalg.inv(_erd_matrix(None, "uniform_cube", "identity", d))
    drawer = _setting_drawer(spec)

    tests = ("rank_uniform", "rank_gaussian", "hotelling")
    power = {t: [] for t in tests}
    cutoffs = {t: [] for t in tests}
    reduced = []
    runtimes = []
    for ni, n in enumerate(ns):
        nr = int(ratio * n)
        reduced.append(nr)
        grid_u = _uniform_grid(2 * n, d)
        grid_g = gaussian_grid(2 * nr, d)
        cut_u, cut_g, cut_h = _hl_cutoffs(spec, ni, n, nr, grid_u, grid_g,
                                          drawer, threads)
        for t, c in zip(tests, (cut_u, cut_g, cut_h)):
            cutoffs[t].append(c)

        def rep(i: int, _n=n, _nr=nr, _gu=grid_u, _gg=grid_g, _ni=ni,
                _cu=cut_u, _cg=cut_g, _ch=cut_h) -> tuple:
            rng = np.random.default_rng((spec.seed, _ni, i))
            x = drawer(rng, _n, 0.0)
            y = drawer(rng, _n, shift)
            xr, yr = x[:_nr], y[:_nr]
            t_u = _pooled_rank_stat(np.vstack([x, y]), _n, _gu, inv_u, backend)
            t_g = _pooled_rank_stat(np.vstack([xr, yr]), _nr, _gg, inv_g, backend)
            t_h = hotelling_t2(xr, yr)
            return (t_u >= _cu, t_g >= _cg, t_h >= _ch)

        t0 = time.perf_counter()
        rows = _map_reps(rep, spec.b, threads)
        runtimes.append(time.perf_counter() - t0)
        arr = np.asarray(rows, dtype=float)
        for j, t in enumerate(tests):
            power[t].append(arr[:, j].mean())

    power = {t: np.asarray(v) for t, v in power.items()}
    se = {t: _binom_se(power[t], spec.b) for t in tests}
    gap = float(np.max(np.abs(power["rank_uniform"] - power["hotelling"])))
    margin = float(np.min(power["rank_gaussian"] - power["hotelling"]))
    return HlMatchReport(ns=np.asarray(ns), reduced_ns=np.asarray(reduced),
                         ratio=ratio, shift=shift, power=power, se=se,
                         b=spec.b, alpha=spec.alpha, seed=spec.seed,
                         max_gap=gap, min_margin=margin,
                         meta={"setting": spec.setting, "runtime_s": runtimes,
                               "calibration": "size_corrected",
                               "cutoffs": {t: list(map(float, v))
                                           for t, v in cutoffs.items()}})


# --------------------------------------------------------------------------
# dependence alternatives


def konijn_power(spec: ScenarioSpec, *, threads: int | None = None,
                 backend: str = "auto") -> PowerCurve:
    """Rejection rates of the independence tests under cross-mixing.

    spec.thetas is read as the delta grid; both blocks use Gaussian
    reference grids with the identity score, and cutoffs are asymptotic
    chi-square with d1*d2 degrees of freedom.
    """
    tests = spec.tests or _INDEPENDENCE_TESTS
    bad = set(tests) - set(_INDEPENDENCE_TESTS)
    if bad:
        raise ValueError(f"unknown independence tests: {sorted(bad)}")
    n = spec.n
    d1 = spec.d
    d2 = spec.d2 if spec.d2 is not None else spec.d
    m_matrix = (np.ones((d1, d2)) if spec.m_matrix is None
                else np.asarray(spec.m_matrix, dtype=float))
    if m_matrix.shape != (d1, d2):
        raise ValueError(f"mixing matrix must be {d1}x{d2}")
    grid_x = gaussian_grid(n, d1)
    grid_y = gaussian_grid(n, d2)
    cutoff = specfun.chi2_quantile(d1 * d2, 1.0 - spec.alpha)
    base_params = dict(spec.params)
    base_params.setdefault("loc", 0.0)

    power = {t: [] for t in tests}
    runtimes = []
    for di, delta in enumerate(spec.thetas):
        def rep(i: int, _delta=delta, _di=di) -> tuple:
            rng = np.random.default_rng((spec.seed, _di, i))
            x0 = _draw_family(spec.base_family, base_params, n, d1, rng)
            y0 = _draw_family(spec.base_family, base_params, n, d2, rng)
            x, y = konijn_mix(x0, y0, _delta, m_matrix)
            out = []
            for t in tests:
                if t == "rank_spearman":
                    stat = rank_spearman(x, y, grid_x, grid_y, backend=backend)
                else:
                    stat = wilks(x, y)
                out.append(stat >= cutoff)
            return tuple(out)

        t0 = time.perf_counter()
        rows = _map_reps(rep, spec.b, threads)
        runtimes.append(time.perf_counter() - t0)
        arr = np.asarray(rows, dtype=float)
        for j, t in enumerate(tests):
            power[t].append(arr[:, j].mean())

    power = {t: np.asarray(v) for t, v in power.items()}
    se = {t: _binom_se(power[t], spec.b) for t in tests}
    meta = {"setting": "konijn", "n": n, "d1": d1, "d2": d2,
            "base_family": spec.base_family, "calibration": "asymptotic",
            "runtime_s": runtimes}
    return PowerCurve(np.asarray(spec.thetas), tuple(tests), power, se, spec.b,
                      spec.alpha, spec.seed, meta)
