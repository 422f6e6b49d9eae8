"""Null calibration for the rank tests.

Asymptotic chi-square cutoffs, Monte-Carlo null tables (exact at finite
sample sizes thanks to distribution-freeness), and a persistent on-disk
cache of universal null quantiles.

Two interchangeable generation routes are provided and cross-checked in the
test suite:

* ``labels`` — permute which grid points belong to which sample (two-sample)
  or how the two blocks' grid points are paired (independence).  No
  assignment solve is needed, so this is fast and exactly reproduces the
  universal null law.
* ``fresh`` — draw convenient data (the law is irrelevant under the null)
  and run the full statistic, assignment solve included.
"""

from __future__ import annotations

import hashlib
import math
import os
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from . import specfun
from ._linalg import sym_inv_sqrt
from .reference import apply_score, build_grid
from .statistics import (TestReport, _erd_matrix, rank_hotelling, rank_spearman,
                         rdcov, wilks)

__all__ = [
    "NullTableKey",
    "NullTable",
    "grid_fingerprint",
    "asymptotic_cutoff",
    "permutation_null",
    "run_two_sample_test",
    "run_independence_test",
    "default_cache_dir",
    "resolve_threads",
]

_ROUTES = ("labels", "fresh")
_DATA_LAWS = ("uniform", "gaussian", "lognormal")
_MIN_CACHED_B = 1000  # smaller tables are cheap enough to regenerate
DEFAULT_B = 2000


def resolve_threads(threads: int | None = None) -> int:
    """Worker count: explicit argument, else OTRANK_THREADS, else logical cores."""
    if threads is None:
        env = os.environ.get("OTRANK_THREADS")
        if env is None:
            return os.cpu_count() or 1
        try:
            threads = int(env)
        except ValueError:
            raise ValueError(f"OTRANK_THREADS must be an integer, got {env!r}") from None
    if threads < 1:
        raise ValueError(f"thread count must be positive, got {threads}")
    return threads


def default_cache_dir() -> Path:
    env = os.environ.get("OTRANK_CACHE")
    if env:
        return Path(env)
    return Path.home() / ".cache" / "otrank"


def grid_fingerprint(grid) -> str:
    """Deterministic hash of a grid's CSV serialization."""
    h = hashlib.sha256()
    seed = "none" if grid.seed is None else str(grid.seed)
    h.update(f"dim={grid.d},nu={grid.nu_tag},seed={seed}\n".encode())
    for row in grid.points:
        h.update((",".join(f"{v:.17g}" for v in row) + "\n").encode())
    return h.hexdigest()


@dataclass(frozen=True)
class NullTableKey:
    """Everything that determines a null table, hashed into a cache identity."""

    test_kind: str
    sizes: tuple[int, ...]
    dims: tuple[int, ...]
    fingerprint: str
    score: tuple[str, ...]
    b: int
    seed: int
    route: str = "labels"
    data_law: str = "none"

    def __post_init__(self) -> None:
        if self.route not in _ROUTES:
            raise ValueError(f"unknown route {self.route!r}")
        if self.route == "fresh" and self.data_law not in _DATA_LAWS:
            raise ValueError(f"unknown data law {self.data_law!r}")
        if self.b < 100:
            raise ValueError(f"need at least 100 replications, got {self.b}")

    @classmethod
    def two_sample(cls, grid, m: int, score: str = "identity", b: int = DEFAULT_B,
                   seed: int = 0, route: str = "labels",
                   data_law: str = "uniform") -> "NullTableKey":
        if not 0 < m < grid.n:
            raise ValueError(f"m must split the grid: 0 < {m} < {grid.n}")
        if route == "labels":
            data_law = "none"
        return cls("rank_hotelling", (m, grid.n - m), (grid.d,),
                   grid_fingerprint(grid), (score,), b, seed, route, data_law)

    @classmethod
    def independence(cls, test_kind: str, grid_x, grid_y,
                     score_x: str = "identity", score_y: str = "identity",
                     b: int = DEFAULT_B, seed: int = 0, route: str = "labels",
                     data_law: str = "uniform") -> "NullTableKey":
        if test_kind not in ("rank_spearman", "rdcov"):
            raise ValueError(f"no universal null table for {test_kind!r}")
        if grid_x.n != grid_y.n:
            raise ValueError("block grids must have equal sizes")
        if route == "labels":
            data_law = "none"
        joint = hashlib.sha256(
            (grid_fingerprint(grid_x) + grid_fingerprint(grid_y)).encode()).hexdigest()
        return cls(test_kind, (grid_x.n,), (grid_x.d, grid_y.d), joint,
                   (score_x, score_y), b, seed, route, data_law)

    def token(self) -> str:
        return "|".join([
            self.test_kind,
            "x".join(map(str, self.sizes)),
            "x".join(map(str, self.dims)),
            self.fingerprint,
            "+".join(self.score),
            f"B{self.b}",
            f"seed{self.seed}",
            self.route,
            self.data_law,
        ])

    def digest(self) -> str:
        return hashlib.sha256(self.token().encode()).hexdigest()

    def filename(self) -> str:
        return f"{self.test_kind}-{self.digest()[:16]}.null"


def _addone_p(sorted_draws: np.ndarray, observed: float) -> float:
    count = int(np.count_nonzero(sorted_draws >= observed))
    return (1 + count) / (len(sorted_draws) + 1)


def _addone_cutoff(sorted_draws: np.ndarray, alpha: float) -> float:
    """Smallest c with {T >= c} equivalent to {add-one p <= alpha}, ties included."""
    b = len(sorted_draws)
    allowed = math.floor(alpha * (b + 1)) - 1  # null draws permitted at or above c
    if allowed < 0:
        return math.inf
    return float(np.nextafter(sorted_draws[b - 1 - allowed], math.inf))


@dataclass
class NullTable:
    """Sorted null draws for one key, with quantile / p-value accessors."""

    draws: np.ndarray
    key: NullTableKey

    def __post_init__(self) -> None:
        d = np.asarray(self.draws, dtype=float)
        if d.ndim != 1 or len(d) != self.key.b:
            raise ValueError(f"expected {self.key.b} draws, got shape {d.shape}")
        if np.any(np.diff(d) < 0):
            raise ValueError("null draws must be sorted ascending")
        self.draws = d

    @property
    def b(self) -> int:
        return len(self.draws)

    def quantile(self, q: float) -> float:
        return float(np.quantile(self.draws, q))

    def p_value(self, observed: float) -> float:
        return _addone_p(self.draws, observed)

    def cutoff(self, alpha: float) -> float:
        return _addone_cutoff(self.draws, alpha)


def asymptotic_cutoff(df: int, alpha: float) -> float:
    """Upper-alpha chi-square critical value with df degrees of freedom."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    return specfun.chi2_quantile(df, 1.0 - alpha)


def _as_columns(a) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim == 1:  # a flat vector is a univariate sample, not one row
        arr = arr[:, None]
    return arr


def _draw_law(rng: np.random.Generator, law: str, n: int, d: int) -> np.ndarray:
    if law == "uniform":
        return rng.random((n, d))
    if law == "gaussian":
        return rng.standard_normal((n, d))
    if law == "lognormal":
        return np.exp(rng.standard_normal((n, d)))
    raise ValueError(f"unknown data law {law!r}")


def _map_reps(fn, b: int, threads: int | None) -> list[float]:
    """Run fn(0..b-1); results in index order, so thread count never matters."""
    workers = resolve_threads(threads)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, range(b)))
    return [fn(i) for i in range(b)]


def _rep_rng(seed: int, i: int) -> np.random.Generator:
    # counter-based substreams: (seed, index) seeds are independent by design
    return np.random.default_rng((seed, i))


def _two_sample_rep_fn(key: NullTableKey, grid, erd, backend: str):
    m, n = key.sizes
    total = m + n
    sigma = _erd_matrix(erd, grid.nu_tag, key.score[0], grid.d)
    if key.route == "labels":
        scored = apply_score(key.score[0], grid.points)
        inv_sigma = np.linalg.inv(sigma)
        factor = m * n / total

        def rep(i: int) -> float:
            perm = _rep_rng(key.seed, i).permutation(total)
            delta = scored[perm[:m]].mean(axis=0) - scored[perm[m:]].mean(axis=0)
            return factor * float(delta @ inv_sigma @ delta)

        return rep

    def rep(i: int) -> float:
        z = _draw_law(_rep_rng(key.seed, i), key.data_law, total, grid.d)
        return rank_hotelling(z[:m], z[m:], grid, key.score[0], sigma,
                              backend=backend).statistic

    return rep


def _spearman_rep_fn(key: NullTableKey, grid_x, grid_y, erd_x, erd_y, backend: str):
    n = key.sizes[0]
    s1 = _erd_matrix(erd_x, grid_x.nu_tag, key.score[0], grid_x.d)
    s2 = _erd_matrix(erd_y, grid_y.nu_tag, key.score[1], grid_y.d)
    if key.route == "labels":
        w1 = sym_inv_sqrt(s1)
        w2 = sym_inv_sqrt(s2)
        cx = apply_score(key.score[0], grid_x.points)
        cy = apply_score(key.score[1], grid_y.points)
        cx = cx - cx.mean(axis=0)
        cy = cy - cy.mean(axis=0)
        root_n = math.sqrt(n)

        def rep(i: int) -> float:
            perm = _rep_rng(key.seed, i).permutation(n)
            w = w1 @ (cx.T @ cy[perm] / root_n) @ w2
            return float(np.sum(w * w))

        return rep

    def rep(i: int) -> float:
        rng = _rep_rng(key.seed, i)
        zx = _draw_law(rng, key.data_law, n, grid_x.d)
        zy = _draw_law(rng, key.data_law, n, grid_y.d)
        return rank_spearman(zx, zy, grid_x, grid_y, key.score[0], key.score[1],
                             s1, s2, backend=backend)

    return rep


def _rdcov_rep_fn(key: NullTableKey, grid_x, grid_y, backend: str):
    n = key.sizes[0]
    if key.route == "labels":
        sx = apply_score(key.score[0], grid_x.points)
        sy = apply_score(key.score[1], grid_y.points)
        a = cdist(sx, sx)
        bmat = cdist(sy, sy)
        a_mean, b_mean = a.mean(), bmat.mean()
        a_rows, b_rows = a.mean(axis=1), bmat.mean(axis=1)

        def rep(i: int) -> float:
            perm = _rep_rng(key.seed, i).permutation(n)
            joint = (a * bmat[np.ix_(perm, perm)]).mean()
            return float(joint + a_mean * b_mean - 2.0 * (a_rows * b_rows[perm]).mean())

        return rep

    def rep(i: int) -> float:
        rng = _rep_rng(key.seed, i)
        zx = _draw_law(rng, key.data_law, n, grid_x.d)
        zy = _draw_law(rng, key.data_law, n, grid_y.d)
        return rdcov(zx, zy, grid_x, grid_y, key.score[0], key.score[1],
                     backend=backend)

    return rep


def _load_table(key: NullTableKey, cache_dir: Path) -> NullTable | None:
    path = cache_dir / key.filename()
    if not path.exists():
        return None
    try:
        with open(path, "rb") as fh:
            header = fh.readline().decode("utf-8").rstrip("\n")
            blob = fh.read()
    except OSError:
        return None
    if header != key.token():
        return None
    draws = np.frombuffer(blob, dtype="<f8")
    if len(draws) != key.b:
        return None
    return NullTable(draws.copy(), key)


def _save_table(table: NullTable, cache_dir: Path) -> None:
    cache_dir.mkdir(parents=True, exist_ok=True)
    payload = (table.key.token() + "\n").encode("utf-8") + \
        table.draws.astype("<f8").tobytes()
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, cache_dir / table.key.filename())
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    index = cache_dir / "index.txt"
    entries: dict[str, str] = {}
    if index.exists():
        for line in index.read_text(encoding="utf-8").splitlines():
            if "\t" in line:
                digest, fname = line.split("\t", 1)
                entries[digest] = fname
    entries[table.key.digest()] = table.key.filename()
    fd, tmp = tempfile.mkstemp(dir=cache_dir, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            for digest in sorted(entries):
                fh.write(f"{digest}\t{entries[digest]}\n")
        os.replace(tmp, index)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def permutation_null(key: NullTableKey, *, grid=None, grid_x=None, grid_y=None,
                     erd=None, erd_x=None, erd_y=None, backend: str = "auto",
                     cache_dir: Path | str | None = None, use_cache: bool = True,
                     threads: int | None = None) -> NullTable:
    """Monte-Carlo table of the universal null law for the keyed statistic.

    Tables with at least 1000 draws are persisted under the cache directory
    (OTRANK_CACHE or ~/.cache/otrank); a hit is returned bit-identically.
    """
    if key.test_kind == "rank_hotelling":
        if grid is None:
            raise ValueError("two-sample null generation needs the grid")
        if grid_fingerprint(grid) != key.fingerprint:
            raise ValueError("grid does not match the key fingerprint")
        rep = _two_sample_rep_fn(key, grid, erd, backend)
    else:
        if grid_x is None or grid_y is None:
            raise ValueError("independence null generation needs both block grids")
        joint = hashlib.sha256(
            (grid_fingerprint(grid_x) + grid_fingerprint(grid_y)).encode()).hexdigest()
        if joint != key.fingerprint:
            raise ValueError("grids do not match the key fingerprint")
        if key.test_kind == "rank_spearman":
            rep = _spearman_rep_fn(key, grid_x, grid_y, erd_x, erd_y, backend)
        else:
            rep = _rdcov_rep_fn(key, grid_x, grid_y, backend)

    cdir = Path(cache_dir) if cache_dir is not None else default_cache_dir()
    cacheable = use_cache and key.b >= _MIN_CACHED_B
    if cacheable:
        hit = _load_table(key, cdir)
        if hit is not None:
            return hit
    draws = np.sort(np.asarray(_map_reps(rep, key.b, threads), dtype=float))
    table = NullTable(draws, key)
    if cacheable:
        _save_table(table, cdir)
    return table


def _report(statistic: float, df: int, alpha: float, calibration: str,
            table: np.ndarray | NullTable | None,
            diagnostics: dict) -> TestReport:
    if calibration == "asymptotic":
        cutoff = asymptotic_cutoff(df, alpha)
        p = 1.0 - specfun.chi2_cdf(df, statistic)
    else:
        draws = table.draws if isinstance(table, NullTable) else table
        cutoff = _addone_cutoff(draws, alpha)
        p = _addone_p(draws, statistic)
    return TestReport(statistic=statistic, df=df, cutoff=cutoff, p_value=p,
                      calibration=calibration, decision=bool(statistic >= cutoff),
                      diagnostics=diagnostics)


def run_two_sample_test(x, y, *, grid=None, nu_tag: str = "gaussian",
                        grid_seed: int | None = None, center: bool = False,
                        score: str = "identity", erd=None, alpha: float = 0.05,
                        calibration: str = "asymptotic", b: int = DEFAULT_B,
                        seed: int = 0, route: str = "labels",
                        backend: str = "auto", jitter_seed: int | None = None,
                        cache_dir=None, use_cache: bool = True,
                        threads: int | None = None) -> TestReport:
    """Full two-sample location test: statistic, cutoff, p-value, decision."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    x = _as_columns(x)
    y = _as_columns(y)
    m, d = x.shape
    if grid is None:
        grid = build_grid(nu_tag, m + y.shape[0], d, seed=grid_seed, center=center)
    stat, delta = rank_hotelling(x, y, grid, score, erd, backend=backend,
                                 jitter_seed=jitter_seed)
    diagnostics = {"m": float(m), "n": float(y.shape[0]), "d": float(d),
                   "delta_norm": float(np.linalg.norm(delta))}
    if calibration == "permutation":
        key = NullTableKey.two_sample(grid, m, score, b, seed, route)
        table = permutation_null(key, grid=grid, erd=erd, backend=backend,
                                 cache_dir=cache_dir, use_cache=use_cache,
                                 threads=threads)
        diagnostics["b"] = float(b)
        return _report(stat, d, alpha, "permutation", table, diagnostics)
    return _report(stat, d, alpha, "asymptotic", None, diagnostics)


def run_independence_test(x, y, kind: str = "rank_spearman", *, grid_x=None,
                          grid_y=None, nu_tag: str = "gaussian",
                          grid_seed: int | None = None, center: bool = False,
                          score_x: str = "identity", score_y: str = "identity",
                          erd_x=None, erd_y=None, alpha: float = 0.05,
                          calibration: str = "asymptotic", b: int = DEFAULT_B,
                          seed: int = 0, route: str = "labels",
                          backend: str = "auto", jitter_seed: int | None = None,
                          cache_dir=None, use_cache: bool = True,
                          threads: int | None = None) -> TestReport:
    """Independence test on paired blocks; kind is rank_spearman, rdcov or wilks.

    The distance-covariance statistic has no chi-square limit, so it insists
    on permutation calibration; the Wilks statistic is not distribution-free,
    so its permutation route shuffles the observed rows (data-conditional,
    never cached).
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if kind not in ("rank_spearman", "rdcov", "wilks"):
        raise ValueError(f"unknown independence test {kind!r}")
    x = _as_columns(x)
    y = _as_columns(y)
    n, d1 = x.shape
    d2 = y.shape[1]
    diagnostics = {"n": float(n), "d1": float(d1), "d2": float(d2)}

    if kind == "wilks":
        stat = wilks(x, y)
        if calibration == "permutation":
            def rep(i: int) -> float:
                perm = _rep_rng(seed, i).permutation(n)
                return wilks(x, y[perm])

            draws = np.sort(np.asarray(_map_reps(rep, b, threads), dtype=float))
            diagnostics["b"] = float(b)
            return _report(stat, d1 * d2, alpha, "permutation", draws, diagnostics)
        return _report(stat, d1 * d2, alpha, "asymptotic", None, diagnostics)

    if grid_x is None:
        grid_x = build_grid(nu_tag, n, d1, seed=grid_seed, center=center)
    if grid_y is None:
        seed_y = None if grid_seed is None else grid_seed + 1
        grid_y = build_grid(nu_tag, n, d2, seed=seed_y, center=center)

    if kind == "rank_spearman":
        stat = rank_spearman(x, y, grid_x, grid_y, score_x, score_y, erd_x,
                             erd_y, backend=backend, jitter_seed=jitter_seed)
    else:
        if calibration != "permutation":
            raise ValueError("rdcov has no asymptotic calibration; use permutation")
        stat = rdcov(x, y, grid_x, grid_y, score_x, score_y, backend=backend,
                     jitter_seed=jitter_seed)

    if calibration == "permutation":
        key = NullTableKey.independence(kind, grid_x, grid_y, score_x, score_y,
                                        b, seed, route)
        table = permutation_null(key, grid_x=grid_x, grid_y=grid_y, erd_x=erd_x,
                                 erd_y=erd_y, backend=backend, cache_dir=cache_dir,
                                 use_cache=use_cache, threads=threads)
        diagnostics["b"] = float(b)
        df = d1 * d2 if kind == "rank_spearman" else 0
        return _report(stat, df, alpha, "permutation", table, diagnostics)
    return _report(stat, d1 * d2, alpha, "asymptotic", None, diagnostics)
