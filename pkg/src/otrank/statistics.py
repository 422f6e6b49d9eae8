"""Test statistics on empirical transport ranks.

Two-sample location statistics (rank Hotelling and the classical Hotelling
T^2) plus the independence family (rank Spearman, Wilks likelihood-ratio
form, rank distance covariance).  Everything here is a pure function of
(data, grid, score); calibration lives elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.spatial.distance import cdist

from ._linalg import sym_inv_sqrt
from .assignment import empirical_rank_map
from .reference import apply_score, erd_covariance

__all__ = [
    "TestReport",
    "RankHotellingResult",
    "scored_ranks",
    "rank_hotelling",
    "hotelling_t2",
    "rank_spearman",
    "wilks",
    "rdcov",
]


@dataclass
class TestReport:
    """Outcome of a calibrated test."""

    __test__ = False  # keep pytest from collecting this as a test class

    statistic: float
    df: int
    cutoff: float
    p_value: float
    calibration: str
    decision: bool
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.calibration not in ("asymptotic", "permutation"):
            raise ValueError(f"unknown calibration {self.calibration!r}")
        if not 0.0 <= self.p_value <= 1.0:
            raise ValueError(f"p-value out of range: {self.p_value}")
        if self.decision != (self.statistic >= self.cutoff):
            raise ValueError("decision inconsistent with statistic vs cutoff")

    def to_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "df": self.df,
            "cutoff": self.cutoff,
            "p_value": self.p_value,
            "calibration": self.calibration,
            "decision": bool(self.decision),
            "diagnostics": dict(self.diagnostics),
        }


def _as_sample(a, name: str) -> np.ndarray:
    arr = np.asarray(a, dtype=float)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-d (rows = observations), got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def _erd_matrix(erd, nu_tag: str, score, d: int) -> np.ndarray:
    if erd is None:
        return erd_covariance(nu_tag, score, d).sigma_erd
    mat = np.atleast_2d(np.asarray(getattr(erd, "sigma_erd", erd), dtype=float))
    if mat.shape != (d, d):
        raise ValueError(f"reference-score covariance must be {d}x{d}, got {mat.shape}")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError("reference-score covariance is not positive definite") from exc
    return mat


def scored_ranks(sample, grid, score="identity", *, backend: str = "auto",
                 jitter_seed: int | None = None) -> np.ndarray:
    """Empirical ranks of `sample` on `grid`, pushed through the score."""
    ranked = empirical_rank_map(sample, grid, backend=backend, jitter_seed=jitter_seed)
    return apply_score(score, ranked.ranks)


class RankHotellingResult(NamedTuple):
    statistic: float
    delta: np.ndarray


def rank_hotelling(x, y, grid, score="identity", erd=None, *,
                   backend: str = "auto",
                   jitter_seed: int | None = None) -> RankHotellingResult:
    """Two-sample location statistic on pooled empirical ranks.

    Ranks are computed once for the pooled sample, pushed through the score,
    and the statistic is (mn/N) * delta' S^{-1} delta with delta the
    difference of per-sample mean scored ranks and S the reference-score
    covariance.  With the 1-d grid {i/N} and identity score this is a
    monotone function of the two-sided Wilcoxon rank-sum:
    T = 12 (W - m(N+1)/2)^2 / (N m n).
    """
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: x is {x.shape[1]}-d, y is {y.shape[1]}-d")
    m, n = x.shape[0], y.shape[0]
    if m < 2 or n < 2:
        raise ValueError("need at least two observations in each sample")
    if grid.n != m + n:
        raise ValueError(f"grid has {grid.n} points but the pooled sample has {m + n}")
    sigma = _erd_matrix(erd, grid.nu_tag, score, grid.d)
    scores = scored_ranks(np.vstack([x, y]), grid, score,
                          backend=backend, jitter_seed=jitter_seed)
    delta = scores[:m].mean(axis=0) - scores[m:].mean(axis=0)
    stat = (m * n / (m + n)) * float(delta @ np.linalg.solve(sigma, delta))
    return RankHotellingResult(stat, delta)


def hotelling_t2(x, y) -> float:
    """Classical two-sample Hotelling T^2, pooled covariance with divisor m+n-2.

    At d=1 this is the squared equal-variance two-sample t statistic.
    """
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[1] != y.shape[1]:
        raise ValueError(f"dimension mismatch: x is {x.shape[1]}-d, y is {y.shape[1]}-d")
    m, n = x.shape[0], y.shape[0]
    d = x.shape[1]
    if m + n - 2 < d:
        raise ValueError("pooled covariance cannot be full rank: m + n - 2 < d")
    xc = x - x.mean(axis=0)
    yc = y - y.mean(axis=0)
    pooled = (xc.T @ xc + yc.T @ yc) / (m + n - 2)
    diff = x.mean(axis=0) - y.mean(axis=0)
    try:
        sol = np.linalg.solve(pooled, diff)
    except np.linalg.LinAlgError as exc:
        raise ValueError("pooled covariance is singular") from exc
    return float((m * n / (m + n)) * (diff @ sol))


def _paired(x, y) -> tuple[np.ndarray, np.ndarray, int]:
    x = _as_sample(x, "x")
    y = _as_sample(y, "y")
    if x.shape[0] != y.shape[0]:
        raise ValueError("x and y must be paired (equal row counts)")
    n = x.shape[0]
    if n < 3:
        raise ValueError("need at least three paired observations")
    return x, y, n


def rank_spearman(x, y, grid_x, grid_y, score_x="identity", score_y="identity",
                  erd_x=None, erd_y=None, *, backend: str = "auto",
                  jitter_seed: int | None = None) -> float:
    """Multivariate rank correlation statistic for independence.

    Each block is ranked on its own n-point grid and scored; the statistic
    is |S1^{-1/2} C S2^{-1/2}|_F^2 where C is the sqrt(n)-scaled cross moment
    of the centered scored ranks.  (Whitening the row-major vectorization of
    C by the Kronecker inverse root gives the same number, so the matrix form
    is used.)  Centering subtracts the mean of the scored ranks.

    At d1 = d2 = 1 with grids {i/n} this equals rho_s^2 (n^2-1)^2 / n^3 for
    the classical Spearman correlation rho_s.
    """
    x, y, n = _paired(x, y)
    if grid_x.n != n or grid_y.n != n:
        raise ValueError("each grid must have exactly n points")
    s1 = _erd_matrix(erd_x, grid_x.nu_tag, score_x, grid_x.d)
    s2 = _erd_matrix(erd_y, grid_y.nu_tag, score_y, grid_y.d)
    jx = jitter_seed
    jy = None if jitter_seed is None else jitter_seed + 1
    sx = scored_ranks(x, grid_x, score_x, backend=backend, jitter_seed=jx)
    sy = scored_ranks(y, grid_y, score_y, backend=backend, jitter_seed=jy)
    cross = (sx - sx.mean(axis=0)).T @ (sy - sy.mean(axis=0)) / math.sqrt(n)
    w = sym_inv_sqrt(s1) @ cross @ sym_inv_sqrt(s2)
    return float(np.sum(w * w))


def wilks(x, y) -> float:
    """Likelihood-ratio independence statistic n log(det Q11 det Q22 / det Q).

    Q is the centered joint second-moment matrix of the concatenated data;
    the normalization of Q cancels in the determinant ratio.  At
    d1 = d2 = 1 this reduces to -n log(1 - r^2) with r the Pearson
    correlation.
    """
    x, y, n = _paired(x, y)
    z = np.column_stack([x, y])
    zc = z - z.mean(axis=0)
    q = zc.T @ zc / n
    d1 = x.shape[1]
    logdets = []
    for block in (q[:d1, :d1], q[d1:, d1:], q):
        sign, logdet = np.linalg.slogdet(block)
        if sign <= 0:
            raise ValueError("degenerate covariance block")
        logdets.append(logdet)
    return float(n * (logdets[0] + logdets[1] - logdets[2]))


def rdcov(x, y, grid_x, grid_y, score_x="identity", score_y="identity", *,
          backend: str = "auto", jitter_seed: int | None = None) -> float:
    """Distance-covariance V-statistic on scored ranks.

    With A, B the Euclidean distance matrices of the two blocks' scored
    ranks, the statistic is mean(A.B) + mean(A) mean(B) - 2 mean_i of
    rowmean(A)_i rowmean(B)_i; the triple sum collapses to row means, so
    the cost is O(n^2) past the distance matrices.
    """
    x, y, n = _paired(x, y)
    if grid_x.n != n or grid_y.n != n:
        raise ValueError("each grid must have exactly n points")
    jx = jitter_seed
    jy = None if jitter_seed is None else jitter_seed + 1
    sx = scored_ranks(x, grid_x, score_x, backend=backend, jitter_seed=jx)
    sy = scored_ranks(y, grid_y, score_y, backend=backend, jitter_seed=jy)
    a = cdist(sx, sx)
    b = cdist(sy, sy)
    return float((a * b).mean() + a.mean() * b.mean()
                 - 2.0 * (a.mean(axis=1) * b.mean(axis=1)).mean())
