"""Reference grids, score maps and effective-reference covariances.

A reference grid is a fixed set of N points whose empirical measure
discretizes a chosen reference distribution (uniform cube, spherical
uniform, standard Gaussian, or a custom iid sampler).  Score maps are the
injective transforms applied to rank vectors before statistics are formed;
the effective reference distribution (ERD) is the push-forward of the
reference law through the score, and its covariance is what whitens the
rank statistics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import specfun

__all__ = [
    "ReferenceGrid",
    "ScoreFunction",
    "ErdSpec",
    "NU_TAGS",
    "SCORE_KINDS",
    "halton_points",
    "halton_grid",
    "regular_grid_1d",
    "gaussian_grid",
    "spherical_uniform_grid",
    "iid_grid",
    "build_grid",
    "apply_score",
    "erd_covariance",
    "score_second_moment",
]

NU_TAGS = ("uniform_cube", "spherical_uniform", "gaussian", "custom_iid")
SCORE_KINDS = ("identity", "coord_gaussian_cdf", "coord_gaussian_quantile", "van_der_waerden")

_MAX_HALTON_DIM = 64


def _first_primes(k: int) -> list[int]:
    primes = []
    cand = 2
    while len(primes) < k:
        if all(cand % p for p in primes if p * p <= cand):
            primes.append(cand)
        cand += 1
    return primes


_PRIMES = _first_primes(_MAX_HALTON_DIM)


@dataclass
class ReferenceGrid:
    points: np.ndarray
    nu_tag: str
    seed: int | None = None
    centered: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim == 1:
            self.points = self.points[:, None]
        if self.nu_tag not in NU_TAGS:
            raise ValueError(f"unknown reference tag {self.nu_tag!r}")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def save_csv(self, path) -> None:
        if hasattr(path, "write"):
            self._write_csv(path)
        else:
            with open(path, "w", encoding="utf-8") as fh:
                self._write_csv(fh)

    def _write_csv(self, fh) -> None:
        seed = "none" if self.seed is None else str(self.seed)
        fh.write(f"dim={self.d},nu={self.nu_tag},seed={seed}\n")
        for row in self.points:
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")

    @classmethod
    def load_csv(cls, path) -> "ReferenceGrid":
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().strip()
            fields = dict(part.split("=", 1) for part in header.split(","))
            d = int(fields["dim"])
            nu_tag = fields["nu"]
            seed = None if fields["seed"] == "none" else int(fields["seed"])
            pts = [[float(v) for v in line.split(",")] for line in fh if line.strip()]
        points = np.asarray(pts, dtype=float)
        if points.shape[1] != d:
            raise ValueError(f"grid file claims d={d} but rows have {points.shape[1]} columns")
        return cls(points=points, nu_tag=nu_tag, seed=seed)


def _maybe_center(points: np.ndarray, center: bool) -> tuple[np.ndarray, bool]:
    if center:
        return points - points.mean(axis=0), True
    return points, False


def _radical_inverse(indices: np.ndarray, base: int) -> np.ndarray:
    """Van der Corput radical inverse of integer indices in the given base."""
    result = np.zeros(len(indices), dtype=float)
    frac = 1.0 / base
    work = indices.copy()
    while work.any():
        result += (work % base) * frac
        work //= base
        frac /= base
    return result


def halton_points(n: int, d: int, start_index: int = 1) -> np.ndarray:
    """First n Halton points in [0,1]^d, bases = first d primes, indices from 1.

    Starting at index 1 skips the all-zero point so grids never contain the
    origin of the cube.
    """
    if d < 1 or d > _MAX_HALTON_DIM:
        raise ValueError(f"dimension must be in [1, {_MAX_HALTON_DIM}], got {d}")
    if n < 1:
        raise ValueError(f"need at least one point, got n={n}")
    idx = np.arange(start_index, start_index + n, dtype=np.int64)
    return np.column_stack([_radical_inverse(idx, _PRIMES[j]) for j in range(d)])


def halton_grid(n: int, d: int, center: bool = False) -> ReferenceGrid:
    """Low-discrepancy grid for the uniform distribution on [0,1]^d."""
    pts, c = _maybe_center(halton_points(n, d), center)
    return ReferenceGrid(pts, "uniform_cube", centered=c)


def regular_grid_1d(n: int, center: bool = False) -> ReferenceGrid:
    """The classical univariate rank grid {1/n, 2/n, ..., n/n}."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    pts = (np.arange(1, n + 1, dtype=float) / n)[:, None]
    pts, c = _maybe_center(pts, center)
    return ReferenceGrid(pts, "uniform_cube", centered=c)


def gaussian_grid(n: int, d: int, center: bool = False) -> ReferenceGrid:
    """Coordinatewise normal-quantile transform of the Halton grid.

    Discretizes the standard d-variate Gaussian; the fourth-moment running
    average stays bounded because consecutive Halton coordinates are spaced
    at least 1/(n * base) apart, keeping the quantile transform integrable.
    """
    u = halton_points(n, d)
    pts = specfun.std_normal_quantile(u)
    pts, c = _maybe_center(pts, center)
    return ReferenceGrid(pts, "gaussian", centered=c)


def _sin_power_quantile(u: np.ndarray, m: int) -> np.ndarray:
    """Inverse CDF of the density proportional to sin(t)^m on [0, pi].

    m=0 is uniform and m=1 has a closed form; larger m is inverted by
    bisection on the numerically integrated CDF (the integrand is smooth and
    bounded, so 60 bisection steps give ~1e-18 resolution).
    """
    if m == 0:
        return np.pi * u
    if m == 1:
        return np.arccos(1.0 - 2.0 * u)
    # CDF via composite Simpson on a fixed fine grid, then monotone inversion
    ts = np.linspace(0.0, np.pi, 4097)
    pdf = np.sin(ts) ** m
    cdf = np.concatenate([[0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(ts))])
    cdf /= cdf[-1]
    return np.interp(u, cdf, ts)


def _directions_from_halton(k: int, d: int, start_index: int = 1) -> np.ndarray:
    """k near-uniform unit vectors on the (d-1)-sphere from a (d-1)-dim Halton block.

    Uses hyperspherical coordinates: the final angle is uniform on [0, 2*pi)
    and each polar angle is drawn through the inverse CDF of its sin-power
    marginal.
    """
    if d == 1:
        signs = np.where(np.arange(k) % 2 == 0, 1.0, -1.0)
        return signs[:, None]
    u = halton_points(k, d - 1, start_index=start_index)
    angles = np.empty((k, d - 1))
    for j in range(d - 2):
        angles[:, j] = _sin_power_quantile(u[:, j], d - 2 - j)
    angles[:, d - 2] = 2.0 * np.pi * u[:, d - 2]
    dirs = np.empty((k, d))
    sin_prod = np.ones(k)
    for j in range(d - 2):
        dirs[:, j] = sin_prod * np.cos(angles[:, j])
        sin_prod = sin_prod * np.sin(angles[:, j])
    dirs[:, d - 2] = sin_prod * np.cos(angles[:, d - 2])
    dirs[:, d - 1] = sin_prod * np.sin(angles[:, d - 2])
    return dirs


def spherical_uniform_grid(n: int, d: int, seed: int | None = None,
                           center: bool = False) -> ReferenceGrid:
    """Grid for the spherical uniform law (uniform radius times uniform direction).

    The size is factorized as n = n_R * n_S + n_0 with n_R ~ sqrt(n) rings of
    radii j/(n_R+1) crossed with n_S low-discrepancy directions; the n_0
    leftover points sit at radius 1/(2*(n_R+1)) with further distinct
    directions so all grid points stay distinct.  A seed applies a random
    rotation to the direction set (reproducibly); None keeps the canonical
    orientation.
    """
    if n < d + 1:
        # infeasible factorization at desk sizes: fall back to iid draws, flagged
        g = iid_grid(n, d, "spherical_uniform", seed=0 if seed is None else seed)
        g.meta["factorization_fallback"] = True
        return g
    n_r = max(1, int(math.isqrt(n)))
    while n_r > 1 and n - n_r * (n // n_r) > n_r:
        n_r -= 1
    n_s = n // n_r
    n_0 = n - n_r * n_s
    radii = np.arange(1, n_r + 1, dtype=float) / (n_r + 1)
    dirs = _directions_from_halton(n_s + n_0, d)
    pts = np.vstack([r * dirs[:n_s] for r in radii])
    if n_0:
        extra = (0.5 / (n_r + 1)) * dirs[n_s:n_s + n_0]
        pts = np.vstack([pts, extra])
    if seed is not None:
        rng = np.random.default_rng(seed)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        pts = pts @ q.T
    pts, c = _maybe_center(pts, center)
    return ReferenceGrid(pts, "spherical_uniform", seed=seed, centered=c)


def iid_grid(n: int, d: int, nu_tag: str, seed: int, sampler=None,
             center: bool = False) -> ReferenceGrid:
    """Seeded iid draws from the named reference law (or a custom sampler)."""
    rng = np.random.default_rng(seed)
    if nu_tag == "gaussian":
        pts = rng.standard_normal((n, d))
    elif nu_tag == "uniform_cube":
        pts = rng.random((n, d))
    elif nu_tag == "spherical_uniform":
        raw = rng.standard_normal((n, d))
        raw /= np.linalg.norm(raw, axis=1, keepdims=True)
        pts = raw * rng.random((n, 1))
    elif nu_tag == "custom_iid":
        if sampler is None:
            raise ValueError("custom_iid grids need a sampler(rng, n, d) callable")
        pts = np.asarray(sampler(rng, n, d), dtype=float)
    else:
        raise ValueError(f"unsupported reference tag {nu_tag!r}")
    pts, c = _maybe_center(pts, center)
    return ReferenceGrid(pts, nu_tag, seed=seed, centered=c)


def build_grid(nu_tag: str, n: int, d: int, seed: int | None = None,
               center: bool = False) -> ReferenceGrid:
    """Dispatch to the deterministic grid builder for a named reference law.

    A seed is only meaningful for the spherical-uniform rotation; passing one
    for the other laws is rejected so cache keys stay honest.
    """
    if nu_tag == "uniform_cube":
        if seed is not None:
            raise ValueError("uniform_cube grids are deterministic; seed not accepted")
        return regular_grid_1d(n, center=center) if d == 1 else halton_grid(n, d, center=center)
    if nu_tag == "gaussian":
        if seed is not None:
            raise ValueError("gaussian grids are deterministic; seed not accepted")
        return gaussian_grid(n, d, center=center)
    if nu_tag == "spherical_uniform":
        return spherical_uniform_grid(n, d, seed=seed, center=center)
    raise ValueError(f"cannot build a grid for reference tag {nu_tag!r}")


@dataclass
class ScoreFunction:
    """Injective transform applied to rank vectors; see `apply_score`."""

    kind: str
    d: int

    def __post_init__(self):
        if self.kind not in SCORE_KINDS:
            raise ValueError(f"unknown score kind {self.kind!r}")
        if self.d < 1:
            raise ValueError("dimension must be positive")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return apply_score(self.kind, x)


def apply_score(kind: str, x) -> np.ndarray:
    """Apply a score map to one point (shape (d,)) or a batch (shape (N, d)).

    identity                x
    coord_gaussian_cdf      Phi applied per coordinate
    coord_gaussian_quantile Phi^{-1} per coordinate (domain (0,1)^d)
    van_der_waerden         radial chi-quantile transform
                            F_{chi_d}^{-1}(|x|) * x/|x|, with 0 fixed at 0
    """
    pts = np.asarray(x, dtype=float)
    single = pts.ndim == 1
    if single:
        pts = pts[None, :]
    if kind == "identity":
        out = pts.copy()
    elif kind == "coord_gaussian_cdf":
        out = specfun.std_normal_cdf(pts)
    elif kind == "coord_gaussian_quantile":
        if np.any(pts <= 0.0) or np.any(pts >= 1.0):
            raise ValueError("coord_gaussian_quantile needs coordinates strictly inside (0,1)")
        out = specfun.std_normal_quantile(pts)
    elif kind == "van_der_waerden":
        d = pts.shape[1]
        norms = np.linalg.norm(pts, axis=1)
        if np.any(norms >= 1.0):
            raise ValueError("van_der_waerden expects points inside the open unit ball")
        out = np.zeros_like(pts)
        nz = norms > 0
        radial = np.array([specfun.chi_d_quantile(d, float(r)) for r in norms[nz]])
        out[nz] = pts[nz] * (radial / norms[nz])[:, None]
    else:
        raise ValueError(f"unknown score kind {kind!r}")
    return out[0] if single else out


@dataclass
class ErdSpec:
    """Covariance of the scored reference law, used to whiten rank statistics."""

    sigma_erd: np.ndarray
    closed_form: bool
    std_error: float | None = None

    def __post_init__(self):
        s = np.asarray(self.sigma_erd, dtype=float)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise ValueError("covariance must be square")
        if not np.allclose(s, s.T):
            raise ValueError("covariance must be symmetric")
        evals = np.linalg.eigvalsh(s)
        if evals.min() <= 0:
            raise ValueError("effective reference covariance is not positive definite")
        self.sigma_erd = s


# (reference law, score) pairs with a known diagonal covariance sigma^2 * I.
# The lambda receives the dimension.
_CLOSED_FORM_ERD = {
    ("uniform_cube", "identity"): lambda d: 1.0 / 12.0,
    ("gaussian", "identity"): lambda d: 1.0,
    ("spherical_uniform", "identity"): lambda d: 1.0 / (3.0 * d),
    ("gaussian", "coord_gaussian_cdf"): lambda d: 1.0 / 12.0,
    ("uniform_cube", "coord_gaussian_quantile"): lambda d: 1.0,
    ("spherical_uniform", "van_der_waerden"): lambda d: 1.0,
}


def erd_covariance(nu_tag: str, score_kind: str, d: int,
                   mc_seed: int | None = None, mc_draws: int = 200_000) -> ErdSpec:
    """Covariance of J(H) for H distributed per the reference law.

    The six named (law, score) pairs have exact diagonal forms; any other
    combination requires an explicit Monte Carlo request via ``mc_seed`` and
    comes back with a standard-error estimate.
    """
    key = (nu_tag, score_kind)
    if key in _CLOSED_FORM_ERD:
        return ErdSpec(_CLOSED_FORM_ERD[key](d) * np.eye(d), closed_form=True)
    if mc_seed is None:
        raise ValueError(
            f"no closed form for ERD covariance of {key}; pass mc_seed for an MC estimate")
    grid = iid_grid(mc_draws, d, nu_tag, seed=mc_seed)
    scored = apply_score(score_kind, grid.points)
    scored = scored - scored.mean(axis=0)
    cov = scored.T @ scored / (mc_draws - 1)
    # rough SE of the leading variance entry from fourth moments
    se = float(np.sqrt(np.var(scored[:, 0] ** 2) / mc_draws))
    return ErdSpec(cov, closed_form=False, std_error=se)


def score_second_moment(grid: ReferenceGrid, score_kind: str) -> float:
    """Running diagnostic (1/N) * sum |J(h_i)|^2; bounded for admissible grids."""
    scored = apply_score(score_kind, grid.points)
    return float(np.mean(np.sum(scored * scored, axis=1)))
