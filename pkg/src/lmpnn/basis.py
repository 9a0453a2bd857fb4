"""Legendre bases for interatomic distances and angle cosines.

Distances are expanded in Legendre rational functions

    R_k(x) = sqrt(2) / (x + 1) * P_k((x - 1) / (x + 1)),   k = 1..n

each divided by its largest magnitude on (0, cutoff], and angle cosines in
first-kind Legendre polynomials P_1..P_m.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)


def _check_degree(degree):
    if int(degree) != degree or degree < 0:
        raise ValueError(f"degree must be a non-negative integer, got {degree!r}")
    return int(degree)


def legendre_table(max_degree: int, x, with_derivative: bool = False):
    """Evaluate P_0..P_max at ``x`` by the three-term recurrence.

    Returns an array of shape ``x.shape + (max_degree + 1,)``; with
    ``with_derivative`` also the matching table of dP_k/dx.
    """
    max_degree = _check_degree(max_degree)
    x = np.asarray(x, dtype=np.float64)
    p = np.empty(x.shape + (max_degree + 1,))
    p[..., 0] = 1.0
    if max_degree >= 1:
        p[..., 1] = x
    for k in range(1, max_degree):
        p[..., k + 1] = ((2 * k + 1) * x * p[..., k] - k * p[..., k - 1]) / (k + 1)
    if not with_derivative:
        return p
    dp = np.zeros_like(p)
    for k in range(max_degree):
        # P'_{k+1} = (k+1) P_k + x P'_k
        dp[..., k + 1] = (k + 1) * p[..., k] + x * dp[..., k]
    return p, dp


def legendre_first_kind(degree: int, x):
    """Degree-``degree`` Legendre polynomial; ``x`` is clamped to [-1, 1]."""
    degree = _check_degree(degree)
    x = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(x) > 1 + 1e-12):
        raise ValueError("x must lie in [-1, 1]")
    out = legendre_table(degree, np.clip(x, -1.0, 1.0))[..., degree]
    return out if out.ndim else float(out)


def _check_nonnegative(x):
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0) or np.any(~np.isfinite(x)):
        raise ValueError("legendre_rational requires finite x >= 0")
    return x


def legendre_rational(degree: int, x):
    """Legendre rational function by direct substitution into P_k."""
    degree = _check_degree(degree)
    x = _check_nonnegative(x)
    t = (x - 1.0) / (x + 1.0)
    out = SQRT2 / (x + 1.0) * legendre_table(degree, t)[..., degree]
    return out if out.ndim else float(out)


def rational_table(max_degree: int, x, with_derivative: bool = False):
    """R_0..R_max at ``x`` >= 0 by the rational three-term recurrence.

    R_{k+1} = (2k+1)/(k+1) * t * R_k - k/(k+1) * R_{k-1}, with t = (x-1)/(x+1).
    """
    max_degree = _check_degree(max_degree)
    x = _check_nonnegative(x)
    t = (x - 1.0) / (x + 1.0)
    r = np.empty(x.shape + (max_degree + 1,))
    r[..., 0] = SQRT2 / (x + 1.0)
    if max_degree >= 1:
        r[..., 1] = t * r[..., 0]
    for k in range(1, max_degree):
        r[..., k + 1] = ((2 * k + 1) * t * r[..., k] - k * r[..., k - 1]) / (k + 1)
    if not with_derivative:
        return r
    # dR_k/dx = -R_k/(x+1) + sqrt(2)/(x+1) * P'_k(t) * 2/(x+1)^2
    _, dp = legendre_table(max_degree, t, with_derivative=True)
    xp1 = (x + 1.0)[..., None]
    dr = -r / xp1 + 2.0 * SQRT2 * dp / xp1**3
    return r, dr


def legendre_rational_recurrence(degree: int, x):
    degree = _check_degree(degree)
    out = rational_table(degree, x)[..., degree]
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class RadialBasisConfig:
    num_functions: int = 12
    cutoff: float = 4.0
    normalization_grid_points: int = 4096

    def __post_init__(self):
        if self.num_functions < 1:
            raise ValueError("num_functions must be >= 1")
        if not self.cutoff > 0:
            raise ValueError("cutoff must be positive")
        if self.normalization_grid_points < 2:
            raise ValueError("normalization grid needs at least 2 points")


@dataclass(frozen=True)
class AngularBasisConfig:
    num_functions: int = 12

    def __post_init__(self):
        if self.num_functions < 1:
            raise ValueError("num_functions must be >= 1")


@dataclass(frozen=True)
class RadialBasis:
    """Normalized R_1..R_n on (0, cutoff]; the scale table is built once."""

    config: RadialBasisConfig = RadialBasisConfig()
    scale: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        cfg = self.config
        grid = normalization_grid(cfg)
        peak = np.abs(rational_table(cfg.num_functions, grid)[:, 1:]).max(axis=0)
        peak.setflags(write=False)
        object.__setattr__(self, "scale", peak)

    def __call__(self, d, with_derivative: bool = False):
        d = np.asarray(d, dtype=np.float64)
        if np.any(d <= 0) or np.any(d > self.config.cutoff) or np.any(~np.isfinite(d)):
            raise ValueError(f"distances must lie in (0, {self.config.cutoff}]")
        if with_derivative:
            r, dr = rational_table(self.config.num_functions, d, with_derivative=True)
            return r[..., 1:] / self.scale, dr[..., 1:] / self.scale
        return rational_table(self.config.num_functions, d)[..., 1:] / self.scale


def normalization_grid(cfg: RadialBasisConfig) -> np.ndarray:
    """Evenly spaced points on (0, cutoff], excluding 0 and including the cutoff."""
    n = cfg.normalization_grid_points
    return cfg.cutoff * np.arange(1, n + 1) / n


_RADIAL_CACHE: dict = {}


def radial_basis(cfg: RadialBasisConfig) -> RadialBasis:
    if cfg not in _RADIAL_CACHE:
        _RADIAL_CACHE[cfg] = RadialBasis(cfg)
    return _RADIAL_CACHE[cfg]


def expand_distance(d, cfg: RadialBasisConfig = RadialBasisConfig()):
    """Expand distances (Å) into ``cfg.num_functions`` normalized components."""
    return radial_basis(cfg)(d)


def expand_angle_cosine(cos_alpha, cfg: AngularBasisConfig = AngularBasisConfig(), with_derivative: bool = False):
    """Expand angle cosines into P_1..P_m (degree 0 is dropped)."""
    c = np.asarray(cos_alpha, dtype=np.float64)
    if np.any(np.abs(c) > 1 + 1e-12):
        raise ValueError("cosines must lie in [-1, 1]")
    c = np.clip(c, -1.0, 1.0)
    if with_derivative:
        p, dp = legendre_table(cfg.num_functions, c, with_derivative=True)
        return p[..., 1:], dp[..., 1:]
    return legendre_table(cfg.num_functions, c)[..., 1:]


def orthogonality_residual(i: int, j: int, quadrature_order: int = 64) -> float:
    """Gauss-Legendre estimate of the integral of P_i * P_j over [-1, 1]."""
    i, j = _check_degree(i), _check_degree(j)
    if quadrature_order < i + j + 1:
        raise ValueError(f"quadrature order {quadrature_order} too low for degrees {i}, {j}")
    nodes, weights = np.polynomial.legendre.leggauss(quadrature_order)
    p = legendre_table(max(i, j), nodes)
    return float(np.sum(weights * p[:, i] * p[:, j]))
