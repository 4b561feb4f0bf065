"""Geometry of the mediator space.

Distributions are represented by their quantile functions sampled on a
midpoint grid over (0, 1).  On that representation the 2-Wasserstein
distance is the L2 distance between quantile functions, barycenters are
pointwise means, and the log-quantile-density transform maps the monotone
cone into an unrestricted function space and back.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import (
    GridMismatchError,
    InvalidInputError,
    NumericOverflowError,
)

# Quantile-density slopes below this floor are clamped before taking logs,
# which removes the log(0) singularity for flat stretches of data.
DENSITY_FLOOR = 1e-8

# exp() overflows double precision just above this point.
_EXP_MAX = 700.0


@dataclass(frozen=True)
class Grid:
    """Uniform midpoint grid t_g = (g - 0.5) / size on (0, 1)."""

    size: int

    def __post_init__(self):
        if not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise InvalidInputError(f"grid size must be a positive integer, got {self.size!r}")

    @cached_property
    def points(self) -> np.ndarray:
        t = (np.arange(1, self.size + 1) - 0.5) / self.size
        t.setflags(write=False)
        return t

    @property
    def delta(self) -> float:
        return 1.0 / self.size

    def nearest_index(self, t: float) -> int:
        """Index of the grid point closest to quantile level ``t``."""
        return int(np.clip(round(t * self.size - 0.5), 0, self.size - 1))


def _as_readonly(values, size, name) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] != size:
        raise InvalidInputError(f"{name} must be a 1-d sequence of length {size}, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidInputError(f"{name} contains non-finite values")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class QuantileFunction:
    """A quantile function sampled on a grid; values must be non-decreasing."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly(self.values, self.grid.size, "values"))
        if np.any(np.diff(self.values) < 0):
            raise InvalidInputError("quantile function values must be non-decreasing")


@dataclass(frozen=True)
class LqdFunction:
    """A function in transform space plus the location anchor at t = 0.

    The transform discards location, so the anchor (the extrapolated value
    of the quantile function at t = 0) is carried alongside to make the
    inverse exact.
    """

    grid: Grid
    values: np.ndarray
    anchor: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "values", _as_readonly(self.values, self.grid.size, "values"))
        if not np.isfinite(self.anchor):
            raise InvalidInputError("anchor must be finite")


def empirical_quantile(samples, grid: Grid) -> QuantileFunction:
    """Empirical quantile function of ``samples`` evaluated on ``grid``.

    The value at level t is the k-th order statistic with k = ceil(l * t)
    clamped to [1, l], where l is the sample size.
    """
    s = np.asarray(samples, dtype=np.float64)
    if s.ndim != 1 or s.size == 0:
        raise InvalidInputError("samples must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("samples contain non-finite values")
    order_stats = np.sort(s)
    k = np.ceil(s.size * grid.points).astype(np.int64)
    np.clip(k, 1, s.size, out=k)
    return QuantileFunction(grid, order_stats[k - 1])


def wasserstein2(a: QuantileFunction, b: QuantileFunction) -> float:
    """2-Wasserstein distance = L2 distance between quantile functions.

    Computed by midpoint quadrature: sqrt(delta * sum_g (a_g - b_g)^2).
    """
    if a.grid != b.grid:
        raise GridMismatchError(f"grids differ: {a.grid.size} vs {b.grid.size}")
    diff = a.values - b.values
    return float(np.sqrt(a.grid.delta * np.dot(diff, diff)))


def barycenter(qs, weights=None) -> QuantileFunction:
    """Wasserstein barycenter: the (weighted) pointwise mean quantile function."""
    qs = list(qs)
    if not qs:
        raise InvalidInputError("barycenter of an empty collection")
    grid = qs[0].grid
    for q in qs[1:]:
        if q.grid != grid:
            raise GridMismatchError("barycenter inputs must share a grid")
    stacked = np.stack([q.values for q in qs])
    if weights is None:
        mean = stacked.mean(axis=0)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != (len(qs),):
            raise InvalidInputError(f"expected {len(qs)} weights, got shape {w.shape}")
        if np.any(w < 0):
            raise InvalidInputError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError(f"weights must sum to 1, got {w.sum()!r}")
        mean = w @ stacked
    return QuantileFunction(grid, mean)


def _quantile_density_slopes(values: np.ndarray, delta: float) -> np.ndarray:
    """Finite-difference quantile density: central inside, one-sided at the ends."""
    s = np.empty_like(values)
    s[0] = (values[1] - values[0]) / delta
    s[-1] = (values[-1] - values[-2]) / delta
    s[1:-1] = (values[2:] - values[:-2]) / (2.0 * delta)
    return s


def lqd_transform(q: QuantileFunction) -> LqdFunction:
    """Log-quantile-density transform of a quantile function.

    Returns log of the finite-difference quantile density on the grid,
    with slopes floored at DENSITY_FLOOR, plus the anchor extrapolated to
    t = 0 (value at t_1 minus half a grid step times the slope there).
    """
    if q.grid.size < 2:
        raise InvalidInputError("lqd_transform needs a grid of size >= 2")
    slopes = _quantile_density_slopes(q.values, q.grid.delta)
    np.maximum(slopes, DENSITY_FLOOR, out=slopes)
    anchor = float(q.values[0] - 0.5 * q.grid.delta * slopes[0])
    return LqdFunction(q.grid, np.log(slopes), anchor)


def transform_batch(q_matrix: np.ndarray, grid: Grid):
    """Vectorized ``lqd_transform`` over rows of an (n, G) value matrix.

    Returns (values (n, G), anchors (n,)).
    """
    q = np.asarray(q_matrix, dtype=np.float64)
    delta = grid.delta
    s = np.empty_like(q)
    s[:, 0] = (q[:, 1] - q[:, 0]) / delta
    s[:, -1] = (q[:, -1] - q[:, -2]) / delta
    s[:, 1:-1] = (q[:, 2:] - q[:, :-2]) / (2.0 * delta)
    np.maximum(s, DENSITY_FLOOR, out=s)
    anchors = q[:, 0] - 0.5 * delta * s[:, 0]
    return np.log(s), anchors


def lqd_inverse(g: LqdFunction) -> QuantileFunction:
    """Inverse transform: anchor + cumulative midpoint quadrature of exp(g).

    The output is strictly increasing because exp is positive.  Raises
    :class:`NumericOverflowError` if exp overflows, naming the grid point.
    """
    idx = int(np.argmax(g.values))
    if g.values[idx] > _EXP_MAX:
        raise NumericOverflowError(
            f"exp overflow in inverse transform at grid point {idx} (t={g.grid.points[idx]:.6g})",
            grid_index=idx,
            t=float(g.grid.points[idx]),
        )
    values = inverse_batch(g.values[None, :], np.array([g.anchor]), g.grid)[0]
    if not np.all(np.isfinite(values)):
        bad = int(np.argmax(~np.isfinite(values)))
        raise NumericOverflowError(
            f"overflow accumulating inverse transform at grid point {bad}",
            grid_index=bad,
            t=float(g.grid.points[bad]),
        )
    return QuantileFunction(g.grid, values)


def inverse_batch(values: np.ndarray, anchors: np.ndarray, grid: Grid) -> np.ndarray:
    """Vectorized inverse transform over rows; no overflow checks.

    For row v with anchor a the output at t_g is
    a + delta * (e_1 + ... + e_{g-1}) + delta/2 * e_g with e = exp(v):
    full cells below the midpoint plus half the current cell.
    """
    e = np.exp(values)
    out = np.cumsum(e, axis=1)
    out -= 0.5 * e
    out *= grid.delta
    out += anchors[:, None]
    return out
