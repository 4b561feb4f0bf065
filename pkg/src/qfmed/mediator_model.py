"""Additive functional regression of transformed mediators.

For every grid point t the transformed mediator values are regressed on the
covariates and the binary treatment with an additive model, fitted by
classic backfitting: Nadaraya-Watson (Epanechnikov) smoothers for the
continuous covariates and exact per-arm means for the treatment.  The fit
yields the plug-in treatment-effect curve on the mediator's quantile scale.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .distribution import Grid, QuantileFunction, inverse_batch
from .errors import (
    GridMismatchError,
    InvalidConfigError,
    InvalidInputError,
    NoContrastError,
    NumericOverflowError,
)

_EXP_MAX = 700.0


@dataclass(frozen=True)
class SmootherConfig:
    """Tuning knobs of the backfitting smoother (see the run config file)."""

    bandwidth_multiplier: float = 1.0
    tolerance: float = 1e-4
    max_iter: int = 50
    eval_points: int = 51
    smooth_over_t: bool = False

    def validate(self):
        if not (self.bandwidth_multiplier > 0):
            raise InvalidConfigError("bandwidth_multiplier must be > 0")
        if not (self.tolerance > 0):
            raise InvalidConfigError("tolerance must be > 0")
        if self.max_iter < 1:
            raise InvalidConfigError("max_iter must be >= 1")
        if self.eval_points < 2:
            raise InvalidConfigError("eval_points must be >= 2")


@dataclass(frozen=True)
class MediatorDataset:
    """Transformed mediators plus covariates and treatment, one row per unit."""

    grid: Grid
    values: np.ndarray   # (n, G) transform-space curves
    anchors: np.ndarray  # (n,)
    x: np.ndarray        # (n, d)
    z: np.ndarray        # (n,) in {0, 1}

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        anchors = np.ascontiguousarray(self.anchors, dtype=np.float64)
        x = np.ascontiguousarray(self.x, dtype=np.float64)
        z = np.ascontiguousarray(self.z)
        if values.ndim != 2 or values.shape[1] != self.grid.size:
            raise InvalidInputError("values must have shape (n, grid.size)")
        n = values.shape[0]
        if x.ndim != 2 or x.shape[0] != n:
            raise InvalidInputError("x must have shape (n, d)")
        if anchors.shape != (n,) or z.shape != (n,):
            raise InvalidInputError("anchors and z must have length n")
        if not (np.all(np.isfinite(values)) and np.all(np.isfinite(anchors)) and np.all(np.isfinite(x))):
            raise InvalidInputError("mediator dataset contains non-finite values")
        if not np.all((z == 0) | (z == 1)):
            raise InvalidInputError("treatment must be binary 0/1")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "anchors", anchors)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", z.astype(np.uint8))

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    @classmethod
    def from_lqd(cls, functions, x, z) -> "MediatorDataset":
        functions = list(functions)
        if not functions:
            raise InvalidInputError("empty mediator collection")
        grid = functions[0].grid
        for g in functions[1:]:
            if g.grid != grid:
                raise GridMismatchError("all mediators must share a grid")
        values = np.stack([g.values for g in functions])
        anchors = np.array([g.anchor for g in functions])
        return cls(grid, values, anchors, np.asarray(x, dtype=np.float64), np.asarray(z))


@dataclass(frozen=True)
class CovariateComponent:
    """One fitted bivariate component: a surface over (eval points x grid)."""

    eval_points: np.ndarray  # (E,)
    surface: np.ndarray      # (E, G)
    bandwidth: float


@dataclass(frozen=True)
class AdditiveMediatorFit:
    grid: Grid
    g0: np.ndarray                 # (G,)
    components: tuple              # of CovariateComponent, one per covariate
    treatment: np.ndarray          # (2, G): centered arm-0 and arm-1 curves
    anchors: np.ndarray            # (2,): per-arm mean anchors
    iterations: int
    final_change: float
    converged: bool

    def treatment_contrast(self) -> np.ndarray:
        """g_{d+1}(t, 1) - g_{d+1}(t, 0) in transform space."""
        return self.treatment[1] - self.treatment[0]


@dataclass(frozen=True)
class AlphaCurve:
    """Estimated treatment effect on the mediator quantile function."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.shape != (self.grid.size,) or not np.all(np.isfinite(values)):
            raise InvalidInputError("alpha curve must be finite with grid length")
        object.__setattr__(self, "values", values)

    def l2_norm(self) -> float:
        return float(np.sqrt(self.grid.delta * np.dot(self.values, self.values)))


def canonical_order(data: MediatorDataset) -> np.ndarray:
    """Permutation sorting units by their full content (z, x, anchor, curve).

    Fitting and averaging in this order makes results bitwise independent of
    the order units arrive in.  Any content-determined total order works, so
    rows are compared as raw bytes (ties are bit-identical units, whose
    contributions commute exactly).
    """
    combined = np.column_stack([data.z.astype(np.float64), data.x, data.anchors, data.values])
    combined = np.ascontiguousarray(combined)
    as_bytes = combined.view(np.dtype((np.void, combined.shape[1] * combined.itemsize)))
    return np.argsort(as_bytes.ravel(), kind="stable")


def _prepare_smoothers(x: np.ndarray, config: SmootherConfig):
    """Build NW weight matrices, empty-row fill plans, and interpolation maps."""
    n, d = x.shape
    E = config.eval_points
    W = np.zeros((d, E, n))
    fill_lo = np.zeros((d, E), dtype=np.int32)
    fill_hi = np.zeros((d, E), dtype=np.int32)
    fill_w = np.zeros((d, E))
    ij = np.zeros((d, n), dtype=np.int32)
    wj = np.zeros((d, n))
    eval_grids = np.zeros((d, E))
    bandwidths = np.zeros(d)

    for j in range(d):
        xj = x[:, j]
        lo, hi = float(xj.min()), float(xj.max())
        ev = np.linspace(lo, hi, E)
        eval_grids[j] = ev
        sd = float(xj.std(ddof=1)) if n > 1 else 0.0
        if sd == 0.0 or hi == lo:
            # Degenerate covariate: every unit at one point; the smoother is
            # the global mean everywhere, so the centered component is zero.
            W[j] = 1.0 / n
            fill_lo[j] = np.arange(E)
            fill_hi[j] = np.arange(E)
            bandwidths[j] = 0.0
            continue
        h = 1.06 * sd * n ** (-0.2) * config.bandwidth_multiplier
        bandwidths[j] = h
        u = (xj[None, :] - ev[:, None]) / h
        k = 0.75 * (1.0 - u * u)
        np.maximum(k, 0.0, out=k)
        rowsum = k.sum(axis=1)
        nonempty = rowsum > 0.0
        W[j][nonempty] = k[nonempty] / rowsum[nonempty, None]
        fill_lo[j] = np.arange(E)
        fill_hi[j] = np.arange(E)
        if not nonempty.all():
            ne_idx = np.nonzero(nonempty)[0]
            for e in np.nonzero(~nonempty)[0]:
                below = ne_idx[ne_idx < e]
                above = ne_idx[ne_idx > e]
                if below.size and above.size:
                    fill_lo[j, e] = below[-1]
                    fill_hi[j, e] = above[0]
                    fill_w[j, e] = (e - below[-1]) / (above[0] - below[-1])
                elif below.size:
                    fill_lo[j, e] = fill_hi[j, e] = below[-1]
                else:
                    fill_lo[j, e] = fill_hi[j, e] = above[0]
        step = (hi - lo) / (E - 1)
        pos = np.clip((xj - lo) / step, 0.0, E - 1.0)
        idx = np.minimum(pos.astype(np.int32), E - 2)
        ij[j] = idx
        wj[j] = pos - idx

    return W, fill_lo, fill_hi, fill_w, ij, wj, eval_grids, bandwidths


def _running_mean_over_t(arr: np.ndarray, window: int = 3) -> np.ndarray:
    """Post-hoc running mean along the last (grid) axis, edges shrunk."""
    kernel = np.ones(window) / window
    pad = window // 2
    padded = np.concatenate(
        [np.repeat(arr[..., :1], pad, axis=-1), arr, np.repeat(arr[..., -1:], pad, axis=-1)],
        axis=-1,
    )
    return np.apply_along_axis(lambda v: np.convolve(v, kernel, mode="valid"), -1, padded)


def fit_additive(data: MediatorDataset, config: SmootherConfig = SmootherConfig()) -> AdditiveMediatorFit:
    """Fit the additive transform-space regression by backfitting.

    Non-convergence within ``max_iter`` is reported through the returned
    diagnostics rather than raised.
    """
    config.validate()
    n, d = data.n, data.d
    if n < d + 2:
        raise InvalidInputError(f"need at least d + 2 = {d + 2} units, got {n}")
    n1 = int(data.z.sum())
    if n1 == 0 or n1 == n:
        raise NoContrastError("both treatment arms must be present")

    perm = canonical_order(data)
    values = data.values[perm]
    anchors = data.anchors[perm]
    x = data.x[perm]
    z = data.z[perm]

    W, fill_lo, fill_hi, fill_w, ij, wj, eval_grids, bandwidths = _prepare_smoothers(x, config)
    ops = _kernels.build_operators(values, z, W, fill_lo, fill_hi, fill_w, ij, wj)
    g0, surf, m0, m1, n_iter, change = _kernels.backfit(ops, config.tolerance, config.max_iter)

    treatment = np.stack([m0, m1])
    if config.smooth_over_t:
        g0 = _running_mean_over_t(g0)
        treatment = _running_mean_over_t(treatment)
        surf = _running_mean_over_t(surf) if d else surf

    arm_anchors = np.array([anchors[z == 0].mean(), anchors[z == 1].mean()])
    components = tuple(
        CovariateComponent(eval_grids[j].copy(), surf[j].copy(), float(bandwidths[j])) for j in range(d)
    )
    return AdditiveMediatorFit(
        grid=data.grid,
        g0=g0,
        components=components,
        treatment=treatment,
        anchors=arm_anchors,
        iterations=int(n_iter),
        final_change=float(change),
        converged=bool(change <= config.tolerance),
    )


def _component_at(comp: CovariateComponent, xj: np.ndarray) -> np.ndarray:
    """Evaluate one component surface at covariate values (clamped to range)."""
    ev = comp.eval_points
    lo, hi = ev[0], ev[-1]
    if hi == lo:
        return np.repeat(comp.surface[:1], xj.shape[0], axis=0)
    step = (hi - lo) / (ev.size - 1)
    pos = np.clip((xj - lo) / step, 0.0, ev.size - 1.0)
    idx = np.minimum(pos.astype(np.int64), ev.size - 2)
    frac = pos - idx
    return (1.0 - frac)[:, None] * comp.surface[idx] + frac[:, None] * comp.surface[idx + 1]


def transform_prediction(fit: AdditiveMediatorFit, z: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Predicted transform-space curves for units (z_i, x_i); shape (m, G)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    z = np.asarray(z).astype(np.intp)
    if x.shape[1] != len(fit.components):
        raise InvalidInputError(f"expected {len(fit.components)} covariates, got {x.shape[1]}")
    out = np.tile(fit.g0, (x.shape[0], 1))
    for j, comp in enumerate(fit.components):
        out += _component_at(comp, x[:, j])
    out += fit.treatment[z]
    return out


def _checked_inverse(curves: np.ndarray, anchors: np.ndarray, grid: Grid) -> np.ndarray:
    if curves.size and curves.max() > _EXP_MAX:
        flat = int(np.argmax(curves))
        g = flat % grid.size
        raise NumericOverflowError(
            f"exp overflow mapping predictions back to quantile scale at grid point {g}",
            grid_index=g,
            t=float(grid.points[g]),
        )
    return inverse_batch(curves, anchors, grid)


def predict_quantile(fit: AdditiveMediatorFit, z: int, x) -> QuantileFunction:
    """Counterfactual mediator quantile function at (z, x)."""
    if z not in (0, 1):
        raise InvalidInputError("z must be 0 or 1")
    curves = transform_prediction(fit, np.array([z]), np.atleast_2d(np.asarray(x, dtype=np.float64)))
    q = _checked_inverse(curves, np.array([fit.anchors[z]]), fit.grid)
    return QuantileFunction(fit.grid, q[0])


def estimate_alpha(fit: AdditiveMediatorFit, data: MediatorDataset) -> AlphaCurve:
    """Plug-in treatment-effect curve: average counterfactual difference.

    For every unit the fitted mediator is predicted under both arms, mapped
    through the inverse transform, and the pointwise differences averaged.
    """
    if fit.grid != data.grid:
        raise GridMismatchError("fit and data grids differ")
    perm = canonical_order(data)
    x = data.x[perm]
    base = np.tile(fit.g0, (data.n, 1))
    for j, comp in enumerate(fit.components):
        base += _component_at(comp, x[:, j])
    top = base.max(initial=-np.inf) + max(fit.treatment.max(initial=0.0), 0.0)
    if top > _EXP_MAX:
        raise NumericOverflowError("exp overflow in counterfactual predictions")
    # The counterfactual difference is linear in exp of the curves, so the
    # average over units commutes with the cumulative quadrature.
    diff = np.exp(base) * (np.exp(fit.treatment[1]) - np.exp(fit.treatment[0]))
    mean_diff = diff.mean(axis=0)
    alpha = np.cumsum(mean_diff)
    alpha -= 0.5 * mean_diff
    alpha *= fit.grid.delta
    alpha += fit.anchors[1] - fit.anchors[0]
    return AlphaCurve(fit.grid, alpha)


def residuals(fit: AdditiveMediatorFit, data: MediatorDataset) -> np.ndarray:
    """Observed-minus-fitted curves on the mediator quantile scale, (n, G).

    Each unit's observed quantile function (inverse transform with its own
    anchor) minus the fitted counterfactual at its own (z, x).
    """
    if fit.grid != data.grid:
        raise GridMismatchError("fit and data grids differ")
    observed = _checked_inverse(data.values, data.anchors, data.grid)
    curves = transform_prediction(fit, data.z, data.x)
    fitted = _checked_inverse(curves, fit.anchors[data.z.astype(np.intp)], data.grid)
    return observed - fitted
