"""Scalar-on-function outcome regression.

The weight function beta(t) is expanded in a K-function basis; the loading
of each unit is the quadrature integral of each basis function against the
unit's mediator quantile function.  The outcome is then an ordinary least
squares fit on [1, Z, X, loadings].
"""

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.interpolate import BSpline

from .errors import GridMismatchError, InvalidConfigError, InvalidInputError, SingularDesignError
from .distribution import Grid, QuantileFunction

BASIS_KINDS = ("bspline", "polynomial", "fourier")

# Condition numbers above HARD_COND are a rank-deficiency error; between
# SOFT_COND and HARD_COND the fit proceeds with a warning.
SOFT_COND = 1e8
HARD_COND = 1e12


@dataclass(frozen=True)
class BasisSet:
    """K basis functions evaluated on the grid (matrix of shape (K, G))."""

    kind: str
    K: int
    grid: Grid
    phi: np.ndarray

    def __post_init__(self):
        phi = np.ascontiguousarray(self.phi, dtype=np.float64)
        if phi.shape != (self.K, self.grid.size):
            raise InvalidInputError("phi must have shape (K, grid.size)")
        gram = phi @ phi.T * self.grid.delta
        cond = np.linalg.cond(gram)
        if not np.isfinite(cond) or cond > HARD_COND:
            raise InvalidConfigError(
                f"basis functions are not linearly independent on the grid (gram cond {cond:.3g})"
            )
        phi.setflags(write=False)
        object.__setattr__(self, "phi", phi)


def make_basis(kind: str = "bspline", K: int = 5, grid: Grid = Grid(100)) -> BasisSet:
    """Construct a basis on [0, 1] evaluated at the grid points.

    ``bspline`` (default): clamped cubic B-splines with equispaced knots,
    which span constants and linears.  ``polynomial``: shifted Legendre
    polynomials.  ``fourier``: 1, sin, cos pairs.
    """
    t = grid.points
    if kind == "bspline":
        if K < 4:
            raise InvalidConfigError("cubic B-spline basis needs K >= 4")
        n_interior = K - 4
        interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
        knots = np.concatenate([np.zeros(4), interior, np.ones(4)])
        phi = np.stack([BSpline.basis_element(knots[k : k + 5], extrapolate=False)(t) for k in range(K)])
        phi = np.nan_to_num(phi, nan=0.0)
    elif kind == "polynomial":
        if K < 1:
            raise InvalidConfigError("polynomial basis needs K >= 1")
        u = 2.0 * t - 1.0
        phi = np.stack([np.polynomial.legendre.Legendre.basis(k)(u) for k in range(K)])
    elif kind == "fourier":
        if K < 1:
            raise InvalidConfigError("fourier basis needs K >= 1")
        rows = [np.ones_like(t)]
        m = 1
        while len(rows) < K:
            rows.append(np.sqrt(2.0) * np.sin(2.0 * np.pi * m * t))
            if len(rows) < K:
                rows.append(np.sqrt(2.0) * np.cos(2.0 * np.pi * m * t))
            m += 1
        phi = np.stack(rows)
    else:
        raise InvalidConfigError(f"unknown basis kind {kind!r}; expected one of {BASIS_KINDS}")
    return BasisSet(kind, K, grid, phi)


@dataclass(frozen=True)
class OutcomeFit:
    delta2: float          # intercept
    gamma: float           # direct treatment effect
    xi: np.ndarray         # covariate coefficients (d,)
    b: np.ndarray          # basis coefficients (K,)
    basis: BasisSet
    beta_curve: np.ndarray  # b @ phi on the grid
    residuals: np.ndarray   # (n,)
    sigma1: float           # sd of residuals
    condition_number: float

    @property
    def coefficients(self) -> np.ndarray:
        return np.concatenate([[self.delta2, self.gamma], self.xi, self.b])


def compute_loadings(q: QuantileFunction, basis: BasisSet) -> np.ndarray:
    """Quadrature integrals of each basis function against the quantile function."""
    if q.grid != basis.grid:
        raise GridMismatchError("quantile function and basis grids differ")
    return basis.grid.delta * (basis.phi @ q.values)


def loadings_matrix(q_values: np.ndarray, basis: BasisSet) -> np.ndarray:
    """Loadings for a stack of quantile curves, shape (n, K)."""
    q = np.asarray(q_values, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != basis.grid.size:
        raise GridMismatchError("curve matrix does not match the basis grid")
    return basis.grid.delta * (q @ basis.phi.T)


def _design_column_names(d: int, K: int):
    return ["intercept", "treatment"] + [f"x{j + 1}" for j in range(d)] + [f"basis{k + 1}" for k in range(K)]


def fit_outcome(y, z, x, loadings, basis: BasisSet) -> OutcomeFit:
    """OLS fit of the outcome on [1, Z, X, loadings].

    The closed-form normal-equations solution is the contract; the solve
    uses an orthogonal decomposition for stability.  A design condition
    number above 1e12 raises :class:`SingularDesignError` naming the
    offending columns; above 1e8 a warning is emitted.
    """
    y = np.asarray(y, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    lam = np.asarray(loadings, dtype=np.float64)
    n = y.shape[0]
    if x.shape[0] != n:
        x = x.reshape(n, -1)
    d = x.shape[1]
    K = lam.shape[1]
    if lam.shape[0] != n or z.shape[0] != n:
        raise InvalidInputError("y, z, x, loadings must agree on n")
    if n <= 2 + d + K:
        raise InvalidInputError(f"need n > 2 + d + K = {2 + d + K}, got n = {n}")

    G = np.column_stack([np.ones(n), z, x, lam])
    names = _design_column_names(d, K)
    coef, _, _, svals = np.linalg.lstsq(G, y, rcond=None)
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > HARD_COND:
        _, r, piv = scipy.linalg.qr(G, mode="economic", pivoting=True)
        diag = np.abs(np.diag(r))
        rank = int(np.sum(diag > diag[0] * 1e-12)) if diag[0] > 0 else 0
        offending = [names[p] for p in piv[rank:]]
        raise SingularDesignError(
            f"design matrix is rank deficient (cond {cond:.3g}); offending columns: {offending}",
            columns=offending,
        )
    if cond > SOFT_COND:
        warnings.warn(f"ill-conditioned outcome design (cond {cond:.3g})", RuntimeWarning, stacklevel=2)
    resid = y - G @ coef
    sigma1 = float(resid.std(ddof=1))
    b = coef[2 + d :]
    return OutcomeFit(
        delta2=float(coef[0]),
        gamma=float(coef[1]),
        xi=coef[2 : 2 + d].copy(),
        b=b.copy(),
        basis=basis,
        beta_curve=b @ basis.phi,
        residuals=resid,
        sigma1=sigma1,
        condition_number=cond,
    )


def beta_on_grid(fit: OutcomeFit) -> np.ndarray:
    """The weight function on the grid: b @ phi."""
    return fit.b @ fit.basis.phi
