"""Sensitivity of the indirect effect to correlated model errors.

The sensitivity parameter rho(t) is the correlation between the mediator
regression error at quantile t and the outcome error.  For a posited
rho(t) an adjusted weight function beta_rho is obtained by iterating a
residualization step and a regularized solve of the covariance integral
equation; the rho-adjusted indirect effect integrates beta_rho against
the treatment-effect curve.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .distribution import Grid
from .errors import DegenerateSystemError, InvalidConfigError, InvalidInputError
from .mediation import AnalysisDataset, mediator_dataset
from .mediator_model import (
    AdditiveMediatorFit,
    AlphaCurve,
    _checked_inverse,
    estimate_alpha,
    residuals,
    transform_prediction,
)
from .outcome_model import BasisSet, OutcomeFit


@dataclass(frozen=True)
class CovSurface:
    """Empirical covariance surface of the mediator-scale error curves."""

    grid: Grid
    values: np.ndarray  # (G, G)

    def __post_init__(self):
        v = np.ascontiguousarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.size, self.grid.size):
            raise InvalidInputError("covariance surface must be G x G")
        if np.max(np.abs(v - v.T)) > 1e-10:
            raise InvalidInputError("covariance surface must be symmetric within 1e-10")
        if np.any(np.diag(v) < -1e-12):
            raise InvalidInputError("covariance surface has negative diagonal entries")
        object.__setattr__(self, "values", v)

    def effective_rank(self, rel_tol: float = 1e-10) -> int:
        eigs = np.linalg.eigvalsh(self.values)
        top = eigs.max(initial=0.0)
        if top <= 0:
            return 0
        return int(np.sum(eigs > top * rel_tol))


@dataclass(frozen=True)
class RhoProfile:
    """A sensitivity correlation profile over the grid, values in [-1, 1]."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim == 0:
            v = np.full(self.grid.size, float(v))
        if v.shape != (self.grid.size,):
            raise InvalidInputError("rho profile must have grid length")
        if np.any(np.abs(v) > 1.0):
            raise InvalidInputError("rho values must lie in [-1, 1]")
        object.__setattr__(self, "values", v)

    @classmethod
    def constant(cls, grid: Grid, value: float) -> "RhoProfile":
        return cls(grid, np.full(grid.size, float(value)))


@dataclass(frozen=True)
class SensitivityConfig:
    tolerance: float = 1e-6
    max_iter: int = 100
    damping: float = 0.0
    ridge_scale: float = 1e-6

    def validate(self):
        if not (self.tolerance > 0):
            raise InvalidConfigError("tolerance must be > 0")
        if self.max_iter < 1:
            raise InvalidConfigError("max_iter must be >= 1")
        if not (0.0 <= self.damping < 1.0):
            raise InvalidConfigError("damping must be in [0, 1)")
        if self.ridge_scale < 0:
            raise InvalidConfigError("ridge_scale must be >= 0")


@dataclass(frozen=True)
class SensitivityResult:
    rho: RhoProfile
    beta_rho: np.ndarray
    indirect_total_rho: float
    iterations: int
    converged: bool
    sigma1: float
    effective_rank: int
    ridge: float


def estimate_cov_surface(residual_curves: np.ndarray, grid: Grid) -> CovSurface:
    """Empirical covariance of residual curves across units (divisor n - 1)."""
    eps = np.asarray(residual_curves, dtype=np.float64)
    if eps.ndim != 2 or eps.shape[1] != grid.size:
        raise InvalidInputError("residual curves must have shape (n, G)")
    n = eps.shape[0]
    if n < 2:
        raise InvalidInputError("need at least two residual curves")
    centered = eps - eps.mean(axis=0)
    sigma = centered.T @ centered / (n - 1)
    sigma = 0.5 * (sigma + sigma.T)
    return CovSurface(grid, sigma)


def solve_step4(
    cov: CovSurface,
    basis: BasisSet,
    c_curve: np.ndarray,
    sigma1: float,
    rho: RhoProfile,
    ridge: float,
) -> np.ndarray:
    """Solve the covariance integral equation for the basis coefficients.

    Least squares over the grid of  (delta * Sigma phi^T) b = c - sigma1 *
    sqrt(diag Sigma) * rho  with an added ridge penalty.  Linear, hence
    affine in rho for fixed (sigma1, Sigma, c).
    """
    sigma = cov.values
    scale = 1.0 + float(np.abs(c_curve).max(initial=0.0)) + abs(sigma1)
    if not np.trace(sigma) > 1e-14 * scale:
        raise DegenerateSystemError("covariance operator is numerically zero; the solve is degenerate")
    sqrt_diag = np.sqrt(np.maximum(np.diag(sigma), 0.0))
    rhs = c_curve - sigma1 * sqrt_diag * rho.values
    M = cov.grid.delta * (sigma @ basis.phi.T)
    A = M.T @ M + ridge * np.eye(basis.K)
    try:
        cho = scipy.linalg.cho_factor(A)
        return scipy.linalg.cho_solve(cho, M.T @ rhs)
    except scipy.linalg.LinAlgError as exc:
        raise DegenerateSystemError(f"ridge system singular even with ridge {ridge:.3g}") from exc


def _fitted_mean_part(med_fit: AdditiveMediatorFit, data: AnalysisDataset) -> np.ndarray:
    curves = transform_prediction(med_fit, data.z, data.x)
    return _checked_inverse(curves, med_fit.anchors[data.z.astype(np.intp)], data.grid)


def solve_beta_rho(
    data: AnalysisDataset,
    med_fit: AdditiveMediatorFit,
    cov: CovSurface,
    rho: RhoProfile,
    basis: BasisSet,
    config: SensitivityConfig = SensitivityConfig(),
    residual_curves: np.ndarray = None,
    beta_init: np.ndarray = None,
    alpha: AlphaCurve = None,
) -> SensitivityResult:
    """Iterate the residualization / integral-equation steps for one rho.

    Non-convergence within ``max_iter`` is reported via ``converged=False``
    rather than raised.  The ridge default is ridge_scale * trace(Sigma)/G;
    the effective rank of the covariance operator is reported because the
    equation identifies beta only on its range.
    """
    config.validate()
    grid = data.grid
    med_data = mediator_dataset(data)
    if residual_curves is None:
        residual_curves = residuals(med_fit, med_data)
    if alpha is None:
        alpha = estimate_alpha(med_fit, med_data)
    if beta_init is None:
        from .mediation import PipelineConfig, fit_pipeline

        _, out_fit, _ = fit_pipeline(data, PipelineConfig(basis_kind=basis.kind, basis_K=basis.K), basis)
        beta_init = out_fit.beta_curve

    eps = np.asarray(residual_curves, dtype=np.float64)
    mean_part = _fitted_mean_part(med_fit, data)
    design = np.column_stack([np.ones(data.n_units), data.z.astype(np.float64), data.x])
    ridge = config.ridge_scale * np.trace(cov.values) / grid.size
    delta = grid.delta

    beta = np.asarray(beta_init, dtype=np.float64).copy()
    sigma1 = 0.0
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        y_tilde = data.y - delta * (mean_part @ beta)
        coef, *_ = np.linalg.lstsq(design, y_tilde, rcond=None)
        u = y_tilde - design @ coef
        eta = u - delta * (eps @ beta)
        sigma1 = float(eta.std(ddof=1))
        centered_u = u - u.mean()
        c_curve = (centered_u @ (eps - eps.mean(axis=0))) / (data.n_units - 1)
        b = solve_step4(cov, basis, c_curve, sigma1, rho, ridge)
        beta_new = b @ basis.phi
        if config.damping > 0:
            beta_new = (1.0 - config.damping) * beta_new + config.damping * beta
        change = float(np.linalg.norm(beta_new - beta) / (np.linalg.norm(beta) + 1e-12))
        beta = beta_new
        if change <= config.tolerance:
            converged = True
            break

    indirect = float(delta * np.dot(beta, alpha.values))
    return SensitivityResult(
        rho=rho,
        beta_rho=beta,
        indirect_total_rho=indirect,
        iterations=it,
        converged=converged,
        sigma1=sigma1,
        effective_rank=cov.effective_rank(),
        ridge=float(ridge),
    )


def sensitivity_sweep(
    data: AnalysisDataset,
    med_fit: AdditiveMediatorFit,
    out_fit: OutcomeFit,
    rho_values,
    basis: BasisSet,
    config: SensitivityConfig = SensitivityConfig(),
):
    """One adjusted solve per rho value, sharing residuals and Sigma."""
    rho_values = list(rho_values)
    for r in rho_values:
        if abs(float(r)) > 1.0:
            raise InvalidInputError(f"|rho| must be <= 1, got {r}")
    if not rho_values:
        return []
    med_data = mediator_dataset(data)
    eps = residuals(med_fit, med_data)
    cov = estimate_cov_surface(eps, data.grid)
    alpha = estimate_alpha(med_fit, med_data)
    results = []
    for r in rho_values:
        profile = RhoProfile.constant(data.grid, float(r))
        results.append(
            solve_beta_rho(
                data,
                med_fit,
                cov,
                profile,
                basis,
                config,
                residual_curves=eps,
                beta_init=out_fit.beta_curve,
                alpha=alpha,
            )
        )
    return results
