import numpy as np
import pytest

from qfmed import (
    AnalysisDataset,
    CovSurface,
    DegenerateSystemError,
    Grid,
    InvalidInputError,
    PipelineConfig,
    RhoProfile,
    SensitivityConfig,
    SimDesign,
    bootstrap_infer,
    estimate_cov_surface,
    generate,
    make_basis,
    sensitivity_sweep,
    solve_beta_rho,
)
from qfmed.mediation import fit_pipeline, mediator_dataset
from qfmed.mediator_model import residuals
from qfmed.sensitivity import solve_step4


def rank_two_dataset(grid, n=2000, seed=5):
    """Mediators with an exactly two-dimensional error process around a
    linear base quantile function; outcome generated with beta(t) = t."""
    rng = np.random.default_rng(seed)
    t = grid.points
    a = np.clip(rng.normal(size=n), -2, 2)
    b = np.clip(rng.normal(size=n), -2, 2)
    z = np.zeros(n, dtype=np.uint8)
    z[rng.permutation(n)[: n // 2]] = 1
    s1 = 0.05 * np.sin(np.pi * t)
    s2 = 0.03 * np.sin(2.0 * np.pi * t)
    curves = t + 0.2 * z[:, None] + np.outer(a, s1) + np.outer(b, s2)
    eta = 0.05 * rng.normal(size=n)
    y = 1.0 + 0.5 * z + grid.delta * (curves @ t) + eta
    return AnalysisDataset(grid=grid, q_values=curves, x=np.zeros((n, 0)), z=z, y=y)


class TestCovSurface:
    def test_identical_curves_zero_surface(self, grid100):
        eps = np.tile(np.sin(grid100.points), (8, 1))
        cov = estimate_cov_surface(eps, grid100)
        assert np.max(np.abs(cov.values)) < 1e-12
        exact = estimate_cov_surface(np.zeros((8, 100)), grid100)
        assert exact.effective_rank() == 0

    def test_rank_one_outer_product(self, grid100, rng):
        a = rng.normal(size=50)
        a = (a - a.mean()) / a.std(ddof=1)  # exactly unit sample variance
        eps = np.outer(a, np.sin(np.pi * grid100.points))
        cov = estimate_cov_surface(eps, grid100)
        target = np.outer(np.sin(np.pi * grid100.points), np.sin(np.pi * grid100.points))
        assert np.max(np.abs(cov.values - target)) < 1e-10
        assert cov.effective_rank() == 1

    def test_simulation_error_process_surface(self, grid100, rng):
        t = grid100.points
        n = 2000
        eps = np.outer(rng.normal(size=n), np.sin(np.pi * t)) + np.outer(
            rng.normal(size=n), np.sin(2 * np.pi * t)
        )
        cov = estimate_cov_surface(eps, grid100)
        target = np.outer(np.sin(np.pi * t), np.sin(np.pi * t)) + np.outer(
            np.sin(2 * np.pi * t), np.sin(2 * np.pi * t)
        )
        assert np.max(np.abs(cov.values - target)) <= 0.15

    def test_positive_semidefinite(self, rng):
        grid = Grid(40)
        eps = rng.normal(size=(30, 40))
        cov = estimate_cov_surface(eps, grid)
        assert np.linalg.eigvalsh(cov.values).min() >= -1e-8

    def test_too_few_curves(self, grid100):
        with pytest.raises(InvalidInputError):
            estimate_cov_surface(np.zeros((1, 100)), grid100)

    def test_symmetry_validated(self, grid100, rng):
        m = rng.normal(size=(100, 100))
        with pytest.raises(InvalidInputError):
            CovSurface(grid100, m)


class TestRhoProfile:
    def test_constant_and_bounds(self, grid100):
        p = RhoProfile.constant(grid100, -0.3)
        assert np.all(p.values == -0.3)
        with pytest.raises(InvalidInputError):
            RhoProfile.constant(grid100, 1.5)


class TestSolveStep4:
    def test_affine_in_rho_superposition(self, grid100, rng):
        t = grid100.points
        eps = np.outer(rng.normal(size=300), np.sin(np.pi * t)) + np.outer(
            rng.normal(size=300), np.sin(2 * np.pi * t)
        ) + 0.05 * rng.normal(size=(300, 100))
        cov = estimate_cov_surface(eps, grid100)
        basis = make_basis("bspline", 5, grid100)
        c_curve = rng.normal(size=100)
        sigma1 = 0.7
        ridge = 1e-6 * np.trace(cov.values) / 100
        rho_a = RhoProfile(grid100, 0.25 * np.sin(np.pi * t))
        rho_b = RhoProfile.constant(grid100, -0.2)
        rho_ab = RhoProfile(grid100, rho_a.values + rho_b.values)
        b_a = solve_step4(cov, basis, c_curve, sigma1, rho_a, ridge)
        b_b = solve_step4(cov, basis, c_curve, sigma1, rho_b, ridge)
        b_0 = solve_step4(cov, basis, c_curve, sigma1, RhoProfile.constant(grid100, 0.0), ridge)
        b_ab = solve_step4(cov, basis, c_curve, sigma1, rho_ab, ridge)
        assert np.max(np.abs(b_a + b_b - b_0 - b_ab)) <= 1e-8

    def test_zero_covariance_degenerate(self, grid100):
        cov = CovSurface(grid100, np.zeros((100, 100)))
        basis = make_basis("bspline", 5, grid100)
        with pytest.raises(DegenerateSystemError):
            solve_step4(cov, basis, np.zeros(100), 1.0, RhoProfile.constant(grid100, 0.0), 0.0)


@pytest.fixture(scope="module")
def sim4_setup():
    grid = Grid(100)
    data = generate(SimDesign(sim_id=4, n=300, grid=grid, seed=42))
    med_fit, out_fit, alpha = fit_pipeline(data)
    md = mediator_dataset(data)
    eps = residuals(med_fit, md)
    cov = estimate_cov_surface(eps, grid)
    basis = make_basis("bspline", 5, grid)
    return grid, data, med_fit, out_fit, alpha, eps, cov, basis


class TestSolveBetaRho:
    def test_rho_zero_anchors_inside_bootstrap_band(self, sim4_setup):
        grid, data, med_fit, out_fit, alpha, eps, cov, basis = sim4_setup
        res = solve_beta_rho(
            data, med_fit, cov, RhoProfile.constant(grid, 0.0), basis,
            residual_curves=eps, beta_init=out_fit.beta_curve, alpha=alpha,
        )
        assert res.converged
        report = bootstrap_infer(data, PipelineConfig(), B=200, seed=11)
        lo, hi = report.ci_global
        assert lo <= res.indirect_total_rho <= hi

    def test_one_more_iteration_stays_within_tolerance(self, sim4_setup):
        grid, data, med_fit, out_fit, alpha, eps, cov, basis = sim4_setup
        config = SensitivityConfig()
        res = solve_beta_rho(
            data, med_fit, cov, RhoProfile.constant(grid, 0.1), basis, config,
            residual_curves=eps, beta_init=out_fit.beta_curve, alpha=alpha,
        )
        assert res.converged
        again = solve_beta_rho(
            data, med_fit, cov, RhoProfile.constant(grid, 0.1), basis,
            SensitivityConfig(max_iter=1),
            residual_curves=eps, beta_init=res.beta_rho, alpha=alpha,
        )
        rel = np.linalg.norm(again.beta_rho - res.beta_rho) / (np.linalg.norm(res.beta_rho) + 1e-12)
        assert rel <= config.tolerance

    def test_degenerate_residuals_raise(self, grid100):
        # identical curves within each arm: residuals are exactly zero and
        # the integral-equation solve must report the degeneracy
        from qfmed import fit_additive, estimate_alpha

        n = 20
        z = np.repeat([0, 1], n // 2)
        curves = np.tile(grid100.points, (n, 1)) + 0.3 * z[:, None]
        y = 1.0 + z + 0.0 * np.arange(n)
        data = AnalysisDataset(grid=grid100, q_values=curves, x=np.zeros((n, 0)), z=z, y=y)
        md = mediator_dataset(data)
        med_fit = fit_additive(md)
        alpha = estimate_alpha(med_fit, md)
        eps = residuals(med_fit, md)
        cov = estimate_cov_surface(eps, grid100)
        basis = make_basis("polynomial", 2, grid100)
        with pytest.raises(DegenerateSystemError):
            solve_beta_rho(data, med_fit, cov, RhoProfile.constant(grid100, 0.0), basis,
                           residual_curves=eps, beta_init=grid100.points, alpha=alpha)

    def test_rank_two_projection_recovery(self):
        # beta is identified only on the range of the covariance operator:
        # compare projections onto the top-two eigenspace.  The baseline OLS
        # is structurally singular here (the loadings have rank 2 beyond the
        # intercept and treatment), so the solve starts from a zero curve.
        from qfmed import fit_additive, estimate_alpha

        grid = Grid(100)
        data = rank_two_dataset(grid)
        md = mediator_dataset(data)
        med_fit = fit_additive(md)
        alpha = estimate_alpha(med_fit, md)
        eps = residuals(med_fit, md)
        cov = estimate_cov_surface(eps, grid)
        basis = make_basis("bspline", 5, grid)
        res = solve_beta_rho(
            data, med_fit, cov, RhoProfile.constant(grid, 0.0), basis,
            residual_curves=eps, beta_init=np.zeros(grid.size), alpha=alpha,
        )
        assert res.converged
        eigval, eigvec = np.linalg.eigh(cov.values)
        top = eigvec[:, -2:]
        project = lambda f: top @ (top.T @ f)
        l2 = lambda f: np.sqrt(grid.delta * np.sum(f**2))
        assert l2(project(res.beta_rho) - project(grid.points)) <= 0.1


class TestSweep:
    def test_empty_sweep(self, grid100):
        data = generate(SimDesign(sim_id=4, n=120, grid=Grid(60), seed=2))
        med_fit, out_fit, _ = fit_pipeline(data)
        basis = make_basis("bspline", 5, Grid(60))
        assert sensitivity_sweep(data, med_fit, out_fit, [], basis) == []

    def test_rho_out_of_range_rejected(self, grid100):
        data = generate(SimDesign(sim_id=4, n=120, grid=Grid(60), seed=2))
        med_fit, out_fit, _ = fit_pipeline(data)
        basis = make_basis("bspline", 5, Grid(60))
        with pytest.raises(InvalidInputError):
            sensitivity_sweep(data, med_fit, out_fit, [1.2], basis)

    def test_seven_value_sweep_monotone_with_step4_direction(self):
        grid = Grid(100)
        data = generate(SimDesign(sim_id=4, n=300, grid=grid, seed=42))
        med_fit, out_fit, alpha = fit_pipeline(data)
        basis = make_basis("bspline", 5, grid)
        rhos = [-0.3, -0.2, -0.1, 0.0, 0.1, 0.2, 0.3]
        results = sensitivity_sweep(data, med_fit, out_fit, rhos, basis)
        assert len(results) == 7
        assert all(r.converged for r in results)
        totals = np.array([r.indirect_total_rho for r in results])

        # finite-difference oracle on the linear step-4 system gives the
        # direction of the shift in rho
        md = mediator_dataset(data)
        eps = residuals(med_fit, md)
        cov = estimate_cov_surface(eps, grid)
        mid = results[3]
        b_hi = solve_step4(cov, basis, np.zeros(grid.size), mid.sigma1,
                           RhoProfile.constant(grid, 1.0), mid.ridge)
        b_lo = solve_step4(cov, basis, np.zeros(grid.size), mid.sigma1,
                           RhoProfile.constant(grid, 0.0), mid.ridge)
        direction = np.sign(grid.delta * ((b_hi - b_lo) @ basis.phi @ alpha.values))
        diffs = np.diff(totals)
        assert np.all(np.sign(diffs) == direction)

        # the rho = 0 entry reproduces the anchored single solve
        single = solve_beta_rho(
            data, med_fit, cov, RhoProfile.constant(grid, 0.0), basis,
            residual_curves=eps, beta_init=out_fit.beta_curve,
        )
        assert results[3].indirect_total_rho == pytest.approx(single.indirect_total_rho, abs=1e-9)
