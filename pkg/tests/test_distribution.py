import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from qfmed import (
    Grid,
    InvalidInputError,
    GridMismatchError,
    LqdFunction,
    NumericOverflowError,
    QuantileFunction,
    barycenter,
    empirical_quantile,
    lqd_inverse,
    lqd_transform,
    wasserstein2,
)


def l2_norm(values, grid):
    return np.sqrt(grid.delta * np.sum(values**2))


class TestGrid:
    def test_midpoints(self):
        g = Grid(4)
        assert np.allclose(g.points, [0.125, 0.375, 0.625, 0.875])
        assert g.delta == 0.25

    def test_points_in_open_interval_and_increasing(self):
        for size in (1, 2, 10, 1000):
            p = Grid(size).points
            assert np.all(p > 0) and np.all(p < 1)
            assert np.all(np.diff(p) > 0)

    def test_invalid_size(self):
        with pytest.raises(InvalidInputError):
            Grid(0)

    def test_nearest_index(self):
        g = Grid(100)
        assert g.points[g.nearest_index(0.1)] == pytest.approx(0.105, abs=0.011)
        assert g.nearest_index(0.0) == 0
        assert g.nearest_index(1.0) == 99


class TestQuantileFunction:
    def test_monotone_required(self, grid100):
        with pytest.raises(InvalidInputError):
            QuantileFunction(grid100, np.linspace(1, 0, 100))

    def test_finite_required(self, grid100):
        values = np.linspace(0, 1, 100)
        values[3] = np.nan
        with pytest.raises(InvalidInputError):
            QuantileFunction(grid100, values)


class TestEmpiricalQuantile:
    def test_order_statistic_formula(self):
        # k = ceil(l * t) on t = {0.25, 0.75} picks the 1st and 3rd order stats
        q = empirical_quantile([3, 1, 2, 4], Grid(2))
        assert q.values.tolist() == [1.0, 3.0]

    def test_single_point_distribution(self, grid100):
        q = empirical_quantile([5.0], grid100)
        assert np.all(q.values == 5.0)

    def test_empty_rejected(self, grid100):
        with pytest.raises(InvalidInputError):
            empirical_quantile([], grid100)

    def test_uniform_monte_carlo(self, grid100):
        # seeded draws against the exact uniform quantiles
        samples = np.random.default_rng(424242).uniform(size=10_000)
        q = empirical_quantile(samples, grid100)
        assert np.max(np.abs(q.values - grid100.points)) < 0.02

    def test_permutation_invariance(self, rng):
        samples = rng.normal(size=57)
        grid = Grid(31)
        base = empirical_quantile(samples, grid)
        for _ in range(5):
            shuffled = rng.permutation(samples)
            assert np.array_equal(empirical_quantile(shuffled, grid).values, base.values)

    def test_output_monotone_randomized(self, rng):
        grid = Grid(17)
        for _ in range(200):
            samples = rng.normal(size=rng.integers(1, 40))
            q = empirical_quantile(samples, grid)
            assert np.all(np.diff(q.values) >= 0)


class TestWasserstein:
    def test_identity(self, grid100, rng):
        q = empirical_quantile(rng.normal(size=50), grid100)
        assert wasserstein2(q, q) == 0.0

    def test_location_shift(self, grid100, rng):
        values = np.sort(rng.normal(size=100))
        a = QuantileFunction(grid100, values)
        b = QuantileFunction(grid100, values + 3.25)
        assert wasserstein2(a, b) == pytest.approx(3.25, abs=1e-12)

    def test_gaussian_location_difference(self, grid1000):
        a = QuantileFunction(grid1000, norm.ppf(grid1000.points))
        b = QuantileFunction(grid1000, norm.ppf(grid1000.points, loc=2.0))
        assert wasserstein2(a, b) == pytest.approx(2.0, abs=0.01)

    def test_symmetry_and_nonnegativity(self, rng):
        grid = Grid(40)
        for _ in range(50):
            a = empirical_quantile(rng.normal(size=30), grid)
            b = empirical_quantile(rng.normal(size=30), grid)
            d1, d2 = wasserstein2(a, b), wasserstein2(b, a)
            assert d1 == d2 >= 0

    def test_grid_mismatch(self, rng):
        a = empirical_quantile(rng.normal(size=10), Grid(10))
        b = empirical_quantile(rng.normal(size=10), Grid(20))
        with pytest.raises(GridMismatchError):
            wasserstein2(a, b)


class TestBarycenter:
    def test_single_input(self, grid100, rng):
        q = empirical_quantile(rng.normal(size=20), grid100)
        assert np.array_equal(barycenter([q]).values, q.values)

    def test_two_shifted_inputs(self, grid100, rng):
        values = np.sort(rng.normal(size=100))
        a = QuantileFunction(grid100, values)
        b = QuantileFunction(grid100, values + 2.0)
        assert np.allclose(barycenter([a, b]).values, values + 1.0, atol=1e-14)

    def test_weighted_against_direct_summation(self, grid100, rng):
        qs = [empirical_quantile(rng.normal(size=35), grid100) for _ in range(3)]
        weights = [0.5, 0.25, 0.25]
        expected = sum(w * q.values for w, q in zip(weights, qs))
        result = barycenter(qs, weights)
        assert np.allclose(result.values, expected, atol=1e-14)
        assert np.all(np.diff(result.values) >= 0)

    def test_errors(self, grid100, rng):
        q = empirical_quantile(rng.normal(size=5), grid100)
        with pytest.raises(InvalidInputError):
            barycenter([])
        with pytest.raises(InvalidInputError):
            barycenter([q, q], [0.5, 0.25, 0.25])
        with pytest.raises(InvalidInputError):
            barycenter([q, q], [1.5, -0.5])

    def test_isometry_of_means(self, rng):
        # distance between barycenters equals the L2 norm of the mean difference
        grid = Grid(64)
        cohort_a = [empirical_quantile(rng.normal(size=40), grid) for _ in range(12)]
        cohort_b = [empirical_quantile(rng.normal(1.0, size=40), grid) for _ in range(9)]
        ba, bb = barycenter(cohort_a), barycenter(cohort_b)
        mean_diff = np.stack([q.values for q in cohort_a]).mean(0) - np.stack(
            [q.values for q in cohort_b]
        ).mean(0)
        assert abs(wasserstein2(ba, bb) - l2_norm(mean_diff, grid)) < 1e-10


class TestLqdTransform:
    def test_uniform_is_zero(self, grid1000):
        q = QuantileFunction(grid1000, grid1000.points)
        g = lqd_transform(q)
        assert np.max(np.abs(g.values)) < 1e-12
        assert abs(g.anchor) < 1e-15

    def test_constant_slope_two(self, grid100):
        q = QuantileFunction(grid100, 2.0 * grid100.points)
        g = lqd_transform(q)
        assert np.allclose(g.values, np.log(2.0), atol=1e-12)

    def test_exponential_quantile_density(self, grid1000):
        # closed form -log(1-t); finite differences are accurate away from the
        # t -> 1 boundary layer where the density vanishes
        t = grid1000.points
        q = QuantileFunction(grid1000, -np.log(1.0 - t))
        g = lqd_transform(q)
        interior = t <= 0.98
        assert np.max(np.abs(g.values + np.log(1.0 - t))[interior]) <= 1e-3

    def test_flat_data_hits_density_floor(self, grid100):
        q = QuantileFunction(grid100, np.zeros(100))
        g = lqd_transform(q)
        assert np.all(np.isfinite(g.values))
        assert np.allclose(g.values, np.log(1e-8))


class TestLqdInverse:
    def test_zero_gives_identity(self, grid100):
        g = LqdFunction(grid100, np.zeros(100), 0.0)
        q = lqd_inverse(g)
        assert np.allclose(q.values, grid100.points, atol=1e-15)

    def test_round_trip_uniform_exact(self):
        for size in (7, 100, 1000):
            grid = Grid(size)
            q = QuantileFunction(grid, grid.points)
            back = lqd_inverse(lqd_transform(q))
            assert np.max(np.abs(back.values - q.values)) < 1e-12

    def test_round_trip_exponential_l2(self, grid1000):
        q = QuantileFunction(grid1000, -np.log(1.0 - grid1000.points))
        back = lqd_inverse(lqd_transform(q))
        assert l2_norm(back.values - q.values, grid1000) <= 5e-3

    def test_reference_cumulative_integral(self, grid100):
        # integrate exp(h) for the bimodal-ish shape used in the synthetic designs
        h = lambda s: -np.cos(2 * np.pi * s) / 2 + 10 * s * s - 12 * s + 5
        oracle = np.array([quad(lambda s: np.exp(h(s)), 0, ti, limit=200)[0] for ti in grid100.points])
        q = lqd_inverse(LqdFunction(grid100, h(grid100.points), 0.0))
        assert np.max(np.abs(q.values - oracle)) < 0.02
        fine = Grid(1000)
        oracle_pts = fine.points[::37]
        oracle_fine = np.array([quad(lambda s: np.exp(h(s)), 0, ti, limit=200)[0] for ti in oracle_pts])
        q_fine = lqd_inverse(LqdFunction(fine, h(fine.points), 0.0))
        assert np.max(np.abs(q_fine.values[::37] - oracle_fine)) < 5e-4

    def test_overflow_reported_with_grid_point(self, grid100):
        values = np.zeros(100)
        values[42] = 800.0
        with pytest.raises(NumericOverflowError) as err:
            lqd_inverse(LqdFunction(grid100, values, 0.0))
        assert err.value.grid_index == 42

    def test_strictly_increasing_randomized(self, rng):
        grid = Grid(50)
        for _ in range(1000):
            g = LqdFunction(grid, rng.normal(size=50), rng.normal())
            q = lqd_inverse(g)
            assert np.all(np.diff(q.values) > 0)


class TestRoundTripAcrossResolutions:
    @pytest.mark.parametrize("size", [100, 300, 1000])
    def test_l2_error_decays(self, size):
        grid = Grid(size)
        q = QuantileFunction(grid, norm.ppf(grid.points))
        back = lqd_inverse(lqd_transform(q))
        err = l2_norm(back.values - q.values, grid)
        assert err <= 5e-3 * (1000 / size)
