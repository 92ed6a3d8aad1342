import numpy as np
import pytest
from scipy.stats import multivariate_normal

from src.models.dataset import CovariateGrid
from src.prior.base_measure import BaseMeasure, cov_matrix, jittered_cholesky
from src.utils.errors import NumericalError, ParameterError


@pytest.fixture
def grid():
    return CovariateGrid(np.array([0.0, 0.7, 2.0, 5.0]))


class TestCovariance:
    def test_exponential_kernel(self, grid):
        cov = cov_matrix(grid, 2.0, 0.3)
        assert cov[0, 0] == pytest.approx(2.0)
        assert cov[0, 2] == pytest.approx(2.0 * np.exp(-0.6))
        np.testing.assert_allclose(cov, cov.T)

    @pytest.mark.parametrize("sigma2,omega", [(0.0, 1.0), (1.0, -0.1)])
    def test_rejects_non_positive(self, grid, sigma2, omega):
        with pytest.raises(ParameterError):
            cov_matrix(grid, sigma2, omega)

    def test_jitter_rescues_near_singular(self):
        near = CovariateGrid(np.array([0.0, 1e-9, 1.0]))
        cov = cov_matrix(near, 1.0, 0.01)
        chol = jittered_cholesky(cov, 1.0)
        np.testing.assert_allclose(chol @ chol.T, cov, atol=1e-6)

    def test_jitter_exhausted(self):
        bad = -np.eye(2)
        with pytest.raises(NumericalError):
            jittered_cholesky(bad, 1.0)


class TestVariants:
    def test_unknown_variant(self, grid):
        with pytest.raises(ParameterError):
            BaseMeasure("matern", grid)

    def test_constant_atoms_are_flat(self, grid, rng):
        H = BaseMeasure("constant", grid, mean=0.5, sigma2=2.0)
        atoms = H.sample_atoms(100, rng)
        assert np.all(np.ptp(atoms, axis=1) == 0)
        assert H.latent_dim == 1

    def test_constant_log_density(self, grid):
        H = BaseMeasure("constant", grid)
        assert H.log_density(np.array([0.1, 0.2, 0.1, 0.1])) == -np.inf
        assert np.isfinite(H.log_density(np.full(4, 0.3)))

    def test_product_covariance_is_diagonal(self, grid):
        H = BaseMeasure("product", grid, variances=np.array([1.0, 2.0, 3.0, 4.0]))
        np.testing.assert_allclose(H.covariance(), np.diag([1.0, 2.0, 3.0, 4.0]))

    def test_markov_chain_precision_inverts_covariance(self, grid):
        H = BaseMeasure("markov-chain", grid, sigma2=1.5, omega=0.4)
        np.testing.assert_allclose(H.latent_precision @ cov_matrix(grid, 1.5, 0.4), np.eye(4), atol=1e-10)

    def test_markov_chain_needs_1d_grid(self):
        grid2d = CovariateGrid(np.array([[0.0, 0.0], [1.0, 1.0]]))
        with pytest.raises(ParameterError):
            BaseMeasure("markov-chain", grid2d)

    def test_gp_log_density_matches_scipy(self, grid, rng):
        H = BaseMeasure("gp", grid, mean=0.2, sigma2=1.3, omega=0.5)
        phi = H.sample_atom(rng)
        expected = multivariate_normal.logpdf(phi, mean=H.mean, cov=H.covariance())
        assert H.log_density(phi) == pytest.approx(expected, rel=1e-8)

    def test_sample_moments(self, grid, rng):
        H = BaseMeasure("gp", grid, sigma2=1.0, omega=0.5)
        atoms = H.sample_atoms(50000, rng)
        np.testing.assert_allclose(np.cov(atoms.T), H.covariance(), atol=0.03)

    def test_with_kernel_keeps_mean(self, grid):
        H = BaseMeasure("gp", grid, mean=np.array([0.0, 1.0, 2.0, 3.0]))
        other = H.with_kernel(2.0, 0.1)
        np.testing.assert_array_equal(other.mean, H.mean)
        assert other.sigma2 == 2.0 and other.omega == 0.1


class TestConditionals:
    def test_conditional_matches_schur_complement(self, grid):
        H = BaseMeasure("gp", grid, mean=0.3, sigma2=1.2, omega=0.4)
        phi = np.array([0.1, -0.4, 0.8, 1.5])
        cov = H.covariance()
        u, rest = 2, [0, 1, 3]
        gain = cov[u, rest] @ np.linalg.inv(cov[np.ix_(rest, rest)])
        mean = 0.3 + gain @ (phi[rest] - 0.3)
        var = cov[u, u] - gain @ cov[rest, u]
        got_mean, got_var = H.conditional_slot(phi, u)
        assert got_mean == pytest.approx(mean, rel=1e-8)
        assert got_var == pytest.approx(var, rel=1e-8)

    def test_constant_conditional_is_degenerate(self, grid):
        H = BaseMeasure("constant", grid)
        assert H.conditional_slot(np.full(4, 0.7), 0) == (0.7, 0.0)

    def test_single_slot_has_no_conditional(self):
        H = BaseMeasure("gp", CovariateGrid(np.array([1.0])))
        with pytest.raises(ParameterError):
            H.conditional_slot(np.zeros(1), 0)

    def test_marginal_slot(self, grid):
        H = BaseMeasure("gp", grid, mean=0.3, sigma2=1.2)
        assert H.marginal_slot(1) == pytest.approx((0.3, 1.2))
        with pytest.raises(ParameterError):
            H.marginal_slot(9)
