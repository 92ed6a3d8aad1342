import numpy as np
import pytest
from scipy import stats
from scipy.integrate import quad_vec

from src.inference.hyperparams import (
    KernelMH,
    sample_alpha,
    sample_concentration,
    sample_gamma,
    sample_sigma_eps,
)
from src.models.dataset import CovariateGrid
from src.models.state import HyperParams
from src.prior.base_measure import BaseMeasure


class TestConcentration:
    def test_no_items_is_noop(self, rng):
        assert sample_concentration(3.0, 1.0, 1.0, 0, 0, rng) == 3.0

    def test_gamma_noop_without_instances(self, rng):
        hyper = HyperParams.build(2, gamma=2.5, alpha=1.0, sigma_eps2=0.1)
        assert sample_gamma(hyper, K=0, q_total=0, rng=rng) == 2.5

    def test_gamma_step_matches_two_gamma_mixture(self, rng):
        """Da γ fissato, un passo di aggiornamento segue la mistura di due Gamma integrata sull'ausiliaria η."""
        a, b, K, q = 2.0, 1.0, 4, 30
        hyper = HyperParams.build(2, gamma=1.5, alpha=1.0, sigma_eps2=0.1, gamma_prior=(a, b))
        draws = np.array([sample_gamma(hyper, K, q, rng) for _ in range(4000)])

        def cdf(x):
            x = np.atleast_1d(x)

            def integrand(eta):
                rate = b - np.log(eta)
                odds = (a + K - 1.0) / (q * rate)
                pi = odds / (1.0 + odds)
                mix = pi * stats.gamma.cdf(x, a + K, scale=1.0 / rate) + (1.0 - pi) * stats.gamma.cdf(x, a + K - 1.0, scale=1.0 / rate)
                return stats.beta.pdf(eta, hyper.gamma + 1.0, q) * mix

            return quad_vec(integrand, 0.0, 1.0, epsabs=1e-10)[0]

        assert stats.kstest(draws, cdf).pvalue > 1e-3

    def test_prior_is_invariant(self, rng):
        """Alternando c ~ p(c | K, n) e K ~ CRP(n, c) la marginale di c resta la prior Gamma(a, b)."""
        a, b, n = 3.0, 1.5, 20
        c = rng.gamma(a, 1.0 / b)
        draws = []
        for _ in range(6000):
            K = int((rng.random(n) < c / (c + np.arange(n))).sum())
            c = sample_concentration(c, a, b, K, n, rng)
            draws.append(c)
        assert np.mean(draws) == pytest.approx(a / b, rel=0.08)

    def test_shared_alpha_stays_shared(self, rng):
        hyper = HyperParams.build(4, gamma=1.0, alpha=1.0, sigma_eps2=0.1)
        alpha = sample_alpha(hyper, np.array([10, 10, 0, 5]), np.array([2, 3, 0, 1]), rng)
        assert np.ptp(alpha) == 0 and alpha[0] > 0

    def test_per_group_alpha(self, rng):
        hyper = HyperParams.build(3, gamma=1.0, alpha=1.0, sigma_eps2=0.1, alpha_shared=False)
        alpha = sample_alpha(hyper, np.array([10, 0, 5]), np.array([2, 0, 1]), rng)
        assert alpha[1] == 1.0
        assert np.all(alpha > 0)


class TestNoise:
    def test_sigma_eps_concentrates_on_truth(self, rng):
        hyper = HyperParams.build(1, gamma=1.0, alpha=1.0, sigma_eps2=1.0)
        residuals = rng.normal(0.0, 0.3, size=20000)
        draws = [sample_sigma_eps(hyper, residuals, rng) for _ in range(200)]
        assert np.mean(draws) == pytest.approx(0.09, rel=0.05)

    def test_empty_residuals_draw_from_prior(self, rng):
        hyper = HyperParams.build(1, gamma=1.0, alpha=1.0, sigma_eps2=1.0, sigma_eps_prior=(5.0, 1.0))
        draws = [sample_sigma_eps(hyper, np.zeros(0), rng) for _ in range(20000)]
        assert np.mean(draws) == pytest.approx(1.0 / 4.0, rel=0.05)


class TestKernelMH:
    def test_step_returns_valid_measure(self, rng):
        grid = CovariateGrid.regular(5)
        H = BaseMeasure("gp", grid, sigma2=1.0, omega=0.1)
        atoms = H.sample_atoms(4, rng)
        mh = KernelMH((2.0, 2.0), (2.0, 20.0), step=0.2)
        current = H
        for _ in range(200):
            current = mh.step_kernel(current, atoms, rng)
        assert mh.proposed == 200
        assert 0.0 < mh.acceptance_rate <= 1.0
        assert current.sigma2 > 0 and current.omega > 0
        np.testing.assert_array_equal(current.mean, H.mean)
