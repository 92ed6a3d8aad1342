import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import norm

from src.models.dataset import CovariateGrid
from src.prior.base_measure import BaseMeasure
from src.prior.conjugate import (
    ComponentStats,
    PosteriorCache,
    atom_posterior,
    block_log_predictive_at,
    log_evidence,
    log_predictive_block,
    log_predictive_existing,
    log_predictive_new,
    log_predictive_ratio_form,
    predictive_existing,
)
from src.utils.errors import ParameterError


def random_component(rng, M, variant="gp"):
    grid = CovariateGrid(np.sort(rng.uniform(0, 10, size=M)))
    H = BaseMeasure(variant, grid, mean=rng.normal(), sigma2=rng.uniform(0.5, 2.0), omega=rng.uniform(0.01, 1.0))
    s2 = rng.uniform(0.05, 0.5)
    phi = H.sample_atom(rng)
    counts = rng.integers(0, 4, size=M).astype(float)
    obs = [phi[u] + np.sqrt(s2) * rng.standard_normal(int(c)) for u, c in enumerate(counts)]
    sums = np.array([o.sum() for o in obs])
    sumsq = float(sum(o @ o for o in obs))
    return H, s2, counts, sums, sumsq, obs


class TestAtomPosterior:
    def test_no_data_is_prior(self, rng):
        H, s2, *_ = random_component(rng, 3)
        post = atom_posterior(H, np.zeros(3), np.zeros(3), s2)
        np.testing.assert_allclose(post.mean, H.mean)
        np.testing.assert_allclose(post.cov, H.covariance())

    def test_matches_dense_formula(self, rng):
        H, s2, counts, sums, *_ = random_component(rng, 4)
        prior_prec = np.linalg.inv(H.covariance())
        cov = np.linalg.inv(prior_prec + np.diag(counts / s2))
        mean = cov @ (prior_prec @ H.mean + sums / s2)
        post = atom_posterior(H, counts, sums, s2)
        np.testing.assert_allclose(post.mean, mean, rtol=1e-7)
        np.testing.assert_allclose(post.cov, cov, rtol=1e-7, atol=1e-12)

    def test_constant_variant_pools_slots(self, rng):
        grid = CovariateGrid.regular(3)
        H = BaseMeasure("constant", grid, sigma2=1.0)
        post = atom_posterior(H, np.array([1.0, 1.0, 2.0]), np.array([0.5, 0.3, 1.0]), 0.5)
        var = 1.0 / (1.0 + 4 / 0.5)
        np.testing.assert_allclose(post.mean, np.full(3, var * 1.8 / 0.5))
        sample = post.sample(rng)
        assert np.ptp(sample) == 0

    def test_univariate_conjugate_update(self):
        H = BaseMeasure("gp", CovariateGrid.regular(1), mean=0.0, sigma2=1.0, omega=0.1)
        post = atom_posterior(H, np.array([1.0]), np.array([2.0]), 1.0)
        np.testing.assert_allclose(post.mean, [1.0])
        np.testing.assert_allclose(post.cov, [[0.5]])

    def test_rejects_non_positive_noise(self, rng):
        H, *_ = random_component(rng, 2)
        with pytest.raises(ParameterError):
            atom_posterior(H, np.ones(2), np.ones(2), 0.0)


class TestPredictives:
    def test_ratio_form_equals_shortcut(self, rng):
        for _ in range(200):
            H, s2, counts, sums, sumsq, _ = random_component(rng, int(rng.integers(1, 5)))
            u = int(rng.integers(H.M))
            y = rng.normal(0, 2)
            short = log_predictive_existing(H, counts, sums, u, y, s2)
            ratio = log_predictive_ratio_form(H, counts, sums, sumsq, u, y, s2)
            assert np.expm1(ratio - short) == pytest.approx(0.0, abs=1e-10)

    def test_new_component_quadrature(self, rng):
        H, s2, *_ = random_component(rng, 2)
        mu, var = H.marginal_slot(1)
        y = 0.4
        numeric = quad(lambda a: norm.pdf(y, a, np.sqrt(s2)) * norm.pdf(a, mu, np.sqrt(var)), -np.inf, np.inf, epsabs=0, epsrel=1e-11)[0]
        assert np.exp(log_predictive_new(H, 1, y, s2)) == pytest.approx(numeric, rel=1e-6)

    @pytest.mark.parametrize("seed", range(10))
    def test_existing_component_quadrature_1d(self, seed):
        rng = np.random.default_rng(seed)
        H, s2, counts, sums, _, obs = random_component(rng, 1)
        mu, var = H.marginal_slot(0)
        y = obs[0].mean() + 0.3 if counts[0] else mu

        def weight(a):
            return np.exp(norm.logpdf(obs[0], a, np.sqrt(s2)).sum() + norm.logpdf(a, mu, np.sqrt(var)))

        post = atom_posterior(H, counts, sums, s2)
        lo, hi = post.mean[0] - 15 * np.sqrt(post.cov[0, 0]), post.mean[0] + 15 * np.sqrt(post.cov[0, 0])
        num = quad(lambda a: norm.pdf(y, a, np.sqrt(s2)) * weight(a), lo, hi, epsabs=0, epsrel=1e-11)[0]
        den = quad(weight, lo, hi, epsabs=0, epsrel=1e-11)[0]
        assert predictive_existing(H, counts, sums, 0, y, s2) == pytest.approx(num / den, rel=1e-6)

    def test_block_is_chain_of_single_predictives(self, rng):
        H, s2, counts, sums, sumsq, _ = random_component(rng, 3)
        slots = np.array([0, 2, 2])
        values = np.array([0.3, -0.2, 0.1])
        total = 0.0
        c, s, q = counts.copy(), sums.copy(), sumsq
        for u, y in zip(slots, values):
            total += log_predictive_existing(H, c, s, u, y, s2)
            c[u] += 1
            s[u] += y
            q += y * y
        assert log_predictive_block(H, counts, sums, sumsq, slots, values, s2) == pytest.approx(total, rel=1e-9)

    def test_block_closed_form_single_slot(self, rng):
        H, s2, *_ = random_component(rng, 3)
        values = np.array([0.1, 0.5, -0.3, 0.2])
        mean, var = H.marginal_slot(1)
        expected = log_predictive_block(H, np.zeros(3), np.zeros(3), 0.0, np.full(4, 1), values, s2)
        assert block_log_predictive_at(mean, var, values, s2) == pytest.approx(expected, rel=1e-9)

    def test_new_component_value(self):
        H = BaseMeasure("gp", CovariateGrid.regular(1), mean=0.0, sigma2=1.0, omega=0.1)
        assert np.exp(log_predictive_new(H, 0, 0.0, 0.01)) == pytest.approx(0.397046, abs=1e-6)

    def test_block_under_constant_measure(self):
        H = BaseMeasure("constant", CovariateGrid.regular(2), mean=0.2, sigma2=0.8)
        s2 = 0.3
        slots = np.array([0, 1, 1])
        values = np.array([0.5, -0.1, 0.4])

        def integrand(a):
            return np.exp(norm.logpdf(values, a, np.sqrt(s2)).sum() + norm.logpdf(a, 0.2, np.sqrt(0.8)))

        numeric = quad(integrand, -15, 15, epsabs=0, epsrel=1e-11)[0]
        block = log_predictive_block(H, np.zeros(2), np.zeros(2), 0.0, slots, values, s2)
        assert np.exp(block) == pytest.approx(numeric, rel=1e-6)

    def test_empty_block(self, rng):
        H, s2, *_ = random_component(rng, 2)
        with pytest.raises(ParameterError):
            log_predictive_block(H, np.zeros(2), np.zeros(2), 0.0, np.zeros(0, dtype=int), np.zeros(0), s2)

    def test_evidence_of_no_data(self, rng):
        H, s2, *_ = random_component(rng, 2)
        assert log_evidence(H, np.zeros(2), np.zeros(2), 0.0, s2) == 0.0


class TestComponentStats:
    def test_incremental_matches_recomputed(self, rng):
        groups = np.array([0, 0, 1, 2, 2])
        values = rng.normal(size=5)
        z = np.array([0, 1, 1, 0, 1])
        stats = ComponentStats.empty(2, 3)
        for g, y, k in zip(groups, values, z):
            stats.add(k, g, y)
        stats.remove(1, 0, values[1])
        stats.add(0, 0, values[1])
        oracle = ComponentStats.from_assignments(groups, values, np.array([0, 0, 1, 0, 1]), 2, 3)
        np.testing.assert_array_equal(stats.counts, oracle.counts)
        np.testing.assert_allclose(stats.sums, oracle.sums)

    def test_emptied_cell_is_exactly_zero(self):
        stats = ComponentStats.empty(1, 1)
        stats.add(0, 0, 0.1)
        stats.add(0, 0, 0.2)
        stats.remove_block(0, 0, np.array([0.1, 0.2]))
        assert stats.sums[0, 0] == 0.0 and stats.sumsq[0, 0] == 0.0


class TestPosteriorCache:
    def test_matches_atom_posterior(self, rng):
        H, s2, counts, sums, *_ = random_component(rng, 3)
        stats = ComponentStats(counts[None, :].astype(int), sums[None, :], np.zeros((1, 3)))
        cache = PosteriorCache(H, s2, stats)
        post = atom_posterior(H, counts, sums, s2)
        for u in range(3):
            expected = log_predictive_existing(H, counts, sums, u, 0.2, s2)
            assert cache.log_predictive(u, 0.2)[0] == pytest.approx(expected, rel=1e-9)
        mean, var = cache.moments(0)
        np.testing.assert_allclose(mean, post.latent_mean)
        np.testing.assert_allclose(var, np.diag(post.latent_cov), rtol=1e-9)

    def test_invalidate_all_uses_new_noise(self, rng):
        H, s2, counts, sums, *_ = random_component(rng, 2)
        stats = ComponentStats(counts[None, :].astype(int), sums[None, :], np.zeros((1, 2)))
        cache = PosteriorCache(H, s2, stats)
        cache.log_predictive(0, 0.0)
        cache.invalidate_all(sigma_eps2=2 * s2)
        expected = log_predictive_existing(H, counts, sums, 0, 0.0, 2 * s2)
        assert cache.log_predictive(0, 0.0)[0] == pytest.approx(expected, rel=1e-9)
