import logging

import numpy as np
import pytest
from scipy import stats
from scipy.stats import norm

from src.inference.base import sample_log_categorical
from src.inference.conditional import ConditionalSampler
from src.inference.hyperparams import KernelMH
from src.inference.marginal import MarginalSampler
from src.models.dataset import GroupedDataset
from src.models.state import HyperParams
from src.prior.base_measure import BaseMeasure
from src.prior.conjugate import log_predictive_block, log_predictive_existing, log_predictive_new
from src.utils.errors import NumericalError, ParameterError


def make_sampler(cls, dataset, seed=0, variant="gp", init="single", **kwargs):
    H = BaseMeasure(variant, dataset.grid, sigma2=1.0, omega=0.1)
    hyper = HyperParams.build(dataset.M, gamma=1.0, alpha=1.0, sigma_eps2=0.05)
    sampler = cls(dataset, H, hyper, np.random.default_rng(seed), check_counts=True, **kwargs)
    sampler.initialize(init=init, init_k=4)
    return sampler


class TestCategorical:
    def test_degenerate_weights(self, rng):
        assert sample_log_categorical(np.array([-np.inf, 0.0, -np.inf]), rng) == 1

    def test_all_zero_weights(self, rng):
        with pytest.raises(NumericalError):
            sample_log_categorical(np.full(3, -np.inf), rng)

    def test_frequencies(self, rng):
        logw = np.log(np.array([0.2, 0.5, 0.3]))
        draws = np.bincount([sample_log_categorical(logw, rng) for _ in range(20000)], minlength=3) / 20000
        np.testing.assert_allclose(draws, [0.2, 0.5, 0.3], atol=0.015)


@pytest.mark.parametrize("cls", [ConditionalSampler, MarginalSampler])
class TestSamplerInvariants:
    @pytest.mark.parametrize("init", ["single", "random"])
    def test_counts_stay_consistent(self, cls, small_dataset, init):
        sampler = make_sampler(cls, small_dataset, init=init)
        # check_counts=True solleva CorruptionError al primo conteggio divergente
        for s in range(1, 31):
            record = sampler.sweep(s)
            assert record.z.shape == (small_dataset.N,)
            assert record.atoms.shape == (record.K, small_dataset.M)
            assert set(np.unique(record.z)) == set(range(record.K))
            assert record.beta.shape == (record.K + 1,)
            assert record.beta.sum() == pytest.approx(1.0)

    def test_same_seed_same_chain(self, cls, small_dataset):
        first = make_sampler(cls, small_dataset, seed=11)
        second = make_sampler(cls, small_dataset, seed=11)
        for s in range(1, 11):
            a, b = first.sweep(s), second.sweep(s)
            np.testing.assert_array_equal(a.z, b.z)
            np.testing.assert_array_equal(a.atoms, b.atoms)
            assert a.gamma == b.gamma and a.sigma_eps2 == b.sigma_eps2

    def test_streams_do_not_change_the_chain(self, cls, streamed_dataset):
        with_streams = make_sampler(cls, streamed_dataset, seed=3, init="random")
        without = make_sampler(cls, streamed_dataset.without_streams(), seed=3, init="random")
        for s in range(1, 11):
            a, b = with_streams.sweep(s), without.sweep(s)
            np.testing.assert_array_equal(a.z, b.z)
            np.testing.assert_array_equal(a.atoms, b.atoms)

    def test_constant_measure_gives_flat_atoms(self, cls, small_dataset):
        sampler = make_sampler(cls, small_dataset, variant="constant")
        for s in range(1, 11):
            record = sampler.sweep(s)
            assert np.all(np.ptp(record.atoms, axis=1) == 0)

    def test_empty_group_is_allowed(self, cls, small_grid):
        data = GroupedDataset(small_grid, [np.array([0.1, 0.2]), np.zeros(0), np.array([-0.3])])
        sampler = make_sampler(cls, data)
        for s in range(1, 6):
            record = sampler.sweep(s)
        assert record.z.shape == (3,)
        assert np.isfinite(record.alpha).all()


class TestConditionalSpecifics:
    def test_gibbs_atom_update(self, small_dataset):
        sampler = make_sampler(ConditionalSampler, small_dataset, atom_update="gibbs")
        for s in range(1, 11):
            record = sampler.sweep(s)
        assert np.all(np.isfinite(record.atoms))

    def test_unknown_atom_update(self, small_dataset):
        with pytest.raises(ParameterError):
            make_sampler(ConditionalSampler, small_dataset, atom_update="slice")

    def test_kernel_resampling(self, small_dataset):
        mh = KernelMH((2.0, 2.0), (2.0, 20.0))
        sampler = make_sampler(ConditionalSampler, small_dataset, kernel_mh=mh)
        for s in range(1, 21):
            record = sampler.sweep(s)
        assert mh.proposed == 20
        assert record.kernel[0] > 0 and record.kernel[1] > 0

    def test_beta_keeps_new_component_mass(self, small_dataset):
        sampler = make_sampler(ConditionalSampler, small_dataset)
        record = sampler.sweep(1)
        assert record.beta[-1] > 0


class TestMarginalSpecifics:
    def test_rejects_kernel_resampling(self, small_dataset):
        with pytest.raises(ParameterError):
            make_sampler(MarginalSampler, small_dataset, kernel_mh=KernelMH((2.0, 2.0), (2.0, 20.0)))

    def test_instances_are_group_local(self, small_dataset):
        sampler = make_sampler(MarginalSampler, small_dataset, init="random")
        for s in range(1, 11):
            sampler.sweep(s)
        state = sampler.state
        np.testing.assert_array_equal(state.owner_t[state.t], sampler.groups)

    def test_beta_is_polya_mean(self, small_dataset):
        sampler = make_sampler(MarginalSampler, small_dataset)
        record = sampler.sweep(1)
        q = sampler.state.q_k.astype(float)
        np.testing.assert_allclose(record.beta, np.append(q, record.gamma) / (q.sum() + record.gamma))


@pytest.mark.slow
@pytest.mark.parametrize("cls", [ConditionalSampler, MarginalSampler])
def test_recovers_two_clusters(cls, small_dataset):
    sampler = make_sampler(cls, small_dataset, seed=5)
    sampler.check = False
    records = []
    sampler.run(400, callback=records.append, log_every=0)
    ks = np.array([r.K for r in records[200:]])
    assert np.bincount(ks).argmax() == 2


@pytest.fixture
def singleton_dataset(small_grid):
    """Il gruppo 0 ha una sola osservazione, il gruppo 1 due."""
    return GroupedDataset(small_grid, [np.array([0.5]), np.array([0.1, 0.2]), np.array([-0.3])])


class TestTransitionWeights:
    def test_conditional_z_weights(self, small_dataset):
        sampler = make_sampler(ConditionalSampler, small_dataset, seed=2, init="random")
        for s in range(1, 4):
            sampler.sweep(s)
        state = sampler.state
        i = 5
        u, y = sampler.groups[i], sampler.values[i]
        state.n_uk[u, state.z[i]] -= 1
        s2, alpha_u = state.hyper.sigma_eps2, state.hyper.alpha[u]
        existing = np.log(state.n_uk[u] + alpha_u * state.beta[:-1]) + norm.logpdf(y, state.atoms[:, u], np.sqrt(s2))
        mu, var = sampler.H.marginal_slot(u)
        new = np.log(alpha_u * state.beta[-1]) + norm.logpdf(y, mu, np.sqrt(var + s2))
        np.testing.assert_allclose(sampler.z_log_weights(u, y), np.append(existing, new), rtol=0, atol=1e-10)

    def test_conditional_z_weights_are_symmetric(self, small_dataset):
        sampler = make_sampler(ConditionalSampler, small_dataset)
        state = sampler.state
        atom = np.array([0.8, -0.4, 1.3])
        state.atoms = np.vstack([atom, -atom])
        state.n_uk = np.full((small_dataset.M, 2), 3)
        state.beta = np.array([0.4, 0.4, 0.2])
        logw = sampler.z_log_weights(1, 0.0)
        assert abs(logw[0] - logw[1]) <= 1e-12

    def test_conditional_beta_with_one_component(self, small_dataset):
        sampler = make_sampler(ConditionalSampler, small_dataset)
        sampler.check = False
        state = sampler.state
        state.m_uk = np.zeros((small_dataset.M, 1), dtype=int)
        state.m_uk[0, 0] = 1
        state.hyper.gamma = 1.0
        draws = np.empty(10000)
        for r in range(len(draws)):
            sampler.sample_beta()
            draws[r] = state.beta[0]
        assert draws.mean() == pytest.approx(0.5, abs=0.01)
        assert stats.kstest(draws, "uniform").pvalue > 1e-3

    def test_marginal_first_observation_opens_instance(self, singleton_dataset):
        sampler = make_sampler(MarginalSampler, singleton_dataset)
        T = sampler.state.T
        u, y = sampler._remove_observation(0)
        logw, _, owned = sampler.t_log_weights(u, y)
        assert len(owned) == 0 and logw.shape == (1,)
        assert sampler.state.T == T - 1

        fresh = make_sampler(MarginalSampler, singleton_dataset, seed=9)
        fresh.sample_t(0)
        t = fresh.state.t[0]
        assert fresh.state.owner_t[t] == 0 and fresh.state.n_t[t] == 1

    def test_marginal_t_weights_with_one_instance(self, singleton_dataset):
        sampler = make_sampler(MarginalSampler, singleton_dataset)
        u, y = sampler._remove_observation(1)
        assert (u, y) == (1, 0.1)
        H, s2, gamma, alpha_u = sampler.H, 0.05, 1.0, 1.0
        counts, sums = np.ones(3), np.array([0.5, 0.2, -0.3])
        log_f = log_predictive_existing(H, counts, sums, u, y, s2)
        log_f_new = log_predictive_new(H, u, y, s2)
        expected_new = np.log(alpha_u) + np.logaddexp(np.log(3.0) + log_f, np.log(gamma) + log_f_new) - np.log(3.0 + gamma)
        logw, comp_logw, owned = sampler.t_log_weights(u, y)
        assert len(owned) == 1
        np.testing.assert_allclose(logw, [log_f, expected_new], rtol=0, atol=1e-9)
        np.testing.assert_allclose(comp_logw, [np.log(3.0) + log_f, np.log(gamma) + log_f_new], rtol=0, atol=1e-9)

    def test_marginal_k_weights(self, singleton_dataset):
        sampler = make_sampler(MarginalSampler, singleton_dataset)
        members = sampler._blocks()[1]
        u, values = sampler._remove_block(1, members)
        np.testing.assert_array_equal(values, [0.1, 0.2])
        slots = np.full(2, u)
        counts, sums, sumsq = np.array([1.0, 0.0, 1.0]), np.array([0.5, 0.0, -0.3]), 0.25 + 0.09
        existing = np.log(2.0) + log_predictive_block(sampler.H, counts, sums, sumsq, slots, values, 0.05)
        new = np.log(1.0) + log_predictive_block(sampler.H, np.zeros(3), np.zeros(3), 0.0, slots, values, 0.05)
        np.testing.assert_allclose(sampler.k_log_weights(u, values), [existing, new], rtol=0, atol=1e-9)


def test_gamma_skip_is_not_a_warning(small_dataset, caplog):
    sampler = make_sampler(ConditionalSampler, small_dataset)
    with caplog.at_level(logging.DEBUG):
        for _ in range(3):
            sampler.update_hyperparameters(K=0, q_total=0, m_u=np.zeros(3, dtype=int), residuals=np.zeros(0), atoms=np.zeros((0, 3)))
    assert sampler.hyper.gamma == 1.0
    assert not [r for r in caplog.records if r.levelno >= logging.WARNING]
