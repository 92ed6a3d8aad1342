import numpy as np
import pytest
from scipy.special import gammaln, logsumexp

from src.prior.combinatorics import StirlingTable, log_stirling1, sample_table_count, table_count_log_probs
from src.utils.errors import ParameterError


def crp_table_counts(n: int, a: float, draws: int, rng: np.random.Generator) -> np.ndarray:
    """Tavoli occupati simulando il ristorante cinese: il cliente i apre un tavolo con prob. a / (a + i)."""
    return (rng.random((draws, n)) < a / (a + np.arange(n))).sum(axis=1)


class TestStirling:
    @pytest.mark.parametrize("n,m,value", [(4, 2, 11), (5, 3, 35), (6, 1, 120), (7, 7, 1), (10, 5, 269325)])
    def test_known_values(self, n, m, value):
        assert np.exp(log_stirling1(n, m)) == pytest.approx(value, rel=1e-12)

    def test_out_of_range(self):
        assert log_stirling1(3, 5) == -np.inf
        assert log_stirling1(4, 0) == -np.inf
        assert log_stirling1(0, 0) == 0.0

    def test_negative_arguments(self):
        with pytest.raises(ParameterError):
            log_stirling1(-1, 0)

    @pytest.mark.parametrize("a", [0.3, 1.0, 2.5, 10.0])
    def test_rising_factorial_identity(self, a):
        table = StirlingTable(n_max=8)
        for n in range(1, 51):
            lhs = logsumexp(table.row(n) + np.arange(n + 1) * np.log(a))
            rhs = gammaln(a + n) - gammaln(a)
            assert lhs == pytest.approx(rhs, rel=1e-9)

    def test_table_grows_lazily(self):
        table = StirlingTable(n_max=4)
        table.row(200)
        assert table.n_max >= 200
        assert np.all(np.isfinite(table.row(200)[1:]))


class TestTableCount:
    def test_probabilities_sum_to_one(self):
        assert np.exp(table_count_log_probs(30, 1.7)).sum() == pytest.approx(1.0, abs=1e-12)

    def test_small_n(self, rng):
        assert sample_table_count(0, 1.0, rng) == 0
        assert sample_table_count(1, 1.0, rng) == 1

    def test_rejects_non_positive_concentration(self, rng):
        with pytest.raises(ParameterError):
            sample_table_count(5, 0.0, rng)

    @pytest.mark.parametrize("n,a", [(5, 0.5), (10, 1.0), (20, 2.0)])
    def test_exact_law_matches_crp(self, rng, n, a):
        crp = np.bincount(crp_table_counts(n, a, 100_000, rng), minlength=n + 1) / 100_000
        exact = np.exp(table_count_log_probs(n, a))
        assert 0.5 * np.abs(crp - exact).sum() < 0.02

    @pytest.mark.parametrize("n,a", [(5, 0.5), (10, 1.0), (20, 2.0)])
    def test_sampler_matches_crp(self, rng, n, a):
        draws = 20_000
        sampled = np.bincount([sample_table_count(n, a, rng) for _ in range(draws)], minlength=n + 1) / draws
        crp = np.bincount(crp_table_counts(n, a, draws, rng), minlength=n + 1) / draws
        assert 0.5 * np.abs(sampled - crp).sum() < 0.03

    def test_tiny_concentration_gives_one_table(self, rng):
        assert all(sample_table_count(50, 1e-12, rng) == 1 for _ in range(100))
