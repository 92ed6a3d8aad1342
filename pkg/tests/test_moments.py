import numpy as np
import pytest
from scipy.stats import multivariate_normal

from src.analysis.moments import (
    EventRect,
    bvn_rectangle,
    bvn_upper,
    closed_form_moments,
    corr_G,
    corr_Q,
    cov_Q,
    g_of,
    h_u,
    h_uv,
    mc_truncated,
    var_G,
    var_Q,
)
from src.models.dataset import CovariateGrid
from src.prior.base_measure import BaseMeasure
from src.utils.errors import ParameterError


def two_slot_gp(distance, omega=0.05, sigma2=1.0):
    return BaseMeasure("gp", CovariateGrid(np.array([0.0, distance])), sigma2=sigma2, omega=omega)


NEGATIVE = (EventRect(0, -np.inf, 0.0), EventRect(1, -np.inf, 0.0))


class TestG:
    def test_values(self):
        assert g_of(1.0) == 0.5
        assert g_of(1e12) == pytest.approx(0.0, abs=1e-11)
        assert g_of(1e-12) == pytest.approx(1.0)

    def test_rejects_non_positive(self):
        with pytest.raises(ParameterError):
            g_of(0.0)


class TestBivariateNormal:
    @pytest.mark.parametrize("rho", [-0.95, -0.5, 0.0, 0.2, 0.6, 0.8, 0.93, 0.99])
    @pytest.mark.parametrize("h,k", [(0.0, 0.0), (-1.2, 0.4), (1.5, 2.0), (-2.5, -0.7)])
    def test_matches_scipy(self, h, k, rho):
        # P(X > h, Y > k) = P(−X < −h, −Y < −k)
        expected = multivariate_normal.cdf([-h, -k], mean=[0, 0], cov=[[1, rho], [rho, 1]], abseps=1e-10, releps=1e-10)
        assert bvn_upper(h, k, rho) == pytest.approx(expected, abs=1e-5)

    def test_orthant_closed_form(self):
        rho = 0.37
        assert bvn_upper(0.0, 0.0, rho) == pytest.approx(0.25 + np.arcsin(rho) / (2 * np.pi), abs=1e-14)

    def test_infinite_limits(self):
        assert bvn_upper(-np.inf, -np.inf, 0.4) == 1.0
        assert bvn_upper(np.inf, 0.0, 0.4) == 0.0
        assert bvn_rectangle(-np.inf, np.inf, -np.inf, np.inf, 0.7) == pytest.approx(1.0, abs=1e-14)

    def test_perfect_correlation(self):
        assert bvn_upper(0.3, -0.2, 1.0) == pytest.approx(1 - 0.6179114221889526, abs=1e-12)


class TestClosedForms:
    def test_h_u_of_half_line(self):
        H = two_slot_gp(1.0)
        assert h_u(H, NEGATIVE[0]) == pytest.approx(0.5)

    def test_same_event_correlation_is_one(self):
        H = two_slot_gp(1.0)
        assert corr_Q(H, 1.0, NEGATIVE[0], NEGATIVE[0]) == pytest.approx(1.0, abs=1e-12)

    def test_product_variant_is_uncorrelated(self):
        H = BaseMeasure("product", CovariateGrid(np.array([0.0, 1.0])))
        assert corr_Q(H, 2.0, *NEGATIVE) == pytest.approx(0.0, abs=1e-12)

    def test_constant_variant_is_fully_correlated(self):
        H = BaseMeasure("constant", CovariateGrid(np.array([0.0, 1.0])))
        assert corr_Q(H, 2.0, *NEGATIVE) == pytest.approx(1.0, abs=1e-12)

    def test_orthant_covariance(self):
        H = two_slot_gp(1.0)
        rho = np.exp(-0.05)
        expected = 0.5 * (0.25 + np.arcsin(rho) / (2 * np.pi) - 0.25)
        assert cov_Q(H, 1.0, *NEGATIVE) == pytest.approx(expected, abs=1e-12)
        assert h_uv(H, *NEGATIVE) == pytest.approx(0.25 + np.arcsin(rho) / (2 * np.pi), abs=1e-12)

    def test_var_g_plug_in_value(self):
        H = two_slot_gp(1.0)
        assert var_G(H, 1.0, 1.0, NEGATIVE[0]) == pytest.approx(0.1875)

    def test_var_g_reduces_to_var_q(self):
        H = two_slot_gp(1.0)
        assert var_G(H, 2.0, 1e12, NEGATIVE[0]) == pytest.approx(var_Q(H, 2.0, NEGATIVE[0]), rel=1e-9)

    def test_null_event_has_no_variance(self):
        H = two_slot_gp(1.0)
        assert var_G(H, 1.0, 1.0, EventRect(0, 60.0, np.inf)) == 0.0

    def test_degenerate_event_correlation(self):
        H = two_slot_gp(1.0)
        with pytest.raises(ParameterError):
            corr_Q(H, 1.0, EventRect(0, 60.0, np.inf), NEGATIVE[1])

    def test_event_bounds(self):
        with pytest.raises(ParameterError):
            EventRect(0, 1.0, 1.0)

    def test_correlation_decays_with_distance(self):
        omega = 0.05
        H = two_slot_gp(10.0 / omega, omega=omega)
        assert abs(corr_Q(H, 1.0, *NEGATIVE)) < 0.02

    def test_corr_g_limits(self):
        H = two_slot_gp(1.0)
        assert corr_G(H, 1e12, 1.0, 1.0, *NEGATIVE) == pytest.approx(0.0, abs=1e-9)
        assert corr_G(H, 1.0, 1e12, 1e12, *NEGATIVE) == pytest.approx(corr_Q(H, 1.0, *NEGATIVE), rel=1e-9)

    def test_random_inputs_respect_bounds(self, rng):
        for _ in range(200):
            H = two_slot_gp(rng.uniform(0.1, 20), omega=rng.uniform(0.01, 1.0), sigma2=rng.uniform(0.5, 2))
            lo = rng.normal()
            A, B = EventRect(0, lo, lo + rng.uniform(0.1, 3)), EventRect(1, -np.inf, rng.normal())
            gamma, au, av = rng.uniform(0.1, 10, size=3)
            assert abs(corr_G(H, gamma, au, av, A, B)) <= abs(corr_Q(H, gamma, A, B)) + 1e-15
            assert var_G(H, gamma, au, A) >= var_Q(H, gamma, A) >= 0


class TestMonteCarlo:
    def test_seed_determinism(self):
        H = two_slot_gp(1.0)
        first = mc_truncated(H, 1.0, (1.0, 1.0), NEGATIVE, np.random.default_rng(3), L=50, R=200)
        second = mc_truncated(H, 1.0, (1.0, 1.0), NEGATIVE, np.random.default_rng(3), L=50, R=200)
        np.testing.assert_array_equal(first["estimate"], second["estimate"])

    def test_rejects_small_sizes(self, rng):
        H = two_slot_gp(1.0)
        with pytest.raises(ParameterError):
            mc_truncated(H, 1.0, (1.0, 1.0), NEGATIVE, rng, L=1, R=200)
        with pytest.raises(ParameterError):
            mc_truncated(H, 1.0, (1.0, 1.0), NEGATIVE, rng, L=10, R=50)

    def test_large_gamma_two_atoms(self, rng):
        H = two_slot_gp(1.0)
        table = mc_truncated(H, 1e6, (1.0, 1.0), NEGATIVE, rng, L=2, R=2000).set_index("quantity")
        # β ≈ (½, ½): Var(Q_u(A)) ≈ ¼·Var(I₁ + I₂) = 1/8
        assert table.loc["var_Q_u", "estimate"] == pytest.approx(0.125, abs=0.02)

    def test_agrees_with_closed_form(self, rng):
        H = two_slot_gp(1.0)
        gamma, alpha, L = 1.0, (1.0, 1.0), 300
        closed = closed_form_moments(H, gamma, alpha, *NEGATIVE)
        table = mc_truncated(H, gamma, alpha, NEGATIVE, rng, L=L, R=4000)
        for row in table.itertuples(index=False):
            assert abs(row.estimate - closed[row.quantity]) <= 4 * row.se + abs(closed[row.quantity]) * gamma / L

    @pytest.mark.slow
    @pytest.mark.parametrize("gamma", [0.5, 1.0, 5.0])
    @pytest.mark.parametrize("alpha", [0.5, 1.0, 5.0])
    @pytest.mark.parametrize("distance", [0.5, 2.0, 10.0])
    def test_parameter_sweep(self, gamma, alpha, distance):
        H = two_slot_gp(distance)
        L = 1000
        closed = closed_form_moments(H, gamma, (alpha, alpha), *NEGATIVE)
        table = mc_truncated(H, gamma, (alpha, alpha), NEGATIVE, np.random.default_rng(2024), L=L, R=20000)
        for row in table.itertuples(index=False):
            assert abs(row.estimate - closed[row.quantity]) <= 3 * row.se + abs(closed[row.quantity]) * gamma / L
