import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import kve, kv

from src.core.exceptions import DomainError
from src.core.rng import RngStream
from src.core.specfun import (
    bessel_grid,
    bessel_k,
    bessel_k_ratio,
    bessel_ratio_bounds,
    chisq_density_clt_check,
    chisq_sup_bound,
    inner_product_density,
    log_bessel_k,
    log_density_derivative_gaussian_overlap,
    log_inner_product_density,
    rademacher_pmf_and_lclt,
    sample_inner_product,
    small_x_log_bessel_k,
)


class TestBesselK:
    @pytest.mark.parametrize("nu", [0.0, 0.5, 1.0, 2.5, 7.0, 20.0])
    @pytest.mark.parametrize("x", [0.01, 0.3, 1.0, 5.0, 25.0, 80.0])
    def test_matches_scipy(self, nu, x):
        expected = math.log(kve(nu, x)) - x
        value, _ = log_bessel_k(nu, x)
        assert value == pytest.approx(expected, rel=1e-10, abs=1e-10)

    def test_half_integer_closed_form(self):
        x = 1.3
        assert bessel_k(0.5, x) == pytest.approx(math.sqrt(math.pi / (2 * x)) * math.exp(-x), rel=1e-12)

    def test_negative_order_is_symmetric(self):
        assert bessel_k(-1.5, 2.0) == bessel_k(1.5, 2.0)

    def test_methods(self):
        assert log_bessel_k(1.0, 2.0)[1] == "integral"
        assert log_bessel_k(1.0, 500.0)[1] == "asymptotic_large_x"

    def test_underflow_only_in_linear_space(self):
        log_value, _ = log_bessel_k(0.0, 2000.0)
        assert math.isfinite(log_value)
        assert bessel_k(0.0, 2000.0) == 0.0

    def test_recurrence(self):
        for nu, x in [(1.0, 0.7), (3.5, 4.0), (10.0, 12.0)]:
            lhs = bessel_k(nu + 1, x)
            rhs = bessel_k(nu - 1, x) + 2 * nu / x * bessel_k(nu, x)
            assert lhs == pytest.approx(rhs, rel=1e-11)

    def test_ratio_within_bounds(self):
        for nu in (0.0, 0.5, 2.0, 9.0):
            for x in (0.1, 1.0, 10.0):
                lower, upper = bessel_ratio_bounds(nu, x)
                assert lower <= bessel_k_ratio(nu + 1, nu, x) * (1 + 1e-12)
                assert bessel_k_ratio(nu + 1, nu, x) <= upper * (1 + 1e-12)

    def test_nonpositive_argument(self):
        with pytest.raises(DomainError):
            log_bessel_k(1.0, 0.0)

    def test_grid_table(self):
        table = bessel_grid([0.5, 1.0], [0.5, 1.0, 2.0])
        assert list(table.columns) == ["nu", "x", "log_k", "k", "method"]
        assert len(table) == 6
        np.testing.assert_allclose(table["k"], [kv(n, x) for n in (0.5, 1.0) for x in (0.5, 1.0, 2.0)], rtol=1e-10)

    @pytest.mark.parametrize("nu,x", [(0.0, 1e-6), (0.5, 1e-6), (1.5, 1e-4), (3.0, 1e-3)])
    def test_small_x_leading_term(self, nu, x):
        assert small_x_log_bessel_k(nu, x) == pytest.approx(log_bessel_k(nu, x)[0], abs=1e-5)

    def test_small_x_range(self):
        with pytest.raises(DomainError):
            small_x_log_bessel_k(1.0, 2.5)


class TestInnerProductDensity:
    @pytest.mark.parametrize("d", [2, 3, 8])
    def test_integrates_to_one(self, d):
        total, _ = integrate.quad(lambda t: float(inner_product_density(d, t)[0]), 0, np.inf, limit=200)
        assert 2 * total == pytest.approx(1.0, rel=1e-8)

    def test_product_of_two_normals(self):
        assert float(inner_product_density(1, 0.8)[0]) == pytest.approx(kv(0, 0.8) / math.pi, rel=1e-10)

    def test_value_at_zero(self):
        # d = 3: f(0) = Gamma(1) / (2 sqrt(pi) Gamma(3/2)) = 1 / pi
        assert float(inner_product_density(3, 0.0)[0]) == pytest.approx(1.0 / math.pi)
        with pytest.raises(DomainError):
            log_inner_product_density(1, 0.0)

    def test_symmetric(self):
        np.testing.assert_allclose(inner_product_density(4, [-1.5]), inner_product_density(4, [1.5]))

    def test_log_derivative(self):
        d, t, h = 6, 2.0, 1e-5
        upper, lower = log_inner_product_density(d, t + h)[0], log_inner_product_density(d, t - h)[0]
        numeric = (float(upper) - float(lower)) / (2 * h)
        assert log_density_derivative_gaussian_overlap(d, t) == pytest.approx(numeric, rel=1e-6)

    def test_bad_dimension(self):
        with pytest.raises(DomainError):
            inner_product_density(0, 1.0)

    def test_samplers_agree_in_law(self):
        direct = sample_inner_product(5, 40_000, RngStream(1))
        chisq = sample_inner_product(5, 40_000, RngStream(2), method="chisq")
        assert direct.var() == pytest.approx(5.0, rel=0.05)
        assert chisq.var() == pytest.approx(5.0, rel=0.05)
        with pytest.raises(DomainError):
            sample_inner_product(5, 10, RngStream(3), method="polar")


class TestCltChecks:
    def test_rademacher_local_clt(self):
        small = rademacher_pmf_and_lclt(10, 0)
        large = rademacher_pmf_and_lclt(10_000, 0)
        assert small.exact == pytest.approx(math.comb(10, 5) / 2**10)
        assert abs(large.ratio - 1.0) < abs(small.ratio - 1.0)
        assert large.ratio == pytest.approx(1.0, abs=1e-3)

    def test_rademacher_parity(self):
        with pytest.raises(DomainError):
            rademacher_pmf_and_lclt(5, 2)

    def test_chisq_deviation_shrinks(self):
        coarse = chisq_density_clt_check(50, 0.5)
        fine = chisq_density_clt_check(5000, 0.5)
        assert fine.density < coarse.density
        assert fine.derivative < coarse.derivative

    def test_chisq_range(self):
        with pytest.raises(DomainError):
            chisq_density_clt_check(64, 3.0)

    @pytest.mark.parametrize("u", [2, 3, 10, 100, 1000])
    def test_chisq_sup_bound(self, u):
        sup, bound = chisq_sup_bound(u)
        assert sup <= bound
