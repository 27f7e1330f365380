"""
Special functions for the continuous-overlap analysis

Modified Bessel functions of the second kind evaluated from the cosh
integral in log space, the density of the inner product of two independent
standard Gaussian vectors, and local-CLT checks for Rademacher sums and
chi-square densities.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
import pandas as pd
from scipy import stats
from scipy.special import gammaln, logsumexp

from .exceptions import DomainError, NumericalError
from .rng import as_generator

logger = logging.getLogger(__name__)

QUAD_RTOL = 1e-13
TAIL_LOG_DROP = 45.0
MAX_HALVINGS = 14


def _log_cosh(y: np.ndarray) -> np.ndarray:
    a = np.abs(y)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _log_integrand(u: np.ndarray, nu: float, x: float) -> np.ndarray:
    return -x * np.cosh(u) + _log_cosh(nu * u)


def _asymptotic_log_k(nu: float, x: float) -> float:
    """Large-x expansion sqrt(pi/2x) e^-x sum_k a_k(nu) / x^k."""
    mu = 4.0 * nu * nu
    term, total = 1.0, 1.0
    for k in range(1, 60):
        nxt = term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term) or abs(nxt) < 1e-17 * abs(total):
            total += nxt if abs(nxt) < abs(term) else 0.0
            break
        term = nxt
        total += term
    return 0.5 * math.log(math.pi / (2.0 * x)) - x + math.log(total)


def small_x_log_bessel_k(nu: float, x: float) -> float:
    """Leading small-x term: log(Gamma(nu)/2 (2/x)^nu) for nu > 0, log(-log(x/2) - gamma) for nu = 0."""
    if not 0 < x < 2:
        raise DomainError(f"the small-x form needs 0 < x < 2, got {x}")
    nu = abs(float(nu))
    if nu == 0.0:
        return math.log(-math.log(x / 2.0) - np.euler_gamma)
    return float(gammaln(nu)) - math.log(2.0) + nu * math.log(2.0 / x)


def log_bessel_k(nu: float, x: float) -> Tuple[float, str]:
    """
    log K_nu(x) and the method used.

    Trapezoidal quadrature of K_nu(x) = int_0^inf exp(-x cosh u) cosh(nu u) du.
    The integrand is even and analytic in u, so the trapezoid rule converges
    geometrically; the step is halved until two estimates agree to 1e-13.

    Args:
        nu: Order (K_{-nu} = K_nu)
        x: Argument, x > 0

    Returns:
        (log K_nu(x), method tag)
    """
    if not x > 0:
        raise DomainError(f"bessel_k requires x > 0, got {x}")
    nu = abs(float(nu))
    x = float(x)
    if x > 30.0 + nu * nu:
        return _asymptotic_log_k(nu, x), "asymptotic_large_x"

    peak = math.asinh(nu / x) if nu > 0 else 0.0
    peak_log = float(_log_integrand(np.array([peak]), nu, x)[0])
    curvature = x * math.cosh(peak) + (nu * nu if nu * peak < 1 else 0.0)
    width = 1.0 / math.sqrt(max(curvature, 1e-300))

    u_max = peak + max(width, 0.5)
    while float(_log_integrand(np.array([u_max]), nu, x)[0]) > peak_log - TAIL_LOG_DROP:
        u_max = peak + 2.0 * (u_max - peak)

    h = min(0.25, width / 2.0)
    previous = None
    for _ in range(MAX_HALVINGS):
        u = np.arange(0.0, u_max + h, h)
        logs = _log_integrand(u, nu, x)
        logs[0] -= math.log(2.0)
        estimate = float(logsumexp(logs)) + math.log(h)
        if previous is not None and abs(estimate - previous) < QUAD_RTOL:
            return estimate, "integral"
        previous = estimate
        h /= 2.0
    logger.warning(f"K_{nu}({x}) quadrature stopped before reaching tolerance")
    return previous, "integral"


def bessel_k(nu: float, x: float) -> float:
    """K_nu(x) for x > 0; underflows to 0.0 only when the true value does."""
    return math.exp(log_bessel_k(nu, x)[0])


def bessel_k_ratio(nu_num: float, nu_den: float, x: float) -> float:
    """K_{nu_num}(x) / K_{nu_den}(x) computed in log space."""
    return math.exp(log_bessel_k(nu_num, x)[0] - log_bessel_k(nu_den, x)[0])


def bessel_ratio_bounds(nu: float, x: float) -> Tuple[float, float]:
    """Lower and upper bounds on K_{nu+1}(x) / K_nu(x)."""
    lower = (nu + math.sqrt(x * x + nu * nu)) / x
    half = nu + 0.5
    upper = (half + math.sqrt(x * x + half * half)) / x
    return lower, upper


def _check_dimension(d: int) -> None:
    if d < 1 or int(d) != d:
        raise DomainError(f"dimension d must be a positive integer, got {d}")


def log_inner_product_density(d: int, x) -> np.ndarray:
    """log f_d(x), the density of <G, H> for independent G, H ~ N(0, I_d)."""
    _check_dimension(d)
    nu = (d - 1) / 2.0
    xs = np.abs(np.atleast_1d(np.asarray(x, dtype=float)))
    const = -0.5 * math.log(math.pi) - gammaln(d / 2.0) - nu * math.log(2.0)
    out = np.empty_like(xs)
    for i, t in enumerate(xs):
        if t == 0.0:
            if d == 1:
                raise DomainError("inner-product density diverges at 0 for d = 1")
            out[i] = gammaln(nu) - math.log(2.0 * math.sqrt(math.pi)) - gammaln(d / 2.0)
        else:
            out[i] = const + nu * math.log(t) + log_bessel_k(nu, t)[0]
    return out


def inner_product_density(d: int, x) -> np.ndarray:
    """f_d(x) = |x|^nu K_nu(|x|) / (sqrt(pi) Gamma(d/2) 2^nu), nu = (d-1)/2."""
    return np.exp(log_inner_product_density(d, x))


def log_density_derivative_gaussian_overlap(d: int, t: float) -> float:
    """d/dt log f_d(t) = -K_{nu-1}(t) / K_nu(t) for t > 0."""
    _check_dimension(d)
    if not t > 0:
        raise DomainError(f"log-density derivative requires t > 0, got {t}")
    nu = (d - 1) / 2.0
    return -bessel_k_ratio(abs(nu - 1.0), nu, t)


def sample_inner_product(d: int, size: int, rng, method: str = "direct") -> np.ndarray:
    """
    Draws of <G, H>.

    method "direct" sums G_i H_i; method "chisq" uses the representation
    (A - B) / 2 with A, B independent chi-square(d).
    """
    _check_dimension(d)
    gen = as_generator(rng)
    if method == "direct":
        return np.einsum("ij,ij->i", gen.standard_normal((size, d)), gen.standard_normal((size, d)))
    if method == "chisq":
        return (gen.chisquare(d, size) - gen.chisquare(d, size)) / 2.0
    raise DomainError(f"unknown sampling method {method!r}")


@dataclass(frozen=True)
class LocalCltComparison:
    exact: float
    gaussian: float
    ratio: float


def rademacher_pmf_and_lclt(n: int, s: int) -> LocalCltComparison:
    """P(sum of n Rademacher signs = s) against (2/sqrt(n)) phi(s/sqrt(n))."""
    if n < 1 or abs(s) > n or (n - s) % 2:
        raise DomainError(f"need |s| <= n and s = n (mod 2), got n={n}, s={s}")
    log_exact = gammaln(n + 1) - gammaln((n + s) // 2 + 1) - gammaln((n - s) // 2 + 1) - n * math.log(2.0)
    log_gauss = math.log(2.0 / math.sqrt(n)) + stats.norm.logpdf(s / math.sqrt(n))
    return LocalCltComparison(math.exp(log_exact), math.exp(log_gauss), math.exp(log_exact - log_gauss))


@dataclass(frozen=True)
class ChiSquareCltDeviation:
    density: float
    derivative: float


def _chisq_logpdf_and_dlog(u: float, t: float) -> Tuple[float, float]:
    half = u / 2.0
    return float(stats.chi2.logpdf(t, u)), (half - 1.0) / t - 0.5


def chisq_density_clt_check(u: float, x: float) -> ChiSquareCltDeviation:
    """
    Deviations of the standardized chi-square(u) density from phi.

    density:    |sqrt(2u) g_u(u + x sqrt(2u)) - phi(x)|
    derivative: |2u g_u'(u + x sqrt(2u)) - phi'(x)|
    """
    if u < 2:
        raise DomainError(f"chi-square CLT check requires u >= 2, got {u}")
    if abs(x) > u ** (1.0 / 6.0):
        raise DomainError(f"|x| must not exceed u^(1/6) = {u ** (1 / 6):.4g}")
    scale = math.sqrt(2.0 * u)
    t = u + x * scale
    log_g, dlog = _chisq_logpdf_and_dlog(u, t)
    g = math.exp(log_g)
    phi = float(stats.norm.pdf(x))
    return ChiSquareCltDeviation(
        density=abs(scale * g - phi),
        derivative=abs(2.0 * u * g * dlog + x * phi),
    )


CHISQ_SUP_CONSTANT = math.e / (2.0 * math.sqrt(math.pi))


def chisq_sup_bound(u: float, margin: float = 1.01) -> Tuple[float, float]:
    """(sup_t g_u(t), margin * C / sqrt(u)) with C = e / (2 sqrt(pi))."""
    if u < 2:
        raise DomainError(f"u must be >= 2, got {u}")
    sup = float(stats.chi2.pdf(u - 2.0, u)) if u > 2 else 0.5
    return sup, margin * CHISQ_SUP_CONSTANT / math.sqrt(u)


def bessel_grid(nus, xs) -> pd.DataFrame:
    """Table (nu, x, log_k, k, method) over the product grid."""
    rows = []
    for nu in nus:
        for x in xs:
            value, method = log_bessel_k(nu, x)
            rows.append((float(nu), float(x), value, math.exp(value), method))
    if not rows:
        raise NumericalError("empty Bessel grid")
    return pd.DataFrame(rows, columns=["nu", "x", "log_k", "k", "method"])
