"""
Identity and invariant suite behind the `selftest` subcommand

Each check exercises at least one operation of a library module against a
closed form or an independent computation.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from ..applications.thresholding import diag_threshold
from ..core.cumulants import CumulantEngine, MomentOracle, sw_corr_upper_bound
from ..core.estimators import gauss_hermite, hermite, truncated_exp, weight_w
from ..core.fp import fp_identity_residual
from ..core.multi_index import MultiIndex
from ..core.oracle import exact_corr_and_mmse
from ..core.overlap import exact_pmf_sparse_rademacher, quantile
from ..core.priors import AtomicPrior, SparseRademacherTensorPrior, trivial_mmse
from ..core.specfun import bessel_k, bessel_ratio_bounds, inner_product_density

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str


def _priors() -> Tuple[bool, str]:
    prior = SparseRademacherTensorPrior(20, 4, 1)
    value = trivial_mmse(prior)
    return abs(value - 4.0) < 1e-12, f"trivial mmse {value}"


def _fp_identity() -> Tuple[bool, str]:
    residual = fp_identity_residual(exact_pmf_sparse_rademacher(40, 6, 1), [0.1, 1.0, 10.0])
    return residual < 1e-10, f"max residual {residual:.3e}"


def _quantile() -> Tuple[bool, str]:
    q = quantile(exact_pmf_sparse_rademacher(1, 1, 1), 1.0)
    return q == 1.0, f"q(1) = {q} for a single sign"


def _cumulants() -> Tuple[bool, str]:
    prior = AtomicPrior(np.array([[1.0, 2.0], [-1.0, 0.5], [0.0, -1.0]]), np.array([0.2, 0.5, 0.3]))
    engine = CumulantEngine(MomentOracle.from_prior(prior, 6))
    worst = 0.0
    for variables in [(0, 1), (0, 0, 1), (0, 1, 1, 1), (0, 0, 1, 1, 0)]:
        a, b = engine.partition(variables), engine.recursive(variables)
        worst = max(worst, abs(a - b) / max(1.0, abs(a)))
    return worst < 1e-9, f"partition vs recursion max rel diff {worst:.3e}"


def _hermite() -> Tuple[bool, str]:
    ok = hermite(MultiIndex((2,)), [2.0]) == 3.0 and hermite(MultiIndex((3,)), [1.0]) == -2.0
    nodes, weights = gauss_hermite(20)
    worst = 0.0
    for a in range(5):
        for b in range(5):
            value = float(
                np.dot(weights, [hermite(MultiIndex((a,)), [z]) * hermite(MultiIndex((b,)), [z]) for z in nodes])
            )
            expected = math.factorial(a) if a == b else 0.0
            worst = max(worst, abs(value - expected))
    return ok and worst < 1e-8, f"orthogonality residual {worst:.3e}"


def _estimators() -> Tuple[bool, str]:
    ok = truncated_exp(1.0, 2) == 2.5 and truncated_exp(-3.0, 0) == 1.0
    y, x = np.array([0.3, -1.2]), np.array([0.5, 2.0])
    w1 = weight_w(y, x, 1)
    return ok and abs(w1 - (1.0 + float(x @ y))) < 1e-12, f"W at D=1: {w1}"


def _oracle() -> Tuple[bool, str]:
    prior = AtomicPrior(np.array([[1.0], [-1.0]]), np.array([0.5, 0.5]))
    worst = 0.0
    for lam in [0.1, 1.0, 10.0]:
        corr_sq, mmse = exact_corr_and_mmse(prior, lam, 1)
        worst = max(worst, abs(corr_sq - lam / (1.0 + lam)), abs(corr_sq + mmse - 1.0))
    return worst < 1e-12, f"closed-form deviation {worst:.3e}"


def _sandwich() -> Tuple[bool, str]:
    prior = SparseRademacherTensorPrior(3, 1, 1)
    upper = sw_corr_upper_bound(prior, 0.7, 2).value
    corr_sq, _ = exact_corr_and_mmse(prior, 0.7, 2)
    return upper >= corr_sq - 1e-12, f"upper {upper:.6g} >= oracle {corr_sq:.6g}"


def _specfun() -> Tuple[bool, str]:
    x = 1.3
    closed = math.sqrt(math.pi / (2 * x)) * math.exp(-x)
    half = bessel_k(0.5, x)
    residual = abs(bessel_k(2.0, x) - bessel_k(0.0, x) - 2.0 / x * bessel_k(1.0, x)) / bessel_k(2.0, x)
    lower, upper = bessel_ratio_bounds(1.0, x)
    ratio = bessel_k(2.0, x) / bessel_k(1.0, x)
    density = float(inner_product_density(3, [0.5])[0])
    ok = abs(half - closed) < 1e-12 * closed and residual < 1e-10 and lower <= ratio <= upper and density > 0
    return ok, f"K_1/2 error {abs(half - closed):.3e}, recurrence residual {residual:.3e}"


def _thresholding() -> Tuple[bool, str]:
    out = diag_threshold([-3.0, 0.5, 4.0, 2.0], 2.0)
    return bool(np.array_equal(out, [-1.0, 0.0, 1.0, 1.0])), f"thresholded {out.tolist()}"


CHECKS: List[Tuple[str, Callable[[], Tuple[bool, str]]]] = [
    ("priors.trivial_mmse", _priors),
    ("overlap.quantile", _quantile),
    ("fp.identity", _fp_identity),
    ("cumulants.partition_vs_recursion", _cumulants),
    ("estimators.hermite", _hermite),
    ("estimators.truncated_exp_and_weight", _estimators),
    ("oracle.closed_form", _oracle),
    ("cumulants.upper_bound_vs_oracle", _sandwich),
    ("specfun.bessel", _specfun),
    ("applications.diag_threshold", _thresholding),
]


def run_selftest() -> List[CheckResult]:
    results = []
    for name, check in CHECKS:
        try:
            passed, detail = check()
        except Exception as e:  # noqa: BLE001
            passed, detail = False, f"{type(e).__name__}: {e}"
        level = logging.INFO if passed else logging.ERROR
        logger.log(level, f"selftest {name}: {'pass' if passed else 'FAIL'} ({detail})")
        results.append(CheckResult(name, passed, detail))
    return results
