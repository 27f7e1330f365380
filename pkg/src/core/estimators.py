"""
Hermite estimators and the overlap correlation lower bound

Probabilists' Hermite polynomials, the truncated Hermite weight W(Y|X), the
reference-set estimator p(Y) = (1/M) sum_k W(Y | sqrt(lambda) X_k) sqrt(lambda) X_k,
and a lower bound on the degree-D correlation computed from overlap samples
only, so the ambient space is never materialized.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from numpy.polynomial import hermite_e
from scipy.special import gammaln

from ..config import settings
from .exceptions import BudgetExceededError, DomainError, NumericalError
from .multi_index import MultiIndex
from .overlap import OverlapDistribution, empirical_overlap, quantile_detail, triple_overlap_samples
from .priors import GamInstance, PriorModel
from .rng import RngStream, as_generator, as_stream

logger = logging.getLogger(__name__)

EXP_OVERFLOW = 700.0
MAX_ESTIMATOR_DIM = 50
MAX_ESTIMATOR_DEGREE = 4


def _truncated_exp_terms(x: np.ndarray, D: int) -> np.ndarray:
    """
    Terms x^k / k!, k = 0..D, along a trailing axis. Entries with
    |x| > EXP_OVERFLOW get their magnitudes from logs of |x|.
    """
    k = np.arange(D + 1)
    ratios = x[..., None] / np.arange(1, D + 1)
    terms = np.concatenate([np.ones(x.shape + (1,)), np.cumprod(ratios, axis=-1)], axis=-1)
    large = np.abs(x) > EXP_OVERFLOW
    if np.any(large):
        log_abs = np.log(np.abs(np.where(large, x, 1.0)))[..., None]
        mags = np.exp(np.where(k == 0, 0.0, k * log_abs) - gammaln(k + 1))
        signs = np.where((x[..., None] < 0) & (k % 2 == 1), -1.0, 1.0)
        terms = np.where(large[..., None], signs * mags, terms)
    return terms


def truncated_exp(x, D: int):
    """exp_{<=D}(x) = sum_{k<=D} x^k / k!; scalars use compensated summation."""
    if D < 0:
        raise DomainError(f"D must be nonnegative, got {D}")
    arr = np.asarray(x, dtype=float)
    terms = _truncated_exp_terms(arr, D)
    if arr.ndim == 0:
        return math.fsum(terms.tolist())
    return terms.sum(axis=-1)


def exp_overflow(x) -> bool:
    """True when some |x| is large enough for e^x to overflow."""
    return bool(np.any(np.abs(np.asarray(x, dtype=float)) > EXP_OVERFLOW))


class HermiteEvaluator:
    """Probabilists' Hermite polynomials h_0..h_D by the three-term recurrence."""

    def __init__(self, max_degree: int):
        if max_degree < 0:
            raise DomainError("max_degree must be nonnegative")
        self.max_degree = max_degree

    def table(self, z) -> np.ndarray:
        """Array (D + 1, *shape(z)) with h_k(z) in row k."""
        z = np.asarray(z, dtype=float)
        out = np.empty((self.max_degree + 1,) + z.shape)
        out[0] = 1.0
        if self.max_degree >= 1:
            out[1] = z
        for k in range(1, self.max_degree):
            out[k + 1] = z * out[k] - k * out[k - 1]
        return out

    def h(self, k: int, z) -> np.ndarray:
        if k > self.max_degree:
            raise DomainError(f"degree {k} above evaluator cap {self.max_degree}")
        return self.table(z)[k]

    def multivariate(self, alpha: MultiIndex, y) -> float:
        """H_alpha(y) = prod_j h_{alpha_j}(y_j)."""
        y = np.asarray(y, dtype=float)
        if y.size != alpha.dim:
            raise DomainError(f"y has length {y.size}, alpha has length {alpha.dim}")
        return math.prod(float(self.h(e, y[i])) for i, e in alpha.as_sorted_pairs())


def hermite(alpha: MultiIndex, y) -> float:
    return HermiteEvaluator(max(alpha.exponents, default=0)).multivariate(alpha, y)


def gauss_hermite(nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for E f(Z), Z ~ N(0, 1)."""
    x, w = hermite_e.hermegauss(nodes)
    return x, w / math.sqrt(2.0 * math.pi)


def weight_w(y, x, D: int) -> float:
    """
    W(y|x) = sum_{|alpha| <= D} x^alpha H_alpha(y) / alpha!.

    Only alphas supported on the nonzero coordinates of x contribute; the sum
    is the degree-<=D truncation of the product over those coordinates of
    sum_a x_j^a h_a(y_j) / a!.
    """
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape:
        raise DomainError(f"y and x shapes differ: {y.shape} vs {x.shape}")
    support = np.flatnonzero(x)
    cost = support.size * (D + 1) ** 2
    if cost > settings.HERMITE_WEIGHT_BUDGET:
        raise BudgetExceededError("hermite weight", cost, settings.HERMITE_WEIGHT_BUDGET)
    if support.size == 0 or D == 0:
        return 1.0
    h = HermiteEvaluator(D).table(y[support])
    a = np.arange(D + 1)[:, None]
    series = np.exp(a * np.log(np.abs(x[support]))[None, :] - gammaln(a + 1)) * np.where(
        (x[support] < 0)[None, :] & (a % 2 == 1), -1.0, 1.0
    )
    series = series * h
    poly = np.zeros(D + 1)
    poly[0] = 1.0
    for j in range(support.size):
        poly = np.convolve(poly, series[:, j])[: D + 1]
    return math.fsum(poly.tolist())


@dataclass(frozen=True)
class ReferenceSet:
    """M i.i.d. prior draws used by the Hermite estimator."""

    signals: np.ndarray
    stream: Optional[dict] = None

    @classmethod
    def draw(cls, prior: PriorModel, M: int, rng_state) -> "ReferenceSet":
        if M < 1:
            raise DomainError("a reference set needs M >= 1")
        desc = rng_state.describe() if isinstance(rng_state, RngStream) else None
        return cls(prior.sample_flat(as_generator(rng_state), M), desc)

    @property
    def size(self) -> int:
        return self.signals.shape[0]


class HermiteEstimator:
    """p(y) = (1/M) sum_k W(y | sqrt(lambda) X_k) sqrt(lambda) X_k."""

    def __init__(self, gam: GamInstance, refset: ReferenceSet, D: int):
        if gam.ambient_dim > MAX_ESTIMATOR_DIM or D > MAX_ESTIMATOR_DEGREE:
            raise BudgetExceededError(
                "materialized estimator", gam.ambient_dim, MAX_ESTIMATOR_DIM, f"requires N <= 50 and D <= 4, got D={D}"
            )
        if refset.signals.shape[1] != gam.ambient_dim:
            raise DomainError("reference set dimension does not match the model")
        self.gam = gam
        self.D = D
        self.scaled = math.sqrt(gam.snr) * refset.signals

    def __call__(self, y) -> np.ndarray:
        weights = np.array([weight_w(y, xk, self.D) for xk in self.scaled])
        return weights @ self.scaled / len(self.scaled)


def materialized_estimator(gam: GamInstance, refset: ReferenceSet, y, D: int) -> np.ndarray:
    return HermiteEstimator(gam, refset, D)(y)


# ========== Overlap lower bound ==========


@dataclass
class CorrBoundEstimate:
    """
    Corr >= E[A exp_{<=D}(lambda A)] / (2 sqrt(E[S exp_{<=3D}(lambda S)]))
    with A a pair overlap and S the triple sum of absolute overlaps.
    """

    numerator: float
    denominator: float
    stderr_num: float
    stderr_den: float
    ratio: Optional[float]
    ratio_stderr: Optional[float]
    ratio_jackknife: Optional[float]
    corr_sq_lower: Optional[float]
    lam: float
    D: int
    pair_samples: int
    triple_samples: int
    overflow: bool = False
    flagged: bool = False


def _ratio(num: np.ndarray, den: np.ndarray) -> float:
    d = den.mean()
    return num.mean() / (2.0 * math.sqrt(d)) if d > 0 else math.nan


def corr_lower_bound_overlap(
    prior: PriorModel,
    lam: float,
    D: int,
    M_ov: int,
    rng_state,
    threads: Optional[int] = None,
    blocks: int = 20,
) -> CorrBoundEstimate:
    """
    Monte-Carlo lower bound on the degree-D correlation from overlap samples.

    Returns the plug-in ratio with a delta-method standard error and a
    leave-one-block-out jackknife estimate. A nonpositive denominator is
    flagged and no ratio is formed.
    """
    if M_ov < 1000:
        raise DomainError(f"the overlap lower bound needs M_ov >= 1000, got {M_ov}")
    stream = as_stream(rng_state)
    pairs = empirical_overlap(prior, M_ov, stream.child("pairs"), threads).samples
    triples = triple_overlap_samples(prior, M_ov, stream.child("triples"), threads)
    # Sampling helpers return sorted values; shuffle so jackknife blocks are exchangeable
    shuffle = stream.child("jackknife").generator()
    pairs, triples = shuffle.permutation(pairs), shuffle.permutation(triples)

    num_i = pairs * truncated_exp(lam * pairs, D)
    den_i = triples * truncated_exp(lam * triples, 3 * D)
    overflow = exp_overflow(lam * pairs) or exp_overflow(lam * triples)
    num, den = float(num_i.mean()), float(den_i.mean())
    se_num = float(num_i.std(ddof=1) / math.sqrt(M_ov))
    se_den = float(den_i.std(ddof=1) / math.sqrt(M_ov))

    if not den > 0:
        logger.warning(f"Nonpositive denominator estimate {den} at lambda={lam}, D={D}")
        return CorrBoundEstimate(num, den, se_num, se_den, None, None, None, None, lam, D, M_ov, M_ov, overflow, True)

    ratio = num / (2.0 * math.sqrt(den))
    grad_num = 1.0 / (2.0 * math.sqrt(den))
    grad_den = -num / (4.0 * den**1.5)
    ratio_se = math.hypot(grad_num * se_num, grad_den * se_den)

    idx = np.arange(M_ov) % blocks
    loo = np.array([_ratio(num_i[idx != b], den_i[idx != b]) for b in range(blocks)])
    jackknife = float(blocks * ratio - (blocks - 1) * np.nanmean(loo))

    return CorrBoundEstimate(
        numerator=num,
        denominator=den,
        stderr_num=se_num,
        stderr_den=se_den,
        ratio=ratio,
        ratio_stderr=ratio_se,
        ratio_jackknife=jackknife,
        corr_sq_lower=max(ratio, 0.0) ** 2,
        lam=lam,
        D=D,
        pair_samples=M_ov,
        triple_samples=M_ov,
        overflow=overflow,
    )


@dataclass(frozen=True)
class TruncationGap:
    estimate: float
    stderr: float
    bound: float
    q: float

    @property
    def holds(self) -> bool:
        return self.estimate <= self.bound + 3.0 * self.stderr


def exp_truncation_gap(samples, lam_scale: float, D: int, C_t: float) -> TruncationGap:
    """
    |E[V exp_{<=D}(V)] - E[V e^V 1{|V| <= q(C_t D)}]| for V = lam_scale * samples,
    against e^q ||V||_{D+2}^{D+2} / (D+1)! + e^(-C_t D / 2) sum_k ||V||_{2k+2}^{k+1} / k!.
    """
    V = lam_scale * np.asarray(samples, dtype=float)
    q = quantile_detail(OverlapDistribution.from_samples(V), C_t * D).value if D > 0 else float(np.max(np.abs(V)))
    inside = np.abs(V) <= q
    with np.errstate(over="ignore"):
        diff = V * truncated_exp(V, D) - np.where(inside, V * np.exp(np.where(inside, V, 0.0)), 0.0)
    M = V.size
    estimate = abs(float(diff.mean()))
    stderr = float(diff.std(ddof=1) / math.sqrt(M))

    abs_v = np.abs(V)

    def norm_power(p: float, power: float) -> float:
        """||V||_p^power."""
        return float(np.mean(abs_v**p)) ** (power / p)

    remainder = math.exp(q) * norm_power(D + 2, D + 2) / math.factorial(D + 1)
    tail = math.exp(-C_t * D / 2.0) * math.fsum(norm_power(2 * k + 2, k + 1) / math.factorial(k) for k in range(D + 1))
    if not math.isfinite(remainder + tail):
        raise NumericalError("truncation bound overflowed")
    return TruncationGap(estimate, stderr, remainder + tail, q)
