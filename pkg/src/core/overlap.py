"""
Overlap distributions

Distribution of A = <X, X'> for independent prior draws: exact log-space
PMFs for discrete priors, Bessel-analytic densities for Gaussian tensors, and
sorted Monte-Carlo samples otherwise. Provides the quantile q(D), the speed
function a_n and the discrete log-PMF difference built on it.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import integrate, optimize, stats
from scipy.special import gammaln, logsumexp

from ..config import settings
from .exceptions import BudgetExceededError, DomainError
from .priors import (
    GaussianTensorPrior,
    PriorModel,
    SparseClusteringPrior,
    SparseRademacherTensorPrior,
    TruncatedSparseTensor3Prior,
)
from .rng import RngStream, as_generator, chunk_sizes, parallel_map
from .specfun import log_density_derivative_gaussian_overlap, log_inner_product_density

logger = logging.getLogger(__name__)

LOG_FLUSH = -745.0
MIXTURE_LOG_WINDOW = 800.0
SAMPLE_CHUNK = 65_536
ATOM_DECIMALS = 12


# ========== Analytic families ==========


@dataclass(frozen=True)
class GaussianOverlapFamily:
    """A = W^r with W = <G, H>, G, H ~ N(0, I_d): the Gaussian tensor overlap."""

    d: int
    r: int = 1

    def _to_inner(self, a: float) -> float:
        if self.r % 2 == 0 and a < 0:
            raise DomainError(f"overlap {a} is outside the support of W^{self.r}")
        return math.copysign(abs(a) ** (1.0 / self.r), a)

    def log_density(self, a: float) -> float:
        """log f_A(a) by change of variables from f_W."""
        if a == 0:
            raise DomainError("overlap density queried at 0")
        w = self._to_inner(a)
        log_jac = math.log(self.r) + (self.r - 1) * math.log(abs(w))
        multiplicity = math.log(2.0) if self.r % 2 == 0 else 0.0
        return float(log_inner_product_density(self.d, w)[0]) + multiplicity - log_jac

    def log_density_derivative(self, a: float) -> float:
        """d/da log f_A(a) = [d log f_W(w) - (r - 1)/w] / (r w^(r-1))."""
        if a == 0:
            raise DomainError("log-density derivative is singular at 0")
        w = self._to_inner(a)
        sign = 1.0 if w > 0 else -1.0
        d_log_w = sign * log_density_derivative_gaussian_overlap(self.d, abs(w))
        return (d_log_w - (self.r - 1) / w) / (self.r * w ** (self.r - 1))

    def log_abs_inner_tail(self, y: float) -> float:
        """log P(|W| > y)."""
        if y <= 0:
            return 0.0
        anchor = float(log_inner_product_density(self.d, y)[0])

        def scaled(w):
            return math.exp(float(log_inner_product_density(self.d, w)[0]) - anchor)

        value, _ = integrate.quad(scaled, y, np.inf, limit=200)
        return math.log(2.0 * value) + anchor

    def quantile(self, D: float) -> float:
        """q(D) of |A|, from the quantile of |W| mapped through w -> w^r."""
        target = -D
        hi = max(1.0, math.sqrt(self.d * D) + D)
        while self.log_abs_inner_tail(hi) > target:
            hi *= 2.0
        root = optimize.brentq(lambda y: self.log_abs_inner_tail(y) - target, 0.0, hi, xtol=1e-12, rtol=1e-12)
        return root**self.r


@dataclass(frozen=True)
class ClusteringOverlapFamily:
    """A = <xi, xi'> <mu, mu'> for the rescaled sparse clustering prior."""

    n: int
    p: int
    s: int

    def prior(self) -> SparseClusteringPrior:
        return SparseClusteringPrior(self.n, self.p, self.s, 1.0)


@dataclass(frozen=True)
class DensityDerivative:
    value: float
    stderr: float = 0.0
    bandwidth: Optional[float] = None
    step: Optional[float] = None
    method: str = "bessel"


# ========== Distribution container ==========


@dataclass(frozen=True, eq=False)
class OverlapDistribution:
    """
    Law of the overlap A in one of three modes.

    exact_pmf:        sorted atoms with log-probabilities
    analytic_density: a GaussianOverlapFamily
    empirical:        sorted samples
    """

    mode: str
    atoms: Optional[np.ndarray] = None
    log_probs: Optional[np.ndarray] = None
    samples: Optional[np.ndarray] = None
    family: Optional[GaussianOverlapFamily] = None
    flags: Dict[str, bool] = field(default_factory=dict)

    @classmethod
    def from_log_pmf(cls, atoms, log_probs, flush: bool = True) -> "OverlapDistribution":
        atoms = np.asarray(atoms, dtype=float)
        log_probs = np.asarray(log_probs, dtype=float)
        order = np.argsort(atoms, kind="stable")
        atoms, log_probs = atoms[order], log_probs[order]
        log_probs = log_probs - logsumexp(log_probs)
        flushed = False
        if flush:
            keep = log_probs >= LOG_FLUSH
            flushed = bool(np.any(~keep & np.isfinite(log_probs)))
            atoms, log_probs = atoms[keep], log_probs[keep]
            log_probs = log_probs - logsumexp(log_probs)
        return cls("exact_pmf", atoms=atoms, log_probs=log_probs, flags={"flushed": flushed})

    @classmethod
    def from_samples(cls, samples) -> "OverlapDistribution":
        samples = np.sort(np.asarray(samples, dtype=float))
        if samples.size < 2:
            raise DomainError("an empirical overlap distribution needs at least 2 samples")
        return cls("empirical", samples=samples)

    @classmethod
    def from_family(cls, family: GaussianOverlapFamily) -> "OverlapDistribution":
        return cls("analytic_density", family=family)

    # --- exact mode helpers ---

    @property
    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs)

    def log_pmf_at(self, q: float) -> float:
        """log P(A = q); -inf off the support."""
        self._require("exact_pmf")
        i = int(np.searchsorted(self.atoms, q))
        for j in (i - 1, i):
            if 0 <= j < len(self.atoms) and math.isclose(self.atoms[j], q, rel_tol=1e-12, abs_tol=1e-12):
                return float(self.log_probs[j])
        return -math.inf

    def abs_law(self) -> Tuple[np.ndarray, np.ndarray]:
        """Sorted atoms of |A| with merged log-probabilities."""
        self._require("exact_pmf")
        mags = np.round(np.abs(self.atoms), ATOM_DECIMALS)
        unique, inverse = np.unique(mags, return_inverse=True)
        merged = np.full(len(unique), -np.inf)
        np.logaddexp.at(merged, inverse, self.log_probs)
        return unique, merged

    def pmf_table(self) -> pd.DataFrame:
        self._require("exact_pmf")
        return pd.DataFrame({"atom": self.atoms, "log_prob": self.log_probs})

    # --- empirical helpers ---

    @property
    def size(self) -> int:
        self._require("empirical")
        return int(self.samples.size)

    def abs_samples(self) -> np.ndarray:
        self._require("empirical")
        return np.sort(np.abs(self.samples))

    def _require(self, mode: str) -> None:
        if self.mode != mode:
            raise DomainError(f"operation needs a {mode} distribution, got {self.mode}")


# ========== Exact PMFs ==========


def _binomial_log_pmf(t: int) -> np.ndarray:
    j = np.arange(t + 1)
    return gammaln(t + 1) - gammaln(j + 1) - gammaln(t - j + 1) - t * math.log(2.0)


def _power_atoms(s: np.ndarray, log_p: np.ndarray, r: int) -> OverlapDistribution:
    """Map atoms s -> s^r, merging +-s when r is even."""
    values = s.astype(float) ** r
    unique, inverse = np.unique(values, return_inverse=True)
    merged = np.full(len(unique), -np.inf)
    np.logaddexp.at(merged, inverse, log_p)
    return OverlapDistribution.from_log_pmf(unique, merged)


def exact_pmf_sparse_rademacher(n: int, k: int, r: int = 1) -> OverlapDistribution:
    """
    Exact PMF of <v, v'>^r for v, v' with i.i.d. Rad(k/n) entries.

    S = sum_i v_i v'_i where v_i v'_i is +-1 with probability (k/n)^2 / 2 each.
    With T ~ Bin(n, (k/n)^2) nonzero products, S | T = t is a centered sum of
    t signs, so P(S = s) = sum_t P(T = t) P(2 Bin(t, 1/2) - t = s).
    """
    if not 1 <= k <= n or r < 1:
        raise DomainError(f"need 1 <= k <= n and r >= 1, got n={n}, k={k}, r={r}")
    p = (k / n) ** 2
    t_all = np.arange(n + 1)
    log_pt = stats.binom.logpmf(t_all, n, p)
    active = t_all[log_pt >= log_pt.max() - MIXTURE_LOG_WINDOW]

    acc = np.full(2 * n + 1, -np.inf)
    for t in active:
        s = 2 * np.arange(t + 1) - t
        acc[s + n] = np.logaddexp(acc[s + n], log_pt[t] + _binomial_log_pmf(int(t)))
    s_all = np.arange(-n, n + 1)
    support = np.isfinite(acc)
    logger.debug(f"Exact overlap PMF n={n}, k={k}, r={r}: {support.sum()} atoms from {len(active)} mixture terms")
    return _power_atoms(s_all[support], acc[support], r)


def _hypergeom_log_pmf(c: np.ndarray, n: int, a: int, b: int) -> np.ndarray:
    return stats.hypergeom.logpmf(c, n, a, b)


def exact_pmf_truncated_sparse_tensor3(n: int, k: int) -> OverlapDistribution:
    """
    Exact PMF of <v, v'>^3 under the truncated sparse prior.

    Given in-band support sizes (a, b) the supports intersect in a
    hypergeometric number c of coordinates carrying independent uniform signs.
    A truncated draw equals 1_[k]; against an in-band draw of size a its
    overlap is a signed sum over Hypergeom(n, a, k) coordinates.
    """
    prior = TruncatedSparseTensor3Prior(n, k)
    sizes, log_size = prior.band_sizes, np.log(prior.band_probs)
    acc = np.full(2 * n + 1, -np.inf)

    def add_sign_sums(log_weight: float, log_counts: np.ndarray) -> None:
        for c in np.flatnonzero(np.isfinite(log_counts)):
            s = 2 * np.arange(c + 1) - c
            acc[s + n] = np.logaddexp(acc[s + n], log_weight + log_counts[c] + _binomial_log_pmf(int(c)))

    c_range = np.arange(n + 1)
    for a, la in zip(sizes, log_size):
        for b, lb in zip(sizes, log_size):
            add_sign_sums(la + lb, _hypergeom_log_pmf(c_range, n, int(a), int(b)))
        if prior.p_out > 0:
            add_sign_sums(la + math.log(2.0 * prior.p_out), _hypergeom_log_pmf(c_range, n, int(a), k))
    if prior.p_out > 0:
        acc[k + n] = np.logaddexp(acc[k + n], 2.0 * math.log(prior.p_out))

    s_all = np.arange(-n, n + 1)
    support = np.isfinite(acc)
    return _power_atoms(s_all[support], acc[support], 3)


def _aggregate(values: np.ndarray, weights: np.ndarray) -> OverlapDistribution:
    values = np.round(values.reshape(-1), ATOM_DECIMALS)
    weights = weights.reshape(-1)
    keep = weights > 0
    unique, inverse = np.unique(values[keep], return_inverse=True)
    mass = np.bincount(inverse, weights=weights[keep], minlength=len(unique))
    with np.errstate(divide="ignore"):
        return OverlapDistribution.from_log_pmf(unique, np.log(mass))


def exact_pmf_from_support(prior: PriorModel, budget: Optional[int] = None) -> OverlapDistribution:
    """Exact overlap PMF of a finitely supported prior by pairing its atoms."""
    atoms, probs = prior.support()
    pairs = len(probs) ** 2
    limit = budget or settings.SW_ENUM_BUDGET
    if pairs > limit:
        raise BudgetExceededError("overlap pairs", pairs, limit)
    return _aggregate(atoms @ atoms.T, np.outer(probs, probs))


def exact_triple_sum_pmf(prior: PriorModel, budget: Optional[int] = None) -> OverlapDistribution:
    """Exact law of |<X',X''>| + |<X,X'>| + |<X,X''>| for a finitely supported prior."""
    atoms, probs = prior.support()
    triples = len(probs) ** 3
    limit = budget or settings.SW_ENUM_BUDGET
    if triples > limit:
        raise BudgetExceededError("overlap triples", triples, limit)
    g = np.abs(atoms @ atoms.T)
    total = g[None, :, :] + g[:, :, None] + g[:, None, :]
    weight = probs[:, None, None] * probs[None, :, None] * probs[None, None, :]
    return _aggregate(total, weight)


def exact_overlap(prior: PriorModel) -> OverlapDistribution:
    """Exact PMF for the discrete prior families."""
    if isinstance(prior, SparseRademacherTensorPrior):
        return exact_pmf_sparse_rademacher(prior.n, prior.k, prior.r)
    if isinstance(prior, TruncatedSparseTensor3Prior):
        return exact_pmf_truncated_sparse_tensor3(prior.n, prior.k)
    if prior.is_finite():
        return exact_pmf_from_support(prior)
    raise DomainError(f"{prior.kind.value} prior has no exact overlap PMF")


# ========== Sampling ==========


def _chunked_samples(draw: Callable[[np.random.Generator, int], np.ndarray], M: int, rng_state, threads):
    stream = rng_state if isinstance(rng_state, RngStream) else None
    sizes = chunk_sizes(M, SAMPLE_CHUNK)
    if stream is None:
        gen = as_generator(rng_state)
        return np.concatenate([draw(gen, size) for size in sizes])
    children = stream.spawn(len(sizes))
    parts = parallel_map(lambda job: draw(job[0].generator(), job[1]), list(zip(children, sizes)), threads)
    return np.concatenate(parts)


def empirical_overlap(prior: PriorModel, M: int, rng_state, threads: Optional[int] = None) -> OverlapDistribution:
    """M i.i.d. overlaps of independent prior pairs, sorted."""
    if M < 2:
        raise DomainError(f"need at least 2 overlap samples, got {M}")

    def draw(gen, size):
        a = prior.sample_latents(gen, size)
        b = prior.sample_latents(gen, size)
        return prior.latent_overlap(a, b)

    return OverlapDistribution.from_samples(_chunked_samples(draw, M, rng_state, threads))


def triple_overlap_samples(prior: PriorModel, M: int, rng_state, threads: Optional[int] = None) -> np.ndarray:
    """Sorted samples of |<X',X''>| + |<X,X'>| + |<X,X''>|."""
    if M < 2:
        raise DomainError(f"need at least 2 samples, got {M}")

    def draw(gen, size):
        a = prior.sample_latents(gen, size)
        b = prior.sample_latents(gen, size)
        c = prior.sample_latents(gen, size)
        return (
            np.abs(prior.latent_overlap(b, c)) + np.abs(prior.latent_overlap(a, b)) + np.abs(prior.latent_overlap(a, c))
        )

    return np.sort(_chunked_samples(draw, M, rng_state, threads))


def overlap_distribution(
    prior: PriorModel, M: Optional[int] = None, rng_state=None, threads: Optional[int] = None
) -> OverlapDistribution:
    """Most exact representation available: PMF, analytic density, else samples."""
    if isinstance(prior, (SparseRademacherTensorPrior, TruncatedSparseTensor3Prior)):
        return exact_overlap(prior)
    if isinstance(prior, GaussianTensorPrior):
        return OverlapDistribution.from_family(GaussianOverlapFamily(prior.n, prior.r))
    if prior.is_finite():
        try:
            return exact_pmf_from_support(prior)
        except BudgetExceededError:
            logger.info(f"Support of {prior!r} too large; falling back to sampling")
    if rng_state is None:
        raise DomainError(f"sampling the overlap of {prior.kind.value} requires an rng_state")
    return empirical_overlap(prior, M or settings.MC_SAMPLES, rng_state, threads)


# ========== Quantiles ==========


@dataclass(frozen=True)
class QuantileValue:
    value: float
    saturated: bool = False


def quantile_detail(dist: OverlapDistribution, D: float) -> QuantileValue:
    """q(D) = inf{y : P(|A| <= y) >= 1 - e^-D}, with the empirical saturation flag."""
    if not D > 0:
        raise DomainError(f"D must be positive, got {D}")

    if dist.mode == "exact_pmf":
        mags, log_p = dist.abs_law()
        # log P(|A| > mags[j]) via a reverse log-cumsum
        tail = np.append(np.logaddexp.accumulate(log_p[::-1])[::-1][1:], -np.inf)
        j = int(np.argmax(tail <= -D + 1e-13))
        return QuantileValue(float(mags[j]))

    if dist.mode == "empirical":
        mags = dist.abs_samples()
        M = mags.size
        saturated = math.exp(-D) * M < 1.0
        index = min(M, max(1, math.ceil(-math.expm1(-D) * M)))
        return QuantileValue(float(mags[index - 1]), saturated)

    return QuantileValue(dist.family.quantile(D))


def quantile(dist: OverlapDistribution, D: float) -> float:
    return quantile_detail(dist, D).value


class QuantileFunction:
    """Cached D -> q(D) over one overlap distribution."""

    def __init__(self, dist: OverlapDistribution):
        self.dist = dist
        self._cache: Dict[float, QuantileValue] = {}

    def detail(self, D: float) -> QuantileValue:
        key = float(D)
        if key not in self._cache:
            self._cache[key] = quantile_detail(self.dist, key)
        return self._cache[key]

    def __call__(self, D: float) -> float:
        return self.detail(D).value

    def curve(self, Ds: Sequence[float]) -> pd.DataFrame:
        values = [self.detail(D) for D in Ds]
        return pd.DataFrame(
            {
                "D": [float(D) for D in Ds],
                "q_of_D": [v.value for v in values],
                "saturated": [v.saturated for v in values],
            }
        )


# ========== Speed functions and discrete derivatives ==========


class SpeedFunction:
    """Positive step a_n(q) with q + a_n(q) on the overlap support."""

    def __init__(self, fn: Callable[[float], float], name: str):
        self._fn = fn
        self.name = name

    def __call__(self, q: float) -> float:
        a = self._fn(q)
        if not a > 0:
            raise DomainError(f"speed function {self.name} is not positive at q={q}")
        return a

    @classmethod
    def tensor(cls, r: int) -> "SpeedFunction":
        """a(s^r) = (s + 2)^r - s^r on the grid of signed overlap roots s."""

        def step(q: float) -> float:
            s = round(math.copysign(abs(q) ** (1.0 / r), q))
            return float((s + 2) ** r - s**r)

        return cls(step, f"tensor(r={r})")

    @classmethod
    def next_atom(cls, dist: OverlapDistribution) -> "SpeedFunction":
        atoms = dist.atoms

        def step(q: float) -> float:
            i = int(np.searchsorted(atoms, q, side="right"))
            if i >= len(atoms):
                raise DomainError(f"atom {q} has no larger neighbour")
            return float(atoms[i] - q)

        return cls(step, "next_atom")

    def check(self, dist: OverlapDistribution, points: Sequence[float]) -> bool:
        """a(q) > 0 and q + a(q) is an atom, for each point."""
        return all(np.isfinite(dist.log_pmf_at(q + self(q))) for q in points)


def default_speed(prior: PriorModel, dist: OverlapDistribution) -> SpeedFunction:
    r = getattr(prior, "r", None)
    if isinstance(prior, (SparseRademacherTensorPrior, TruncatedSparseTensor3Prior)) and r:
        return SpeedFunction.tensor(r)
    return SpeedFunction.next_atom(dist)


def discrete_log_pmf_diff(dist: OverlapDistribution, q_atom: float, speed: SpeedFunction) -> float:
    """(log P(q + a) - log P(q)) / a with a = speed(q)."""
    a = speed(q_atom)
    lo, hi = dist.log_pmf_at(q_atom), dist.log_pmf_at(q_atom + a)
    if not math.isfinite(lo):
        raise DomainError(f"overlap atom {q_atom} has zero mass")
    if not math.isfinite(hi):
        raise DomainError(f"overlap atom {q_atom + a} has zero mass")
    return (hi - lo) / a


# ========== Continuous log-density derivatives ==========


def analytic_log_density_derivative(
    family, point: float, samples: Optional[int] = None, rng_state=None, batches: int = 10
) -> DensityDerivative:
    """
    d/dt log f(t) for a continuous overlap family.

    Gaussian families use the Bessel ratio. The clustering family uses a
    Gaussian kernel estimate (Silverman bandwidth) differenced at step
    bandwidth/2, with a batch-means standard error.
    """
    if point == 0:
        raise DomainError("log-density derivative is singular at 0")
    if isinstance(family, GaussianOverlapFamily):
        return DensityDerivative(family.log_density_derivative(point))
    if not isinstance(family, ClusteringOverlapFamily):
        raise DomainError(f"unsupported overlap family {type(family).__name__}")
    if rng_state is None:
        raise DomainError("the clustering density derivative requires an rng_state")

    M = samples or settings.MC_SAMPLES
    values = empirical_overlap(family.prior(), M, rng_state).samples
    kde = stats.gaussian_kde(values, bw_method="silverman")
    bandwidth = float(kde.factor * values.std(ddof=1))
    step = bandwidth / 2.0

    def derivative(estimator) -> float:
        lo, hi = estimator.logpdf([point - step, point + step])
        return float((hi - lo) / (2.0 * step))

    value = derivative(kde)
    batch_values = []
    shuffle = rng_state.child("batches").generator() if isinstance(rng_state, RngStream) else as_generator(rng_state)
    for chunk in np.array_split(shuffle.permutation(values), batches):
        factor = bandwidth / chunk.std(ddof=1)
        batch_values.append(derivative(stats.gaussian_kde(chunk, bw_method=factor)))
    stderr = float(np.std(batch_values, ddof=1) / math.sqrt(batches))
    return DensityDerivative(value, stderr, bandwidth, step, "kernel")


# ========== Diagnostics ==========


@dataclass(frozen=True)
class GrowthFit:
    """log q(D) ~ log(C * B) + kappa * log D."""

    C: float
    kappa: float
    B: float = 1.0


def fit_quantile_growth(qf: QuantileFunction, Ds: Sequence[float], B: float = 1.0) -> GrowthFit:
    Ds = np.asarray(Ds, dtype=float)
    qs = np.array([qf(D) for D in Ds])
    if np.any(qs <= 0):
        raise DomainError("quantile growth fit needs positive quantiles")
    kappa, intercept = np.polyfit(np.log(Ds), np.log(qs), 1)
    # Shift so the fitted curve dominates every observed point
    shift = float(np.max(np.log(qs) - (intercept + kappa * np.log(Ds))))
    return GrowthFit(C=math.exp(intercept + shift) / B, kappa=float(kappa), B=B)


def moment_growth_check(abs_samples: np.ndarray, fit: GrowthFit, p_max: int = 20) -> pd.DataFrame:
    """
    Empirical ||A||_p against C B Gamma(kappa p + 1)^(1/p), the bound implied
    by q(t) <= C B t^kappa through E g(|A|) = int g(q(t)) e^-t dt.
    """
    x = np.abs(np.asarray(abs_samples, dtype=float))
    rows = []
    for p in range(1, p_max + 1):
        log_norm = (logsumexp(p * np.log(np.maximum(x, 1e-300))) - math.log(x.size)) / p
        bound = fit.C * fit.B * math.exp(gammaln(fit.kappa * p + 1) / p)
        rows.append({"p": p, "norm": math.exp(log_norm), "bound": bound, "K": bound / (fit.B * p**fit.kappa)})
    return pd.DataFrame(rows)


def change_of_variable_check(dist: OverlapDistribution, g: Callable[[np.ndarray], np.ndarray] = np.square):
    """
    (quadrature of int_0^inf g(q(t)) e^-t dt, sample mean of g(|A|), its stderr)
    for an empirical distribution.
    """
    mags = dist.abs_samples()
    M = mags.size
    t = np.linspace(0.0, math.log(M), 20 * M + 1)[1:]
    idx = np.clip(np.ceil(-np.expm1(-t) * M).astype(int), 1, M) - 1
    integrand = g(mags[idx]) * np.exp(-t)
    quad_value = float(integrate.trapezoid(integrand, t))
    # Beyond t = log M the empirical quantile is the sample maximum
    quad_value += float(g(mags[-1]) * math.exp(-math.log(M)))
    values = g(mags)
    return quad_value, float(values.mean()), float(values.std(ddof=1) / math.sqrt(M))


def _exact_cdf(dist: OverlapDistribution) -> np.ndarray:
    return np.minimum(np.cumsum(dist.probs), 1.0)


def kolmogorov_distance(exact: OverlapDistribution, empirical: OverlapDistribution) -> float:
    """sup_y |F_emp(y) - F_exact(y)| for a discrete exact law."""
    atoms, cdf = exact.atoms, _exact_cdf(exact)
    samples = empirical.samples
    M = samples.size
    right = np.searchsorted(samples, atoms, side="right") / M
    left = np.searchsorted(samples, atoms, side="left") / M
    cdf_left = np.concatenate([[0.0], cdf[:-1]])
    return float(max(np.max(np.abs(right - cdf)), np.max(np.abs(left - cdf_left))))


def total_variation_distance(exact: OverlapDistribution, empirical: OverlapDistribution) -> float:
    """Half the L1 distance between the exact PMF and empirical atom frequencies."""
    values, counts = np.unique(np.round(empirical.samples, ATOM_DECIMALS), return_counts=True)
    freq = counts / counts.sum()
    atoms = np.round(exact.atoms, ATOM_DECIMALS)
    probs = exact.probs
    pos = np.searchsorted(atoms, values)
    pos_clipped = np.minimum(pos, len(atoms) - 1)
    matched = atoms[pos_clipped] == values
    diff = np.abs(freq[matched] - probs[pos_clipped[matched]]).sum() + freq[~matched].sum()
    unmatched_mass = probs.sum() - probs[pos_clipped[matched]].sum()
    return float(0.5 * (diff + unmatched_mass))
