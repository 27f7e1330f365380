"""
Franz-Parisi potentials

The annealed potential satisfies  lambda q + F_ann(q) = -log P(<X,X'> = q),
so its value and (discrete) derivative come straight from the overlap law.
The quenched potential of the truncated sparse 3-tensor model is estimated
by averaging over (v, Z) replicas an inner sum that is enumerated exactly.
"""

import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations, product
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy.special import gammaln, logsumexp

from ..config import settings
from .exceptions import BudgetExceededError, DomainError
from .overlap import (
    ClusteringOverlapFamily,
    OverlapDistribution,
    SpeedFunction,
    analytic_log_density_derivative,
    discrete_log_pmf_diff,
    quantile,
)
from .priors import TruncatedSparseTensor3Prior
from .rng import RngStream, as_stream, parallel_map

logger = logging.getLogger(__name__)

MAX_QUENCHED_N = 24
MAX_QUENCHED_K = 5
PAIR_CHUNK = 4096


def _log_mass(dist: OverlapDistribution, q: float) -> float:
    if dist.mode == "exact_pmf":
        lp = dist.log_pmf_at(q)
        if not math.isfinite(lp):
            raise DomainError(f"overlap value {q} has zero mass")
        return lp
    if dist.mode == "analytic_density":
        return dist.family.log_density(q)
    raise DomainError("the annealed potential needs an exact or analytic overlap law")


def annealed_fp(dist: OverlapDistribution, lam: float, q: float) -> float:
    """F_ann(q) = -lambda q - log P(q) (or log f(q) for densities)."""
    return -lam * q - _log_mass(dist, q)


def annealed_fp_direct(dist: OverlapDistribution, lam: float, q: float) -> float:
    """-log E[1{A = q} e^(lambda A)], evaluated from the tilted atom masses."""
    dist._require("exact_pmf")
    hit = np.isclose(dist.atoms, q, rtol=1e-12, atol=1e-12)
    if not hit.any():
        raise DomainError(f"overlap value {q} has zero mass")
    return -float(logsumexp(dist.log_probs[hit] + lam * dist.atoms[hit]))


def fp_identity_residual(dist: OverlapDistribution, lams: Sequence[float]) -> float:
    """max over atoms and lambdas of |lambda q + F_ann(q) + log P(q)|."""
    worst = 0.0
    for lam in lams:
        for q, lp in zip(dist.atoms, dist.log_probs):
            worst = max(worst, abs(lam * q + annealed_fp_direct(dist, lam, q) + lp))
    return worst


@dataclass(frozen=True)
class FpDerivative:
    """
    At q = q(D): value = lambda + dF/dq = -d log P, fp_derivative = dF/dq.
    sign is "hard" for a nondecreasing potential and "easy" otherwise.
    """

    q: float
    value: float
    fp_derivative: float
    sign: str
    step: Optional[float] = None
    stderr: float = 0.0


def _classify(fp_derivative: float) -> str:
    return "hard" if fp_derivative >= 0 else "easy"


def fp_derivative_at_quantile(
    dist: OverlapDistribution,
    lam: float,
    D: float,
    speed: Optional[SpeedFunction] = None,
    family=None,
    rng_state=None,
    samples: Optional[int] = None,
) -> FpDerivative:
    """
    FP (discrete) derivative at q(D).

    Args:
        dist: Overlap law
        lam: Signal-to-noise ratio
        D: Degree parameter
        speed: Step function, required for exact PMFs
        family: ClusteringOverlapFamily for kernel-estimated derivatives
        rng_state: Stream for the kernel estimate

    Returns:
        FpDerivative at q(D)
    """
    q = quantile(dist, D)
    if dist.mode == "exact_pmf":
        if speed is None:
            raise DomainError("a speed function is required for discrete overlap laws")
        value = -discrete_log_pmf_diff(dist, q, speed)
        return FpDerivative(q, value, value - lam, _classify(value - lam), step=speed(q))
    if dist.mode == "analytic_density":
        value = -dist.family.log_density_derivative(q)
        return FpDerivative(q, value, value - lam, _classify(value - lam))
    if isinstance(family, ClusteringOverlapFamily):
        est = analytic_log_density_derivative(family, q, samples, rng_state)
        return FpDerivative(q, -est.value, -est.value - lam, _classify(-est.value - lam), est.step, est.stderr)
    raise DomainError("empirical overlap laws need a density family for the derivative")


def fp_curve(
    dist: OverlapDistribution,
    lam: float,
    D_max: float,
    speed: Optional[SpeedFunction] = None,
    grid: Optional[Sequence[float]] = None,
    points: int = 64,
) -> pd.DataFrame:
    """
    Table (q, F_ann, derivative_or_diff, sign) over an overlap grid.

    The default grid is every nonnegative atom up to q(D_max) for exact laws
    and `points` log-spaced points up to q(D_max) for densities.
    """
    q_max = quantile(dist, D_max)
    if grid is None:
        if dist.mode == "exact_pmf":
            grid = dist.atoms[(dist.atoms >= 0) & (dist.atoms <= q_max)]
        else:
            grid = np.geomspace(q_max / 100.0, q_max, points)

    rows = []
    for q in grid:
        q = float(q)
        try:
            f = annealed_fp(dist, lam, q)
        except DomainError:
            continue
        diff = math.nan
        try:
            if dist.mode == "exact_pmf" and speed is not None:
                diff = -lam - discrete_log_pmf_diff(dist, q, speed)
            elif dist.mode == "analytic_density":
                diff = -lam - dist.family.log_density_derivative(q)
        except DomainError:
            pass
        sign = "" if math.isnan(diff) else _classify(diff)
        rows.append({"q": q, "F_ann": f, "derivative_or_diff": diff, "sign": sign})
    logger.debug(f"FP curve at lambda={lam}: {len(rows)} grid points up to q={q_max}")
    return pd.DataFrame(rows, columns=["q", "F_ann", "derivative_or_diff", "sign"])


# ========== Quenched potential (truncated sparse 3-tensor) ==========


@dataclass(frozen=True)
class QuenchedEstimate:
    q: float
    q_prime: int
    value: float
    stderr: float
    replicas: int
    inner_size: int
    exact: bool = True


@dataclass(frozen=True)
class QuenchedDifference:
    """Paired estimate of F(q'^3) - F(0) on common (v, Z) replicas."""

    q_prime: int
    value: float
    stderr: float
    replicas: int


@dataclass(frozen=True)
class GammaCurveEstimate:
    q_prime: int
    m: int
    value: float
    count: int


@dataclass(frozen=True)
class OverlapStratum:
    """
    v' with m nonzero +-1 entries, j of them on the support of v, and `agree`
    of those j carrying the sign of v. Every such v' has <v, v'> = 2 agree - j.
    """

    m: int
    j: int
    agree: int
    count: int


def overlap_strata(n: int, t: int, q_prime: int, m: int) -> List[OverlapStratum]:
    """Nonempty strata of {v' : ||v'||_0 = m, <v, v'> = q'} for a v with t nonzeros."""
    if not (0 <= t <= n and 0 <= m <= n):
        raise DomainError(f"need 0 <= t, m <= n, got n={n}, t={t}, m={m}")
    out = []
    for j in range(abs(q_prime), min(t, m) + 1):
        if (j + q_prime) % 2 or m - j > n - t:
            continue
        agree = (j + q_prime) // 2
        count = math.comb(t, j) * math.comb(j, agree) * math.comb(n - t, m - j) * 2 ** (m - j)
        out.append(OverlapStratum(m, j, agree, count))
    return out


def overlap_class_size(n: int, k: int, q_prime: int, m: int) -> int:
    """
    Number of v' with m nonzero +-1 entries and <v, v'> = q', for any v with
    k nonzero +-1 entries.

    Sums over the size j of the shared support: C(k, j) C(j, (j + q')/2)
    sign choices on it times C(n - k, m - j) 2^(m - j) outside.
    """
    if not (0 <= k <= n and 0 <= m <= n):
        raise DomainError(f"need 0 <= k, m <= n, got n={n}, k={k}, m={m}")
    return sum(s.count for s in overlap_strata(n, k, q_prime, m))


def _index_rows(items: Sequence[Tuple[int, ...]], width: int, dtype=np.int64) -> np.ndarray:
    return np.array(items, dtype=dtype).reshape(len(items), width)


@lru_cache(maxsize=64)
def _combos(size: int, r: int) -> np.ndarray:
    return _index_rows(list(combinations(range(size), r)), r)


@lru_cache(maxsize=32)
def _sign_patterns(m: int) -> np.ndarray:
    return _index_rows(list(product((-1.0, 1.0), repeat=m)), m, float)


def iter_stratum(v: np.ndarray, stratum: OverlapStratum) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """
    Members of a stratum in blocks of paired (supports, signs) rows, each of
    shape (rows, m). Column order within a row is not sorted.
    """
    inside, outside = np.flatnonzero(v), np.flatnonzero(v == 0)
    j, m = stratum.j, stratum.m
    agree = _combos(j, stratum.agree)
    flips = -np.ones((len(agree), j))
    np.put_along_axis(flips, agree, 1.0, axis=1)
    out_idx = outside[_combos(outside.size, m - j)]
    out_sig = _sign_patterns(m - j)
    R = len(out_sig)
    step = max(1, PAIR_CHUNK // R)

    for shared in inside[_combos(inside.size, j)]:
        for flip in flips:
            in_sig = v[shared] * flip
            for start in range(0, len(out_idx), step):
                block = out_idx[start : start + step]
                Q = len(block)
                inner = (np.broadcast_to(shared, (Q, R, j)), np.broadcast_to(in_sig, (Q, R, j)))
                outer = (np.broadcast_to(block[:, None, :], (Q, R, m - j)), np.broadcast_to(out_sig, (Q, R, m - j)))
                supports = np.concatenate([inner[0], outer[0]], axis=-1)
                signs = np.concatenate([inner[1], outer[1]], axis=-1)
                yield supports.reshape(-1, m), signs.reshape(-1, m)


def enumerate_stratum(v: np.ndarray, stratum: OverlapStratum) -> Tuple[np.ndarray, np.ndarray]:
    """Every member of a stratum as paired (supports, signs) rows."""
    blocks = list(iter_stratum(v, stratum))
    if not blocks:
        return np.empty((0, stratum.m), dtype=np.int64), np.empty((0, stratum.m))
    return np.concatenate([b[0] for b in blocks]), np.concatenate([b[1] for b in blocks])


def sample_stratum(
    v: np.ndarray, stratum: OverlapStratum, size: int, gen: np.random.Generator
) -> Tuple[np.ndarray, np.ndarray]:
    """`size` uniform draws (with replacement) from a stratum."""
    inside, outside = np.flatnonzero(v), np.flatnonzero(v == 0)
    j, m = stratum.j, stratum.m
    # a uniform ordering of the support: the first j coordinates are shared, the first `agree` keep v's sign
    shared = inside[np.argsort(gen.random((size, inside.size)), axis=1)[:, :j]]
    in_sig = v[shared] * np.where(np.arange(j) < stratum.agree, 1.0, -1.0)
    extra = outside[np.argsort(gen.random((size, outside.size)), axis=1)[:, : m - j]]
    out_sig = gen.choice((-1.0, 1.0), size=(size, m - j))
    return np.concatenate([shared, extra], axis=1), np.concatenate([in_sig, out_sig], axis=1)


def _cubic_forms(Z: np.ndarray, supports: np.ndarray, signs: np.ndarray) -> np.ndarray:
    """<Z, v'^{(x)3}> for paired rows of supports (P, m) and signs (P, m)."""
    out = np.empty(len(supports))
    for start in range(0, len(supports), PAIR_CHUNK):
        S = supports[start : start + PAIR_CHUNK]
        sig = signs[start : start + PAIR_CHUNK]
        sub = Z[S[:, :, None, None], S[:, None, :, None], S[:, None, None, :]]
        out[start : start + PAIR_CHUNK] = np.einsum("pabc,pa,pb,pc->p", sub, sig, sig, sig)
    return out


def _stratum_cost(count: int) -> int:
    return count if count <= settings.QUENCHED_STRATUM_EXACT else settings.QUENCHED_STRATUM_SAMPLES


def quenched_candidate_count(prior: TruncatedSparseTensor3Prior, q_primes: Sequence[int] = (0,)) -> Tuple[int, bool]:
    """
    Worst case over the replica sparsity t of the v' evaluated per replica,
    and whether every stratum is then enumerated exactly.
    """
    sizes = sorted({int(m) for m in prior.band_sizes} | {prior.k})
    worst, exact = 0, True
    for t in sizes:
        work = 0
        for qp in q_primes:
            for m in prior.band_sizes:
                for s in overlap_strata(prior.n, t, int(qp), int(m)):
                    work += _stratum_cost(s.count)
                    exact = exact and s.count <= settings.QUENCHED_STRATUM_EXACT
        worst = max(worst, work)
    return worst, exact


def _check_quenched(prior: TruncatedSparseTensor3Prior, q_primes: Sequence[int], budget: Optional[int]):
    if not isinstance(prior, TruncatedSparseTensor3Prior):
        raise DomainError("the quenched potential is implemented for the truncated sparse 3-tensor prior only")
    if prior.n > MAX_QUENCHED_N or prior.k > MAX_QUENCHED_K:
        detail = f"requires n <= {MAX_QUENCHED_N} and k <= {MAX_QUENCHED_K}, got k={prior.k}"
        raise BudgetExceededError("quenched size", prior.n, MAX_QUENCHED_N, detail)
    work, exact = quenched_candidate_count(prior, q_primes)
    limit = budget or settings.QUENCHED_ENUM_BUDGET
    if work > limit:
        raise BudgetExceededError("quenched enumeration", work, limit)
    return work, exact


def _inner_log_sums(
    prior: TruncatedSparseTensor3Prior,
    lam: float,
    v: np.ndarray,
    Z: Optional[np.ndarray],
    q_primes: Sequence[int],
    gen: Optional[np.random.Generator] = None,
) -> Dict[int, float]:
    """
    log sum over v' with <v, v'> = q' of
    w(v') exp(lambda q'^3 + sqrt(lambda) <Z, v'^{(x)3}> - lambda m'^3 / 2).

    Strata up to QUENCHED_STRATUM_EXACT members are enumerated; larger ones
    contribute count * (sample mean). At lambda = 0 every stratum is its
    count times the common weight.
    """
    n = prior.n
    log_half_rho = math.log(prior.rho / 2.0)
    log_off = math.log1p(-prior.rho) if prior.rho < 1 else -math.inf
    root = math.sqrt(lam)
    t = int(np.count_nonzero(v))
    indicator = prior.indicator()
    out = {}

    for qp in q_primes:
        qp = int(qp)
        parts: List[float] = []
        for m in prior.band_sizes:
            m = int(m)
            base = m * log_half_rho + ((n - m) * log_off if n > m else 0.0) + lam * qp**3 - lam * m**3 / 2.0
            for s in overlap_strata(n, t, qp, m):
                if lam == 0:
                    parts.append(base + math.log(s.count))
                elif s.count <= settings.QUENCHED_STRATUM_EXACT:
                    supports, signs = enumerate_stratum(v, s)
                    parts.append(base + float(logsumexp(root * _cubic_forms(Z, supports, signs))))
                else:
                    size = settings.QUENCHED_STRATUM_SAMPLES
                    supports, signs = sample_stratum(v, s, size, gen)
                    tilt = float(logsumexp(root * _cubic_forms(Z, supports, signs))) - math.log(size)
                    parts.append(base + math.log(s.count) + tilt)
        # 1_[k] carries the out-of-band mass on top of its in-band weight
        if prior.p_out > 0 and math.isclose(float(v @ indicator), qp):
            cubic = _cubic_forms(Z, np.arange(prior.k)[None, :], np.ones((1, prior.k)))[0] if lam > 0 else 0.0
            parts.append(math.log(prior.p_out) + lam * qp**3 + root * cubic - lam * prior.k**3 / 2.0)
        if not parts:
            raise DomainError(f"no candidate v' has overlap {qp} with the replica signal")
        out[qp] = float(logsumexp(parts))
    return out


def _replica(prior, lam, q_primes, stream: RngStream) -> Dict[int, float]:
    gen = stream.generator()
    v = prior.sample_latents(gen, 1)[0]
    Z = gen.standard_normal((prior.n,) * 3)
    inner = stream.child("strata").generator()
    return {qp: -value for qp, value in _inner_log_sums(prior, lam, v, Z, q_primes, inner).items()}


def _run_replicas(prior, lam, q_primes, replicas, rng_state, threads, budget):
    if replicas < 2:
        raise DomainError("at least 2 outer replicas are needed for a standard error")
    work, exact = _check_quenched(prior, q_primes, budget)
    stream = as_stream(rng_state)
    results = parallel_map(lambda s: _replica(prior, lam, q_primes, s), stream.spawn(replicas), threads)
    logger.info(
        f"Quenched FP: {replicas} replicas x <= {work} candidates at lambda={lam}"
        f"{'' if exact else ' (large strata sampled)'}"
    )
    return results, work, exact


def quenched_fp_mc(
    prior: TruncatedSparseTensor3Prior,
    lam: float,
    q_prime: int,
    outer_replicas: int,
    rng_state,
    threads: Optional[int] = None,
    budget: Optional[int] = None,
) -> QuenchedEstimate:
    """
    Monte-Carlo quenched FP potential at q = q'^3.

    The outer (v, Z) average is sampled. The inner restricted posterior mass
    is summed stratum by stratum over the overlap class; strata above
    QUENCHED_STRATUM_EXACT members are sampled uniformly and weighted by
    their exact size, which `exact` reports.
    """
    results, work, exact = _run_replicas(prior, lam, [q_prime], outer_replicas, rng_state, threads, budget)
    values = np.array([r[q_prime] for r in results])
    return QuenchedEstimate(
        q=float(q_prime**3),
        q_prime=q_prime,
        value=float(values.mean()),
        stderr=float(values.std(ddof=1) / math.sqrt(outer_replicas)),
        replicas=outer_replicas,
        inner_size=work,
        exact=exact or lam == 0,
    )


def quenched_fp_difference(
    prior: TruncatedSparseTensor3Prior,
    lam: float,
    q_prime: int,
    outer_replicas: int,
    rng_state,
    threads: Optional[int] = None,
    budget: Optional[int] = None,
) -> QuenchedDifference:
    """F(q'^3) - F(0) with both potentials evaluated on the same replicas."""
    results, _, _ = _run_replicas(prior, lam, sorted({0, q_prime}), outer_replicas, rng_state, threads, budget)
    diffs = np.array([r[q_prime] - r[0] for r in results])
    return QuenchedDifference(
        q_prime, float(diffs.mean()), float(diffs.std(ddof=1) / math.sqrt(outer_replicas)), outer_replicas
    )


def conditional_overlap_log_prob(prior: TruncatedSparseTensor3Prior, v: np.ndarray, q_prime: int) -> float:
    """log P(<v, v'> = q' | v) under the truncated prior, from the stratum counts."""
    return _inner_log_sums(prior, 0.0, np.asarray(v, dtype=float), None, [q_prime])[q_prime]


def gamma_max(v: np.ndarray, Z: np.ndarray, q_prime: int, m: int, budget: Optional[int] = None) -> GammaCurveEstimate:
    """
    Gamma(q', m) = max <vec(v'^{(x)3}), Z> over v' with m nonzero +-1 entries
    and <v, v'> = q'.
    """
    v = np.asarray(v, dtype=float)
    strata = overlap_strata(v.size, int(np.count_nonzero(v)), q_prime, m)
    count = sum(s.count for s in strata)
    limit = budget or settings.GAMMA_ENUM_BUDGET
    if count > limit:
        raise BudgetExceededError("gamma enumeration", count, limit)
    if count == 0:
        raise DomainError(f"no v' with {m} nonzeros has overlap {q_prime}")

    best = -math.inf
    for s in strata:
        for supports, signs in iter_stratum(v, s):
            best = max(best, float(_cubic_forms(Z, supports, signs).max()))
    return GammaCurveEstimate(q_prime, m, best, count)


def gamma_lower_threshold(n: int, m: int, A: float) -> float:
    """sqrt(m^3) sqrt(2 log C(n, m) - log(m log(n/m)) - A)."""
    if not 1 <= m < n:
        raise DomainError(f"need 1 <= m < n, got n={n}, m={m}")
    log_binom = gammaln(n + 1) - gammaln(m + 1) - gammaln(n - m + 1)
    inside = 2.0 * log_binom - math.log(m * math.log(n / m)) - A
    if inside < 0:
        raise DomainError(f"threshold undefined for n={n}, m={m}, A={A}")
    return math.sqrt(m**3) * math.sqrt(inside)
