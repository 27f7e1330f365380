"""
Joint cumulant engine

Joint cumulants kappa_alpha from exact moment oracles by the set-partition
formula and by the first-variable recursion, with the diagonal-slice and
product-copy (kappa tilde) identities, nonnegativity checks for product
priors and the cumulant upper bound on the degree-D correlation.
"""

import logging
import math
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Callable, Dict, Hashable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sympy.utilities.iterables import multiset_partitions

from ..config import settings
from .exceptions import BudgetExceededError, DegreeCapError, DomainError
from .multi_index import MultiIndex, count_multi_indices, graded_multi_indices, multi_indices_of_degree
from .priors import PriorModel, TensorPrior

logger = logging.getLogger(__name__)

Vars = Tuple[int, ...]


class MomentOracle:
    """
    alpha -> E[X^alpha] with a declared degree cap and exactness flag.

    Answers are cached on a canonical key so symmetric queries are computed once.
    """

    def __init__(
        self,
        fn: Callable[[MultiIndex], float],
        dim: int,
        max_degree: int,
        exact: bool = True,
        key: Optional[Callable[[MultiIndex], Hashable]] = None,
    ):
        self._fn = fn
        self._key = key or (lambda alpha: alpha.exponents)
        self.dim = dim
        self.max_degree = max_degree
        self.exact = exact
        self._cache: Dict[Hashable, float] = {}
        self._lock = threading.Lock()

    def __call__(self, alpha: MultiIndex) -> float:
        if alpha.degree > self.max_degree:
            raise DegreeCapError(alpha.degree, self.max_degree)
        if alpha.degree == 0:
            return 1.0
        key = self._key(alpha)
        value = self._cache.get(key)
        if value is None:
            value = float(self._fn(alpha))
            with self._lock:
                self._cache[key] = value
        return value

    def of_vars(self, variables: Sequence[int]) -> float:
        """E[prod_j X_{variables[j]}]."""
        return self(MultiIndex.from_multiset(variables, self.dim))

    @classmethod
    def from_prior(cls, prior: PriorModel, cap: Optional[int] = None) -> "MomentOracle":
        cap = settings.MOMENT_DEGREE_CAP if cap is None else cap
        return cls(
            lambda alpha: prior.moment(alpha, cap), prior.ambient_dim, cap, prior.has_exact_moments, prior.moment_key
        )

    @classmethod
    def univariate(cls, moment: Callable[[int], float], max_degree: int, exact: bool = True) -> "MomentOracle":
        return cls(lambda alpha: moment(alpha.degree), 1, max_degree, exact, key=lambda alpha: alpha.degree)

    def product_copy(self) -> "MomentOracle":
        """Oracle of the products X_i X'_i with X' an independent copy: alpha -> (E X^alpha)^2."""
        return MomentOracle(lambda alpha: self(alpha) ** 2, self.dim, self.max_degree, self.exact, self._key)

    def sum_oracle(self) -> "MomentOracle":
        """Oracle of S = sum_i X_i: E S^j = sum_{|gamma| = j} (j! / gamma!) E X^gamma."""

        def moment(j: int) -> float:
            return math.fsum(
                math.factorial(j) // gamma.factorial * self(gamma) for gamma in multi_indices_of_degree(self.dim, j)
            )

        return MomentOracle.univariate(moment, self.max_degree, self.exact)


@lru_cache(maxsize=None)
def set_partitions(m: int) -> Tuple[Tuple[Tuple[int, ...], ...], ...]:
    """All set partitions of {0, ..., m-1}."""
    return tuple(tuple(tuple(block) for block in p) for p in multiset_partitions(list(range(m))))


class CumulantEngine:
    """Joint cumulants over one moment oracle, memoized on sorted variable multisets."""

    def __init__(self, oracle: MomentOracle):
        self.oracle = oracle
        self._memo: Dict[Vars, float] = {}

    def _check(self, variables: Sequence[int]) -> Vars:
        if not variables:
            raise DomainError("a cumulant needs at least one variable")
        if len(variables) > self.oracle.max_degree:
            raise DegreeCapError(len(variables), self.oracle.max_degree)
        return tuple(sorted(variables))

    def partition(self, variables: Sequence[int]) -> float:
        """sum_pi (|pi| - 1)! (-1)^(|pi| - 1) prod_B E[X_B]."""
        variables = self._check(variables)
        m = len(variables)
        if m > settings.PARTITION_MAX_VARS:
            raise BudgetExceededError("partition enumeration", m, settings.PARTITION_MAX_VARS, "variables")
        terms = []
        for pi in set_partitions(m):
            blocks = len(pi)
            coef = math.factorial(blocks - 1) * (-1) ** (blocks - 1)
            terms.append(coef * math.prod(self.oracle.of_vars([variables[i] for i in b]) for b in pi))
        return math.fsum(terms)

    def recursive(self, variables: Sequence[int]) -> float:
        """kappa(all) = E[all] - sum_{S proper subset of rest} kappa(first, S) E[rest \\ S]."""
        variables = self._check(variables)
        cached = self._memo.get(variables)
        if cached is not None:
            return cached
        first, rest = variables[0], variables[1:]
        terms = [self.oracle.of_vars(variables)]
        positions = range(len(rest))
        for size in range(len(rest)):
            for chosen in combinations(positions, size):
                inside = [rest[i] for i in chosen]
                outside = [rest[i] for i in positions if i not in chosen]
                terms.append(-self.recursive([first] + inside) * self.oracle.of_vars(outside))
        value = math.fsum(terms)
        self._memo[variables] = value
        return value

    def kappa(self, alpha: MultiIndex, method: str = "recursive") -> float:
        variables = alpha.to_multiset()
        return self.partition(variables) if method == "partition" else self.recursive(variables)


def cumulant_partition(oracle: MomentOracle, variables: Sequence[int]) -> float:
    return CumulantEngine(oracle).partition(variables)


def cumulant_recursive(oracle: MomentOracle, variables: Sequence[int]) -> float:
    return CumulantEngine(oracle).recursive(variables)


def diagonal_slice_check(oracle: MomentOracle, m: int) -> float:
    """|kappa_m(sum_i X_i) / m! - sum_{|gamma| = m} kappa_gamma / gamma!|."""
    if m > 6 or oracle.dim > 4:
        raise BudgetExceededError("diagonal slice", max(m, oracle.dim), 6, "requires m <= 6 and N <= 4")
    lhs = CumulantEngine(oracle.sum_oracle()).partition((0,) * m) / math.factorial(m)
    engine = CumulantEngine(oracle)
    rhs = math.fsum(engine.partition(g.to_multiset()) / g.factorial for g in multi_indices_of_degree(oracle.dim, m))
    return abs(lhs - rhs)


def ktilde(oracle: MomentOracle, alpha: MultiIndex) -> float:
    """kappa_alpha of the coordinate products X_i X'_i for an independent copy X'."""
    if alpha.degree > 5:
        raise BudgetExceededError("ktilde degree", alpha.degree, 5)
    return CumulantEngine(oracle.product_copy()).kappa(alpha, "partition")


# ========== Correlation upper bound ==========


@dataclass
class CumulantBound:
    """sum_i sum_{|alpha| <= D} lambda^|alpha| kappa(X_i, X^alpha)^2 / alpha!."""

    value: float
    per_degree: List[float]
    lam: float
    D: int
    factorized: bool
    terms: int = 0


def _univariate_cumulants(law_moment: Callable[[int], float], order: int) -> List[float]:
    engine = CumulantEngine(MomentOracle.univariate(law_moment, order))
    return [engine.recursive((0,) * j) for j in range(1, order + 1)]


def sw_corr_upper_bound(prior: PriorModel, lam: float, D: int, budget: Optional[int] = None) -> CumulantBound:
    """
    Cumulant upper bound on the squared degree-D correlation.

    Product priors with r = 1 use the factorized form
    N sum_{a <= D} lambda^a kappa_{a+1}(v)^2 / a!, since joint cumulants
    across independent coordinates vanish.
    """
    if not prior.has_exact_moments:
        raise DomainError("the cumulant bound needs an exact moment oracle")
    if lam < 0 or D < 0:
        raise DomainError(f"need lambda >= 0 and D >= 0, got {lam}, {D}")

    if isinstance(prior, TensorPrior) and prior.r == 1:
        kappas = _univariate_cumulants(prior.law.moment, D + 1)
        per_degree = [prior.n * lam**a * kappas[a] ** 2 / math.factorial(a) for a in range(D + 1)]
        return CumulantBound(math.fsum(per_degree), per_degree, lam, D, True, prior.n * (D + 1))

    N = prior.ambient_dim
    terms = N * count_multi_indices(N, D)
    limit = budget or settings.SW_ENUM_BUDGET
    if terms > limit:
        raise BudgetExceededError("cumulant enumeration", terms, limit)
    engine = CumulantEngine(MomentOracle.from_prior(prior, max(D + 1, 1)))
    per_degree = [[] for _ in range(D + 1)]
    for alpha in graded_multi_indices(N, D):
        base = alpha.to_multiset()
        scale = lam**alpha.degree / alpha.factorial
        for i in range(N):
            per_degree[alpha.degree].append(scale * engine.recursive((i,) + base) ** 2)
    sums = [math.fsum(d) for d in per_degree]
    logger.debug(f"Cumulant bound over {terms} terms: {sums}")
    return CumulantBound(math.fsum(sums), sums, lam, D, False, terms)


# ========== Prior-class checks ==========


@dataclass
class NonnegReport:
    min_kappa: float
    argmin: str
    coverage: int
    moments_nonneg: Optional[bool] = None
    min_base_moment: Optional[float] = None
    supermultiplicative_rho: Optional[float] = None
    base_cumulant_signs: Dict[int, int] = field(default_factory=dict)


def _base_moment_fn(prior: PriorModel) -> Optional[Callable[[int], float]]:
    if isinstance(prior, TensorPrior):
        return prior.law.moment
    return None


def check_low_order_nonneg(prior: PriorModel, D: int) -> NonnegReport:
    """
    Smallest joint cumulant with 1 <= |alpha| <= D, plus base-law class checks:
    nonnegative moments, the supermultiplicative ratio
    rho = max E v^j E v^t / E v^(j+t), and base cumulant signs.
    """
    N = prior.ambient_dim
    if N > 4 or D > 4:
        raise BudgetExceededError("nonnegativity check", max(N, D), 4, "requires N <= 4 and D <= 4")
    engine = CumulantEngine(MomentOracle.from_prior(prior, D))
    best, where, count = math.inf, "", 0
    for alpha in graded_multi_indices(N, D)[1:]:
        value = engine.kappa(alpha, "partition")
        count += 1
        if value < best:
            best, where = value, str(alpha)
    report = NonnegReport(best, where, count)

    law_moment = _base_moment_fn(prior)
    if law_moment is None:
        return report
    moments = [law_moment(j) for j in range(2 * D + 1)]
    report.min_base_moment = min(moments[1:])
    report.moments_nonneg = report.min_base_moment >= -1e-12
    ratios = [
        moments[j] * moments[t] / moments[j + t]
        for j in range(1, D + 1)
        for t in range(1, D + 1)
        if abs(moments[j + t]) > 1e-300
    ]
    report.supermultiplicative_rho = max(ratios) if ratios else None
    kappas = _univariate_cumulants(law_moment, D)
    report.base_cumulant_signs = {j + 1: int(np.sign(round(k, 12))) for j, k in enumerate(kappas)}
    return report


def cumulant_table(prior: PriorModel, D: int, method: str = "recursive") -> pd.DataFrame:
    """(alpha_as_sorted_pairs, kappa, kappa_squared_over_factorial) for 1 <= |alpha| <= D."""
    N = prior.ambient_dim
    count = count_multi_indices(N, D)
    if count > settings.SW_ENUM_BUDGET:
        raise BudgetExceededError("cumulant table", count, settings.SW_ENUM_BUDGET)
    engine = CumulantEngine(MomentOracle.from_prior(prior, D))
    rows = []
    for alpha in graded_multi_indices(N, D)[1:]:
        k = engine.kappa(alpha, method)
        rows.append(
            {"alpha_as_sorted_pairs": str(alpha), "kappa": k, "kappa_squared_over_factorial": k * k / alpha.factorial}
        )
    return pd.DataFrame(rows)
