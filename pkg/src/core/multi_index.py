"""
Multi-indices over coordinate ids

A MultiIndex is an exponent vector alpha in N^N. It indexes moments
E[X^alpha], joint cumulants kappa_alpha and Hermite polynomials H_alpha.
Factorials and binomials are exact Python integers.
"""

import math
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement, product
from typing import Iterable, Iterator, List, Sequence, Tuple


@dataclass(frozen=True, order=True)
class MultiIndex:
    """Exponent vector with exact combinatorics."""

    exponents: Tuple[int, ...]

    def __post_init__(self):
        if any(e < 0 for e in self.exponents):
            raise ValueError(f"exponents must be nonnegative: {self.exponents}")

    @classmethod
    def zeros(cls, dim: int) -> "MultiIndex":
        return cls((0,) * dim)

    @classmethod
    def unit(cls, dim: int, i: int, power: int = 1) -> "MultiIndex":
        exps = [0] * dim
        exps[i] = power
        return cls(tuple(exps))

    @classmethod
    def from_multiset(cls, ids: Iterable[int], dim: int) -> "MultiIndex":
        """Count coordinate ids: (0, 0, 2) over dim 3 -> (2, 0, 1)."""
        exps = [0] * dim
        for i in ids:
            exps[i] += 1
        return cls(tuple(exps))

    @property
    def dim(self) -> int:
        return len(self.exponents)

    @property
    def degree(self) -> int:
        """|alpha|."""
        return sum(self.exponents)

    @property
    def factorial(self) -> int:
        """alpha! as an exact integer."""
        return math.prod(math.factorial(e) for e in self.exponents)

    def support(self) -> Tuple[int, ...]:
        return tuple(i for i, e in enumerate(self.exponents) if e)

    def to_multiset(self) -> Tuple[int, ...]:
        """Coordinate ids with repetition, ascending."""
        return tuple(i for i, e in enumerate(self.exponents) for _ in range(e))

    def as_sorted_pairs(self) -> Tuple[Tuple[int, int], ...]:
        return tuple((i, e) for i, e in enumerate(self.exponents) if e)

    def dominates(self, other: "MultiIndex") -> bool:
        """Componentwise other <= self."""
        return all(b <= a for a, b in zip(self.exponents, other.exponents))

    def binomial(self, other: "MultiIndex") -> int:
        """prod_i C(alpha_i, gamma_i); zero unless gamma <= alpha."""
        return math.prod(math.comb(a, g) for a, g in zip(self.exponents, other.exponents))

    def __add__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a + b for a, b in zip(self.exponents, other.exponents)))

    def __sub__(self, other: "MultiIndex") -> "MultiIndex":
        return MultiIndex(tuple(a - b for a, b in zip(self.exponents, other.exponents)))

    def monomial(self, x: Sequence[float]) -> float:
        """x^alpha."""
        return math.prod(float(x[i]) ** e for i, e in self.as_sorted_pairs())

    def sub_indices(self) -> Iterator["MultiIndex"]:
        """All gamma <= alpha."""
        for exps in product(*(range(e + 1) for e in self.exponents)):
            yield MultiIndex(exps)

    def __str__(self) -> str:
        return ";".join(f"{i}:{e}" for i, e in self.as_sorted_pairs()) or "0"


def count_multi_indices(dim: int, max_degree: int) -> int:
    """Number of alpha in N^dim with |alpha| <= max_degree."""
    return math.comb(dim + max_degree, max_degree)


def multi_indices_of_degree(dim: int, degree: int) -> List[MultiIndex]:
    """All alpha with |alpha| == degree, in lexicographic order of their multisets."""
    return [MultiIndex.from_multiset(ids, dim) for ids in combinations_with_replacement(range(dim), degree)]


@lru_cache(maxsize=64)
def graded_multi_indices(dim: int, max_degree: int) -> Tuple[MultiIndex, ...]:
    """Graded-lex ordered alpha with |alpha| <= max_degree, starting with the empty index."""
    out: List[MultiIndex] = []
    for degree in range(max_degree + 1):
        out.extend(multi_indices_of_degree(dim, degree))
    return tuple(out)
