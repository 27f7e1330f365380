"""
Exact low-degree correlation and MMSE for finite-support priors

For Y = sqrt(lambda) X + Z the moments E[Y^alpha Y^beta] and E[Y^alpha X_i]
are finite sums over prior atoms of products of shifted-Gaussian monomial
moments. The optimal degree-D projection solves the normal equations
G c = b; Corr_i^2 = b_i^T G^+ b_i.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..config import settings
from .exceptions import BudgetExceededError, DomainError, NumericalError
from .multi_index import MultiIndex, count_multi_indices, graded_multi_indices
from .priors import GamInstance, PriorModel, TensorPrior, sample_observations
from .rng import as_generator, parallel_map

logger = logging.getLogger(__name__)

ATOM_BLOCK_ELEMENTS = 4_000_000
PAIR_BUDGET = 50_000_000


def _gaussian_moment_table(mu: np.ndarray, max_power: int) -> np.ndarray:
    """m[..., p] = E[(mu + Z)^p] via m_p = mu m_{p-1} + (p-1) m_{p-2}."""
    mu = np.asarray(mu, dtype=float)
    out = np.empty(mu.shape + (max_power + 1,))
    out[..., 0] = 1.0
    if max_power >= 1:
        out[..., 1] = mu
    for p in range(2, max_power + 1):
        out[..., p] = mu * out[..., p - 1] + (p - 1) * out[..., p - 2]
    return out


def shifted_gaussian_monomial_moment(mu: Sequence[float], e: MultiIndex) -> float:
    """E[(mu + Z)^e] for Z ~ N(0, I)."""
    mu = np.asarray(mu, dtype=float)
    if mu.size != e.dim:
        raise DomainError(f"mu has length {mu.size}, e has length {e.dim}")
    cap = 2 * settings.MOMENT_DEGREE_CAP
    if e.degree > cap:
        raise BudgetExceededError("shifted moment degree", e.degree, cap)
    return math.prod(float(_gaussian_moment_table(mu[i], p)[p]) for i, p in e.as_sorted_pairs())


class MonomialBasis:
    """Graded-lex monomials Y^alpha with |alpha| <= D, constant first."""

    def __init__(self, dim: int, max_degree: int, budget: Optional[int] = None):
        budget = budget or settings.BASIS_BUDGET
        size = count_multi_indices(dim, max_degree)
        if size > budget:
            raise BudgetExceededError("basis", size, budget, f"C({dim}+{max_degree}, {max_degree}) monomials")
        self.dim = dim
        self.max_degree = max_degree
        self.indices: Tuple[MultiIndex, ...] = graded_multi_indices(dim, max_degree)
        self.exponents = np.array([a.exponents for a in self.indices], dtype=np.int64).reshape(len(self), dim)

    def __len__(self) -> int:
        return len(self.indices)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        """Monomial features, shape (M, basis size), for observations (M, dim)."""
        y = np.atleast_2d(np.asarray(y, dtype=float))
        feats = np.ones((y.shape[0], len(self)))
        for j, alpha in enumerate(self.indices):
            for i, p in alpha.as_sorted_pairs():
                feats[:, j] *= y[:, i] ** p
        return feats


def _sparse_rows(exponents: np.ndarray, width: int) -> Tuple[np.ndarray, np.ndarray]:
    """Pad each exponent row to (coords, powers) of fixed width; padding has power 0."""
    coords = np.zeros((len(exponents), max(width, 1)), dtype=np.int64)
    powers = np.zeros_like(coords)
    for row, e in enumerate(exponents):
        nz = np.flatnonzero(e)
        coords[row, : nz.size] = nz
        powers[row, : nz.size] = e[nz]
    return coords, powers


def _atom_monomials(tables: np.ndarray, coords: np.ndarray, powers: np.ndarray) -> np.ndarray:
    """(A, R) matrix of prod_j tables[a, coords[r, j], powers[r, j]]."""
    return np.prod(tables[:, coords, powers], axis=-1)


@dataclass
class GramSystem:
    """G_{alpha beta} = E[Y^alpha Y^beta] and b_{i alpha} = E[Y^alpha X_i]."""

    basis: MonomialBasis
    gram: np.ndarray
    cross: np.ndarray
    eigenvalues: np.ndarray = field(repr=False, default=None)
    eigenvectors: np.ndarray = field(repr=False, default=None)

    def decompose(self) -> None:
        w, v = np.linalg.eigh(self.gram)
        scale = float(np.max(np.abs(w))) if w.size else 0.0
        if w.size and w.min() < -settings.GRAM_NEG_TOL * scale:
            raise NumericalError(f"Gram matrix indefinite: min eigenvalue {w.min():.3e}, norm {scale:.3e}")
        self.eigenvalues, self.eigenvectors = w, v

    @property
    def kept(self) -> np.ndarray:
        w = self.eigenvalues
        return w > settings.PINV_CUTOFF * w.max()

    @property
    def cond_number(self) -> float:
        w = self.eigenvalues[self.kept]
        return float(w.max() / w.min())

    def coefficients(self) -> np.ndarray:
        """G^+ b_i for every coordinate, shape (N, basis size)."""
        v = self.eigenvectors[:, self.kept]
        w = self.eigenvalues[self.kept]
        return ((self.cross @ v) / w) @ v.T

    def corr_sq_per_coord(self) -> np.ndarray:
        proj = self.cross @ self.eigenvectors[:, self.kept]
        return (proj**2 / self.eigenvalues[self.kept]).sum(axis=1)


def build_gram_system(
    atoms: np.ndarray, probs: np.ndarray, lam: float, D: int, threads: Optional[int] = None
) -> GramSystem:
    """Assemble G and b exactly from weighted atoms."""
    atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
    dim = atoms.shape[1]
    basis = MonomialBasis(dim, D)
    B = len(basis)
    if B * B * dim > PAIR_BUDGET:
        raise BudgetExceededError("gram assembly", B * B * dim, PAIR_BUDGET)

    pair_sums = (basis.exponents[:, None, :] + basis.exponents[None, :, :]).reshape(B * B, dim)
    unique_sums, inverse = np.unique(pair_sums, axis=0, return_inverse=True)
    sum_coords, sum_powers = _sparse_rows(unique_sums, 2 * D)
    base_coords, base_powers = _sparse_rows(basis.exponents, D)
    logger.info(f"Gram assembly: {len(probs)} atoms, basis {B}, {len(unique_sums)} distinct moments")

    per_atom = max(len(unique_sums), B) * max(2 * D, 1) * 2
    block = max(1, ATOM_BLOCK_ELEMENTS // per_atom)
    starts = list(range(0, len(probs), block))
    root_lam = math.sqrt(lam)

    def work(start: int) -> Tuple[np.ndarray, np.ndarray]:
        a = atoms[start : start + block]
        p = probs[start : start + block]
        tables = _gaussian_moment_table(root_lam * a, 2 * D)
        moments = p @ _atom_monomials(tables, sum_coords, sum_powers)
        cross = (p[:, None] * a).T @ _atom_monomials(tables, base_coords, base_powers)
        return moments, cross

    parts = parallel_map(work, starts, settings.THREADS if threads is None else threads)
    moments = np.sum([m for m, _ in parts], axis=0)
    cross = np.sum([c for _, c in parts], axis=0)
    gram = moments[inverse.reshape(-1)].reshape(B, B)
    system = GramSystem(basis, 0.5 * (gram + gram.T), cross)
    system.decompose()
    return system


@dataclass
class OracleReport:
    basis_size: int
    cond_number: float
    corr_sq_per_coord: List[float]
    corr_sq_total: float
    mmse: float
    second_moment: float
    factorized: bool = False

    def to_dict(self) -> Dict[str, object]:
        return {
            "basis_size": self.basis_size,
            "cond_number": self.cond_number,
            "corr_sq_per_coord": list(self.corr_sq_per_coord),
            "corr_sq_total": self.corr_sq_total,
            "mmse": self.mmse,
        }


def _factorizable(prior: PriorModel) -> bool:
    return isinstance(prior, TensorPrior) and prior.r == 1 and prior.is_finite()


def oracle_report(
    prior: PriorModel,
    lam: float,
    D: int,
    support_budget: Optional[int] = None,
    threads: Optional[int] = None,
) -> OracleReport:
    """
    Exact degree-D correlation and MMSE.

    Product priors with r = 1 have independent coordinates, so the optimal
    polynomial for X_i depends on Y_i alone and the problem is N copies of a
    one-dimensional oracle.
    """
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    if D < 0:
        raise DomainError(f"D must be nonnegative, got {D}")
    if _factorizable(prior):
        values, weights = prior.law.atoms()
        system = build_gram_system(values[:, None], weights, lam, D, threads)
        per = float(system.corr_sq_per_coord()[0])
        per_coord = [per] * prior.n
        basis_size = len(system.basis)
        factorized = True
    else:
        atoms, probs = prior.support(support_budget)
        system = build_gram_system(atoms, probs, lam, D, threads)
        per_coord = system.corr_sq_per_coord().tolist()
        basis_size = len(system.basis)
        factorized = False

    total = math.fsum(per_coord)
    second = prior.second_moment_total()
    report = OracleReport(
        basis_size=basis_size,
        cond_number=system.cond_number,
        corr_sq_per_coord=per_coord,
        corr_sq_total=total,
        mmse=second - total,
        second_moment=second,
        factorized=factorized,
    )
    logger.info(f"Oracle lambda={lam}, D={D}: corr_sq={total:.6g}, mmse={report.mmse:.6g}")
    return report


def exact_corr_and_mmse(prior: PriorModel, lam: float, D: int, **kwargs) -> Tuple[float, float]:
    report = oracle_report(prior, lam, D, **kwargs)
    return report.corr_sq_total, report.mmse


class OptimalProjection:
    """The oracle's optimal degree-D polynomial f(y) = G^+ b evaluated on y."""

    def __init__(self, gam: GamInstance, D: int, support_budget: Optional[int] = None):
        atoms, probs = gam.prior.support(support_budget)
        self.system = build_gram_system(atoms, probs, gam.snr, D)
        self.coef = self.system.coefficients()

    def __call__(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        out = self.system.basis.evaluate(y) @ self.coef.T
        return out[0] if y.ndim == 1 else out


@dataclass(frozen=True)
class CorrEstimate:
    value: float
    stderr: float
    inner: float
    norm_sq: float
    samples: int


def mc_corr_of_estimator(
    gam: GamInstance, estimator: Callable[[np.ndarray], np.ndarray], M: int, rng_state, batched: bool = False
) -> CorrEstimate:
    """
    Monte-Carlo E<f(Y), X> / sqrt(E||f(Y)||^2).

    Args:
        gam: Model instance
        estimator: f, applied to one observation (or to a batch when `batched`)
        M: Number of (X, Y) draws
        rng_state: RngStream or Generator
        batched: Whether f maps (M, N) to (M, N) directly

    Returns:
        CorrEstimate with a delta-method standard error
    """
    if M < 2:
        raise DomainError("need at least two draws")
    x, y = sample_observations(gam, as_generator(rng_state), M)
    f = np.asarray(estimator(y), dtype=float) if batched else np.array([estimator(row) for row in y], dtype=float)
    f = f.reshape(x.shape)
    inner_i = np.einsum("ij,ij->i", f, x)
    norm_i = np.einsum("ij,ij->i", f, f)
    inner, norm_sq = float(inner_i.mean()), float(norm_i.mean())
    if not norm_sq > 0:
        raise NumericalError("estimator has zero norm")
    value = inner / math.sqrt(norm_sq)
    cov = np.cov(np.vstack([inner_i, norm_i])) / M
    grad = np.array([1.0 / math.sqrt(norm_sq), -0.5 * inner / norm_sq**1.5])
    stderr = float(math.sqrt(max(grad @ cov @ grad, 0.0)))
    return CorrEstimate(value, stderr, inner, norm_sq, M)
