"""
Gaussian Additive Model priors

Defines the GAM  Y = sqrt(lambda) * X + Z  and the concrete signal priors:
Gaussian and sparse Rademacher tensors, general i.i.d. product tensors, the
rescaled sparse clustering prior, the truncated sparse 3-tensor counterexample
prior and explicit finite (atomic) priors. Every prior samples from explicit
random streams and exposes exact mixed moments E[X^alpha].
"""

import json
import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from enum import Enum
from itertools import product
from typing import Any, ClassVar, Dict, Hashable, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PositiveFloat, PositiveInt, ValidationError, model_validator
from scipy import stats
from scipy.special import gammaln

from ..config import settings
from .exceptions import BudgetExceededError, DegreeCapError, DomainError, ModelValidationError
from .multi_index import MultiIndex
from .rng import as_generator

logger = logging.getLogger(__name__)


class PriorKind(str, Enum):
    GAUSSIAN_TENSOR = "gaussian_tensor"
    SPARSE_RADEMACHER_TENSOR = "sparse_rademacher_tensor"
    SPARSE_CLUSTERING = "sparse_clustering"
    TRUNCATED_SPARSE_TENSOR3 = "truncated_sparse_tensor3"
    IID_TENSOR = "iid_tensor"
    ATOMIC = "atomic"


# ========== JSON specifications ==========


class _Params(BaseModel):
    model_config = ConfigDict(extra="forbid")


class GaussianTensorParams(_Params):
    n: PositiveInt
    r: PositiveInt = 1


class SparseRademacherTensorParams(_Params):
    n: PositiveInt
    k: PositiveInt
    r: PositiveInt = 1

    @model_validator(mode="after")
    def _k_at_most_n(self):
        if self.k > self.n:
            raise ValueError("k must satisfy 1 <= k <= n")
        return self


class SparseClusteringParams(_Params):
    n: PositiveInt
    p: PositiveInt
    s: PositiveInt
    delta: PositiveFloat

    @model_validator(mode="after")
    def _s_at_most_p(self):
        if self.s > self.p:
            raise ValueError("s must satisfy 1 <= s <= p")
        return self


class TruncatedSparseTensor3Params(_Params):
    n: PositiveInt
    k: PositiveInt

    @model_validator(mode="after")
    def _k_at_most_n(self):
        if self.k > self.n:
            raise ValueError("k must satisfy 1 <= k <= n")
        return self


class IidTensorParams(_Params):
    n: PositiveInt
    r: PositiveInt = 1
    law: Literal["gaussian", "rademacher", "bernoulli", "neg_half_normal"]
    mean: float = 0.0
    rho: float = Field(default=1.0, gt=0.0, le=1.0)


class AtomicParams(_Params):
    atoms: List[List[float]] = Field(min_length=1)
    probs: List[float] = Field(min_length=1)

    @model_validator(mode="after")
    def _consistent(self):
        if len(self.atoms) != len(self.probs):
            raise ValueError("atoms and probs must have equal length")
        dims = {len(a) for a in self.atoms}
        if len(dims) != 1 or 0 in dims:
            raise ValueError("all atoms must be nonempty vectors of one dimension")
        if any(p < 0 for p in self.probs) or abs(sum(self.probs) - 1.0) > 1e-9:
            raise ValueError("probs must be nonnegative and sum to 1")
        return self


class PriorSpec(BaseModel):
    """Outer envelope {"kind": ..., "params": {...}}."""

    model_config = ConfigDict(extra="forbid")

    kind: PriorKind
    params: Dict[str, Any] = Field(default_factory=dict)


_PARAM_MODELS = {
    PriorKind.GAUSSIAN_TENSOR: GaussianTensorParams,
    PriorKind.SPARSE_RADEMACHER_TENSOR: SparseRademacherTensorParams,
    PriorKind.SPARSE_CLUSTERING: SparseClusteringParams,
    PriorKind.TRUNCATED_SPARSE_TENSOR3: TruncatedSparseTensor3Params,
    PriorKind.IID_TENSOR: IidTensorParams,
    PriorKind.ATOMIC: AtomicParams,
}


def _pointer(loc: Tuple[Any, ...]) -> str:
    return "".join(f"/{str(part).replace('~', '~0').replace('/', '~1')}" for part in loc)


def parse_prior(spec: Union[str, Dict[str, Any]]) -> "PriorModel":
    """
    Build a prior from its JSON specification.

    Args:
        spec: JSON string or decoded object {"kind": string, "params": {...}}

    Returns:
        The prior model

    Raises:
        ModelValidationError: with a JSON pointer to the offending field
    """
    if isinstance(spec, str):
        try:
            spec = json.loads(spec)
        except json.JSONDecodeError as e:
            raise ModelValidationError(f"malformed model JSON: {e.msg}", "") from e

    try:
        envelope = PriorSpec.model_validate(spec)
    except ValidationError as e:
        first = e.errors()[0]
        raise ModelValidationError(first["msg"], _pointer(first["loc"])) from e

    try:
        params = _PARAM_MODELS[envelope.kind].model_validate(envelope.params)
    except ValidationError as e:
        first = e.errors()[0]
        raise ModelValidationError(first["msg"], _pointer(("params",) + tuple(first["loc"]))) from e

    return _build(envelope.kind, params)


def _build(kind: PriorKind, params: _Params) -> "PriorModel":
    if kind is PriorKind.GAUSSIAN_TENSOR:
        return GaussianTensorPrior(params.n, params.r)
    if kind is PriorKind.SPARSE_RADEMACHER_TENSOR:
        return SparseRademacherTensorPrior(params.n, params.k, params.r)
    if kind is PriorKind.SPARSE_CLUSTERING:
        return SparseClusteringPrior(params.n, params.p, params.s, params.delta)
    if kind is PriorKind.TRUNCATED_SPARSE_TENSOR3:
        return TruncatedSparseTensor3Prior(params.n, params.k)
    if kind is PriorKind.IID_TENSOR:
        return IidTensorPrior(params.n, params.r, law_from_name(params.law, params.mean, params.rho))
    return AtomicPrior(np.asarray(params.atoms, dtype=float), np.asarray(params.probs, dtype=float))


# ========== Base (per-latent-coordinate) laws ==========


class BaseLaw(ABC):
    """Law of one latent coordinate v_i."""

    name: ClassVar[str]

    @abstractmethod
    def moment(self, j: int) -> float:
        """E[v^j]."""

    @abstractmethod
    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        ...

    def atoms(self) -> Optional[Tuple[np.ndarray, np.ndarray]]:
        """(values, probabilities) for finite laws, else None."""
        return None

    def params(self) -> Dict[str, float]:
        return {}


class GaussianLaw(BaseLaw):
    name = "gaussian"

    def __init__(self, mean: float = 0.0):
        self.mean = float(mean)

    def moment(self, j: int) -> float:
        # E[(mu+Z)^j] = mu E[(mu+Z)^(j-1)] + (j-1) E[(mu+Z)^(j-2)]
        prev, cur = 0.0, 1.0
        for p in range(1, j + 1):
            prev, cur = cur, self.mean * cur + (p - 1) * prev
        return cur

    def sample(self, rng, size):
        return self.mean + rng.standard_normal(size)

    def params(self):
        return {"mean": self.mean}


class RademacherLaw(BaseLaw):
    """Rad(rho): +1 and -1 with probability rho/2 each, 0 otherwise."""

    name = "rademacher"

    def __init__(self, rho: float):
        self.rho = float(rho)

    def moment(self, j: int) -> float:
        if j == 0:
            return 1.0
        return 0.0 if j % 2 else self.rho

    def sample(self, rng, size):
        u = rng.random(size)
        half = self.rho / 2
        return np.where(u < half, 1.0, np.where(u < self.rho, -1.0, 0.0))

    def atoms(self):
        return np.array([-1.0, 0.0, 1.0]), np.array([self.rho / 2, 1 - self.rho, self.rho / 2])

    def params(self):
        return {"rho": self.rho}


class BernoulliLaw(BaseLaw):
    name = "bernoulli"

    def __init__(self, rho: float):
        self.rho = float(rho)

    def moment(self, j: int) -> float:
        return 1.0 if j == 0 else self.rho

    def sample(self, rng, size):
        return (rng.random(size) < self.rho).astype(float)

    def atoms(self):
        return np.array([0.0, 1.0]), np.array([1 - self.rho, self.rho])

    def params(self):
        return {"rho": self.rho}


class NegHalfNormalLaw(BaseLaw):
    """v = -|g|, g standard normal: a law with a negative first cumulant."""

    name = "neg_half_normal"

    def moment(self, j: int) -> float:
        return (-1) ** j * math.exp(0.5 * j * math.log(2) + gammaln((j + 1) / 2) - 0.5 * math.log(math.pi))

    def sample(self, rng, size):
        return -np.abs(rng.standard_normal(size))


class BernoulliGaussianLaw(BaseLaw):
    """v = b * g with b ~ Ber(rho), g ~ N(0, 1) independent."""

    name = "bernoulli_gaussian"

    def __init__(self, rho: float):
        self.rho = float(rho)
        self._gauss = GaussianLaw(0.0)

    def moment(self, j: int) -> float:
        if j == 0:
            return 1.0
        return self.rho * self._gauss.moment(j)

    def sample(self, rng, size):
        return (rng.random(size) < self.rho) * rng.standard_normal(size)

    def params(self):
        return {"rho": self.rho}


def law_from_name(name: str, mean: float = 0.0, rho: float = 1.0) -> BaseLaw:
    if name == "gaussian":
        return GaussianLaw(mean)
    if name == "rademacher":
        return RademacherLaw(rho)
    if name == "bernoulli":
        return BernoulliLaw(rho)
    if name == "neg_half_normal":
        return NegHalfNormalLaw()
    raise ModelValidationError(f"unknown base law {name!r}", "/params/law")


def egf_power_sum(g, n: int, r: int) -> float:
    """
    r! [t^r] (sum_e g(e) t^e / e!)^n.

    Equals the sum over all index sequences (i_1..i_r) in [n]^r of
    prod_j g(e_j), e_j the multiplicity of j, for multiplicative g with g(0)=1.
    """
    base = np.array([g(e) / math.factorial(e) for e in range(r + 1)], dtype=float)
    result = np.zeros(r + 1)
    result[0] = 1.0
    power = base.copy()
    m = n
    while m:
        if m & 1:
            result = np.convolve(result, power)[: r + 1]
        m >>= 1
        if m:
            power = np.convolve(power, power)[: r + 1]
    return float(math.factorial(r) * result[r])


# ========== Samples and GAM instances ==========


@dataclass
class SignalSample:
    """One prior draw: flattened signal plus the latent object generating it."""

    flat: np.ndarray
    latent: Any
    shape: Tuple[int, ...] = ()

    def as_tensor(self) -> np.ndarray:
        return self.flat.reshape(self.shape) if self.shape else self.flat


@dataclass(frozen=True)
class MomentValue:
    value: float
    exact: bool
    stderr: float = 0.0


class PriorModel(ABC):
    """A GAM prior P_0 over R^N."""

    kind: ClassVar[PriorKind]
    has_exact_moments: ClassVar[bool] = True

    @property
    @abstractmethod
    def ambient_dim(self) -> int:
        ...

    @property
    def tensor_shape(self) -> Tuple[int, ...]:
        return (self.ambient_dim,)

    @abstractmethod
    def params(self) -> Dict[str, Any]:
        ...

    def to_spec(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "params": self.params()}

    def __repr__(self) -> str:
        return f"{type(self).__name__}({self.params()})"

    # --- sampling ---

    @abstractmethod
    def sample_latents(self, rng: np.random.Generator, size: int) -> Any:
        """Batch of `size` latent draws."""

    @abstractmethod
    def flatten(self, latents: Any) -> np.ndarray:
        """Materialize a latent batch as a (size, N) signal matrix."""

    @abstractmethod
    def latent_overlap(self, a: Any, b: Any) -> np.ndarray:
        """<X, X'> for paired latent batches, without materializing R^N."""

    def take(self, latents: Any, index: int) -> Any:
        return latents[index]

    def sample_flat(self, rng, size: int) -> np.ndarray:
        return self.flatten(self.sample_latents(as_generator(rng), size))

    # --- moments ---

    @abstractmethod
    def _moment(self, alpha: MultiIndex) -> float:
        ...

    def moment_key(self, alpha: MultiIndex) -> Hashable:
        """Canonical key: alphas with equal keys have equal moments."""
        return alpha.exponents

    def moment(self, alpha: MultiIndex, cap: Optional[int] = None) -> float:
        """Exact E[X^alpha]."""
        if alpha.dim != self.ambient_dim:
            raise DomainError(f"alpha has length {alpha.dim}, prior has ambient_dim {self.ambient_dim}")
        cap = settings.MOMENT_DEGREE_CAP if cap is None else cap
        if alpha.degree > cap:
            raise DegreeCapError(alpha.degree, cap)
        return self._moment(alpha)

    @abstractmethod
    def second_moment_total(self) -> float:
        """E||X||^2."""

    @abstractmethod
    def mean_norm_sq(self) -> float:
        """||E X||^2."""

    # --- finite support ---

    def is_finite(self) -> bool:
        return False

    def support(self, budget: Optional[int] = None) -> Tuple[np.ndarray, np.ndarray]:
        """(atoms (M, N), probabilities (M,)) with duplicate atoms merged."""
        raise DomainError(f"{self.kind.value} prior has no finite support")


def merge_atoms(atoms: np.ndarray, probs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Merge identical rows and drop zero-probability atoms."""
    keep = probs > 0
    atoms, probs = atoms[keep], probs[keep]
    unique, inverse = np.unique(atoms, axis=0, return_inverse=True)
    merged = np.bincount(inverse.reshape(-1), weights=probs, minlength=len(unique))
    return unique, merged


# ========== Tensor priors X = vec(v^{(x) r}) ==========


class TensorPrior(PriorModel):
    """X = vec(v^{(x) r}) with i.i.d. latent coordinates v_i from a base law."""

    kind = PriorKind.IID_TENSOR

    def __init__(self, n: int, r: int, law: BaseLaw):
        if n < 1 or r < 1:
            raise ModelValidationError("n and r must be positive integers", "/params")
        self.n = int(n)
        self.r = int(r)
        self.law = law
        logger.debug(f"{type(self).__name__} initialized: n={n}, r={r}, law={law.name}")

    @property
    def ambient_dim(self) -> int:
        return self.n**self.r

    @property
    def tensor_shape(self):
        return (self.n,) * self.r

    def params(self):
        return {"n": self.n, "r": self.r, "law": self.law.name, **self.law.params()}

    def sample_latents(self, rng, size):
        return self.law.sample(rng, (size, self.n))

    def flatten(self, latents):
        v = np.atleast_2d(latents)
        x = v
        for _ in range(self.r - 1):
            x = (x[:, :, None] * v[:, None, :]).reshape(v.shape[0], -1)
        return x

    def latent_overlap(self, a, b):
        return np.einsum("ij,ij->i", a, b) ** self.r

    def latent_exponents(self, alpha: MultiIndex) -> np.ndarray:
        e = np.zeros(self.n, dtype=np.int64)
        for coord, power in alpha.as_sorted_pairs():
            for j in np.unravel_index(coord, self.tensor_shape):
                e[j] += power
        return e

    def moment_key(self, alpha):
        e = self.latent_exponents(alpha)
        return tuple(sorted(int(x) for x in e if x))

    def _moment(self, alpha):
        return math.prod(self.law.moment(int(x)) for x in self.latent_exponents(alpha) if x)

    def second_moment_total(self):
        return egf_power_sum(lambda e: self.law.moment(2 * e), self.n, self.r)

    def mean_norm_sq(self):
        return egf_power_sum(lambda e: self.law.moment(e) ** 2, self.n, self.r)

    def is_finite(self):
        return self.law.atoms() is not None

    def support(self, budget=None):
        budget = budget or settings.SUPPORT_BUDGET
        law_atoms = self.law.atoms()
        if law_atoms is None:
            raise DomainError(f"{self.law.name} base law has no finite support")
        values, weights = law_atoms
        count = len(values) ** self.n
        if count > budget:
            raise BudgetExceededError("support", count, budget, f"{len(values)}^{self.n} latent configurations")
        idx = np.array(list(product(range(len(values)), repeat=self.n)), dtype=np.int64).reshape(count, self.n)
        latents = values[idx]
        probs = np.prod(weights[idx], axis=1)
        return merge_atoms(self.flatten(latents), probs)

    def base_moment(self, j: int) -> float:
        return self.law.moment(j)


class IidTensorPrior(TensorPrior):
    kind = PriorKind.IID_TENSOR


class GaussianTensorPrior(TensorPrior):
    """v with i.i.d. N(0,1) entries."""

    kind = PriorKind.GAUSSIAN_TENSOR

    def __init__(self, n: int, r: int = 1):
        super().__init__(n, r, GaussianLaw(0.0))

    def params(self):
        return {"n": self.n, "r": self.r}


class SparseRademacherTensorPrior(TensorPrior):
    """v with i.i.d. Rad(k/n) entries."""

    kind = PriorKind.SPARSE_RADEMACHER_TENSOR

    def __init__(self, n: int, k: int, r: int = 1):
        if not 1 <= k <= n:
            raise ModelValidationError("k must satisfy 1 <= k <= n", "/params/k")
        self.k = int(k)
        super().__init__(n, r, RademacherLaw(k / n))

    def params(self):
        return {"n": self.n, "k": self.k, "r": self.r}


# ========== Truncated sparse 3-tensor prior ==========


class TruncatedSparseTensor3Prior(PriorModel):
    """
    u with i.i.d. Rad(k/n) entries; v = u when ||u||_0 lies in the band
    [ceil(k/2), 2k], otherwise v = 1_[k]. X = vec(v^{(x) 3}).
    """

    kind = PriorKind.TRUNCATED_SPARSE_TENSOR3
    r = 3

    def __init__(self, n: int, k: int):
        if not 1 <= k <= n:
            raise ModelValidationError("k must satisfy 1 <= k <= n", "/params/k")
        self.n = int(n)
        self.k = int(k)
        self.rho = k / n
        self.band = (math.ceil(k / 2), min(2 * k, n))
        sizes = np.arange(self.band[0], self.band[1] + 1)
        self.band_sizes = sizes
        self.band_probs = stats.binom.pmf(sizes, n, self.rho)
        self.p_out = float(max(0.0, 1.0 - self.band_probs.sum()))
        logger.debug(f"Truncated prior n={n}, k={k}: band={self.band}, P(out of band)={self.p_out:.3e}")

    @property
    def ambient_dim(self):
        return self.n**3

    @property
    def tensor_shape(self):
        return (self.n,) * 3

    def params(self):
        return {"n": self.n, "k": self.k}

    def indicator(self) -> np.ndarray:
        v = np.zeros(self.n)
        v[: self.k] = 1.0
        return v

    def sample_latents(self, rng, size):
        u = RademacherLaw(self.rho).sample(rng, (size, self.n))
        nnz = np.count_nonzero(u, axis=1)
        out = (nnz < self.band[0]) | (nnz > self.band[1])
        u[out] = self.indicator()
        return u

    def flatten(self, latents):
        v = np.atleast_2d(latents)
        return np.einsum("si,sj,sl->sijl", v, v, v).reshape(v.shape[0], -1)

    def latent_overlap(self, a, b):
        return np.einsum("ij,ij->i", a, b) ** 3

    def _in_band_prob(self, forced: int) -> float:
        """P(forced + Bin(n - forced, k/n) in band)."""
        lo, hi = self.band
        free = self.n - forced
        return float(stats.binom.cdf(hi - forced, free, self.rho) - stats.binom.cdf(lo - forced - 1, free, self.rho))

    def latent_exponents(self, alpha: MultiIndex) -> np.ndarray:
        e = np.zeros(self.n, dtype=np.int64)
        for coord, power in alpha.as_sorted_pairs():
            for j in np.unravel_index(coord, self.tensor_shape):
                e[j] += power
        return e

    def moment_key(self, alpha):
        e = self.latent_exponents(alpha)
        nz = np.flatnonzero(e)
        return (bool(np.all(e % 2 == 0)), len(nz), bool(np.all(nz < self.k)))

    def _moment(self, alpha):
        all_even, forced, inside = self.moment_key(alpha)
        in_part = self.rho**forced * self._in_band_prob(forced) if all_even else 0.0
        out_part = self.p_out if inside else 0.0
        return in_part + out_part

    def second_moment_total(self):
        return float(np.dot(self.band_probs, self.band_sizes.astype(float) ** 3) + self.p_out * self.k**3)

    def mean_norm_sq(self):
        return self.p_out**2 * self.k**3

    def is_finite(self):
        return True

    def support(self, budget=None):
        budget = budget or settings.SUPPORT_BUDGET
        count = 3**self.n
        if count > budget:
            raise BudgetExceededError("support", count, budget, f"3^{self.n} latent configurations")
        u = np.array(list(product((-1.0, 0.0, 1.0), repeat=self.n))).reshape(count, self.n)
        nnz = np.count_nonzero(u, axis=1)
        probs = (self.rho / 2) ** nnz * (1 - self.rho) ** (self.n - nnz)
        in_band = (nnz >= self.band[0]) & (nnz <= self.band[1])
        u, probs = u[in_band], probs[in_band]
        u = np.vstack([u, self.indicator()])
        probs = np.append(probs, self.p_out)
        return merge_atoms(self.flatten(u), probs)


# ========== Sparse clustering prior ==========


class SparseClusteringPrior(PriorModel):
    """
    Rescaled sparse clustering prior: X = vec(xi mu^T), xi_i ~ Rad(1/2) labels,
    mu_j = b_j g_j with b_j ~ Ber(s/p), g_j ~ N(0,1). The original centers are
    scaled by sqrt(delta/s), so the GAM signal-to-noise ratio is delta/s.
    """

    kind = PriorKind.SPARSE_CLUSTERING

    def __init__(self, n: int, p: int, s: int, delta: float):
        if not 1 <= s <= p:
            raise ModelValidationError("s must satisfy 1 <= s <= p", "/params/s")
        if delta <= 0:
            raise ModelValidationError("delta must be positive", "/params/delta")
        self.n, self.p, self.s, self.delta = int(n), int(p), int(s), float(delta)
        self.label_law = RademacherLaw(1.0)
        self.center_law = BernoulliGaussianLaw(s / p)

    @property
    def ambient_dim(self):
        return self.n * self.p

    @property
    def tensor_shape(self):
        return (self.n, self.p)

    @property
    def snr(self) -> float:
        """Signal-to-noise ratio lambda = delta / s of the rescaled model."""
        return self.delta / self.s

    @property
    def sigma_b(self) -> float:
        """E <mu, mu'>^2 = s^2 / p."""
        return self.s**2 / self.p

    @property
    def sigma_s(self) -> float:
        """Standard deviation of the overlap, sqrt(n s^2 / p)."""
        return math.sqrt(self.n * self.sigma_b)

    def params(self):
        return {"n": self.n, "p": self.p, "s": self.s, "delta": self.delta}

    def sample_latents(self, rng, size):
        xi = self.label_law.sample(rng, (size, self.n))
        mu = self.center_law.sample(rng, (size, self.p))
        return xi, mu

    def take(self, latents, index):
        xi, mu = latents
        return xi[index], mu[index]

    def flatten(self, latents):
        xi, mu = latents
        xi, mu = np.atleast_2d(xi), np.atleast_2d(mu)
        return np.einsum("si,sj->sij", xi, mu).reshape(xi.shape[0], -1)

    def latent_overlap(self, a, b):
        return np.einsum("ij,ij->i", a[0], b[0]) * np.einsum("ij,ij->i", a[1], b[1])

    def _split_exponents(self, alpha):
        grid = np.asarray(alpha.exponents, dtype=np.int64).reshape(self.n, self.p)
        return grid.sum(axis=1), grid.sum(axis=0)

    def moment_key(self, alpha):
        e_xi, e_mu = self._split_exponents(alpha)
        return (tuple(sorted(int(x) for x in e_xi if x)), tuple(sorted(int(x) for x in e_mu if x)))

    def _moment(self, alpha):
        e_xi, e_mu = self._split_exponents(alpha)
        value = math.prod(self.label_law.moment(int(x)) for x in e_xi if x)
        if value == 0.0:
            return 0.0
        return value * math.prod(self.center_law.moment(int(x)) for x in e_mu if x)

    def second_moment_total(self):
        return float(self.n * self.s)

    def mean_norm_sq(self):
        return 0.0


# ========== Atomic prior ==========


class AtomicPrior(PriorModel):
    """Explicit finite prior: X = atoms[i] with probability probs[i]."""

    kind = PriorKind.ATOMIC

    def __init__(self, atoms: np.ndarray, probs: np.ndarray):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=float))
        probs = np.asarray(probs, dtype=float)
        if atoms.shape[0] != probs.shape[0]:
            raise ModelValidationError("atoms and probs must have equal length", "/params/probs")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-9:
            raise ModelValidationError("probs must be nonnegative and sum to 1", "/params/probs")
        self.atoms = atoms
        self.probs = probs / probs.sum()

    @classmethod
    def constant(cls, value) -> "AtomicPrior":
        return cls(np.atleast_2d(np.asarray(value, dtype=float)), np.array([1.0]))

    @property
    def ambient_dim(self):
        return self.atoms.shape[1]

    def params(self):
        return {"atoms": self.atoms.tolist(), "probs": self.probs.tolist()}

    def sample_latents(self, rng, size):
        return self.atoms[rng.choice(len(self.probs), size=size, p=self.probs)]

    def flatten(self, latents):
        return np.atleast_2d(latents)

    def latent_overlap(self, a, b):
        return np.einsum("ij,ij->i", a, b)

    def _moment(self, alpha):
        powers = np.ones(len(self.probs))
        for i, e in alpha.as_sorted_pairs():
            powers = powers * self.atoms[:, i] ** e
        return float(np.dot(self.probs, powers))

    def second_moment_total(self):
        return float(np.dot(self.probs, np.sum(self.atoms**2, axis=1)))

    def mean_norm_sq(self):
        mean = self.probs @ self.atoms
        return float(np.dot(mean, mean))

    def is_finite(self):
        return True

    def support(self, budget=None):
        return merge_atoms(self.atoms, self.probs)


# ========== Operations ==========


@dataclass(frozen=True)
class GamInstance:
    """Y = sqrt(snr) * X + Z with X ~ prior, Z ~ N(0, I_N)."""

    prior: PriorModel
    snr: float
    ambient_dim: int = field(default=0)

    def __post_init__(self):
        if self.snr < 0 or not math.isfinite(self.snr):
            raise ModelValidationError("snr must be a finite nonnegative real", "/snr")
        if self.ambient_dim == 0:
            object.__setattr__(self, "ambient_dim", self.prior.ambient_dim)
        elif self.ambient_dim != self.prior.ambient_dim:
            raise ModelValidationError(
                f"ambient_dim {self.ambient_dim} != prior dimension {self.prior.ambient_dim}", "/ambient_dim"
            )


def sample_signal(prior: PriorModel, rng_state) -> SignalSample:
    """One draw X ~ P_0 with its latent, deterministic given the stream."""
    rng = as_generator(rng_state)
    latents = prior.sample_latents(rng, 1)
    return SignalSample(prior.flatten(latents)[0], prior.take(latents, 0), prior.tensor_shape)


def sample_observation(gam: GamInstance, rng_state) -> Tuple[SignalSample, np.ndarray]:
    """One (signal, observation) pair with observation = sqrt(snr) * flat + z."""
    rng = as_generator(rng_state)
    signal = sample_signal(gam.prior, rng)
    z = rng.standard_normal(gam.ambient_dim)
    return signal, math.sqrt(gam.snr) * signal.flat + z


def sample_observations(gam: GamInstance, rng_state, size: int) -> Tuple[np.ndarray, np.ndarray]:
    """Batch of (signals (size, N), observations (size, N))."""
    rng = as_generator(rng_state)
    x = gam.prior.sample_flat(rng, size)
    return x, math.sqrt(gam.snr) * x + rng.standard_normal(x.shape)


def moment(
    prior: PriorModel,
    alpha: MultiIndex,
    cap: Optional[int] = None,
    rng_state=None,
    mc_samples: Optional[int] = None,
) -> MomentValue:
    """
    E[X^alpha]: exact when the prior has closed-form moments, otherwise a
    Monte-Carlo estimate flagged as approximate.
    """
    if prior.has_exact_moments:
        return MomentValue(prior.moment(alpha, cap), exact=True)
    if rng_state is None:
        raise DomainError(f"{prior.kind.value} has no exact moment path; an rng_state is required")
    cap = settings.MOMENT_DEGREE_CAP if cap is None else cap
    if alpha.degree > cap:
        raise DegreeCapError(alpha.degree, cap)
    return mc_moment(prior, alpha, rng_state, mc_samples or settings.MC_SAMPLES)


def mc_moment(prior: PriorModel, alpha: MultiIndex, rng_state, samples: int) -> MomentValue:
    """Monte-Carlo E[X^alpha] with its standard error."""
    x = prior.sample_flat(as_generator(rng_state), samples)
    values = np.ones(samples)
    for i, e in alpha.as_sorted_pairs():
        values = values * x[:, i] ** e
    return MomentValue(float(values.mean()), exact=False, stderr=float(values.std(ddof=1) / math.sqrt(samples)))


def trivial_mmse(prior: PriorModel) -> float:
    """Error of the prior-mean estimator, E||X||^2 - ||E X||^2."""
    return prior.second_moment_total() - prior.mean_norm_sq()
