"""
Diagonal thresholding for the truncated sparse 3-tensor model

The diagonal entries d_i = a v_i + Z_iii carry the signed support of v;
sign-thresholding them at tau = sqrt(6 log n) recovers v exactly with high
probability once the amplitude a >= 2 tau. Under Y = sqrt(lambda) X + Z the
amplitude is sqrt(lambda); run_threshold_trials takes the amplitude itself.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.exceptions import DomainError
from ..core.priors import TruncatedSparseTensor3Prior
from ..core.rng import as_stream, chunk_sizes, parallel_map

logger = logging.getLogger(__name__)

TRIAL_CHUNK = 2048


def default_tau(n: int) -> float:
    return math.sqrt(6.0 * math.log(n))


def diag_threshold(diagonal, tau: float) -> np.ndarray:
    """v_hat_i = sign(d_i) 1{|d_i| >= tau}."""
    if not tau > 0:
        raise DomainError(f"tau must be positive, got {tau}")
    d = np.asarray(diagonal, dtype=float)
    return np.where(np.abs(d) >= tau, np.sign(d), 0.0)


def diagonal_amplitude(snr: float) -> float:
    """Diagonal signal size sqrt(lambda) of the model Y = sqrt(lambda) X + Z."""
    if snr < 0:
        raise DomainError(f"lambda must be nonnegative, got {snr}")
    return math.sqrt(snr)


def recovery_failure_bound(n: int, k: int) -> float:
    """2 n^-2 + 4k n^-3 + 4k n^-27."""
    return 2.0 * n**-2.0 + 4.0 * k * n**-3.0 + 4.0 * k * n**-27.0


@dataclass
class ThresholdTrial:
    n: int
    k: int
    lam: float
    tau: float
    trials: int
    failures: int
    bound: float

    @property
    def failure_rate(self) -> float:
        return self.failures / self.trials

    @property
    def stderr(self) -> float:
        """Binomial standard error, evaluated at the larger of the rate and the bound."""
        p = max(self.failure_rate, self.bound)
        return math.sqrt(p * (1.0 - p) / self.trials)

    @property
    def signal_condition(self) -> bool:
        """lambda >= 2 tau."""
        return self.lam >= 2.0 * self.tau

    @property
    def within_bound(self) -> bool:
        return self.failure_rate <= self.bound + 3.0 * self.stderr

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "lambda": self.lam,
            "tau": self.tau,
            "trials": self.trials,
            "failures": self.failures,
            "failure_rate": self.failure_rate,
            "bound": self.bound,
            "stderr": self.stderr,
            "signal_condition": self.signal_condition,
            "within_bound": self.within_bound,
        }


def run_threshold_trials(
    n: int,
    k: int,
    lam: float,
    trials: int,
    rng_state,
    tau: Optional[float] = None,
    threads: Optional[int] = None,
) -> ThresholdTrial:
    """
    Count exact-recovery failures of diagonal thresholding.

    Args:
        n: Latent dimension
        k: Expected sparsity
        lam: Diagonal amplitude a in d = a v + Z (sqrt of the model SNR)
        trials: Number of independent (v, Z) draws
        rng_state: Seed or RngStream; trials are split into fixed chunks with
            their own substreams
        tau: Threshold override
        threads: Worker cap

    Returns:
        ThresholdTrial with the failure count and the bound
    """
    if trials < 1:
        raise DomainError("need at least one trial")
    if lam < 0:
        raise DomainError(f"lambda must be nonnegative, got {lam}")
    prior = TruncatedSparseTensor3Prior(n, k)
    tau = default_tau(n) if tau is None else tau
    stream = as_stream(rng_state)
    sizes = chunk_sizes(trials, TRIAL_CHUNK)

    def work(item) -> int:
        size, sub = item
        gen = sub.generator()
        v = prior.sample_latents(gen, size)
        d = lam * v + gen.standard_normal(v.shape)
        return int(np.count_nonzero(np.any(diag_threshold(d, tau) != v, axis=1)))

    failures = sum(parallel_map(work, list(zip(sizes, stream.spawn(len(sizes)))), threads))
    result = ThresholdTrial(n, k, lam, tau, trials, failures, recovery_failure_bound(n, k))
    logger.info(
        f"Diagonal thresholding n={n}, k={k}, lambda={lam}: {failures}/{trials} failures (bound {result.bound:.3e})"
    )
    return result
