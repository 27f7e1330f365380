import math

import numpy as np
import pytest

from src.applications.thresholding import (
    default_tau,
    diagonal_amplitude,
    diag_threshold,
    recovery_failure_bound,
    run_threshold_trials,
)
from src.core.exceptions import DomainError
from src.core.rng import RngStream


def test_threshold_is_non_strict():
    out = diag_threshold([-3.0, 0.5, 4.0, 2.0, -2.0], 2.0)
    assert out.tolist() == [-1.0, 0.0, 1.0, 1.0, -1.0]


def test_threshold_must_be_positive():
    with pytest.raises(DomainError):
        diag_threshold([1.0], 0.0)


def test_default_tau():
    assert default_tau(100) == pytest.approx(math.sqrt(6 * math.log(100)))


def test_failure_bound():
    assert recovery_failure_bound(10, 2) == pytest.approx(2e-2 + 8e-3 + 8e-27)


def test_strong_signal_recovers(stream):
    n = 50
    trial = run_threshold_trials(n, 3, 4.0 * default_tau(n), 2000, stream)
    assert trial.signal_condition
    assert trial.failure_rate <= 0.01
    assert trial.within_bound
    assert set(trial.to_dict()) >= {"failure_rate", "bound", "stderr", "within_bound"}


def test_no_signal_fails(stream):
    trial = run_threshold_trials(30, 4, 0.0, 500, stream)
    assert not trial.signal_condition
    assert trial.failure_rate > 0.9


def test_trials_do_not_depend_on_threads():
    a = run_threshold_trials(20, 2, 6.0, 5000, RngStream(8), threads=1)
    b = run_threshold_trials(20, 2, 6.0, 5000, RngStream(8), threads=4)
    assert a.failures == b.failures


def test_integer_seed_and_custom_tau():
    trial = run_threshold_trials(20, 2, 6.0, 100, 8, tau=1.0)
    assert trial.tau == 1.0
    assert np.isfinite(trial.stderr)


def test_invalid_arguments(stream):
    with pytest.raises(DomainError):
        run_threshold_trials(20, 2, 6.0, 0, stream)
    with pytest.raises(DomainError):
        run_threshold_trials(20, 2, -1.0, 10, stream)


def test_generator_state_is_rejected():
    with pytest.raises(TypeError):
        run_threshold_trials(20, 2, 6.0, 10, np.random.default_rng(8))


def test_failures_nonincreasing_in_signal():
    failures = [run_threshold_trials(30, 3, lam, 400, RngStream(5)).failures for lam in (0.0, 2.0, 4.0, 8.0, 16.0)]
    assert failures == sorted(failures, reverse=True)


@pytest.mark.slow
def test_bound_at_moderate_size():
    n, k = 500, 10
    trial = run_threshold_trials(n, k, 2.0 * default_tau(n), 10_000, RngStream(500))
    assert trial.failure_rate <= trial.bound + 3.0 * math.sqrt(trial.bound * (1 - trial.bound) / trial.trials)


def test_diagonal_amplitude_is_root_snr():
    assert diagonal_amplitude(16.0) == 4.0
    assert diagonal_amplitude(0.0) == 0.0
    with pytest.raises(DomainError):
        diagonal_amplitude(-1.0)
