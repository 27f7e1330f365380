#!/usr/bin/env python3
"""
Toolkit Demonstration Script

Walks through the main operations on small instances: overlap quantiles,
the annealed FP potential, the cumulant upper bound, the exact oracle,
the equivalence sweep and diagonal thresholding.
"""

import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))

from src.applications.experiments import equivalence_sweep, lambda_grid
from src.applications.thresholding import default_tau, run_threshold_trials
from src.core.cumulants import sw_corr_upper_bound
from src.core.fp import fp_curve, fp_derivative_at_quantile
from src.core.oracle import oracle_report
from src.core.overlap import QuantileFunction, default_speed, overlap_distribution
from src.core.priors import SparseRademacherTensorPrior, trivial_mmse
from src.core.rng import RngStream
from src.core.specfun import bessel_grid

SEED = 20240917


def print_section(title: str):
    """Print formatted section header."""
    print("\n" + "=" * 80)
    print(f"  {title}")
    print("=" * 80 + "\n")


def demo_quantiles(prior):
    print_section("1. OVERLAP QUANTILES")

    dist = overlap_distribution(prior)
    print(f"Prior: {prior.to_spec()}")
    print(f"Overlap law: {dist.mode}, {dist.size} atoms\n")
    print(QuantileFunction(dist).curve([1, 2, 4, 8, 16]).to_string(index=False))
    return dist


def demo_fp(prior, dist):
    print_section("2. ANNEALED FP POTENTIAL")

    speed = default_speed(prior, dist)
    print(fp_curve(dist, 1.0, 8, speed=speed).head(10).to_string(index=False))
    for D in (1, 4):
        deriv = fp_derivative_at_quantile(dist, 1.0, D, speed=speed)
        print(f"\nD={D}: q(D)={deriv.q:g}, derivative={deriv.fp_derivative:+.4f} ({deriv.sign})")


def demo_bounds(prior):
    print_section("3. CORRELATION BOUNDS")

    print(f"Trivial MMSE: {trivial_mmse(prior):g}\n")
    print(f"{'lambda':>8} {'upper':>12} {'oracle':>12} {'mmse':>12}")
    for lam in (0.1, 1.0, 10.0):
        upper = sw_corr_upper_bound(prior, lam, 3)
        report = oracle_report(prior, lam, 3)
        print(f"{lam:>8g} {upper.value:>12.6f} {report.corr_sq_total:>12.6f} {report.mmse:>12.6f}")


def demo_equivalence(prior):
    print_section("4. EQUIVALENCE SWEEP")

    report = equivalence_sweep(prior, 2, lambda_grid(0.05, 50.0, 4), RngStream(SEED), M_ov=5000)
    print(report.rows[["lambda", "sign", "corr_sq_lower", "corr_sq_upper", "corr_sq_oracle"]].to_string(index=False))
    print()
    for key, value in report.summary().items():
        print(f"  • {key}: {value}")


def demo_thresholding():
    print_section("5. DIAGONAL THRESHOLDING")

    n, k = 50, 3
    for lam in (default_tau(n), 2.0 * default_tau(n)):
        trial = run_threshold_trials(n, k, lam, 2000, RngStream(SEED).child(f"lambda={lam}"))
        print(f"  • lambda={lam:.3f}: failure rate {trial.failure_rate:.4f} (bound {trial.bound:.2e})")


def demo_bessel():
    print_section("6. BESSEL K")

    print(bessel_grid([0.5, 2.5], [0.1, 1.0, 10.0, 100.0]).to_string(index=False))


def main():
    """Run complete demonstration."""
    print("\n" + "=" * 80)
    print(" " * 20 + "FP POTENTIAL / LOW-DEGREE TOOLKIT")
    print(" " * 25 + "DEMONSTRATION SCRIPT")
    print("=" * 80)

    try:
        prior = SparseRademacherTensorPrior(40, 6, 1)
        dist = demo_quantiles(prior)
        demo_fp(prior, dist)
        demo_bounds(SparseRademacherTensorPrior(8, 2, 1))
        demo_equivalence(SparseRademacherTensorPrior(8, 2, 1))
        demo_thresholding()
        demo_bessel()

        print("\n" + "=" * 80)
        print("✅ DEMONSTRATION COMPLETE")
        print("=" * 80 + "\n")

    except Exception as e:
        print(f"\n❌ Error during demonstration: {e}")
        import traceback

        traceback.print_exc()
        sys.exit(1)


if __name__ == "__main__":
    main()
