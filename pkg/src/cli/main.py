"""
fpld command-line interface

Every subcommand writes <subcommand>-<hash>.json (manifest + results) and,
for tabular output in csv format, <subcommand>-<hash>.csv into the output
directory (FPLD_OUT_DIR, default ./results). The table (or the JSON
document) is also printed on stdout; logs go to stderr.

Grids are "start:stop[:count]" strings; --scale picks linear or geometric
spacing.

Exit codes: 0 success, 1 library error, 2 invalid input, 3 budget exceeded.
"""

import functools
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import click
import pandas as pd

from ..applications.experiments import counterexample_experiment, equivalence_sweep
from ..applications.thresholding import default_tau, run_threshold_trials
from ..config import settings
from ..core.cumulants import sw_corr_upper_bound
from ..core.estimators import HermiteEstimator, ReferenceSet, corr_lower_bound_overlap
from ..core.exceptions import BudgetExceededError, DomainError, FpldError, ModelValidationError
from ..core.fp import fp_curve, fp_derivative_at_quantile
from ..core.oracle import mc_corr_of_estimator, oracle_report
from ..core.overlap import ClusteringOverlapFamily, QuantileFunction, default_speed, overlap_distribution
from ..core.priors import GamInstance, PriorModel, SparseClusteringPrior, parse_prior
from ..core.rng import MAX_SEED, RngStream
from ..core.specfun import bessel_grid, inner_product_density, log_bessel_k
from ..logging_config import setup_logging
from ..reporting.manifest import RunOutput, build_manifest, table_to_csv, validate_document
from .grids import parse_grid
from .selftest import run_selftest

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_INVALID = 2
EXIT_BUDGET = 3


@dataclass
class RunConfig:
    subcommand: str
    seed: Optional[int]
    threads: int
    out_dir: Optional[str]
    fmt: str
    budgets: Dict[str, int] = field(default_factory=dict)

    def stream(self, what: str) -> RngStream:
        if self.seed is None:
            raise ModelValidationError(f"{what} is stochastic; --seed is required", "/seed")
        return RngStream(self.seed)


def _apply_budgets(
    mc_samples: Optional[int], enum_budget: Optional[int], basis_budget: Optional[int]
) -> Dict[str, int]:
    if mc_samples is not None:
        settings.MC_SAMPLES = mc_samples
    if enum_budget is not None:
        settings.SW_ENUM_BUDGET = enum_budget
        settings.SUPPORT_BUDGET = min(settings.SUPPORT_BUDGET, enum_budget)
    if basis_budget is not None:
        settings.BASIS_BUDGET = basis_budget
    return {
        "mc_samples": settings.MC_SAMPLES,
        "enum_budget": settings.SW_ENUM_BUDGET,
        "basis_budget": settings.BASIS_BUDGET,
    }


def run_options(fn):
    """Seed, threads, output and budget flags shared by every subcommand."""

    @click.option("--seed", type=click.IntRange(0, MAX_SEED), default=None, help="64-bit unsigned seed")
    @click.option("--threads", type=click.IntRange(0), default=None, help="Worker cap (0 = available cores)")
    @click.option("--out-dir", type=click.Path(file_okay=False), default=None, help="Output directory")
    @click.option("--format", "fmt", type=click.Choice(["csv", "json"]), default="csv", show_default=True)
    @click.option("--mc-samples", type=click.IntRange(1), default=None, help="Monte-Carlo sample budget")
    @click.option("--enum-budget", type=click.IntRange(1), default=None, help="Exact enumeration budget")
    @click.option("--basis-budget", type=click.IntRange(1), default=None, help="Oracle monomial basis budget")
    @functools.wraps(fn)
    def wrapper(*args, seed, threads, out_dir, fmt, mc_samples, enum_budget, basis_budget, **kwargs):
        ctx = click.get_current_context()
        if threads is not None:
            settings.THREADS = threads
        config = RunConfig(
            subcommand=ctx.info_name,
            seed=seed,
            threads=settings.THREADS,
            out_dir=out_dir,
            fmt=fmt,
            budgets=_apply_budgets(mc_samples, enum_budget, basis_budget),
        )
        return fn(config, *args, **kwargs)

    return wrapper


model_option = click.option("--model", "model_json", required=True, help='Prior JSON: {"kind": ..., "params": {...}}')
scale_option = click.option(
    "--scale", type=click.Choice(["linear", "log"]), default="linear", show_default=True, help="Grid spacing"
)


def _emit(
    config: RunConfig,
    parameters: Dict[str, Any],
    results: Dict[str, Any],
    table: Optional[pd.DataFrame] = None,
    model: Optional[PriorModel] = None,
) -> int:
    manifest = build_manifest(
        config.subcommand,
        parameters,
        model=model.to_spec() if model is not None else None,
        seed=config.seed,
        budgets=config.budgets,
    )
    output = RunOutput(manifest, results, table)
    output.write(config.out_dir, config.fmt)
    if table is not None and config.fmt == "csv":
        click.echo(table_to_csv(table, output.digest), nl=False)
    else:
        click.echo(json.dumps(output.document(), sort_keys=True, default=str))
    return EXIT_OK


@click.group(help=__doc__)
@click.option("--log-level", default=None, help="Override FPLD_LOG_LEVEL")
@click.option("--log-format", type=click.Choice(["text", "json"]), default=None, help="Override FPLD_LOG_FORMAT")
@click.option("--progress/--no-progress", default=None, help="Show progress bars")
def cli(log_level: Optional[str], log_format: Optional[str], progress: Optional[bool]) -> None:
    if log_format:
        settings.LOG_FORMAT = log_format
    if progress is not None:
        settings.PROGRESS = progress
    setup_logging(settings, log_level)


@cli.command()
@model_option
@click.option("--d-grid", default="1:10", show_default=True, help="Degree grid start:stop[:count]")
@scale_option
@run_options
def quantiles(config: RunConfig, model_json: str, d_grid: str, scale: str) -> int:
    """Quantile function q(D) of the overlap."""
    prior = parse_prior(model_json)
    dist = _overlap_law(config, prior)
    Ds = parse_grid(d_grid, scale)
    table = QuantileFunction(dist).curve(Ds)
    return _emit(config, {"d_grid": d_grid, "scale": scale}, {"mode": dist.mode}, table, prior)


def _overlap_law(config: RunConfig, prior: PriorModel, stream: Optional[RngStream] = None):
    """Exact law when one exists; otherwise samples, which need a seed."""
    if not isinstance(prior, SparseClusteringPrior):
        try:
            return overlap_distribution(prior)
        except DomainError:
            pass
    stream = stream or config.stream("sampling the overlap")
    return overlap_distribution(prior, settings.MC_SAMPLES, stream, config.threads)


@cli.command("fp-curve")
@model_option
@click.option("--lambda", "lam", type=float, required=True, help="Signal-to-noise ratio")
@click.option("--d-max", type=float, default=10.0, show_default=True, help="Grid extends to q(d_max)")
@click.option("--points", type=click.IntRange(2), default=64, show_default=True)
@run_options
def fp_curve_command(config: RunConfig, model_json: str, lam: float, d_max: float, points: int) -> int:
    """Annealed FP potential and its (discrete) derivative over an overlap grid."""
    prior = parse_prior(model_json)
    dist = overlap_distribution(prior)
    speed = default_speed(prior, dist) if dist.mode == "exact_pmf" else None
    table = fp_curve(dist, lam, d_max, speed=speed, points=points)
    return _emit(config, {"lambda": lam, "d_max": d_max, "points": points}, {"mode": dist.mode}, table, prior)


@cli.command("fp-derivative")
@model_option
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--d-grid", default="1:10", show_default=True)
@scale_option
@run_options
def fp_derivative_command(config: RunConfig, model_json: str, lam: float, d_grid: str, scale: str) -> int:
    """FP derivative at q(D) and its hardness sign."""
    prior = parse_prior(model_json)
    family, stream = None, None
    if isinstance(prior, SparseClusteringPrior):
        family = ClusteringOverlapFamily(prior.n, prior.p, prior.s)
        stream = config.stream("the kernel density derivative")
    dist = _overlap_law(config, prior, stream.child("overlap") if stream else None)
    speed = default_speed(prior, dist) if dist.mode == "exact_pmf" else None

    rows = []
    for i, D in enumerate(parse_grid(d_grid, scale)):
        sub = stream.child(f"D{i}") if stream else None
        d = fp_derivative_at_quantile(dist, lam, D, speed=speed, family=family, rng_state=sub)
        rows.append(
            {
                "D": D,
                "q": d.q,
                "value": d.value,
                "fp_derivative": d.fp_derivative,
                "sign": d.sign,
                "step": math.nan if d.step is None else d.step,
                "stderr": d.stderr,
            }
        )
    return _emit(config, {"lambda": lam, "d_grid": d_grid, "scale": scale}, {}, pd.DataFrame(rows), prior)


@cli.command("cumulant-bound")
@model_option
@click.option("--lambda-grid", default="0.1:10:9", show_default=True)
@click.option("--d", "D", type=click.IntRange(0), required=True)
@click.option("--scale", type=click.Choice(["linear", "log"]), default="log", show_default=True)
@run_options
def cumulant_bound(config: RunConfig, model_json: str, lambda_grid: str, D: int, scale: str) -> int:
    """Cumulant upper bound on the squared degree-D correlation."""
    prior = parse_prior(model_json)
    rows = []
    for lam in parse_grid(lambda_grid, scale):
        bound = sw_corr_upper_bound(prior, lam, D)
        rows.append(
            {"lambda": lam, "D": D, "upper_bound": bound.value, "factorized": bound.factorized, "terms": bound.terms}
        )
    params = {"lambda_grid": lambda_grid, "D": D, "scale": scale}
    return _emit(config, params, {}, pd.DataFrame(rows), prior)


@cli.command("estimator-corr")
@model_option
@click.option("--lambda-grid", default="0.1:10:9", show_default=True)
@click.option("--d", "D", type=click.IntRange(0), required=True)
@click.option("--scale", type=click.Choice(["linear", "log"]), default="log", show_default=True)
@click.option("--reference-size", type=click.IntRange(0), default=0, help="Also run the materialized estimator")
@run_options
def estimator_corr(
    config: RunConfig, model_json: str, lambda_grid: str, D: int, scale: str, reference_size: int
) -> int:
    """Overlap-based lower bound on the degree-D correlation."""
    prior = parse_prior(model_json)
    stream = config.stream("the overlap lower bound")
    lams = parse_grid(lambda_grid, scale)
    streams = stream.spawn(len(lams))
    rows = []
    for lam, sub in zip(lams, streams):
        est = corr_lower_bound_overlap(prior, lam, D, settings.MC_SAMPLES, sub.child("overlap"), config.threads)
        row = {
            "lambda": lam,
            "D": D,
            "lower_bound": math.nan if est.ratio is None else est.ratio,
            "stderr_num": est.stderr_num,
            "stderr_den": est.stderr_den,
            "ratio_stderr": math.nan if est.ratio_stderr is None else est.ratio_stderr,
            "ratio_jackknife": math.nan if est.ratio_jackknife is None else est.ratio_jackknife,
            "corr_sq_lower": math.nan if est.corr_sq_lower is None else est.corr_sq_lower,
            "flagged": est.flagged,
        }
        if reference_size:
            gam = GamInstance(prior, lam)
            refset = ReferenceSet.draw(prior, reference_size, sub.child("reference"))
            corr = mc_corr_of_estimator(gam, HermiteEstimator(gam, refset, D), 1000, sub.child("materialized"))
            row["corr_materialized"] = corr.value
            row["corr_materialized_stderr"] = corr.stderr
        rows.append(row)
    params = {"lambda_grid": lambda_grid, "D": D, "scale": scale, "reference_size": reference_size}
    return _emit(config, params, {}, pd.DataFrame(rows), prior)


@cli.command("oracle-mmse")
@model_option
@click.option("--lambda-grid", default="0.1:10:9", show_default=True)
@click.option("--d", "D", type=click.IntRange(0), required=True)
@click.option("--scale", type=click.Choice(["linear", "log"]), default="log", show_default=True)
@run_options
def oracle_mmse(config: RunConfig, model_json: str, lambda_grid: str, D: int, scale: str) -> int:
    """Exact low-degree correlation and MMSE of a finite-support prior."""
    prior = parse_prior(model_json)
    rows, reports = [], []
    for lam in parse_grid(lambda_grid, scale):
        report = oracle_report(prior, lam, D, threads=config.threads)
        document = report.to_dict()
        validate_document(document, "oracle_report.v1")
        reports.append({"lambda": lam, **document})
        rows.append(
            {
                "lambda": lam,
                "D": D,
                "basis_size": report.basis_size,
                "cond_number": report.cond_number,
                "corr_sq_total": report.corr_sq_total,
                "mmse": report.mmse,
            }
        )
    params = {"lambda_grid": lambda_grid, "D": D, "scale": scale}
    return _emit(config, params, {"reports": reports}, pd.DataFrame(rows), prior)


@cli.command()
@model_option
@click.option("--d", "D", type=click.IntRange(1), required=True)
@click.option("--lambda-grid", default="0.01:100", show_default=True)
@click.option("--scale", type=click.Choice(["linear", "log"]), default="log", show_default=True)
@click.option("--no-lower", is_flag=True, help="Skip the Monte-Carlo lower bound")
@run_options
def equivalence(config: RunConfig, model_json: str, D: int, lambda_grid: str, scale: str, no_lower: bool) -> int:
    """FP-derivative sign at q(D) against correlation bounds over a lambda grid."""
    prior = parse_prior(model_json)
    stream = config.stream("the equivalence sweep")
    lams = parse_grid(lambda_grid, scale)
    report = equivalence_sweep(prior, D, lams, stream, settings.MC_SAMPLES, not no_lower, config.threads)
    params = {"D": D, "lambda_grid": lambda_grid, "scale": scale, "with_lower": not no_lower}
    return _emit(config, params, report.summary(), report.rows, prior)


@cli.command("diag-threshold")
@click.option("--n", type=click.IntRange(2), required=True)
@click.option("--k", type=click.IntRange(1), required=True)
@click.option(
    "--lambda",
    "lam",
    type=float,
    default=None,
    help="Diagonal amplitude in Y_iii = lambda v_i + Z_iii; defaults to 2 sqrt(6 log n)",
)
@click.option("--trials", type=click.IntRange(1), default=10_000, show_default=True)
@click.option("--tau", type=float, default=None, help="Defaults to sqrt(6 log n)")
@run_options
def diag_threshold_command(
    config: RunConfig, n: int, k: int, lam: Optional[float], trials: int, tau: Optional[float]
) -> int:
    """Exact-recovery failures of diagonal thresholding."""
    lam = 2.0 * default_tau(n) if lam is None else lam
    trial = run_threshold_trials(n, k, lam, trials, config.stream("threshold trials"), tau, config.threads)
    params = {"n": n, "k": k, "lambda": lam, "trials": trials, "tau": trial.tau}
    return _emit(config, params, trial.to_dict(), pd.DataFrame([trial.to_dict()]))


@cli.command()
@click.option("--n", type=click.IntRange(2), default=10, show_default=True)
@click.option("--k", type=click.IntRange(1), default=2, show_default=True)
@click.option("--lambda", "lam", type=float, required=True)
@click.option("--d", "D", type=click.IntRange(1), default=2, show_default=True)
@click.option("--replicas", type=click.IntRange(2), default=64, show_default=True)
@click.option("--q-grid", default=None, help="Latent overlaps q' (default 1:k)")
@click.option("--trials", type=click.IntRange(1), default=2000, show_default=True)
@run_options
def counterexample(
    config: RunConfig, n: int, k: int, lam: float, D: int, replicas: int, q_grid: Optional[str], trials: int
) -> int:
    """Annealed vs quenched FP potentials on the truncated sparse 3-tensor prior."""
    q_primes = [int(q) for q in parse_grid(q_grid, integer=True)] if q_grid else None
    report = counterexample_experiment(
        n,
        k,
        lam,
        config.stream("the counterexample"),
        D=D,
        replicas=replicas,
        q_primes=q_primes,
        M_ov=settings.MC_SAMPLES,
        trials=trials,
        threads=config.threads,
        budget=settings.QUENCHED_ENUM_BUDGET,
    )
    if report.quenched.empty or report.annealed.empty:
        table = report.annealed if report.quenched.empty else report.quenched
    else:
        table = report.annealed.merge(report.quenched, on=["q_prime", "q"], how="outer")
    params = {"n": n, "k": k, "lambda": lam, "D": D, "replicas": replicas, "q_grid": q_grid, "trials": trials}
    return _emit(config, params, report.summary(), table)


@cli.command()
@click.option("--nu", "nus", multiple=True, type=float, help="Order(s); repeatable")
@click.option("--nu-grid", default=None, help="Order grid start:stop[:count]")
@click.option("--x-grid", default="0.1:100:64", show_default=True)
@click.option("--scale", type=click.Choice(["linear", "log"]), default="log", show_default=True)
@run_options
def bessel(config: RunConfig, nus: Sequence[float], nu_grid: Optional[str], x_grid: str, scale: str) -> int:
    """K_nu(x) over a grid with the three-term recurrence residual."""
    orders: List[float] = list(nus) + (parse_grid(nu_grid) if nu_grid else [])
    if not orders:
        raise click.UsageError("give --nu or --nu-grid")
    table = bessel_grid(orders, parse_grid(x_grid, scale))
    residuals = []
    for nu, x, log_k in zip(table["nu"], table["x"], table["log_k"]):
        lo, _ = log_bessel_k(nu - 1.0, x)
        hi, _ = log_bessel_k(nu + 1.0, x)
        # K_{nu+1} = K_{nu-1} + (2 nu / x) K_nu, relative to K_{nu+1}
        residuals.append(abs(1.0 - math.exp(lo - hi) - 2.0 * nu / x * math.exp(log_k - hi)))
    table["recurrence_residual"] = residuals
    params = {"nu": list(nus), "nu_grid": nu_grid, "x_grid": x_grid, "scale": scale}
    return _emit(config, params, {"max_recurrence_residual": max(residuals)}, table)


@cli.command()
@click.option("--dim", "d", type=click.IntRange(1), required=True, help="Dimension of the Gaussian vectors")
@click.option("--x-grid", default="0.1:10:64", show_default=True)
@scale_option
@run_options
def density(config: RunConfig, d: int, x_grid: str, scale: str) -> int:
    """Density of the inner product of two independent standard Gaussian vectors."""
    xs = parse_grid(x_grid, scale)
    values = inner_product_density(d, xs)
    table = pd.DataFrame({"x": xs, "density": values})
    return _emit(config, {"dim": d, "x_grid": x_grid, "scale": scale}, {}, table)


@cli.command()
@run_options
def selftest(config: RunConfig) -> int:
    """Run the identity and invariant suite; exit 0 iff every check passes."""
    results = run_selftest()
    table = pd.DataFrame([{"check": r.name, "passed": r.passed, "detail": r.detail} for r in results])
    passed = all(r.passed for r in results)
    _emit(config, {}, {"passed": passed}, table)
    return EXIT_OK if passed else EXIT_ERROR


def parse_and_dispatch(argv: Optional[Sequence[str]] = None) -> int:
    """Run the CLI on argv and map failures to exit codes."""
    try:
        code = cli.main(args=list(argv) if argv is not None else None, prog_name="fpld", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return EXIT_INVALID
    except click.ClickException as e:
        e.show()
        return EXIT_ERROR
    except click.Abort:
        click.echo("Aborted", err=True)
        return EXIT_ERROR
    except ModelValidationError as e:
        pointer = f" at {e.pointer}" if e.pointer else ""
        click.echo(f"Error: invalid input{pointer}: {e}", err=True)
        return EXIT_INVALID
    except BudgetExceededError as e:
        click.echo(f"Error: budget exceeded: {e}", err=True)
        return EXIT_BUDGET
    except FpldError as e:
        click.echo(f"Error: {e}", err=True)
        return EXIT_ERROR
    return code if isinstance(code, int) else EXIT_OK


def main() -> None:
    sys.exit(parse_and_dispatch(sys.argv[1:]))
