"""
LGI randomness toolkit

Bounds, numerical checks, simulation and finite-statistics certification of
randomness from Leggett-Garg inequality violations.

Usage:
    lgi-randomness bound --alpha 0.5 --mode joint
    lgi-randomness bound --grid 0.0:0.5:0.05 --mode conditional
    lgi-randomness optimize --alpha 0.3 --v 0 --mode joint --restarts 8
    lgi-randomness optimize --alpha-grid 0.1:0.5:0.1 --v-grid 0,0.02,0.05
    lgi-randomness simulate --canonical-alpha 0.31 --n 100000 --seed 7 --audit
    lgi-randomness certify --I 1.31 --n 100000 --delta 0.01 --dist uniform
    lgi-randomness certify --trials data/trials.jsonl --audit
    lgi-randomness memory-curve --I 1.31 --n-grid 1000:20000:1000
    lgi-randomness nsit-audit --n-grid 10000,100000,1000000
    lgi-randomness repro-paper

Exit status: 0 success, 1 usage, 2 non-convergence or threshold not met, 3 I/O.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from datetime import datetime
from fractions import Fraction
from typing import Any

from rich.console import Console
from rich.logging import RichHandler
from rich.table import Table

from lgi_randomness import __version__
from lgi_randomness.config import get_settings
from lgi_randomness.core.bounds import bound_curve, canonical_strategy, entropy, pstar
from lgi_randomness.core.certification import (
    certify,
    certify_trials,
    epsilon_crossing,
    memory_curve,
    nsit_deviation,
    nsit_estimates,
    nsit_frequency_radius,
)
from lgi_randomness.core.optimizer import (
    ALL_TARGETS,
    OBJECTIVES,
    OptProblem,
    SolverOptions,
    maximize,
    randomness_vs_nsit_curve,
)
from lgi_randomness.core.simulator import DriftSchedule, bits_from_trials, sample_trials
from lgi_randomness.core.types import ALL_SETTINGS, MODES, SettingsDistribution
from lgi_randomness.errors import InvalidParameterError, LgiRandomnessError, TrialFileError
from lgi_randomness.export import (
    dump_json,
    export_bits,
    export_csv,
    export_json,
    export_trials,
    file_sha256,
    manifest_path,
    read_manifest,
    read_trials,
    write_csv,
)
from lgi_randomness.schemas import (
    CertificationReportModel,
    DistributionModel,
    DriftModel,
    OptResultModel,
    StrategyModel,
    TableDocument,
    TrialManifest,
    setting_label,
)

logger = logging.getLogger(__name__)

console = Console(stderr=True)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILED = 2
EXIT_IO = 3


class CliParser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with status 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


@dataclass(slots=True)
class RunConfig:
    """Everything that determines one command's output: its name, flags and format."""

    command: str
    params: dict[str, Any] = field(default_factory=dict)
    output_format: str = "csv"

    @classmethod
    def from_args(cls, args: argparse.Namespace) -> RunConfig:
        params = {
            key: value
            for key, value in vars(args).items()
            if key not in ("command", "handler", "verbose", "format")
        }
        return cls(
            command=args.command, params=params, output_format=getattr(args, "format", "csv")
        )


def setup_logging(verbose: bool = False):
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(name)s: %(message)s",
        datefmt="%H:%M:%S",
        handlers=[RichHandler(console=console, show_path=False)],
        force=True,
    )


# ---------------------------------------------------------------------------
# Flag parsing
# ---------------------------------------------------------------------------


def parse_grid(text: str) -> list[float]:
    """``start:stop:step`` (stop included) or a comma-separated list."""
    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0 or stop < start:
                raise ValueError
            count = int(math.floor((stop - start) / step + 1e-9)) + 1
            return [round(start + k * step, 12) for k in range(count)]
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid grid {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def parse_int_grid(text: str) -> list[int]:
    values = parse_grid(text)
    if any(v < 1 or not float(v).is_integer() for v in values):
        raise argparse.ArgumentTypeError(f"round counts must be positive integers: {text!r}")
    return [int(v) for v in values]


def parse_target(text: str) -> tuple:
    """``13:+-`` selects P(+, - | Q1, Q3)."""
    try:
        pair_text, signs = text.split(":")
        target = ((int(pair_text[0]), int(pair_text[1])), *(1 if s == "+" else -1 for s in signs))
    except (ValueError, IndexError):
        raise argparse.ArgumentTypeError(f"invalid target {text!r}; expected e.g. 13:+-") from None
    if len(signs) != 2 or any(s not in "+-" for s in signs) or target not in ALL_TARGETS:
        raise argparse.ArgumentTypeError(f"invalid target {text!r}; expected e.g. 13:+-")
    return target


def parse_dist(text: str, audit_mass: float = 0.0) -> SettingsDistribution:
    """``uniform`` or ``biased:p12,p23,p13`` (fractions allowed)."""
    if text == "uniform":
        return SettingsDistribution.uniform(audit_mass=audit_mass)
    if text.startswith("biased:"):
        try:
            weights = [float(Fraction(part)) for part in text[len("biased:"):].split(",")]
        except (ValueError, ZeroDivisionError):
            raise InvalidParameterError(f"invalid distribution weights in {text!r}") from None
        if len(weights) != 3:
            raise InvalidParameterError("biased distribution needs three pair weights")
        return SettingsDistribution.biased(*weights, audit_mass=audit_mass)
    raise InvalidParameterError(f"unknown distribution {text!r}; use uniform or biased:a,b,c")


def _dist_from_args(args: argparse.Namespace) -> SettingsDistribution:
    audit_mass = args.audit_mass
    if audit_mass is None:
        audit_mass = get_settings().audit_mass if args.audit else 0.0
    return parse_dist(args.dist or "uniform", audit_mass)


def _emit_rows(args: argparse.Namespace, command: str, header: list[str], rows: list) -> None:
    if args.format == "json":
        document = TableDocument(command=command, columns=header, rows=[list(r) for r in rows])
        sys.stdout.write(dump_json(document) + "\n")
    else:
        write_csv(header, rows, sys.stdout)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_bound(args: argparse.Namespace) -> int:
    grid = args.grid if args.grid is not None else [args.alpha]
    rows = bound_curve(grid, args.mode)
    _emit_rows(
        args, "bound", ["alpha", "bits", "mode"],
        [(row.alpha, row.bits, row.mode) for row in rows],
    )
    return EXIT_OK


def _solver_options(args: argparse.Namespace) -> SolverOptions:
    return SolverOptions.from_settings(restarts=args.restarts, workers=args.workers)


def cmd_optimize(args: argparse.Namespace) -> int:
    options = _solver_options(args)
    if args.alpha_grid is not None:
        v_values = args.v_grid or [args.v]
        rows = randomness_vs_nsit_curve(args.alpha_grid, v_values, args.seed, options)
        _emit_rows(
            args, "optimize", ["alpha", "v", "bits", "converged"],
            [(row.alpha, row.v, row.bits, row.converged) for row in rows],
        )
        return EXIT_OK if all(row.converged for row in rows) else EXIT_FAILED

    if args.alpha is None:
        raise InvalidParameterError("give --alpha or --alpha-grid")
    objective = args.objective or args.mode
    problem = OptProblem(
        alpha=args.alpha, nsit_tolerance=args.v, objective=objective, target=args.target
    )
    result = maximize(problem, options, seed=args.seed)
    model = OptResultModel.from_result(result, seed=args.seed)
    if args.out:
        export_json(model, args.out, pretty=True)

    if args.format == "json":
        sys.stdout.write(dump_json(model) + "\n")
    else:
        write_csv(
            ["alpha", "v", "objective", "value", "bits", "converged"],
            [(problem.alpha, problem.nsit_tolerance, objective, result.best_value,
              max(0.0, result.bits), result.converged)],
            sys.stdout,
        )
    if objective in MODES:
        console.print(
            f"[bold]{objective}[/] best = {result.best_value:.6f} "
            f"(analytic {pstar(problem.alpha, objective):.6f})"
        )
    if not result.converged:
        console.print("[yellow]No restart satisfied the constraints to tolerance.[/]")
        return EXIT_FAILED
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if (args.strategy is None) == (args.canonical_alpha is None):
        raise InvalidParameterError("give exactly one of --strategy or --canonical-alpha")
    if args.strategy is not None:
        with open(args.strategy, encoding="utf-8") as f:
            strategy = StrategyModel.model_validate_json(f.read()).to_strategy()
    else:
        strategy = canonical_strategy(args.canonical_alpha)

    settings = get_settings()
    chunk_size = args.chunk_size or settings.chunk_size
    schedule = DriftSchedule(
        base=strategy,
        parameter=args.drift_param,
        amplitude=args.drift_amplitude,
        period=args.drift_period,
    )
    dist = _dist_from_args(args)
    trials = sample_trials(schedule, dist, args.n, seed=args.seed,
                           chunk_size=chunk_size, workers=args.workers)

    out = args.out or os.path.join(settings.output_dir, "trials.jsonl")
    export_trials(trials, out)
    manifest = TrialManifest(
        created_at=datetime.now().astimezone(),
        trials_file=os.path.basename(out),
        sha256=file_sha256(out),
        n=args.n,
        seed=args.seed,
        chunk_size=chunk_size,
        strategy=StrategyModel.from_strategy(strategy),
        drift=DriftModel.from_schedule(schedule),
        distribution=DistributionModel.from_distribution(dist),
        setting_counts={setting_label(s): c for s, c in trials.setting_counts().items()},
    )
    export_json(manifest, manifest_path(out), pretty=True)
    if args.bits_dir:
        export_bits(bits_from_trials(trials), args.bits_dir)

    console.print(f"[green]Wrote {len(trials)} trials to {out}[/]")
    return EXIT_OK


def _trials_distribution(args: argparse.Namespace) -> SettingsDistribution:
    """The trials manifest's distribution unless flags ask for another one."""
    manifest = read_manifest(args.trials)
    explicit = args.dist is not None or args.audit or args.audit_mass is not None
    if manifest is None:
        return _dist_from_args(args)
    recorded = manifest.distribution.to_distribution()
    if not explicit:
        logger.info(f"Using the settings distribution from {manifest_path(args.trials)}")
        return recorded
    dist = _dist_from_args(args)
    if any(abs(dist.p(s) - recorded.p(s)) > 1e-12 for s in ALL_SETTINGS):
        console.print(
            f"[yellow]Warning:[/] the requested distribution does not match the one in "
            f"{manifest_path(args.trials)}; the LGI estimate is reweighted with the requested one"
        )
    return dist


def cmd_certify(args: argparse.Namespace) -> int:
    if args.trials:
        dist = _trials_distribution(args)
        trials = read_trials(args.trials)
        report = certify_trials(trials, dist, args.delta, args.mode, memory=not args.no_memory)
    else:
        dist = _dist_from_args(args)
        if args.I is None or args.n is None:
            raise InvalidParameterError("give --trials, or both --I and --n")
        report = certify(args.I, args.n, dist, args.delta, args.mode, memory=not args.no_memory)

    model = CertificationReportModel.from_report(report)
    if args.out:
        export_json(model, args.out, pretty=True)
    sys.stdout.write(dump_json(model) + "\n")

    console.print(
        f"I_hat = {report.I_hat:.6f}, eps = {report.epsilon:.6f}, "
        f"[bold]total_bits = {report.total_bits}[/]"
    )
    return EXIT_OK if report.total_bits > 0 else EXIT_FAILED


def cmd_memory_curve(args: argparse.Namespace) -> int:
    dist = _dist_from_args(args)
    curve = memory_curve(args.I, args.delta, dist, args.n_grid, args.mode)
    _emit_rows(
        args, "memory-curve", ["n", "total_bits", "mode"],
        [(row.n, row.total_bits, row.mode) for row in curve.rows],
    )
    console.print(
        f"First grid n with bits: {curve.first_positive_n}; "
        f"analytic crossing n: {curve.crossing_n}"
    )
    return EXIT_OK


def cmd_nsit_audit(args: argparse.Namespace) -> int:
    nq = args.nq if args.nq is not None else get_settings().nsit_quantum_bound
    if args.trials:
        trials = read_trials(args.trials)
        estimates = nsit_estimates(trials)
        radii = nsit_deviation(len(trials), args.delta, nq)
        tolerances = nsit_frequency_radius(trials, args.delta)
        _emit_rows(
            args, "nsit-audit",
            ["n", "nsit1", "nsit2", "nsit3", "eps1", "eps2", "eps3", "tol1", "tol2", "tol3"],
            [(len(trials), *estimates, *radii, *tolerances)],
        )
        # The exit status follows tol, the radius of the frequency estimates.
        exceeded = [j + 1 for j in range(3) if abs(estimates[j]) > tolerances[j]]
        if exceeded:
            console.print(f"[yellow]NSIT estimates outside the tolerance for j = {exceeded}[/]")
            return EXIT_FAILED
        return EXIT_OK

    rows = [(n, *nsit_deviation(n, args.delta, nq)) for n in args.n_grid]
    _emit_rows(args, "nsit-audit", ["n", "eps1", "eps2", "eps3"], rows)
    return EXIT_OK


@dataclass(frozen=True, slots=True)
class ReproCheck:
    quantity: str
    reference: float
    computed: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return abs(self.computed - self.reference) <= self.tolerance


def repro_checks(restarts: int, seed: int, skip_optimizer: bool = False) -> list[ReproCheck]:
    """Every headline number recomputed next to its reference value."""
    uniform = SettingsDistribution.uniform()
    biased = SettingsDistribution.biased(1 / 6, 5 / 12, 5 / 12)
    checks = [
        ReproCheck("entropy_joint(0.5)", 1.415, entropy(0.5, "joint"), 0.005),
        ReproCheck("entropy_conditional(0.5)", 0.415, entropy(0.5, "conditional"), 0.005),
        ReproCheck("bits uniform (I=1.31, n=1e5)", 3673,
                   certify(1.31, 100_000, uniform, 0.01).total_bits, 2),
        ReproCheck("bits biased (I=1.31, n=1e5)", 2777,
                   certify(1.31, 100_000, biased, 0.01).total_bits, 2),
        ReproCheck("no-memory bits per round (I=1.31)", 0.05406,
                   certify(1.31, 100_000, uniform, 0.01, memory=False).bits_per_round, 1e-4),
        ReproCheck("eps crossing n (uniform)", 1942, epsilon_crossing(1.31, 0.01, uniform.q), 1),
        ReproCheck("nsit radius (n=1e5, delta=0.01)", 0.0144,
                   nsit_deviation(100_000, 0.01)[0], 1e-4),
    ]
    if not skip_optimizer:
        options = SolverOptions.from_settings(restarts=restarts)
        for alpha, mode in ((0.3, "joint"), (0.5, "conditional")):
            result = maximize(OptProblem(alpha=alpha, objective=mode), options, seed=seed)
            checks.append(
                ReproCheck(f"optimizer {mode} (alpha={alpha})", pstar(alpha, mode),
                           result.best_value, 2e-3)
            )
    return checks


def cmd_repro_paper(args: argparse.Namespace) -> int:
    checks = repro_checks(args.restarts, args.seed, skip_optimizer=args.skip_optimizer)

    table = Table(title="Headline numbers")
    table.add_column("Quantity", style="cyan")
    table.add_column("Reference", justify="right")
    table.add_column("Computed", justify="right")
    table.add_column("OK", style="green")
    for check in checks:
        table.add_row(check.quantity, f"{check.reference:.6g}", f"{check.computed:.6g}",
                      "yes" if check.ok else "[red]no[/]")
    console.print(table)

    header = ["quantity", "reference", "computed", "tolerance", "ok"]
    rows = [(c.quantity, float(c.reference), float(c.computed), c.tolerance, c.ok) for c in checks]
    write_csv(header, rows, sys.stdout)
    if args.out:
        export_csv(header, rows, args.out)
    return EXIT_OK if all(c.ok for c in checks) else EXIT_FAILED


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _add_common(parser: argparse.ArgumentParser, formats: bool = True) -> None:
    parser.add_argument("--verbose", "-v", action="store_true", help="Enable verbose logging")
    if formats:
        parser.add_argument("--format", choices=["csv", "json"], default="csv",
                            help="Output format on stdout (default: csv)")


def _add_dist(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dist", default=None,
                        help="Settings distribution: uniform or biased:p12,p23,p13 "
                             "(default: uniform, or the one recorded in a trials manifest)")
    parser.add_argument("--audit", action="store_true",
                        help="Add the unblocked (0,2), (0,3) settings for NSIT auditing")
    parser.add_argument("--audit-mass", type=float, default=None,
                        help="Total probability of the unblocked settings "
                             "(default: 0.10 with --audit, else 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = CliParser(
        prog="lgi-randomness",
        description="Certified randomness from Leggett-Garg inequality violations",
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog=__doc__,
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=CliParser)

    p = sub.add_parser("bound", help="Analytic min-entropy bound")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--alpha", type=float, help="LGI excess alpha (LGI = 1 + alpha)")
    group.add_argument("--grid", type=parse_grid, help="Alpha grid start:stop:step or a,b,c")
    p.add_argument("--mode", choices=MODES, default="joint", help="Bound type (default: joint)")
    _add_common(p)
    p.set_defaults(handler=cmd_bound)

    p = sub.add_parser("optimize", help="Numerical maximization of outcome probabilities")
    p.add_argument("--alpha", type=float, help="LGI excess alpha")
    p.add_argument("--v", type=float, default=0.0, help="NSIT tolerance (default: 0)")
    p.add_argument("--mode", choices=MODES, default="joint", help="Objective (default: joint)")
    p.add_argument("--objective", choices=OBJECTIVES, default=None,
                   help="Override the objective, e.g. cos2z1 for the lemma check")
    p.add_argument("--target", type=parse_target, default=None,
                   help="Single outcome such as 13:+- (default: max over all 12)")
    p.add_argument("--alpha-grid", type=parse_grid, default=None,
                   help="Tabulate conditional bits over an alpha grid")
    p.add_argument("--v-grid", type=parse_grid, default=None, help="NSIT tolerance grid")
    p.add_argument("--restarts", type=int, default=None, help="Restarts per outcome")
    p.add_argument("--workers", type=int, default=None, help="Worker processes")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    p.add_argument("--out", default=None, help="Also write the JSON result to this path")
    _add_common(p)
    p.set_defaults(handler=cmd_optimize)

    p = sub.add_parser("simulate", help="Generate a reproducible trial stream")
    p.add_argument("--strategy", default=None, help="Strategy JSON file")
    p.add_argument("--canonical-alpha", type=float, default=None,
                   help="Use the canonical strategy at this alpha")
    p.add_argument("--n", type=int, required=True, help="Number of rounds")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    p.add_argument("--chunk-size", type=int, default=None, help="Rounds per RNG chunk")
    p.add_argument("--workers", type=int, default=None, help="Worker processes")
    p.add_argument("--drift-param", default=None, help="Strategy parameter to drift, e.g. z1")
    p.add_argument("--drift-amplitude", type=float, default=0.0, help="Drift amplitude")
    p.add_argument("--drift-period", type=float, default=1.0, help="Drift period in rounds")
    p.add_argument("--out", default=None, help="Trials JSONL path (default: data/trials.jsonl)")
    p.add_argument("--bits-dir", default=None, help="Also write grouped bit files here")
    _add_dist(p)
    _add_common(p, formats=False)
    p.set_defaults(handler=cmd_simulate)

    p = sub.add_parser("certify", help="Certified randomness for an LGI estimate")
    p.add_argument("--trials", default=None, help="Trials JSONL file to estimate from")
    p.add_argument("--I", type=float, default=None, help="Estimated LGI value I_hat")
    p.add_argument("--n", type=int, default=None, help="Number of rounds")
    p.add_argument("--delta", type=float, default=0.01, help="Failure probability")
    p.add_argument("--mode", choices=MODES, default="conditional",
                   help="Entropy bound (default: conditional)")
    p.add_argument("--no-memory", action="store_true",
                   help="Assume independent rounds (no confidence radius)")
    p.add_argument("--out", default=None, help="Also write the report to this path")
    _add_dist(p)
    _add_common(p, formats=False)
    p.set_defaults(handler=cmd_certify)

    p = sub.add_parser("memory-curve", help="Certified bits against number of rounds")
    p.add_argument("--I", type=float, required=True, help="Estimated LGI value I_hat")
    p.add_argument("--delta", type=float, default=0.01, help="Failure probability")
    p.add_argument("--n-grid", type=parse_int_grid, default=parse_int_grid("1000:100000:1000"),
                   help="Round counts (default: 1000:100000:1000)")
    p.add_argument("--mode", choices=MODES, default="conditional",
                   help="Entropy bound (default: conditional)")
    _add_dist(p)
    _add_common(p)
    p.set_defaults(handler=cmd_memory_curve)

    p = sub.add_parser("nsit-audit", help="NSIT deviation radii, or estimates from trials")
    p.add_argument("--n-grid", type=parse_int_grid, default=parse_int_grid("10000,100000,1000000"),
                   help="Round counts (default: 10000,100000,1000000)")
    p.add_argument("--delta", type=float, default=0.01, help="Failure probability")
    p.add_argument("--nq", type=float, default=None, help="NSIT quantum bound (default: 0.5)")
    p.add_argument("--trials", default=None, help="Trials JSONL file to audit")
    _add_common(p)
    p.set_defaults(handler=cmd_nsit_audit)

    p = sub.add_parser("repro-paper", help="Recompute every headline number")
    p.add_argument("--restarts", type=int, default=4, help="Optimizer restarts (default: 4)")
    p.add_argument("--seed", type=int, default=0, help="Master seed (default: 0)")
    p.add_argument("--skip-optimizer", action="store_true", help="Skip the numerical checks")
    p.add_argument("--out", default=None, help="Also write the summary CSV here")
    _add_common(p, formats=False)
    p.set_defaults(handler=cmd_repro_paper)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.verbose)
    run = RunConfig.from_args(args)
    logger.debug(f"Running {run.command} ({run.output_format}) with {run.params}")
    handler: Callable[[argparse.Namespace], int] = args.handler
    try:
        return handler(args)
    except (OSError, TrialFileError) as exc:
        console.print(f"[red]I/O error:[/] {exc}")
        return EXIT_IO
    except (InvalidParameterError, ValueError) as exc:
        console.print(f"[red]Error:[/] {exc}")
        return EXIT_USAGE
    except LgiRandomnessError as exc:
        console.print(f"[red]Error:[/] {exc}")
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
