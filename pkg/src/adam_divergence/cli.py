"""Command-line front end: ``run``, ``sweep``, ``verify`` and ``plot-data``.

Exit codes: 0 success, 1 runtime or invariant failure, 2 usage error,
3 when a sweep finds a cell that does not diverge.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from .diagnostics import divergence_verdict
from .functions import CounterexampleSpec, build_counterexample
from .harness import (
    GridSpec,
    export_trajectory,
    fmt,
    load_trajectory,
    predicted_iterates,
    run_counterexample,
    sweep,
)
from .optimizer import AdamParams, Variant
from .verification import certify

EXIT_OK, EXIT_FAILURE, EXIT_USAGE, EXIT_NOT_DIVERGING = 0, 1, 2, 3

DEFAULT_BETAS = "0,0.3,0.6,0.9,0.99"
DEFAULT_ALPHAS = "1e-3,1,10"


def _float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid number: {text!r}") from None
    if not math.isfinite(value):
        raise argparse.ArgumentTypeError(f"value must be finite, got {text!r}")
    return value


def positive(name: str):
    def parse(text: str) -> float:
        value = _float(text)
        if value <= 0.0:
            raise argparse.ArgumentTypeError(f"{name} must be positive")
        return value

    return parse


def nonnegative(name: str):
    def parse(text: str) -> float:
        value = _float(text)
        if value < 0.0:
            raise argparse.ArgumentTypeError(f"{name} must be nonnegative")
        return value

    return parse


def negative(name: str):
    def parse(text: str) -> float:
        value = _float(text)
        if value >= 0.0:
            raise argparse.ArgumentTypeError(f"{name} must be negative")
        return value

    return parse


def beta(name: str):
    def parse(text: str) -> float:
        value = _float(text)
        if value >= 1.0:
            raise argparse.ArgumentTypeError(f"{name} must be < 1")
        if value < 0.0:
            raise argparse.ArgumentTypeError(f"{name} must be >= 0")
        return value

    return parse


def positive_int(name: str):
    def parse(text: str) -> int:
        try:
            value = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"invalid integer: {text!r}") from None
        if value < 1:
            raise argparse.ArgumentTypeError(f"{name} must be a positive integer")
        return value

    return parse


def value_list(item):
    """Comma-separated values, or ``lo:hi:n`` for ``n`` evenly spaced values."""

    def parse(text: str) -> list[float]:
        text = text.strip()
        if ":" in text:
            parts = text.split(":")
            if len(parts) != 3:
                raise argparse.ArgumentTypeError(f"malformed range {text!r}; expected lo:hi:n")
            lo, hi = _float(parts[0]), _float(parts[1])
            try:
                n = int(parts[2])
            except ValueError:
                raise argparse.ArgumentTypeError(f"malformed count in range {text!r}") from None
            if n < 1:
                raise argparse.ArgumentTypeError(f"range {text!r} is empty")
            raw = [lo] if n == 1 else np.linspace(lo, hi, n).tolist()
            return [item(repr(v)) for v in raw]
        items = [t for t in text.split(",") if t.strip()]
        if not items:
            raise argparse.ArgumentTypeError("empty value list")
        return [item(t.strip()) for t in items]

    return parse


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="JSON file with option defaults; flags override it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="adam-divergence",
        description="ADAM divergence counterexample: trajectories, sweeps and certificates.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run ADAM on the counterexample and write the trajectory")
    _add_config(p)
    p.add_argument("--alpha", type=positive("alpha"), default=1.0)
    p.add_argument("--beta1", type=beta("beta1"), default=0.9)
    p.add_argument("--beta2", type=beta("beta2"), default=0.9)
    p.add_argument("--steps", type=positive_int("steps"), default=1000)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.PURE.value)
    p.add_argument("--epsilon", type=positive("epsilon"), default=1e-8,
                   help="regularisation constant for the eps-* variants")
    p.add_argument("--x0", type=_float, default=0.0)
    p.add_argument("--out", type=Path, help="trajectory file to write")
    p.add_argument("--format", choices=["csv", "json"], help="defaults to the --out suffix, else csv")
    p.add_argument("--stride", type=positive_int("stride"), default=1)
    p.add_argument("--gradient-level", type=negative("gradient-level"), default=-1.0)
    p.add_argument("--value-increment", type=nonnegative("value-increment"), default=0.0)
    p.add_argument("--decreasing-stepsize", action="store_true",
                   help="exploratory: use alpha/sqrt(k+1) instead of a constant step")
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser("sweep", help="run the counterexample over a (beta1, beta2, alpha) grid")
    _add_config(p)
    p.add_argument("--beta1", type=value_list(beta("beta1")), default=DEFAULT_BETAS)
    p.add_argument("--beta2", type=value_list(beta("beta2")), default=DEFAULT_BETAS)
    p.add_argument("--alpha", type=value_list(positive("alpha")), default=DEFAULT_ALPHAS)
    p.add_argument("--steps", type=positive_int("steps"), default=10_000)
    p.add_argument("--variant", choices=[v.value for v in Variant], default=Variant.PURE.value)
    p.add_argument("--epsilon", type=positive("epsilon"), default=1e-8)
    p.add_argument("--jobs", type=positive_int("jobs"), default=1)
    p.add_argument("--out", type=Path, help="sweep CSV to write")
    p.set_defaults(handler=cmd_sweep)

    p = sub.add_parser("verify", help="check every numerical claim and write a JSON report")
    _add_config(p)
    p.add_argument("--alpha", type=positive("alpha"), default=1.0)
    p.add_argument("--beta1", type=beta("beta1"), default=0.9)
    p.add_argument("--beta2", type=beta("beta2"), default=0.9)
    p.add_argument("--steps", type=positive_int("steps"), default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--report-out", type=Path, help="DiagnosticsReport JSON to write")
    p.add_argument("--trajectory", type=Path,
                   help="check this exported trajectory instead of a fresh run")
    p.set_defaults(handler=cmd_verify)

    p = sub.add_parser("plot-data", help="sample (t, f, f') of the counterexample as CSV")
    _add_config(p)
    p.add_argument("--alpha", type=positive("alpha"), default=1.0)
    p.add_argument("--t-min", type=_float, default=-1.0)
    p.add_argument("--t-max", type=_float, default=10.0)
    p.add_argument("--samples", type=positive_int("samples"), default=2201)
    p.add_argument("--out", type=Path, help="CSV file to write (stdout when omitted)")
    p.set_defaults(handler=cmd_plot_data)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str] | None) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if getattr(args, "config", None) is None:
        return args
    try:
        config = json.loads(args.config.read_text())
    except (OSError, ValueError) as exc:
        parser.error(f"cannot read config {args.config}: {exc}")
    if not isinstance(config, dict):
        parser.error(f"config {args.config} must hold a JSON object")
    subparser = parser._subparsers._group_actions[0].choices[args.command]  # noqa: SLF001
    known = {a.dest for a in subparser._actions}  # noqa: SLF001
    defaults = {}
    for key, value in config.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("config", "handler", "help"):
            parser.error(f"unknown config key {key!r} for {args.command}")
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        elif not isinstance(value, bool):
            value = str(value)
        defaults[dest] = value
    # string defaults go through the same type validation as flags
    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _step_length(params: AdamParams, gradient_level: float) -> float:
    xs = predicted_iterates(params, 0.0, gradient_level, 3)
    return float(xs[2] - xs[1])


def cmd_run(args: argparse.Namespace) -> int:
    params = AdamParams(
        alpha=args.alpha,
        beta1=args.beta1,
        beta2=args.beta2,
        variant=Variant(args.variant),
        epsilon=args.epsilon,
    )
    traj = run_counterexample(
        params,
        args.steps,
        x0=args.x0,
        record_stride=args.stride,
        gradient_level=args.gradient_level,
        value_increment=args.value_increment,
        decreasing_stepsize=args.decreasing_stepsize,
    )
    threshold = 0.9 * args.steps * abs(_step_length(params, args.gradient_level))
    verdict = divergence_verdict(traj, threshold=threshold, gradient_floor=0.5)
    if args.out is not None:
        fmt_name = args.format or ("json" if args.out.suffix.lower() == ".json" else "csv")
        export_trajectory(traj, args.out, fmt_name)
    print(f"final_x={fmt(float(traj.x[-1]))} min_abs_g={fmt(traj.min_abs_g)} verdict={verdict.value}")
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    grid = GridSpec(
        beta1=tuple(args.beta1),
        beta2=tuple(args.beta2),
        alpha=tuple(args.alpha),
        variant=Variant(args.variant),
        epsilon=args.epsilon,
    )
    result = sweep(grid, args.steps, jobs=args.jobs)
    if args.out is not None:
        result.to_csv(args.out)
    total = len(result.cells)
    diverging = result.count("Diverges")
    print(f"{diverging}/{total} diverge ({total - diverging} non-diverging cells)")
    return EXIT_OK if diverging == total else EXIT_NOT_DIVERGING


def cmd_verify(args: argparse.Namespace) -> int:
    trajectory = load_trajectory(args.trajectory) if args.trajectory is not None else None
    report = certify(args.alpha, args.steps, args.seed, args.beta1, args.beta2, trajectory=trajectory)
    for check in report.checks:
        print(f"{'PASS' if check.passed else 'FAIL'} {check.name}: {check.detail}")
    if args.report_out is not None:
        args.report_out.write_text(report.to_json())
    if not report.passed:
        print("failed checks: " + ", ".join(report.failed_checks), file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def plot_samples(alpha: float, t_min: float, t_max: float, samples: int):
    """Sample points and ``(f, f')`` of the plain counterexample."""
    num_knots = max(2, int(math.ceil(max(t_max, 0.0) / alpha)) + 2)
    fn = build_counterexample(CounterexampleSpec(alpha=alpha, num_knots=num_knots))
    if samples == 1:
        t = np.array([t_min])
    else:
        # endpoint-weighted form hits knots and midpoints exactly when they are sample points
        i = np.arange(samples, dtype=np.float64)
        t = (t_min * (samples - 1 - i) + t_max * i) / (samples - 1)
    f, df = fn.evaluate(t)
    return t, f, df


def cmd_plot_data(args: argparse.Namespace) -> int:
    if args.t_min >= args.t_max:
        print("adam-divergence plot-data: error: t-min must be smaller than t-max", file=sys.stderr)
        return EXIT_USAGE
    t, f, df = plot_samples(args.alpha, args.t_min, args.t_max, args.samples)
    out = open(args.out, "w", newline="") if args.out is not None else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["t", "f", "df"])
        for row in zip(t.tolist(), f.tolist(), df.tolist()):
            w.writerow([fmt(v) for v in row])
    finally:
        if out is not sys.stdout:
            out.close()
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    try:
        return args.handler(args)
    except (ValueError, OSError, ArithmeticError) as exc:
        print(f"adam-divergence {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
