"""
Command-line interface for fbmbt.

    fbmbt constants --hurst H --r R
    fbmbt verify --part {p1|p1c|p2|p3|p4|identities} --hurst H ...
    fbmbt crossings --level n --t T --seed S
    fbmbt variation --statistic {V|W|S|R} --hurst H --r R ...
    fbmbt fbm --hurst H --level n --span L --seed S

Exit codes: 0 pass, 1 tolerance failure or runtime error, 2 configuration error.
"""

import argparse
import json
import logging
import sys
from fractions import Fraction

from src.config import (
    DEFAULT_LEVELS,
    DEFAULT_SPAN_MULTIPLIER,
    FORMATS,
    PART_ALIASES,
    ConfigError,
    ExperimentConfig,
)
from src.crossing_scheme import COUPLED, WALK, local_time_estimate, simulate_coupled, simulate_walk
from src.experiment import run, variation_table
from src.gaussian_core import generate_fbm
from src.report import FLOAT_FORMAT, report
from src.variation_stats import STATISTICS
from src.weights import weight_names

logger = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2

SUMMARY_COLUMNS = ["n", "mean", "var", "target", "gap", "within_tolerance", "ks_p", "mse", "corr"]


def _real(text):
    """Float or fraction such as 1/6."""
    try:
        return float(Fraction(text))
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number: '{text}'") from None


def _levels(text):
    try:
        return tuple(int(part) for part in text.split(",") if part.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"levels must be comma-separated integers, got '{text}'") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"Error: {message}", file=sys.stderr)
        sys.exit(EXIT_CONFIG)


def build_parser():
    parser = _Parser(prog="fbmbt", description="Monte Carlo checks for fBm in Brownian time")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("constants", help="print μ, κ, b, α, β, γ for (H, r)")
    p.add_argument("--hurst", type=_real, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--format", choices=("text",) + FORMATS, default="text")
    p.add_argument("--out", help="directory to write the table to")

    p = sub.add_parser("verify", help="run one limit-theorem experiment")
    p.add_argument("--part", choices=sorted(PART_ALIASES), required=True)
    p.add_argument("--hurst", type=_real, required=True)
    p.add_argument("--r", type=int, default=1)
    p.add_argument("--f", dest="weight", choices=weight_names(), default="one")
    p.add_argument("--t", dest="horizon", type=_real, default=1.0)
    p.add_argument("--levels", type=_levels, default=DEFAULT_LEVELS)
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=(WALK, COUPLED), default=WALK)
    p.add_argument("--span-multiplier", type=_real, default=DEFAULT_SPAN_MULTIPLIER)
    p.add_argument("--out", help="output directory")
    p.add_argument("--format", choices=FORMATS, default="csv")

    p = sub.add_parser("crossings", help="dump one crossing record as JSON")
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--t", dest="horizon", type=_real, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=(WALK, COUPLED), default=WALK)

    p = sub.add_parser("variation", help="emit variation statistics as CSV")
    p.add_argument("--statistic", choices=STATISTICS, default="V")
    p.add_argument("--hurst", type=_real, required=True)
    p.add_argument("--r", type=int, default=1, help="power p or order r")
    p.add_argument("--f", dest="weight", choices=weight_names(), default="one")
    p.add_argument("--t", dest="horizon", type=_real, default=1.0)
    p.add_argument("--levels", type=_levels, default=DEFAULT_LEVELS)
    p.add_argument("--reps", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa", type=_real, default=0.0, help="normalization exponent for S and R")
    p.add_argument("--mode", choices=(WALK, COUPLED), default=WALK)
    p.add_argument("--out", help="CSV file (default stdout)")

    p = sub.add_parser("fbm", help="dump one fBm path as CSV j,t,X")
    p.add_argument("--hurst", type=_real, required=True)
    p.add_argument("--level", type=int, required=True)
    p.add_argument("--span", type=_real, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV file (default stdout)")
    return parser


def _print_banner(title):
    print("=" * 50)
    print(title)
    print("=" * 50)


def cmd_constants(args):
    config = ExperimentConfig(part="constants", hurst=args.hurst, r=args.r)
    result = run(config)
    table = result.constants
    if args.out:
        for path in report(result, args.out, "json" if args.format == "json" else "csv"):
            print(f"saved {path}")
    elif args.format == "csv":
        table.to_csv(sys.stdout, index=False, float_format=FLOAT_FORMAT)
    elif args.format == "json":
        print(table.to_json(orient="records", indent=2))
    else:
        print(table.to_string(index=False))
    return EXIT_PASS


def cmd_verify(args):
    config = ExperimentConfig(
        part=args.part,
        hurst=args.hurst,
        r=args.r,
        weight=args.weight,
        horizon=args.horizon,
        levels=args.levels,
        replications=args.reps,
        master_seed=args.seed,
        mode=args.mode,
        span_multiplier=args.span_multiplier,
        output=args.out,
        fmt=args.format,
    )
    result = run(config)
    _print_banner(f"{config.part}: H={config.hurst:g} r={config.r} f={config.weight} t={config.horizon:g}")
    columns = [c for c in SUMMARY_COLUMNS if c in result.summary.columns]
    print(result.summary[columns].to_string(index=False))
    print("-" * 50)
    print("PASS" if result.passed else "FAIL")
    if config.output:
        for path in report(result, config.output, config.fmt):
            print(f"saved {path}")
    return EXIT_PASS if result.passed else EXIT_FAIL


def crossing_document(rec):
    """JSON-ready dump {n, t, j_star, counts, local_time}."""
    L = local_time_estimate(rec)
    return {
        "n": rec.level,
        "t": rec.horizon,
        "j_star": rec.j_star,
        "counts": [
            {"j": int(j), "U": int(u), "D": int(d)} for j, u, d in zip(rec.cells, rec.up, rec.down)
        ],
        "local_time": [{"j": int(j), "value": float(v)} for j, v in zip(L.indices, L.values)],
    }


def cmd_crossings(args):
    if args.mode == COUPLED:
        rec = simulate_coupled(args.level, args.horizon, seed=args.seed)
    else:
        rec = simulate_walk(args.level, args.horizon, args.seed)
    print(json.dumps(crossing_document(rec), indent=2))
    return EXIT_PASS


def cmd_variation(args):
    table = variation_table(
        args.statistic, args.hurst, args.r, args.weight, args.horizon, args.levels, args.reps,
        master_seed=args.seed, kappa_exp=args.kappa, mode=args.mode,
    )
    table.to_csv(args.out or sys.stdout, index=False, float_format=FLOAT_FORMAT)
    return EXIT_PASS


def cmd_fbm(args):
    X = generate_fbm(args.hurst, args.level, args.span, args.seed)
    X.to_frame().to_csv(args.out or sys.stdout, index=False, float_format=FLOAT_FORMAT)
    return EXIT_PASS


COMMANDS = {
    "constants": cmd_constants,
    "verify": cmd_verify,
    "crossings": cmd_crossings,
    "variation": cmd_variation,
    "fbm": cmd_fbm,
}


def main(argv=None):
    """Main function for CLI usage."""
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except ConfigError as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:
        logger.debug("command failed", exc_info=True)
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == '__main__':
    sys.exit(main())
