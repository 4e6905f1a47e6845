"""Command-line entry point"""
from typing import List, Optional
import argparse
import logging
import sys

from limitforce.cli.handler import EXIT_USAGE, command_handler
from limitforce.config import get_settings
from limitforce.models import RunConfig
from limitforce.utils.serialization import parse_number

settings = get_settings()
logger = logging.getLogger(__name__)

COMMAND_OPTIONS = (
    "patterns", "graphs", "order", "mode", "family", "alpha", "beta", "k",
    "n", "epsilon", "rho", "exact", "kind", "flags",
)


def _fraction(text: str) -> float:
    try:
        return parse_number(text)
    except ValueError as e:
        raise argparse.ArgumentTypeError(str(e))


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=settings.DEFAULT_SEED)
    common.add_argument("--samples", type=int, default=settings.DEFAULT_SAMPLES)
    common.add_argument("--tol", type=float, default=None, dest="tolerance")
    common.add_argument("--grid", type=int, default=None)
    common.add_argument("--out", default=None, help="output file (default: stdout)")
    common.add_argument("--resolution", type=int, default=256)

    parser = _Parser(prog="limitforce", description="Permuton and graphon forcing toolkit")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    density = sub.add_parser("density", parents=[common], help="pattern or subgraph density table")
    density.add_argument("descriptor")
    density.add_argument("--pattern", action="append", dest="patterns")
    density.add_argument("--graph", action="append", dest="graphs", help='e.g. "3; 1-2,2-3"')
    density.add_argument("--order", type=int)
    density.add_argument("--mode", choices=("exact", "mc", "quadrature"), default="exact")

    verify = sub.add_parser("verify", parents=[common], help="check a forcing constraint system")
    verify.add_argument("family", choices=("monotone", "square"))
    verify.add_argument("--alpha", type=_fraction, required=True)
    verify.add_argument("--descriptor", default=None, help="permuton to test (default: the family member)")

    witness = sub.add_parser("witness", parents=[common], help="build and certify a perturbed block sequence")
    witness.add_argument("--n", type=int, required=True)
    witness.add_argument("--alpha", type=_fraction, required=True)
    witness.add_argument("--epsilon", type=_fraction, required=True)
    witness.add_argument("--rho", type=_fraction, default=None)

    heatmap = sub.add_parser("heatmap", parents=[common], help="P2 graymap of a permuton or graphon")
    heatmap.add_argument("descriptor")
    heatmap.add_argument("--exact", action="store_true", help="exact cell masses instead of sampling")

    expression = sub.add_parser("expression", parents=[common], help="density-expression coefficients")
    expression.add_argument("kind", choices=("lambda", "mu", "flags"))
    expression.add_argument("flags", nargs="*", help="rooted permutations such as 12' or 2,3',1")
    expression.add_argument("--alpha", type=int, default=0)
    expression.add_argument("--beta", type=int, default=0)
    expression.add_argument("--k", type=int, default=0)
    expression.add_argument("--descriptor", default=None, help="also evaluate on this permuton")
    expression.add_argument("--mode", choices=("exact", "mc"), default="exact")

    sample = sub.add_parser("sample", parents=[common], help="draw a random permutation or graph")
    sample.add_argument("descriptor")
    sample.add_argument("--n", type=int, required=True)
    return parser


def to_run_config(args: argparse.Namespace) -> RunConfig:
    values = vars(args)
    options = {k: values[k] for k in COMMAND_OPTIONS
               if values.get(k) is not None and values[k] is not False and values[k] != []}
    return RunConfig(
        command=args.command,
        descriptor=values.get("descriptor"),
        seed=args.seed,
        samples=args.samples,
        tolerance=args.tolerance,
        grid=args.grid,
        resolution=args.resolution,
        out=args.out,
        options=options,
    )


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(level=settings.LOG_LEVEL, stream=sys.stderr)
    args = build_parser().parse_args(argv)
    if args.samples < 1:
        print("limitforce: error: --samples must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    config = to_run_config(args)
    outcome = command_handler.process_command(config)
    if outcome.output:
        if config.out:
            with open(config.out, "w", newline="") as f:
                f.write(outcome.output)
            logger.info(f"✅ Wrote {config.out}")
        else:
            sys.stdout.write(outcome.output)
    if outcome.message:
        print(f"limitforce: {outcome.message}", file=sys.stderr)
    return outcome.status


if __name__ == "__main__":
    sys.exit(main())
