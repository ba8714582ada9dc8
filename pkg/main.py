"""
DRTR command-line entry point.

Parses the subcommand, configures logging, hands the work to
RunController and maps failures to exit codes:

  0  success
  2  malformed input, invalid argument, or an unreadable or missing file
  3  numeric failure (NaN / Inf during training or evaluation)
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from typing import Optional, Sequence

from controller import RunController
from diffusion.config import Mode
from errors import DrtrError, NumericError

logger = logging.getLogger("drtr")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="drtr",
        description="Distance-recomputing, topology-reconstructing graph diffusion.",
    )
    parser.add_argument("--config", help="schedule configuration JSON")
    # also accepted after the subcommand, where it wins over the global one
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", dest="command_config", help="schedule configuration JSON")
    verbosity = parser.add_mutually_exclusive_group()
    verbosity.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    verbosity.add_argument("-q", "--quiet", action="store_true", help="warnings only")
    parser.add_argument("--progress", action="store_true", help="show progress bars")

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-sbm", parents=[common], help="generate a stochastic-block-model graph")
    p.add_argument("--spec", required=True, help="SBM spec JSON")
    p.add_argument("--out", default="runs/graph")

    p = sub.add_parser("train", parents=[common], help="train on a graph directory")
    p.add_argument("--graph", required=True)
    p.add_argument("--mode", type=str.lower, choices=[m.value for m in Mode])
    p.add_argument("--out", default="runs/train")

    p = sub.add_parser("refine", parents=[common], help="one pruning + reconstruction pass without training")
    p.add_argument("--graph", required=True)
    p.add_argument("--out", default="runs/refine")

    p = sub.add_parser("stability", parents=[common], help="embedding stability under edge flips")
    p.add_argument("--graph", required=True)
    p.add_argument("--params", help="trained params.bin (random init when omitted)")
    p.add_argument("--deltas", type=_int_list, default=[1, 2, 4, 8])
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--out", default="runs/stability")

    p = sub.add_parser("ablate", parents=[common], help="compare the four modes on SBM graphs")
    p.add_argument("--spec", required=True)
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--out", default="runs/ablate")

    p = sub.add_parser("linkpred", parents=[common], help="held-out edge prediction")
    p.add_argument("--graph", required=True)
    p.add_argument("--holdout", type=float, default=0.1)
    p.add_argument("--mode", type=str.lower, choices=[m.value for m in Mode])
    p.add_argument("--scorer", choices=["dot", "similarity"], default="dot")
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--out", default="runs/linkpred")

    p = sub.add_parser("scale", parents=[common], help="per-epoch time against graph size")
    p.add_argument("--sizes", type=_int_list, default=[1000, 2000, 4000, 8000])
    p.add_argument("--avg-degree", type=float, default=8.0)
    p.add_argument("--epochs", type=_positive_int, default=3)
    p.add_argument("--seeds", type=_positive_int, default=1)
    p.add_argument("--out", default="runs/scale")

    p = sub.add_parser("noise", parents=[common], help="pruning rate on planted noisy edges")
    p.add_argument("--spec", required=True)
    p.add_argument("--seeds", type=_positive_int, default=5)
    p.add_argument("--out", default="runs/noise")

    return parser


def _configure_logging(args: argparse.Namespace) -> None:
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
        datefmt="%H:%M:%S",
        force=True,
    )


def _dispatch(controller: RunController, args: argparse.Namespace):
    cmd = args.command
    if cmd == "gen-sbm":
        return controller.gen_sbm(args.spec, args.out)
    if cmd == "train":
        return controller.train(args.graph, args.out, mode=args.mode)
    if cmd == "refine":
        return controller.refine(args.graph, args.out)
    if cmd == "stability":
        return controller.stability(args.graph, args.out, args.deltas, args.seeds, args.params)
    if cmd == "ablate":
        return controller.ablate(args.spec, args.out, args.seeds)
    if cmd == "linkpred":
        return controller.linkpred(
            args.graph, args.out, args.holdout, args.seeds, mode=args.mode, scorer=args.scorer
        )
    if cmd == "scale":
        return controller.scale(args.out, args.sizes, args.avg_degree, args.seeds, args.epochs)
    if cmd == "noise":
        return controller.noise(args.spec, args.out, args.seeds)
    raise AssertionError(f"unhandled command {cmd}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging(args)

    try:
        config = getattr(args, "command_config", None) or args.config
        controller = RunController(config, progress=args.progress)
        artifact = _dispatch(controller, args)
    except NumericError as exc:
        logger.error("[Main] numeric failure: %s", exc)
        return EXIT_NUMERIC
    except (DrtrError, OSError, UnicodeError, json.JSONDecodeError) as exc:
        logger.error("[Main] %s", exc)
        return EXIT_INPUT

    logger.info("[Main] done: %s", artifact)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
