"""heatreg command-line entry point.

Usage:
    python -m heatreg [--config run.cfg] [--log-level LEVEL] <command> [options]

Commands: encode, loss, train-toy, sweep, decode, eval.
"""

import argparse
import logging
import sys
from datetime import datetime, timezone
from typing import Callable, Dict, List, Optional

from heatreg import __version__
from heatreg.cli import commands
from heatreg.cli.error_handler import EXIT_OK, handle_exception
from heatreg.cli.run_config import RunConfig
from heatreg.config import settings
from heatreg.models.schemas.fit import Variant
from heatreg.utils.logging import setup_logging

logger = logging.getLogger(__name__)

COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    "encode": commands.cmd_encode,
    "loss": commands.cmd_loss,
    "train-toy": commands.cmd_train_toy,
    "sweep": commands.cmd_sweep,
    "decode": commands.cmd_decode,
    "eval": commands.cmd_eval,
}


def _add_fit_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--sigma0", type=float, default=settings.SIGMA0, help="Base Gaussian std (default: %(default)s)")
    p.add_argument("--lambda", dest="lambda_", type=float, default=settings.LAMBDA,
                   help="Regularizer weight; inf freezes s at 1 (default: %(default)s)")
    p.add_argument("--gamma", type=float, default=settings.GAMMA, help="WAHR exponent (default: %(default)s)")
    p.add_argument("--steps", type=int, default=settings.STEPS)
    p.add_argument("--lr", type=float, default=settings.LEARNING_RATE)
    p.add_argument("--output-blur", type=float, default=0.0,
                   help="Std in pixels of a blur over the whole prediction; 0 disables it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heatreg",
        description="Scale- and weight-adaptive heatmap regression toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", help="key=value file supplying defaults for the command's options")
    parser.add_argument("--log-level", choices=["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("encode", help="Encode annotations into a ground-truth HMAP dump")
    p.add_argument("annotations", help="COCO-style annotation JSON")
    p.add_argument("--sigma0", type=float, default=settings.SIGMA0)
    p.add_argument("--size", default=f"17x{settings.CANVAS}x{settings.CANVAS}", help="KxHxW (default: %(default)s)")
    p.add_argument("--variant", choices=["base", "shr", "sahr-fixed"], default="base")
    p.add_argument("--scale", type=float, help="Scale factor s for sahr-fixed")
    p.add_argument("--w-base", type=float, default=settings.W_BASE, help="Base width of the SHR scale")
    p.add_argument("--image-id", type=int, help="Encode one image only (default: pool all)")
    p.add_argument("-o", "--output", help="Output HMAP path")

    p = sub.add_parser("loss", help="Evaluate a loss variant and print a JSON report")
    p.add_argument("--pred", help="Prediction HMAP")
    p.add_argument("--base", help="Base ground-truth HMAP")
    p.add_argument("--alpha", help="Alpha HMAP (sahr, swahr)")
    p.add_argument("--variant", choices=["base", "sahr", "wahr", "swahr"], default="base")
    p.add_argument("--lambda", dest="lambda_", type=float, default=settings.LAMBDA)
    p.add_argument("--gamma", type=float, default=settings.GAMMA)

    p = sub.add_parser("train-toy", help="Fit a free prediction to a synthetic scene")
    p.add_argument("--scene", help="Scene or annotation JSON")
    p.add_argument("--gen", help='Generator spec, e.g. "n=2,scales=1:2,jitter=0.05,canvas=64"')
    p.add_argument("--variant", choices=[v.value for v in Variant], default="base")
    _add_fit_options(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--w-base", type=float, default=settings.W_BASE)
    p.add_argument("--no-blur", dest="blur", action="store_false", help="Disable the prediction blur")
    p.add_argument("-o", "--output", help="Output directory")

    p = sub.add_parser("sweep", help="Sweep lambda, gamma or sigma0 over seeded scenes and emit CSV")
    p.add_argument("--param", choices=["lambda", "gamma", "sigma0"])
    p.add_argument("--values", help="Comma-separated values, inf allowed")
    p.add_argument("--variant", choices=[v.value for v in Variant], default="sahr")
    _add_fit_options(p)
    p.add_argument("--seeds", type=int, default=5, help="Number of scenes, seeded 0..N-1")
    p.add_argument("--n-persons", type=int, default=2)
    p.add_argument("--scales", default="1:2", help="Person size range a:b")
    p.add_argument("--jitter", type=float, default=0.05)
    p.add_argument("--canvas", default=str(settings.CANVAS))
    p.add_argument("--workers", type=int, default=settings.SWEEP_WORKERS)
    p.add_argument("-o", "--output", help="CSV path (default: stdout)")

    p = sub.add_parser("decode", help="Decode a prediction dump into grouped poses")
    p.add_argument("--pred", help="Prediction HMAP")
    p.add_argument("--tags", help="Tag HMAP of the same shape")
    p.add_argument("--aggregate", help="Comma-separated extra dumps averaged after resampling")
    p.add_argument("--flip-pred", help="Prediction HMAP of the mirrored input")
    p.add_argument("--flip-pairs", default="coco", help='"coco", "none" or "a-b,c-d"')
    p.add_argument("--max-peaks", type=int, default=settings.MAX_PEAKS)
    p.add_argument("--score-floor", type=float, default=settings.SCORE_FLOOR)
    p.add_argument("--tag-threshold", type=float, default=settings.TAG_THRESHOLD)
    p.add_argument("--no-refine", dest="refine", action="store_false")
    p.add_argument("--image-id", type=int, default=0)
    p.add_argument("-o", "--output", help="Poses JSON path (default: stdout)")

    p = sub.add_parser("eval", help="COCO-protocol AP of poses against annotations")
    p.add_argument("--pred", help="Poses JSON")
    p.add_argument("--gt", help="Annotation JSON")
    p.add_argument("--k-consts", help="JSON array of per-keypoint falloff constants")
    p.add_argument("--synthetic", action="store_true", help="Uniform falloff constants of synthetic scenes")
    p.add_argument("-o", "--output", help="JSON report path")

    return parser


def _command_from_argv(argv: List[str]) -> Optional[str]:
    for token in argv:
        if token in COMMANDS:
            return token
    return None


def _subparser(parser: argparse.ArgumentParser, command: str) -> argparse.ArgumentParser:
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[command]
    raise KeyError(command)


def main(argv: Optional[List[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)

    pre = argparse.ArgumentParser(add_help=False, allow_abbrev=False)
    pre.add_argument("--config")
    pre.add_argument("--log-level")
    early, _ = pre.parse_known_args(argv)
    setup_logging(early.log_level)

    start_time = datetime.now(timezone.utc)
    parser = build_parser()
    exit_code = EXIT_OK
    try:
        command = _command_from_argv(argv)
        if early.config and command:
            RunConfig.from_file(early.config, command).apply(_subparser(parser, command))
        args = parser.parse_args(argv)
        logger.debug(f"Running '{args.command}'")
        exit_code = COMMANDS[args.command](args)
    except SystemExit as e:
        # argparse usage errors and --help
        exit_code = 0 if e.code is None else (e.code if isinstance(e.code, int) else 2)
    except BaseException as e:
        exit_code = handle_exception(e)
    finally:
        duration = (datetime.now(timezone.utc) - start_time).total_seconds()
        logger.debug(f"Finished in {duration:.2f} seconds (exit code: {exit_code})")
    return exit_code


if __name__ == "__main__":
    sys.exit(main())
