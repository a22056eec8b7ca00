"""Script to run the full desk-scale ablation suite.

Runs the lambda, gamma and base-sigma sweeps, the base/shr/sahr variant comparison and
the two paired studies (scale ordering, weighting under fore-background
imbalance), writing one CSV per table plus a JSON summary.

Usage:
    python scripts/run_ablation_suite.py [--output DIR] [--seeds N] [--steps N] [--workers N]
"""

import argparse
import json
import logging
import sys
from datetime import datetime, timezone
from pathlib import Path

from heatreg.config import settings
from heatreg.models.schemas.fit import FitConfig, Variant
from heatreg.services.ablation import (
    GAMMA_GRID,
    IMBALANCE_OUTPUT_BLUR,
    IMBALANCE_SIGMA0,
    LAMBDA_GRID,
    SIGMA0_GRID,
    ablation_sweep,
    compare_variants,
    imbalance_study,
    scale_ordering_study,
    write_csv,
)
from heatreg.services.synth_gen import generate_scene
from heatreg.utils.logging import setup_logging

# Setup logging
setup_logging()
logger = logging.getLogger(__name__)


def parse_args() -> argparse.Namespace:
    parser = argparse.ArgumentParser(description="Run the desk-scale ablation suite")
    parser.add_argument("--output", default="ablation_results", help="Output directory")
    parser.add_argument("--seeds", type=int, default=20, help="Scenes per table and seeds per study")
    parser.add_argument("--steps", type=int, default=1500)
    parser.add_argument("--workers", type=int, default=settings.SWEEP_WORKERS)
    return parser.parse_args()


def run_suite(args: argparse.Namespace) -> dict:
    """
    Execute every table and study.

    Returns:
        Summary dict of the paired studies
    """
    logger.info("=" * 60)
    logger.info("Starting Ablation Suite")
    logger.info("=" * 60)
    logger.info(f"Environment: {settings.ENVIRONMENT.value}")

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(range(args.seeds))
    scenes = [generate_scene(seed, 2, (1.0, 2.0), 0.05, (settings.CANVAS, settings.CANVAS)) for seed in seeds]
    template = FitConfig(steps=args.steps)

    logger.info("Lambda sweep (sahr)")
    rows = ablation_sweep(
        scenes, template.model_copy(update={"variant": Variant.SAHR}), "lambda", LAMBDA_GRID,
        workers=args.workers,
    )
    write_csv(rows, out / "lambda_sweep.csv")

    logger.info("Gamma sweep (swahr)")
    rows = ablation_sweep(
        scenes, template.model_copy(update={"variant": Variant.SWAHR}), "gamma", GAMMA_GRID,
        workers=args.workers,
    )
    write_csv(rows, out / "gamma_sweep.csv")

    logger.info("Base sigma sweep (base)")
    rows = ablation_sweep(scenes, template, "sigma0", SIGMA0_GRID, workers=args.workers)
    write_csv(rows, out / "sigma0_sweep.csv")

    logger.info("Variant comparison (base, shr, sahr)")
    write_csv(compare_variants(scenes, template, workers=args.workers), out / "variants.csv")

    ordering = scale_ordering_study(seeds, cfg_template=template.model_copy(update={"variant": Variant.SAHR}))
    sparse = template.model_copy(update={"sigma0": IMBALANCE_SIGMA0, "output_blur": IMBALANCE_OUTPUT_BLUR})
    wahr = imbalance_study(seeds, Variant.WAHR, Variant.BASE, cfg_template=sparse)
    swahr = imbalance_study(seeds, Variant.SWAHR, Variant.SAHR, cfg_template=sparse)

    summary = {
        study.name: {
            "runs": study.runs,
            "wins": study.wins,
            "win_rate": study.win_rate,
            "foreground_fraction": study.foreground_fraction,
        }
        for study in (ordering, wahr, swahr)
    }
    (out / "studies.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")
    return summary


def main():
    """Main function to run the ablation suite script."""
    start_time = datetime.now(timezone.utc)
    exit_code = 0
    args = parse_args()

    try:
        summary = run_suite(args)

        print("\n" + "=" * 60)
        print("Ablation Suite Summary")
        print("=" * 60)
        print(f"Output directory: {args.output}")
        for name, stats in summary.items():
            print(f"{name:<20} {stats['wins']:>3}/{stats['runs']:<3} ({stats['win_rate']:.0%})")
        print("=" * 60)
        logger.info("Suite completed successfully")

    except KeyboardInterrupt:
        logger.warning("Suite interrupted by user")
        print("\nSuite interrupted by user")
        exit_code = 130
    except Exception as e:
        logger.critical(f"Critical error in ablation suite: {e}", exc_info=True)
        print(f"\nCritical error: {e}")
        exit_code = 1

    finally:
        total_duration = (datetime.now(timezone.utc) - start_time).total_seconds()
        logger.info(f"Script execution completed in {total_duration:.2f} seconds (exit code: {exit_code})")

    sys.exit(exit_code)


if __name__ == "__main__":
    main()
