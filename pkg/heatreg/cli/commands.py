"""Command implementations.

Each command takes the parsed argparse namespace, writes machine-readable
output to stdout or the requested files and returns an exit code. Errors
propagate to the error handler in main.
"""

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from heatreg.config import NUM_KEYPOINTS, settings
from heatreg.errors import InvalidParameterError
from heatreg.models.grid import HeatmapStack, Shape3
from heatreg.models.schemas.annotation import PersonInstance
from heatreg.models.schemas.fit import FitConfig, FitResult, Variant
from heatreg.models.schemas.scene import SyntheticScene
from heatreg.services import ablation
from heatreg.services.decoder_grouper import (
    aggregate_heatmaps,
    decode_poses,
    export_poses,
    flip_merge,
    parse_flip_pairs,
    poses_payload,
)
from heatreg.services.evaluator import (
    OksParams,
    average_precision,
    load_k_consts,
    load_pose_file,
    render_table,
)
from heatreg.services.heatmap_codec import (
    dump_annotations,
    encode_gaussian,
    load_annotations,
    rasterize_scale_field,
    sahr_exact,
    scale_map_image,
    shr_target,
)
from heatreg.services.losses import variant_loss
from heatreg.services.synth_gen import export_scene, generate_scene, import_scene
from heatreg.services.toy_optimizer import fit_direct
from heatreg.utils.hashing import stack_digest
from heatreg.utils.logging import log_with_context
from heatreg.utils.tensor_io import read_tensor, save_tensor, write_pgm

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------------
# Argument parsing helpers
# ----------------------------------------------------------------------------

def parse_size(spec: str) -> Shape3:
    """Parse "KxHxW" into a shape."""
    parts = spec.lower().split("x")
    try:
        shape = tuple(int(p) for p in parts)
    except ValueError:
        shape = ()
    if len(shape) != 3 or min(shape) < 1:
        raise InvalidParameterError(f"Bad size spec '{spec}', expected KxHxW with positive integers")
    return shape


def parse_canvas(spec: str) -> Tuple[int, int]:
    """Parse "HxW" or a single side length."""
    parts = spec.lower().split("x")
    try:
        sides = [int(p) for p in parts]
    except ValueError:
        sides = []
    if len(sides) == 1:
        sides = sides * 2
    if len(sides) != 2 or min(sides) < 1:
        raise InvalidParameterError(f"Bad canvas spec '{spec}', expected HxW or a side length")
    return sides[0], sides[1]


def parse_range(spec: str) -> Tuple[float, float]:
    """Parse "a:b" (or a single number a) into (a, b)."""
    try:
        parts = [float(p) for p in spec.split(":")]
    except ValueError as e:
        raise InvalidParameterError(f"Bad range '{spec}', expected a:b") from e
    if len(parts) == 1:
        parts = parts * 2
    if len(parts) != 2:
        raise InvalidParameterError(f"Bad range '{spec}', expected a:b")
    return parts[0], parts[1]


def parse_values(spec: str) -> List[float]:
    """Comma-separated floats; "inf" is accepted."""
    try:
        values = [float(v) for v in spec.split(",") if v.strip()]
    except ValueError as e:
        raise InvalidParameterError(f"Bad value list '{spec}': {e}") from e
    if not values:
        raise InvalidParameterError("values must be non-empty")
    return values


def parse_gen(spec: str) -> Dict[str, str]:
    """Parse "n=2,scales=1:2,jitter=0.05,canvas=64x64" into a dict."""
    known = {"n", "scales", "jitter", "canvas"}
    values: Dict[str, str] = {}
    for item in spec.split(","):
        if not item.strip():
            continue
        if "=" not in item:
            raise InvalidParameterError(f"Malformed generator item '{item}' in '{spec}'")
        key, value = (part.strip() for part in item.split("=", 1))
        if key not in known:
            raise InvalidParameterError(
                f"Unknown generator key '{key}'; valid keys: {', '.join(sorted(known))}",
            )
        values[key] = value
    return values


def _require(args: argparse.Namespace, *names: str) -> None:
    missing = [f"--{n.replace('_', '-')}" for n in names if getattr(args, n, None) is None]
    if missing:
        raise InvalidParameterError(f"Missing required option(s): {', '.join(missing)}")


def _select_persons(by_image: Dict[int, List[PersonInstance]], image_id: Optional[int]) -> List[PersonInstance]:
    if image_id is None:
        return [p for image in sorted(by_image) for p in by_image[image]]
    if image_id not in by_image:
        raise InvalidParameterError(
            f"No annotations for image id {image_id}",
            details={"available": sorted(by_image)},
        )
    return by_image[image_id]


# ----------------------------------------------------------------------------
# encode
# ----------------------------------------------------------------------------

def cmd_encode(args: argparse.Namespace) -> int:
    _require(args, "output")
    shape = parse_size(args.size)
    persons = _select_persons(load_annotations(args.annotations), args.image_id)

    if args.variant == "base":
        stack = encode_gaussian(persons, args.sigma0, shape)
    elif args.variant == "shr":
        stack, _ = shr_target(persons, args.sigma0, shape, args.w_base)
        logger.info(f"SHR scales applied: {[round(p.bbox[2] / args.w_base, 6) for p in persons]}")
    else:
        if args.scale is None:
            raise InvalidParameterError("--variant sahr-fixed needs --scale")
        base = encode_gaussian(persons, args.sigma0, shape)
        field = rasterize_scale_field(persons, [args.scale] * len(persons), shape, args.sigma0)
        stack = sahr_exact(base, field)

    save_tensor(stack.quantized(), args.output)
    log_with_context(
        logger, logging.INFO, "Encoded heatmaps",
        variant=args.variant, persons=len(persons), shape="x".join(map(str, shape)), output=args.output,
    )
    return 0


# ----------------------------------------------------------------------------
# loss
# ----------------------------------------------------------------------------

def cmd_loss(args: argparse.Namespace) -> int:
    _require(args, "pred", "base")
    pred = read_tensor(args.pred)
    base = read_tensor(args.base)
    alpha = read_tensor(args.alpha) if args.alpha else None
    report = variant_loss(args.variant, pred, base, alpha, args.lambda_, args.gamma)
    sys.stdout.write(report.to_json() + "\n")
    return 0


# ----------------------------------------------------------------------------
# train-toy
# ----------------------------------------------------------------------------

def _scene_for_training(args: argparse.Namespace) -> SyntheticScene:
    if args.scene and args.gen:
        raise InvalidParameterError("--scene and --gen are mutually exclusive")
    if args.scene:
        return import_scene(args.scene)
    if not args.gen:
        raise InvalidParameterError("train-toy needs --scene or --gen")

    gen = parse_gen(args.gen)
    try:
        n_persons = int(gen.get("n", "1"))
        jitter = float(gen.get("jitter", "0"))
    except ValueError as e:
        raise InvalidParameterError(f"Bad generator value in '{args.gen}': {e}") from e
    scale_range = parse_range(gen.get("scales", "1:2"))
    canvas = parse_canvas(gen.get("canvas", str(settings.CANVAS)))
    return generate_scene(args.seed, n_persons, scale_range, jitter, canvas)


def write_loss_curve(result: FitResult, path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["step", "regression", "regularizer", "total"])
        for step, report in enumerate(result.loss_curve, start=1):
            writer.writerow([
                step,
                f"{report.regression:.10g}",
                f"{report.regularizer:.10g}",
                f"{report.total:.10g}",
            ])


def fit_summary(scene: SyntheticScene, cfg: FitConfig, result: FitResult) -> Dict:
    final = result.loss_curve[-1] if result.loss_curve else None
    return {
        "variant": cfg.variant.value,
        "seed": cfg.seed,
        "steps_accepted": len(result.loss_curve),
        "final_loss": None if final is None else json.loads(final.to_json()),
        "final_learning_rate": result.final_learning_rate,
        "halvings": result.halvings,
        "persons": [
            {
                "index": p,
                "scale_multiplier": scene.scales[p] if scene.scales else None,
                "mean_s": mean_s,
            }
            for p, mean_s in result.per_person_mean_scale
        ],
        "mean_localization_error_px": result.mean_localization_error,
        "digests": {
            "final_pred": stack_digest(result.final_pred),
            "final_scale": stack_digest(result.final_scale),
        },
        "notes": result.notes,
    }


def cmd_train_toy(args: argparse.Namespace) -> int:
    _require(args, "output")
    scene = _scene_for_training(args)
    cfg = FitConfig(
        variant=Variant(args.variant),
        sigma0=args.sigma0,
        lambda_=args.lambda_,
        gamma=args.gamma,
        learning_rate=args.lr,
        steps=args.steps,
        seed=args.seed,
        w_base=args.w_base,
        prediction_blur=args.blur,
        output_blur=args.output_blur,
    )
    result = fit_direct(scene, cfg)

    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    export_scene(scene, out / "scene.json")
    dump_annotations(scene.noisy_persons, out / "annotations.json")
    write_loss_curve(result, out / "loss_curve.csv")
    save_tensor(result.final_pred.quantized(), out / "final_pred.hmap")
    save_tensor(result.final_scale.quantized(), out / "final_scale.hmap")
    write_pgm(scale_map_image(result.final_scale), out / "scale_map.pgm")
    summary = fit_summary(scene, cfg, result)
    (out / "summary.json").write_text(json.dumps(summary, indent=2), encoding="utf-8")

    log_with_context(
        logger, logging.INFO, "Toy fit written",
        variant=cfg.variant.value, steps=len(result.loss_curve), output=str(out),
    )
    return 0


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------

def cmd_sweep(args: argparse.Namespace) -> int:
    _require(args, "param", "values")
    values = parse_values(args.values)
    if args.seeds < 1:
        raise InvalidParameterError(f"--seeds must be >= 1, got {args.seeds}")
    canvas = parse_canvas(args.canvas)
    scale_range = parse_range(args.scales)
    scenes = [
        generate_scene(seed, args.n_persons, scale_range, args.jitter, canvas)
        for seed in range(args.seeds)
    ]
    cfg = FitConfig(
        variant=Variant(args.variant),
        sigma0=args.sigma0,
        learning_rate=args.lr,
        steps=args.steps,
        lambda_=args.lambda_,
        gamma=args.gamma,
        output_blur=args.output_blur,
    )
    rows = ablation.ablation_sweep(
        scenes, cfg, args.param, values,
        params=OksParams.synthetic(NUM_KEYPOINTS),
        workers=args.workers,
    )
    ablation.write_csv(rows, args.output)
    return 0


# ----------------------------------------------------------------------------
# decode
# ----------------------------------------------------------------------------

def cmd_decode(args: argparse.Namespace) -> int:
    _require(args, "pred")
    pred = read_tensor(args.pred)
    if args.aggregate:
        extra = [read_tensor(p.strip()) for p in args.aggregate.split(",") if p.strip()]
        pred = aggregate_heatmaps([pred] + extra, pred.shape)
    if args.flip_pred:
        pred = flip_merge(pred, read_tensor(args.flip_pred), parse_flip_pairs(args.flip_pairs))
    tags: Optional[HeatmapStack] = read_tensor(args.tags) if args.tags else None

    poses = decode_poses(
        pred,
        tags,
        max_peaks=args.max_peaks,
        score_floor=args.score_floor,
        tag_threshold=args.tag_threshold,
        refine=args.refine,
    )
    if args.output:
        export_poses({args.image_id: poses}, args.output)
    else:
        sys.stdout.write(json.dumps(poses_payload({args.image_id: poses}), indent=2) + "\n")
    logger.info(f"Decoded {len(poses)} poses from {args.pred}")
    return 0


# ----------------------------------------------------------------------------
# eval
# ----------------------------------------------------------------------------

def cmd_eval(args: argparse.Namespace) -> int:
    _require(args, "pred", "gt")
    poses = load_pose_file(args.pred)
    gts = load_annotations(args.gt)
    num_keypoints = next(
        (p.num_keypoints for persons in gts.values() for p in persons),
        NUM_KEYPOINTS,
    )
    if args.k_consts:
        params = OksParams(k_consts=load_k_consts(args.k_consts))
    elif args.synthetic:
        params = OksParams.synthetic(num_keypoints)
    else:
        params = OksParams.coco()

    report = average_precision(poses, gts, params)
    sys.stdout.write(render_table(report))
    if args.output:
        Path(args.output).write_text(report.to_json(), encoding="utf-8")
    return 0
