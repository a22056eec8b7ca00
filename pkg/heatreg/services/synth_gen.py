"""Seeded synthetic multi-person scenes and the training augmentations.

Scenes are annotation-only: stick-figure skeletons in COCO joint order,
placed by rejection sampling, with scale-proportional Gaussian label jitter.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from heatreg.config import COCO_FLIP_PAIRS, NUM_KEYPOINTS, settings
from heatreg.errors import AnnotationError, InvalidParameterError, PlacementError
from heatreg.models.grid import HeatmapStack, Shape3
from heatreg.models.schemas.annotation import PersonInstance, Visibility
from heatreg.models.schemas.scene import SyntheticScene
from heatreg.services.heatmap_codec import encode_gaussian_with_owner, parse_annotations

logger = logging.getLogger(__name__)

# Joint positions in units of person height; x centered on the body axis,
# y growing downwards from the top of the head.
TEMPLATE: np.ndarray = np.array([
    [0.00, 0.06],    # nose
    [0.04, 0.00],    # left_eye
    [-0.04, 0.00],   # right_eye
    [0.08, 0.04],    # left_ear
    [-0.08, 0.04],   # right_ear
    [0.18, 0.20],    # left_shoulder
    [-0.18, 0.20],   # right_shoulder
    [0.24, 0.38],    # left_elbow
    [-0.24, 0.38],   # right_elbow
    [0.26, 0.54],    # left_wrist
    [-0.26, 0.54],   # right_wrist
    [0.11, 0.55],    # left_hip
    [-0.11, 0.55],   # right_hip
    [0.12, 0.78],    # left_knee
    [-0.12, 0.78],   # right_knee
    [0.12, 1.00],    # left_ankle
    [-0.12, 1.00],   # right_ankle
], dtype=np.float64)

# Person height in pixels at scale multiplier 1
TEMPLATE_HEIGHT_PX = 16.0
TEMPLATE_WIDTH_UNITS = float(TEMPLATE[:, 0].max() - TEMPLATE[:, 0].min())

MAX_PLACEMENT_ATTEMPTS = 1000
PLACEMENT_MARGIN_PX = 1.0
MIN_CENTER_SPACING = 0.5

DEFAULT_ROTATION_RANGE = (-30.0, 30.0)
DEFAULT_SCALE_RANGE = (0.75, 1.25)
DEFAULT_TRANSLATION_RANGE = (-40.0, 40.0)


def template_keypoints(multiplier: float, center: Tuple[float, float]) -> np.ndarray:
    """(K, 2) template joints for a person of the given scale, bbox-centered at center."""
    height = TEMPLATE_HEIGHT_PX * multiplier
    pts = TEMPLATE * height
    pts = pts - (pts.min(axis=0) + pts.max(axis=0)) / 2.0
    return pts + np.asarray(center, dtype=np.float64)


def template_bbox_size(multiplier: float) -> Tuple[float, float]:
    """(width, height) of the template bbox in pixels."""
    height = TEMPLATE_HEIGHT_PX * multiplier
    return TEMPLATE_WIDTH_UNITS * height, height


def jitter_std(jitter_coeff: float, multiplier: float) -> float:
    """Label noise std in pixels for a person of the given scale."""
    return jitter_coeff * multiplier * TEMPLATE_HEIGHT_PX


def _person(points: np.ndarray, visibility: np.ndarray, image_id: int) -> PersonInstance:
    arr = np.column_stack([points, visibility.astype(np.float64)])
    return PersonInstance.from_array(arr, image_id=image_id)


def _clamp(points: np.ndarray, canvas: Tuple[int, int]) -> np.ndarray:
    height, width = canvas
    out = points.copy()
    out[:, 0] = np.clip(out[:, 0], 0.0, width - 1.0)
    out[:, 1] = np.clip(out[:, 1], 0.0, height - 1.0)
    return out


def generate_scene(
    seed: int,
    n_persons: int,
    scale_range: Tuple[float, float] = (1.0, 2.0),
    jitter_coeff: float = 0.0,
    canvas: Tuple[int, int] = (settings.CANVAS, settings.CANVAS),
    scales: Optional[Sequence[float]] = None,
    image_id: int = 0,
) -> SyntheticScene:
    """
    Place n_persons template skeletons on the canvas.

    Args:
        seed: RNG seed; the scene is a pure function of the arguments
        n_persons: Number of persons
        scale_range: (min, max) multiplier, sampled uniformly per person
        jitter_coeff: Label noise std as a fraction of person height
        canvas: (H, W) in pixels
        scales: Explicit per-person multipliers, overriding scale_range
        image_id: Image id stamped on every person

    Raises:
        InvalidParameterError: bad ranges or counts
        PlacementError: rejection sampling exhausted its attempts
    """
    if n_persons < 0:
        raise InvalidParameterError(f"n_persons must be non-negative, got {n_persons}")
    lo, hi = scale_range
    if not (0 < lo <= hi):
        raise InvalidParameterError(f"scale_range must satisfy 0 < min <= max, got {scale_range}")
    if jitter_coeff < 0:
        raise InvalidParameterError(f"jitter_coeff must be non-negative, got {jitter_coeff}")
    if scales is not None and len(scales) != n_persons:
        raise InvalidParameterError(f"Expected {n_persons} scales, got {len(scales)}")

    rng = np.random.default_rng(seed)
    height, width = canvas
    if scales is None:
        multipliers = [float(m) for m in rng.uniform(lo, hi, size=n_persons)]
    else:
        multipliers = [float(m) for m in scales]
        if any(not m > 0 for m in multipliers):
            raise InvalidParameterError(f"scales must be positive, got {list(scales)}")

    centers: List[Tuple[float, float]] = []
    box_widths: List[float] = []
    for p, mult in enumerate(multipliers):
        box_w, box_h = template_bbox_size(mult)
        x_lo = PLACEMENT_MARGIN_PX + box_w / 2.0
        x_hi = width - 1.0 - PLACEMENT_MARGIN_PX - box_w / 2.0
        y_lo = PLACEMENT_MARGIN_PX + box_h / 2.0
        y_hi = height - 1.0 - PLACEMENT_MARGIN_PX - box_h / 2.0
        if x_lo > x_hi or y_lo > y_hi:
            raise PlacementError(
                f"Person {p} (scale {mult:.2f}) does not fit a {height}x{width} canvas; "
                "use a larger canvas",
                details={"person": p, "scale": mult, "canvas": [height, width]},
            )

        for attempt in range(MAX_PLACEMENT_ATTEMPTS):
            cx = float(rng.uniform(x_lo, x_hi))
            cy = float(rng.uniform(y_lo, y_hi))
            clear = all(
                math.hypot(cx - ox, cy - oy) >= MIN_CENTER_SPACING * (box_w + ow) / 2.0
                for (ox, oy), ow in zip(centers, box_widths)
            )
            if clear:
                break
        else:
            raise PlacementError(
                f"Could not place person {p} after {MAX_PLACEMENT_ATTEMPTS} attempts; "
                "use a larger canvas or fewer persons",
                details={"person": p, "attempts": MAX_PLACEMENT_ATTEMPTS, "canvas": [height, width]},
            )
        centers.append((cx, cy))
        box_widths.append(box_w)

    persons: List[PersonInstance] = []
    noisy: List[PersonInstance] = []
    visible = np.full(NUM_KEYPOINTS, int(Visibility.LABELED_VISIBLE))
    for mult, center in zip(multipliers, centers):
        pts = template_keypoints(mult, center)
        std = jitter_std(jitter_coeff, mult)
        noisy_pts = pts + std * rng.standard_normal(pts.shape) if std > 0 else pts.copy()
        persons.append(_person(pts, visible, image_id))
        noisy.append(_person(_clamp(noisy_pts, canvas), visible, image_id))

    logger.debug(f"Generated scene seed={seed} with {n_persons} persons on {height}x{width}")
    return SyntheticScene(
        canvas=(height, width),
        persons=persons,
        noisy_persons=noisy,
        seed=seed,
        scales=multipliers,
        jitter_coeff=jitter_coeff,
    )


def _affine(
    points: np.ndarray,
    center: Tuple[float, float],
    angle_deg: float,
    factor: float,
    shift: Tuple[float, float],
) -> np.ndarray:
    theta = math.radians(angle_deg)
    c, s = math.cos(theta), math.sin(theta)
    rot = np.array([[c, -s], [s, c]]) * factor
    origin = np.asarray(center)
    return (points - origin) @ rot.T + origin + np.asarray(shift)


def _flip_perm(num_keypoints: int) -> np.ndarray:
    perm = np.arange(num_keypoints)
    for a, b in COCO_FLIP_PAIRS:
        if a < num_keypoints and b < num_keypoints:
            perm[a], perm[b] = b, a
    return perm


def _transform_person(
    person: PersonInstance,
    canvas: Tuple[int, int],
    angle: float,
    factor: float,
    shift: Tuple[float, float],
    hflip: bool,
) -> PersonInstance:
    height, width = canvas
    arr = person.to_array()
    center = ((width - 1) / 2.0, (height - 1) / 2.0)
    pts = _affine(arr[:, :2], center, angle, factor, shift)
    vis = arr[:, 2].copy()
    if hflip:
        pts[:, 0] = (width - 1) - pts[:, 0]
        perm = _flip_perm(len(pts))
        pts = pts[perm]
        vis = vis[perm]
    outside = (pts[:, 0] < 0) | (pts[:, 0] > width - 1) | (pts[:, 1] < 0) | (pts[:, 1] > height - 1)
    vis[outside] = int(Visibility.NOT_LABELED)
    return _person(pts, vis, person.image_id)


def augment(
    scene: SyntheticScene,
    rotation_range: Tuple[float, float] = DEFAULT_ROTATION_RANGE,
    scale_range: Tuple[float, float] = DEFAULT_SCALE_RANGE,
    translation_range: Tuple[float, float] = DEFAULT_TRANSLATION_RANGE,
    hflip: bool = False,
    seed: int = 0,
) -> SyntheticScene:
    """
    Apply one sampled similarity transform to every keypoint of the scene.

    Rotation and scaling act about the canvas center ((W-1)/2, (H-1)/2),
    followed by a translation of (tx, ty) and, when hflip is set, the mirror
    x -> W-1-x with left/right channels swapped. True and noisy labels move
    identically; keypoints that leave the canvas become not labeled.
    """
    for name, rng_range in (
        ("rotation_range", rotation_range),
        ("scale_range", scale_range),
        ("translation_range", translation_range),
    ):
        if rng_range[0] > rng_range[1]:
            raise InvalidParameterError(f"{name} must be ordered (min <= max), got {rng_range}")
    if scale_range[0] <= 0:
        raise InvalidParameterError(f"scale_range must be positive, got {scale_range}")

    rng = np.random.default_rng(seed)
    angle = float(rng.uniform(*rotation_range))
    factor = float(rng.uniform(*scale_range))
    shift = (float(rng.uniform(*translation_range)), float(rng.uniform(*translation_range)))

    def move(person: PersonInstance) -> PersonInstance:
        return _transform_person(person, scene.canvas, angle, factor, shift, hflip)

    return scene.model_copy(update={
        "persons": [move(p) for p in scene.persons],
        "noisy_persons": [move(p) for p in scene.noisy_persons],
        "scales": [m * factor for m in scene.scales],
    })


def render_tag_maps(
    persons: Sequence[PersonInstance],
    shape: Shape3,
    sigma0: float = settings.SIGMA0,
    spacing: float = 3.0,
) -> HeatmapStack:
    """
    Oracle tag maps: each person's support cells carry (index + 1) * spacing.

    Cells are attributed by the same max-merge as the encoded heatmap; off
    support the tag is 0.
    """
    _, owner = encode_gaussian_with_owner(persons, sigma0, shape)
    tags = np.where(owner >= 0, (owner + 1).astype(np.float64) * spacing, 0.0)
    return HeatmapStack(tags)


def scene_payload(scene: SyntheticScene) -> Dict[str, Any]:
    """Annotation JSON of the noisy labels plus a parallel true_annotations array."""
    return {
        "annotations": [p.to_coco() for p in scene.noisy_persons],
        "true_annotations": [p.to_coco() for p in scene.persons],
        "canvas": list(scene.canvas),
        "seed": scene.seed,
        "scales": list(scene.scales),
        "jitter_coeff": scene.jitter_coeff,
    }


def export_scene(scene: SyntheticScene, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(scene_payload(scene), indent=2), encoding="utf-8")


def scene_from_payload(
    payload: Dict[str, Any],
    canvas: Optional[Tuple[int, int]] = None,
) -> SyntheticScene:
    """
    Rebuild a scene from exported JSON.

    Plain annotation files without true_annotations are accepted; the labels
    then serve as both true and noisy keypoints. Persons from every image id
    are pooled.
    """
    noisy = [p for group in parse_annotations(payload).values() for p in group]
    if "true_annotations" in payload:
        true = [
            p
            for group in parse_annotations({"annotations": payload["true_annotations"]}).values()
            for p in group
        ]
    else:
        true = list(noisy)

    size = payload.get("canvas", canvas)
    if size is None:
        size = (settings.CANVAS, settings.CANVAS)
    try:
        return SyntheticScene(
            canvas=(int(size[0]), int(size[1])),
            persons=true,
            noisy_persons=noisy,
            seed=int(payload.get("seed", 0)),
            scales=list(payload.get("scales", [])),
            jitter_coeff=float(payload.get("jitter_coeff", 0.0)),
        )
    except ValueError as e:
        raise AnnotationError(f"Invalid scene: {e}") from e


def import_scene(path: Union[str, Path]) -> SyntheticScene:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AnnotationError(f"Invalid JSON in {path}: {e}") from e
    return scene_from_payload(payload)
