"""Ground-truth heatmap encoding and the scale-adaptive transforms.

Every visible keypoint contributes a Gaussian of std ``sigma0`` on the
truncated window ``|i - x| <= 3 sigma0, |j - y| <= 3 sigma0``; overlapping
persons are merged by pixel-wise max. The scale-adaptive heatmap is the
element-wise power ``base ** (1 / s)`` on the base support, and its
second-order expansion in ``alpha = 1/s - 1`` is what the losses train on.
"""

import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import ValidationError

from heatreg.config import settings
from heatreg.errors import AnnotationError, DimensionError, InvalidParameterError
from heatreg.models.grid import (
    Grid2D,
    HeatmapStack,
    ScaleField,
    Shape3,
    SupportMask,
)
from heatreg.models.schemas.annotation import PersonInstance

logger = logging.getLogger(__name__)

# Half-width of the truncated window in units of sigma0
TRUNCATION = 3.0


def _window(center: float, radius: float, limit: int) -> Optional[Tuple[int, int]]:
    """Inclusive integer range [lo, hi] within |c - center| <= radius, clipped to [0, limit)."""
    lo = max(int(math.ceil(center - radius)), 0)
    hi = min(int(math.floor(center + radius)), limit - 1)
    if lo > hi:
        return None
    return lo, hi


def _check_persons(persons: Sequence[PersonInstance], shape: Shape3) -> None:
    k = shape[0]
    for idx, person in enumerate(persons):
        if person.num_keypoints != k:
            raise AnnotationError(
                f"Person {idx} has {person.num_keypoints} keypoints, expected {k}",
                details={"person": idx, "expected": k, "got": person.num_keypoints},
            )


def encode_gaussian_with_owner(
    persons: Sequence[PersonInstance],
    sigma0: float,
    shape: Shape3,
) -> Tuple[HeatmapStack, np.ndarray]:
    """
    Encode persons and report which person wins the max merge at every cell.

    Returns:
        (stack, owner) where owner has shape (K, H, W), holding the index of the
        person whose Gaussian supplies the cell value, or -1 off support.
        Ties go to the later person.

    Raises:
        InvalidParameterError: sigma0 is not positive
        AnnotationError: a person does not carry exactly K keypoints
    """
    if not sigma0 > 0:
        raise InvalidParameterError(f"sigma0 must be positive, got {sigma0}")
    if len(shape) != 3 or min(shape) < 1:
        raise DimensionError(f"Invalid stack shape {tuple(shape)}")
    _check_persons(persons, shape)

    k_count, height, width = shape
    data = np.zeros(shape, dtype=np.float64)
    owner = np.full(shape, -1, dtype=np.int64)
    radius = TRUNCATION * sigma0
    denom = 2.0 * sigma0 * sigma0

    for p, person in enumerate(persons):
        for k, kp in enumerate(person.keypoints):
            if not kp.labeled:
                continue
            cols = _window(kp.x, radius, width)
            rows = _window(kp.y, radius, height)
            if cols is None or rows is None:
                logger.debug(f"Skipping keypoint {k} of person {p}: window outside grid")
                continue
            ii = np.arange(cols[0], cols[1] + 1, dtype=np.float64)
            jj = np.arange(rows[0], rows[1] + 1, dtype=np.float64)
            gauss = np.exp(
                -((ii[None, :] - kp.x) ** 2 + (jj[:, None] - kp.y) ** 2) / denom
            )
            region = data[k, rows[0]:rows[1] + 1, cols[0]:cols[1] + 1]
            region_owner = owner[k, rows[0]:rows[1] + 1, cols[0]:cols[1] + 1]
            wins = gauss >= region
            region[wins] = gauss[wins]
            region_owner[wins] = p

    # Values are stored at dump precision so that HMAP round trips are exact
    data = data.astype(np.float32).astype(np.float64)
    return HeatmapStack(data), owner


def encode_gaussian(
    persons: Sequence[PersonInstance],
    sigma0: float,
    shape: Shape3,
) -> HeatmapStack:
    """Ground-truth stack H^sigma0 of a list of persons (max-merged Gaussians)."""
    stack, _ = encode_gaussian_with_owner(persons, sigma0, shape)
    return stack


def support_mask(base: HeatmapStack) -> SupportMask:
    """True exactly where the base heatmap is positive."""
    return SupportMask(base.data > 0)


def _as_scale(s: Union[HeatmapStack, np.ndarray]) -> ScaleField:
    if isinstance(s, ScaleField):
        return s
    data = s.data if isinstance(s, HeatmapStack) else s
    return ScaleField(data)


def sahr_exact(base: HeatmapStack, s: Union[ScaleField, np.ndarray]) -> HeatmapStack:
    """
    Scale-adaptive heatmap base ** (1/s) on the base support, 0 elsewhere.

    Raises:
        InvalidParameterError: any scale entry is not strictly positive
        DimensionError: shapes differ
    """
    scale = _as_scale(s)
    base.require_same_shape(scale)
    support = base.data > 0
    out = np.zeros(base.shape, dtype=np.float64)
    out[support] = np.power(base.data[support], 1.0 / scale.data[support])
    return HeatmapStack(out)


def log_base(base: np.ndarray, clamp: float = settings.LN_CLAMP) -> np.ndarray:
    """ln(base) on support cells (clamped from below), 0 elsewhere."""
    out = np.zeros(base.shape, dtype=np.float64)
    support = base > 0
    out[support] = np.log(np.maximum(base[support], clamp))
    return out


def taylor_array(base: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """Array form of sahr_taylor, shared with the loss gradients."""
    ln_b = log_base(base)
    lin = 1.0 + alpha * ln_b
    out = 0.5 * base * (1.0 + lin * lin)
    return np.where(base > 0, out, 0.0)


def sahr_taylor(base: HeatmapStack, alpha: HeatmapStack) -> HeatmapStack:
    """
    Second-order expansion of base ** (1/s) in alpha = 1/s - 1.

    out = 0.5 * base * (1 + (1 + alpha * ln(base)) ** 2) where base > 0,
    0 elsewhere. alpha is not range-checked so that unconstrained optimizer
    parameters can be passed through.
    """
    base.require_same_shape(alpha)
    return HeatmapStack(taylor_array(base.data, alpha.data))


def shr_scale_from_bbox(bbox_width: float, w_base: float = settings.W_BASE) -> float:
    """
    Naive per-person scale s = bbox_width / w_base.

    Raises:
        InvalidParameterError: either input is not positive
    """
    if not bbox_width > 0:
        raise InvalidParameterError(
            f"bbox width must be positive, got {bbox_width}",
            details={"bbox_width": bbox_width},
        )
    if not w_base > 0:
        raise InvalidParameterError(f"w_base must be positive, got {w_base}")
    return bbox_width / w_base


def rasterize_scale_field(
    persons: Sequence[PersonInstance],
    scales: Sequence[float],
    shape: Shape3,
    sigma0: float = settings.SIGMA0,
) -> ScaleField:
    """
    Paint each person's scale on the cells where its Gaussian wins the merge.

    Cells off every support keep scale 1.
    """
    if len(scales) != len(persons):
        raise InvalidParameterError(
            f"Expected {len(persons)} scales, got {len(scales)}",
        )
    for idx, value in enumerate(scales):
        if not value > 0 or not math.isfinite(value):
            raise InvalidParameterError(
                f"Scale of person {idx} must be positive, got {value}",
                details={"person": idx, "scale": value},
            )

    _, owner = encode_gaussian_with_owner(persons, sigma0, shape)
    field = np.ones(shape, dtype=np.float64)
    lookup = np.asarray(list(scales), dtype=np.float64)
    owned = owner >= 0
    field[owned] = lookup[owner[owned]]
    return ScaleField(field)


def shr_target(
    persons: Sequence[PersonInstance],
    sigma0: float,
    shape: Shape3,
    w_base: float = settings.W_BASE,
) -> Tuple[HeatmapStack, ScaleField]:
    """SHR baseline target: base ** (1/s) with s from each person's bbox width."""
    base = encode_gaussian(persons, sigma0, shape)
    scales = [shr_scale_from_bbox(p.bbox[2], w_base) for p in persons]
    field = rasterize_scale_field(persons, scales, shape, sigma0)
    return sahr_exact(base, field), field


def scale_map_image(scale: ScaleField) -> Grid2D:
    """
    Visualization grid of a scale field: channel mean of 1/s, min-max normalized.

    Brighter cells mean larger 1/s, i.e. a sharper heatmap. A constant field
    maps to zeros.
    """
    inv = (1.0 / scale.data).mean(axis=0)
    lo, hi = float(inv.min()), float(inv.max())
    if hi > lo:
        return Grid2D((inv - lo) / (hi - lo))
    return Grid2D(np.zeros_like(inv))


def parse_annotations(payload: Dict[str, Any]) -> Dict[int, List[PersonInstance]]:
    """
    Group COCO-style annotations by image id.

    Raises:
        AnnotationError: payload has no "annotations" array or an entry is malformed
    """
    if not isinstance(payload, dict) or not isinstance(payload.get("annotations"), list):
        raise AnnotationError('Annotation JSON must contain an "annotations" array')

    by_image: Dict[int, List[PersonInstance]] = {}
    for idx, ann in enumerate(payload["annotations"]):
        try:
            person = PersonInstance.from_coco(ann)
        except (KeyError, TypeError, ValueError, ValidationError) as e:
            raise AnnotationError(
                f"Malformed annotation at index {idx}: {e}",
                details={"index": idx},
            ) from e
        by_image.setdefault(person.image_id, []).append(person)
    return by_image


def load_annotations(path: Union[str, Path]) -> Dict[int, List[PersonInstance]]:
    """Read an annotation JSON file and group persons by image id."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AnnotationError(f"Invalid JSON in {path}: {e}") from e
    by_image = parse_annotations(payload)
    logger.debug(f"Loaded {sum(len(v) for v in by_image.values())} persons from {path}")
    return by_image


def annotations_payload(persons: Sequence[PersonInstance]) -> Dict[str, Any]:
    return {"annotations": [p.to_coco() for p in persons]}


def dump_annotations(persons: Sequence[PersonInstance], path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(annotations_payload(persons), indent=2), encoding="utf-8")
