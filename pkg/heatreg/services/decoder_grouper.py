"""Peak decoding, multi-scale aggregation, flip merging and tag grouping.

Decoding is a 3x3 NMS per channel, ties kept at the first row-major
cell, followed by a quarter-pixel shift toward the larger neighbor.
Grouping is greedy over scalar tags: channels in order 0..K-1,
detections by descending score.
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.ndimage import map_coordinates

from heatreg.config import COCO_FLIP_PAIRS, settings
from heatreg.errors import AnnotationError, DimensionError, InvalidParameterError
from heatreg.models.grid import HeatmapStack
from heatreg.models.schemas.pose import Detection, PoseGroup

logger = logging.getLogger(__name__)

# 3x3 neighbor offsets split by row-major order relative to the center
_EARLIER = [(-1, -1), (-1, 0), (-1, 1), (0, -1)]
_LATER = [(0, 1), (1, -1), (1, 0), (1, 1)]

REFINE_STEP = 0.25


def find_peaks(
    pred: HeatmapStack,
    max_per_channel: int = settings.MAX_PEAKS,
    score_floor: float = settings.SCORE_FLOOR,
) -> List[Detection]:
    """
    3x3 maxima with value >= score_floor, best max_per_channel per channel.

    A cell must be >= all eight neighbors, strictly above those earlier in
    row-major order, and strictly above at least one in-grid neighbor. A
    keypoint halfway between two cells keeps the earlier one; a flat channel
    yields nothing. Within a channel peaks are ordered by score descending, equal
    scores by row-major index.
    """
    if max_per_channel < 1:
        raise InvalidParameterError(f"max_per_channel must be >= 1, got {max_per_channel}")

    data = pred.data
    height, width = pred.height, pred.width
    padded = np.pad(data, ((0, 0), (1, 1), (1, 1)), constant_values=-np.inf)

    peaks = data >= score_floor
    above_any = np.zeros(data.shape, dtype=bool)
    for dy, dx in _EARLIER + _LATER:
        neighbor = padded[:, 1 + dy:1 + dy + height, 1 + dx:1 + dx + width]
        peaks &= (data > neighbor) if (dy, dx) in _EARLIER else (data >= neighbor)
        above_any |= (data > neighbor) & np.isfinite(neighbor)
    peaks &= above_any

    detections: List[Detection] = []
    for k in range(pred.channels):
        rows, cols = np.nonzero(peaks[k])
        if len(rows) == 0:
            continue
        scores = data[k, rows, cols]
        flat_index = rows * pred.width + cols
        order = np.lexsort((flat_index, -scores))[:max_per_channel]
        for idx in order:
            detections.append(Detection(
                channel=k,
                x=float(cols[idx]),
                y=float(rows[idx]),
                score=float(scores[idx]),
            ))
    return detections


def refine_subpixel(pred: HeatmapStack, det: Detection) -> Detection:
    """Shift a peak by a quarter pixel toward the larger neighbor on each axis."""
    i, j = int(round(det.x)), int(round(det.y))
    grid = pred.data[det.channel]
    dx = dy = 0.0
    if 0 < i < pred.width - 1:
        left, right = grid[j, i - 1], grid[j, i + 1]
        dx = float(np.sign(right - left)) * REFINE_STEP
    if 0 < j < pred.height - 1:
        up, down = grid[j - 1, i], grid[j + 1, i]
        dy = float(np.sign(down - up)) * REFINE_STEP
    return det.model_copy(update={"x": i + dx, "y": j + dy})


def resample_bilinear(stack: HeatmapStack, size: Tuple[int, int]) -> HeatmapStack:
    """
    Bilinear resampling to (H, W) with half-pixel-centered alignment.

    Output cell centers map to source coordinate (o + 0.5) * in / out - 0.5,
    clamped to the source grid.
    """
    height, width = size
    if (stack.height, stack.width) == (height, width):
        return stack
    ys = (np.arange(height) + 0.5) * stack.height / height - 0.5
    xs = (np.arange(width) + 0.5) * stack.width / width - 0.5
    ys = np.clip(ys, 0.0, stack.height - 1.0)
    xs = np.clip(xs, 0.0, stack.width - 1.0)
    grid_y, grid_x = np.meshgrid(ys, xs, indexing="ij")
    out = np.stack([
        map_coordinates(stack.data[k], [grid_y, grid_x], order=1, mode="nearest")
        for k in range(stack.channels)
    ])
    return HeatmapStack(out)


def aggregate_heatmaps(
    stacks: Sequence[HeatmapStack],
    target_shape: Union[Tuple[int, int], Tuple[int, int, int]],
) -> HeatmapStack:
    """
    Resample every stack to the target size and average element-wise.

    Raises:
        InvalidParameterError: no stacks given
        DimensionError: channel counts differ
    """
    if not stacks:
        raise InvalidParameterError("aggregate_heatmaps needs at least one stack")
    size = tuple(target_shape[-2:])
    channels = stacks[0].channels
    if len(target_shape) == 3 and target_shape[0] != channels:
        raise DimensionError(f"Target has {target_shape[0]} channels, stacks have {channels}")
    for stack in stacks:
        if stack.channels != channels:
            raise DimensionError(
                f"Channel mismatch: {stack.channels} vs {channels}",
                details={"expected": channels, "got": stack.channels},
            )
    resampled = [resample_bilinear(s, size).data for s in stacks]
    return HeatmapStack(np.mean(resampled, axis=0))


def flip_permutation(flip_pairs: Sequence[Tuple[int, int]], channels: int) -> np.ndarray:
    """
    Channel permutation of a list of left/right pairs.

    Raises:
        InvalidParameterError: an index is out of range or appears in two pairs
    """
    perm = np.arange(channels)
    seen = set()
    for a, b in flip_pairs:
        if not (0 <= a < channels and 0 <= b < channels):
            raise InvalidParameterError(
                f"Flip pair ({a}, {b}) out of range for {channels} channels",
            )
        if a in seen or b in seen:
            raise InvalidParameterError(
                f"Channel in flip pair ({a}, {b}) already paired",
                details={"pair": [a, b]},
            )
        seen.update((a, b))
        perm[a], perm[b] = b, a
    if not np.array_equal(perm[perm], np.arange(channels)):
        raise InvalidParameterError("Flip pairs do not form an involution")
    return perm


def flip_merge(
    pred: HeatmapStack,
    pred_flipped: HeatmapStack,
    flip_pairs: Sequence[Tuple[int, int]],
) -> HeatmapStack:
    """Mirror the flipped prediction back, swap paired channels and average."""
    pred.require_same_shape(pred_flipped)
    perm = flip_permutation(flip_pairs, pred.channels)
    restored = pred_flipped.data[perm][:, :, ::-1]
    return HeatmapStack((pred.data + restored) / 2.0)


def parse_flip_pairs(spec: str) -> List[Tuple[int, int]]:
    """
    Parse "coco", "none" or "a-b,c-d" into a list of channel pairs.

    Raises:
        InvalidParameterError: malformed spec
    """
    text = spec.strip().lower()
    if text == "coco":
        return list(COCO_FLIP_PAIRS)
    if text in ("", "none"):
        return []
    pairs: List[Tuple[int, int]] = []
    for item in text.split(","):
        try:
            a, b = item.split("-")
            pairs.append((int(a), int(b)))
        except ValueError as e:
            raise InvalidParameterError(f"Malformed flip pair '{item}' in '{spec}'") from e
    return pairs


def group_by_tags(
    detections: Sequence[Detection],
    tag_threshold: float = settings.TAG_THRESHOLD,
    num_keypoints: Optional[int] = None,
) -> List[PoseGroup]:
    """
    Greedy nearest-tag grouping.

    Each detection joins the group with the nearest running-mean tag whose
    slot for its channel is empty, provided the tag distance is below the
    threshold; otherwise it opens a new group. A missing tag counts as 0.
    Groups are returned in creation order.
    """
    if not detections:
        return []
    k_count = num_keypoints or (max(d.channel for d in detections) + 1)

    by_channel: Dict[int, List[Detection]] = {}
    for det in detections:
        by_channel.setdefault(det.channel, []).append(det)

    groups: List[PoseGroup] = []
    for k in range(k_count):
        for det in sorted(by_channel.get(k, []), key=lambda d: -d.score):
            tag = det.tag if det.tag is not None else 0.0
            best: Optional[PoseGroup] = None
            best_dist = tag_threshold
            for group in groups:
                if group.keypoints[k] is not None:
                    continue
                dist = abs(tag - group.group_tag)
                if dist < best_dist:
                    best, best_dist = group, dist
            if best is None:
                best = PoseGroup.empty(k_count)
                groups.append(best)
            best.add(det)
    return groups


def decode_poses(
    pred: HeatmapStack,
    tags: Optional[HeatmapStack] = None,
    max_peaks: int = settings.MAX_PEAKS,
    score_floor: float = settings.SCORE_FLOOR,
    tag_threshold: float = settings.TAG_THRESHOLD,
    refine: bool = True,
) -> List[PoseGroup]:
    """
    Full bottom-up decoding: peaks, tags read at the integer peak, refinement, grouping.

    Without tag maps every detection carries tag 0. Poses come back sorted by
    group score, highest first.
    """
    if tags is not None:
        pred.require_same_shape(tags)
    detections = []
    for det in find_peaks(pred, max_peaks, score_floor):
        if tags is not None:
            det = det.model_copy(update={"tag": float(tags.data[det.channel, int(det.y), int(det.x)])})
        detections.append(refine_subpixel(pred, det) if refine else det)
    groups = group_by_tags(detections, tag_threshold, pred.channels)
    logger.debug(f"Decoded {len(detections)} detections into {len(groups)} poses")
    return sorted(groups, key=lambda g: -g.group_score)


def poses_payload(poses_by_image: Dict[int, List[PoseGroup]]) -> List[Dict[str, Any]]:
    return [
        pose.to_result(image_id)
        for image_id in sorted(poses_by_image)
        for pose in poses_by_image[image_id]
    ]


def export_poses(
    poses: Union[List[PoseGroup], Dict[int, List[PoseGroup]]],
    path: Union[str, Path],
) -> None:
    """Write poses in the COCO results layout."""
    by_image = poses if isinstance(poses, dict) else {0: poses}
    Path(path).write_text(json.dumps(poses_payload(by_image), indent=2), encoding="utf-8")


def parse_poses(payload: Any) -> Dict[int, List[PoseGroup]]:
    if not isinstance(payload, list):
        raise AnnotationError("Pose JSON must be an array of results")
    by_image: Dict[int, List[PoseGroup]] = {}
    for idx, entry in enumerate(payload):
        try:
            pose = PoseGroup.from_result(entry)
        except (KeyError, TypeError, ValueError) as e:
            raise AnnotationError(f"Malformed pose at index {idx}: {e}", details={"index": idx}) from e
        by_image.setdefault(int(entry.get("image_id", 0)), []).append(pose)
    return by_image


def load_poses(path: Union[str, Path]) -> Dict[int, List[PoseGroup]]:
    """Read a results JSON file, grouping poses by image id."""
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AnnotationError(f"Invalid JSON in {path}: {e}") from e
    return parse_poses(payload)
