"""OKS similarity and COCO-protocol AP/AR over desk-scale datasets.

Person scale s^2 is the annotation area. Matching per OKS threshold is
greedy in descending pose score; each ground truth matches at most once and
ground truths outside the evaluated area range are ignored rather than
counted. Precision is integrated with 101-point interpolation.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, field_validator

from heatreg.config import (
    COCO_K_CONSTS,
    LARGE_AREA_MIN,
    MEDIUM_AREA_RANGE,
    NUM_KEYPOINTS,
    SYNTHETIC_K_CONST,
)
from heatreg.errors import AnnotationError, InvalidParameterError
from heatreg.models.schemas.annotation import PersonInstance
from heatreg.models.schemas.pose import Detection, PoseGroup
from heatreg.models.schemas.report import APReport
from heatreg.services.decoder_grouper import load_poses

logger = logging.getLogger(__name__)

OKS_THRESHOLDS: Tuple[float, ...] = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))
RECALL_POINTS = np.linspace(0.0, 1.0, 101)
AREA_EPS = np.spacing(1)
MAX_AREA = 1e10


class OksParams(BaseModel):
    """Per-keypoint falloff constants and area splits."""
    k_consts: List[float]
    medium_area_range: Tuple[float, float] = MEDIUM_AREA_RANGE
    large_area_min: float = LARGE_AREA_MIN
    max_detections: int = Field(default=20, ge=1)

    @field_validator("k_consts")
    @classmethod
    def validate_k_consts(cls, v: List[float]) -> List[float]:
        """Every falloff constant must be positive."""
        if not v or any(not k > 0 for k in v):
            raise ValueError("k_consts must be a non-empty list of positive values")
        return v

    @classmethod
    def coco(cls) -> "OksParams":
        return cls(k_consts=list(COCO_K_CONSTS))

    @classmethod
    def synthetic(cls, num_keypoints: int = NUM_KEYPOINTS) -> "OksParams":
        return cls(k_consts=[SYNTHETIC_K_CONST] * num_keypoints)

    def area_ranges(self) -> Dict[str, Tuple[float, float]]:
        return {
            "all": (0.0, MAX_AREA),
            "medium": tuple(self.medium_area_range),
            "large": (self.large_area_min, MAX_AREA),
        }


def oks(pred: PoseGroup, gt: PersonInstance, params: OksParams) -> float:
    """
    Object keypoint similarity of one pose against one ground truth.

    Raises:
        InvalidParameterError: gt has no labeled keypoint, or counts disagree
    """
    gt_arr = gt.to_array()
    if len(params.k_consts) != len(gt_arr) or pred.num_keypoints != len(gt_arr):
        raise InvalidParameterError(
            f"Keypoint counts differ: pred {pred.num_keypoints}, gt {len(gt_arr)}, "
            f"k_consts {len(params.k_consts)}"
        )
    visible = gt_arr[:, 2] > 0
    if not visible.any():
        raise InvalidParameterError("OKS is undefined for a ground truth without labeled keypoints")

    area = gt.area + AREA_EPS
    total = 0.0
    for k in np.nonzero(visible)[0]:
        det = pred.keypoints[k]
        if det is None:
            continue
        d2 = (det.x - gt_arr[k, 0]) ** 2 + (det.y - gt_arr[k, 1]) ** 2
        total += math.exp(-d2 / (2.0 * area * params.k_consts[k] ** 2))
    return total / int(visible.sum())


def pose_area(pose: PoseGroup) -> float:
    """Area of the box around the present keypoints."""
    present = [d for d in pose.keypoints if d is not None]
    if not present:
        return 0.0
    xs = [d.x for d in present]
    ys = [d.y for d in present]
    return (max(xs) - min(xs)) * (max(ys) - min(ys))


def match_scene(
    poses: Sequence[PoseGroup],
    gts: Sequence[PersonInstance],
    params: OksParams,
    threshold: float,
    area_range: Tuple[float, float] = (0.0, MAX_AREA),
) -> Tuple[List[int], List[bool]]:
    """
    Greedy matching of one scene at one OKS threshold.

    Args:
        poses: Predictions, already sorted by descending score
        gts: Ground truths with at least one labeled keypoint

    Returns:
        (match, ignored): per pose, the index of its matched gt or -1, and
        whether the pose is excluded from the PR curve
    """
    lo, hi = area_range
    gt_ignore = [not (lo <= g.area <= hi) for g in gts]
    # Non-ignored ground truths are tried first
    gt_order = sorted(range(len(gts)), key=lambda g: gt_ignore[g])
    gt_taken = [False] * len(gts)

    match: List[int] = []
    ignored: List[bool] = []
    for pose in poses:
        best = min(threshold, 1.0 - 1e-10)
        chosen = -1
        for g in gt_order:
            if gt_taken[g] and not gt_ignore[g]:
                continue
            if chosen > -1 and not gt_ignore[chosen] and gt_ignore[g]:
                break
            score = oks(pose, gts[g], params)
            if score < best:
                continue
            best, chosen = score, g
        if chosen > -1:
            gt_taken[chosen] = True
            match.append(chosen)
            ignored.append(gt_ignore[chosen])
        else:
            area = pose_area(pose)
            match.append(-1)
            ignored.append(not (lo <= area <= hi))
    return match, ignored


def _precision_at_recall_points(tp: np.ndarray, fp: np.ndarray, num_gt: int) -> Tuple[float, float]:
    """(101-point interpolated precision, final recall) of a sorted detection list."""
    if len(tp) == 0:
        return 0.0, 0.0
    tp_sum = np.cumsum(tp, dtype=np.float64)
    fp_sum = np.cumsum(fp, dtype=np.float64)
    recall = tp_sum / num_gt
    precision = tp_sum / (tp_sum + fp_sum + np.spacing(1))
    # Monotone precision envelope
    precision = np.maximum.accumulate(precision[::-1])[::-1]
    inds = np.searchsorted(recall, RECALL_POINTS, side="left")
    q = np.zeros(len(RECALL_POINTS))
    valid = inds < len(precision)
    q[valid] = precision[inds[valid]]
    return float(q.mean()), float(recall[-1])


def _evaluate_range(
    poses_by_scene: Dict[int, List[PoseGroup]],
    gts_by_scene: Dict[int, List[PersonInstance]],
    params: OksParams,
    area_range: Tuple[float, float],
) -> Tuple[Optional[Dict[float, float]], Optional[Dict[float, float]]]:
    """Per-threshold AP and recall for one area range; None when no gt is eligible."""
    lo, hi = area_range
    num_gt = sum(
        1 for gts in gts_by_scene.values() for g in gts if lo <= g.area <= hi
    )
    if num_gt == 0:
        return None, None

    scene_ids = sorted(set(gts_by_scene) | set(poses_by_scene))
    precisions: Dict[float, float] = {}
    recalls: Dict[float, float] = {}
    for t in OKS_THRESHOLDS:
        scores: List[float] = []
        hits: List[bool] = []
        for sid in scene_ids:
            gts = gts_by_scene.get(sid, [])
            poses = sorted(poses_by_scene.get(sid, []), key=lambda p: -p.group_score)
            poses = poses[: params.max_detections]
            match, ignored = match_scene(poses, gts, params, t, area_range)
            for pose, m, ign in zip(poses, match, ignored):
                if ign:
                    continue
                scores.append(pose.group_score)
                hits.append(m > -1)
        order = np.argsort(-np.asarray(scores, dtype=np.float64), kind="mergesort")
        tp = np.asarray(hits, dtype=bool)[order]
        precisions[t], recalls[t] = _precision_at_recall_points(tp, ~tp, num_gt)
    return precisions, recalls


def _drop_unlabeled(
    gts_by_scene: Dict[int, List[PersonInstance]],
) -> Dict[int, List[PersonInstance]]:
    return {
        sid: [g for g in gts if g.num_labeled > 0]
        for sid, gts in gts_by_scene.items()
    }


def average_precision(
    poses_by_scene: Dict[int, List[PoseGroup]],
    gts_by_scene: Dict[int, List[PersonInstance]],
    params: Optional[OksParams] = None,
) -> APReport:
    """
    AP over OKS thresholds 0.50:0.05:0.95, with AP50, AP75, AP_M, AP_L and AR@max_detections.

    Ground truths without labeled keypoints are excluded. Metrics with no
    eligible ground truth are reported as None and listed in undefined.
    """
    params = params or OksParams.coco()
    gts_by_scene = _drop_unlabeled(gts_by_scene)
    ranges = params.area_ranges()

    all_ap, all_rc = _evaluate_range(poses_by_scene, gts_by_scene, params, ranges["all"])
    med_ap, _ = _evaluate_range(poses_by_scene, gts_by_scene, params, ranges["medium"])
    large_ap, _ = _evaluate_range(poses_by_scene, gts_by_scene, params, ranges["large"])

    def mean_of(values: Optional[Dict[float, float]]) -> Optional[float]:
        return None if values is None else float(np.mean(list(values.values())))

    report = APReport(
        ap=mean_of(all_ap),
        ap50=None if all_ap is None else all_ap[0.5],
        ap75=None if all_ap is None else all_ap[0.75],
        ap_m=mean_of(med_ap),
        ap_l=mean_of(large_ap),
        ar=mean_of(all_rc),
        num_gt=sum(len(g) for g in gts_by_scene.values()),
        num_pred=sum(len(p) for p in poses_by_scene.values()),
    )
    report.undefined = [
        name for name in ("ap", "ap50", "ap75", "ap_m", "ap_l", "ar")
        if getattr(report, name) is None
    ]
    if report.ap is None:
        logger.warning("No ground truth with labeled keypoints; AP is undefined")
    return report


def localization_errors(
    detections: Sequence[Detection],
    persons: Sequence[PersonInstance],
    canvas: Tuple[int, int],
) -> List[float]:
    """
    Distance from every labeled true keypoint to the nearest detection of its channel.

    A channel without detections costs the canvas diagonal.
    """
    diagonal = math.hypot(canvas[0], canvas[1])
    by_channel: Dict[int, List[Tuple[float, float]]] = {}
    for det in detections:
        by_channel.setdefault(det.channel, []).append((det.x, det.y))
    points = {k: np.asarray(v, dtype=np.float64) for k, v in by_channel.items()}

    errors: List[float] = []
    for person in persons:
        for k, kp in enumerate(person.keypoints):
            if not kp.labeled:
                continue
            cand = points.get(k)
            if cand is None:
                errors.append(diagonal)
                continue
            errors.append(float(np.min(np.hypot(cand[:, 0] - kp.x, cand[:, 1] - kp.y))))
    return errors


def render_table(report: APReport) -> str:
    """Fixed-width AP table; undefined metrics print as n/a."""
    columns = [
        ("AP", report.ap),
        ("AP50", report.ap50),
        ("AP75", report.ap75),
        ("AP_M", report.ap_m),
        ("AP_L", report.ap_l),
        ("AR@20", report.ar),
    ]
    header = " ".join(f"{name:>7}" for name, _ in columns)
    values = " ".join(
        f"{'n/a':>7}" if value is None else f"{value:7.3f}" for _, value in columns
    )
    return f"{header}\n{values}\n"


def load_pose_file(path: Union[str, Path]) -> Dict[int, List[PoseGroup]]:
    return load_poses(path)


def load_k_consts(path: Union[str, Path]) -> List[float]:
    """Read a JSON array of per-keypoint falloff constants."""
    try:
        values = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise AnnotationError(f"Invalid JSON in {path}: {e}") from e
    if not isinstance(values, list):
        raise AnnotationError(f"{path} must contain a JSON array of numbers")
    return [float(v) for v in values]
