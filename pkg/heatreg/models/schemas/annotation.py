"""Pydantic schemas for keypoint annotations (COCO keypoint layout)."""

import math
from enum import IntEnum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator


class Visibility(IntEnum):
    """COCO visibility flag."""
    NOT_LABELED = 0
    LABELED_INVISIBLE = 1
    LABELED_VISIBLE = 2


class KeypointAnnotation(BaseModel):
    """Coordinate C^p_k of one keypoint, in pixels."""
    x: float = Field(..., description="Column coordinate (pixels)")
    y: float = Field(..., description="Row coordinate (pixels)")
    visibility: Visibility = Field(default=Visibility.LABELED_VISIBLE)

    @field_validator("x", "y")
    @classmethod
    def validate_finite(cls, v: float) -> float:
        """Coordinates must be finite."""
        if not math.isfinite(v):
            raise ValueError("Keypoint coordinates must be finite")
        return v

    @property
    def labeled(self) -> bool:
        return self.visibility != Visibility.NOT_LABELED


class PersonInstance(BaseModel):
    """Ground-truth person: K keypoints, bbox (x, y, w, h) and area."""
    keypoints: List[KeypointAnnotation]
    bbox: Tuple[float, float, float, float] = Field(default=(0.0, 0.0, 0.0, 0.0))
    area: float = Field(default=0.0, ge=0.0)
    image_id: int = Field(default=0)

    @field_validator("bbox")
    @classmethod
    def validate_bbox(cls, v: Tuple[float, float, float, float]) -> Tuple[float, float, float, float]:
        """Width and height must be non-negative."""
        if v[2] < 0 or v[3] < 0:
            raise ValueError("bbox width and height must be non-negative")
        return v

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoints)

    @property
    def num_labeled(self) -> int:
        return sum(1 for kp in self.keypoints if kp.labeled)

    def to_array(self) -> np.ndarray:
        """(K, 3) array of x, y, visibility."""
        return np.array(
            [[kp.x, kp.y, int(kp.visibility)] for kp in self.keypoints],
            dtype=np.float64,
        ).reshape(-1, 3)

    @classmethod
    def from_array(
        cls,
        arr: np.ndarray,
        image_id: int = 0,
        bbox: Optional[Tuple[float, float, float, float]] = None,
        area: Optional[float] = None,
    ) -> "PersonInstance":
        """Build from a (K, 3) array; bbox/area default to the labeled keypoint extent."""
        keypoints = [
            KeypointAnnotation(x=float(x), y=float(y), visibility=Visibility(int(v)))
            for x, y, v in np.asarray(arr, dtype=np.float64)
        ]
        if bbox is None:
            bbox = bbox_from_keypoints(arr)
        if area is None:
            area = bbox[2] * bbox[3]
        return cls(keypoints=keypoints, bbox=bbox, area=area, image_id=image_id)

    @classmethod
    def from_coco(cls, ann: Dict[str, Any]) -> "PersonInstance":
        """Parse one COCO annotation; only keypoints, bbox, area and image_id are read."""
        flat = ann["keypoints"]
        if len(flat) % 3 != 0:
            raise ValueError(f"keypoints length {len(flat)} is not a multiple of 3")
        arr = np.asarray(flat, dtype=np.float64).reshape(-1, 3)
        bbox = tuple(float(v) for v in ann.get("bbox", bbox_from_keypoints(arr)))
        area = float(ann.get("area", bbox[2] * bbox[3]))
        return cls.from_array(arr, image_id=int(ann.get("image_id", 0)), bbox=bbox, area=area)

    def to_coco(self) -> Dict[str, Any]:
        flat: List[float] = []
        for kp in self.keypoints:
            flat.extend([kp.x, kp.y, int(kp.visibility)])
        return {
            "image_id": self.image_id,
            "keypoints": flat,
            "num_keypoints": self.num_labeled,
            "bbox": list(self.bbox),
            "area": self.area,
        }


def bbox_from_keypoints(arr: np.ndarray) -> Tuple[float, float, float, float]:
    """Tight (x, y, w, h) box around labeled keypoints; zeros when none are labeled."""
    arr = np.asarray(arr, dtype=np.float64).reshape(-1, 3)
    labeled = arr[arr[:, 2] > 0]
    if len(labeled) == 0:
        return (0.0, 0.0, 0.0, 0.0)
    x0, y0 = labeled[:, 0].min(), labeled[:, 1].min()
    x1, y1 = labeled[:, 0].max(), labeled[:, 1].max()
    return (float(x0), float(y0), float(x1 - x0), float(y1 - y0))
