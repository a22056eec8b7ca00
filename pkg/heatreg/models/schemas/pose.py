"""Pydantic schemas for decoded detections and grouped poses."""

from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class Detection(BaseModel):
    """Sub-pixel keypoint candidate of one channel."""
    channel: int = Field(..., ge=0)
    x: float
    y: float
    score: float = Field(..., description="Heatmap value at the integer peak")
    tag: Optional[float] = None


class PoseGroup(BaseModel):
    """Per-person skeleton: one optional detection per channel."""
    keypoints: List[Optional[Detection]]
    group_score: float = 0.0
    group_tag: float = 0.0
    tag_count: int = 0

    @classmethod
    def empty(cls, num_keypoints: int) -> "PoseGroup":
        return cls(keypoints=[None] * num_keypoints)

    @property
    def num_keypoints(self) -> int:
        return len(self.keypoints)

    def add(self, det: Detection) -> None:
        """Place a detection in its empty slot and update score and running mean tag."""
        if self.keypoints[det.channel] is not None:
            raise ValueError(f"Slot {det.channel} already filled")
        self.keypoints[det.channel] = det
        present = [d.score for d in self.keypoints if d is not None]
        self.group_score = sum(present) / len(present)
        tag = det.tag if det.tag is not None else 0.0
        self.tag_count += 1
        self.group_tag += (tag - self.group_tag) / self.tag_count

    def to_result(self, image_id: int = 0) -> Dict[str, Any]:
        """
        COCO results entry: keypoints [x1, y1, s1, ...] and score.

        A parallel ``visibility`` list marks filled slots with 1 and empty
        ones with 0, so zero-score detections survive a reload.
        """
        flat: List[float] = []
        visibility: List[int] = []
        for det in self.keypoints:
            if det is None:
                flat.extend([0.0, 0.0, 0.0])
                visibility.append(0)
            else:
                flat.extend([det.x, det.y, det.score])
                visibility.append(1)
        return {"image_id": image_id, "keypoints": flat, "visibility": visibility, "score": self.group_score}

    @classmethod
    def from_result(cls, entry: Dict[str, Any]) -> "PoseGroup":
        """
        Inverse of to_result.

        Slots with visibility 0 are empty. Entries without a visibility list
        (third-party results files) fall back to treating score <= 0 as empty.
        """
        flat = entry["keypoints"]
        if len(flat) % 3 != 0:
            raise ValueError(f"keypoints length {len(flat)} is not a multiple of 3")
        num_slots = len(flat) // 3
        visibility = entry.get("visibility")
        if visibility is not None and len(visibility) != num_slots:
            raise ValueError(f"visibility has {len(visibility)} entries, expected {num_slots}")
        slots: List[Optional[Detection]] = []
        for k in range(num_slots):
            x, y, s = flat[3 * k: 3 * k + 3]
            filled = visibility[k] > 0 if visibility is not None else s > 0
            slots.append(Detection(channel=k, x=x, y=y, score=s) if filled else None)
        return cls(keypoints=slots, group_score=float(entry.get("score", 0.0)))
