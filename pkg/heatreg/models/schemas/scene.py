"""Synthetic scene schema."""

from typing import List, Tuple

from pydantic import BaseModel, Field, model_validator

from heatreg.models.schemas.annotation import PersonInstance


class SyntheticScene(BaseModel):
    """Annotation-only scene: true keypoints plus the jittered labels that get encoded."""
    canvas: Tuple[int, int] = Field(..., description="(H, W) in pixels")
    persons: List[PersonInstance] = Field(default_factory=list)
    noisy_persons: List[PersonInstance] = Field(default_factory=list)
    seed: int = 0
    scales: List[float] = Field(default_factory=list, description="Per-person size multiplier")
    jitter_coeff: float = Field(default=0.0, ge=0.0)

    @model_validator(mode="after")
    def validate_lists(self) -> "SyntheticScene":
        """True and noisy lists pair up person by person."""
        if len(self.persons) != len(self.noisy_persons):
            raise ValueError("persons and noisy_persons must have equal length")
        for true_p, noisy_p in zip(self.persons, self.noisy_persons):
            if true_p.num_keypoints != noisy_p.num_keypoints:
                raise ValueError("true and noisy persons must have the same keypoint count")
        if self.scales and len(self.scales) != len(self.persons):
            raise ValueError("scales must list one multiplier per person")
        return self

    @property
    def height(self) -> int:
        return self.canvas[0]

    @property
    def width(self) -> int:
        return self.canvas[1]

    @property
    def num_persons(self) -> int:
        return len(self.persons)
