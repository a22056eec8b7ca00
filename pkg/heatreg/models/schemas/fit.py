"""Schemas for toy-optimizer configuration and results."""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Tuple

from pydantic import BaseModel, ConfigDict, Field

from heatreg.config import settings
from heatreg.models.grid import HeatmapStack, ScaleField
from heatreg.models.schemas.report import LossReport


class Variant(str, Enum):
    """Training objective of a toy fit."""
    BASE = "base"
    SHR = "shr"
    SAHR = "sahr"
    WAHR = "wahr"
    SWAHR = "swahr"

    @property
    def learns_scale(self) -> bool:
        return self in (Variant.SAHR, Variant.SWAHR)

    @property
    def weighted(self) -> bool:
        return self in (Variant.WAHR, Variant.SWAHR)


class FitConfig(BaseModel):
    """Hyper-parameters of one direct fit."""

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    variant: Variant = Variant.BASE
    sigma0: float = Field(default=settings.SIGMA0, gt=0.0)
    lambda_: float = Field(default=settings.LAMBDA, ge=0.0, alias="lambda")
    gamma: float = Field(default=settings.GAMMA, gt=0.0)
    learning_rate: float = Field(default=settings.LEARNING_RATE, gt=0.0)
    steps: int = Field(default=settings.STEPS, ge=1)
    seed: int = 0
    w_base: float = Field(default=settings.W_BASE, gt=0.0)
    prediction_blur: bool = Field(
        default=True,
        description="Limit prediction resolution to each person's annotation jitter",
    )
    output_blur: float = Field(
        default=0.0,
        ge=0.0,
        description="Std in pixels of a blur over the whole prediction stack; 0 disables it",
    )
    max_halvings: int = Field(default=40, ge=0)
    log_every: int = Field(default=500, ge=1)


@dataclass
class FitResult:
    """Outcome of fit_direct."""
    final_pred: HeatmapStack
    final_scale: ScaleField
    loss_curve: List[LossReport]
    per_person_mean_scale: List[Tuple[int, float]]
    localization_errors: List[float]
    final_learning_rate: float
    halvings: int = 0
    notes: List[str] = field(default_factory=list)

    @property
    def mean_localization_error(self) -> float:
        if not self.localization_errors:
            return 0.0
        return float(sum(self.localization_errors) / len(self.localization_errors))
