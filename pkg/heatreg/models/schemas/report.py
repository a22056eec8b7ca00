"""Pydantic schemas for loss and evaluation reports."""

from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field


class LossReport(BaseModel):
    """Scalar summary of one loss evaluation: total = regression + lambda * regularizer."""

    model_config = ConfigDict(populate_by_name=True, ser_json_inf_nan="strings")

    variant: str = "base"
    regression: float = Field(..., ge=0.0)
    regularizer: float = Field(default=0.0, ge=0.0)
    total: float
    lambda_: float = Field(default=1.0, alias="lambda")
    gamma: Optional[float] = None
    element_count: int = Field(..., ge=0)

    def to_json(self) -> str:
        return self.model_dump_json(by_alias=True)


class APReport(BaseModel):
    """OKS-based AP/AR summary; metrics without eligible ground truth are None."""

    model_config = ConfigDict(ser_json_inf_nan="strings")

    ap: Optional[float] = None
    ap50: Optional[float] = None
    ap75: Optional[float] = None
    ap_m: Optional[float] = None
    ap_l: Optional[float] = None
    ar: Optional[float] = Field(default=None, description="AR at 20 detections per scene")
    num_gt: int = 0
    num_pred: int = 0
    undefined: List[str] = Field(default_factory=list)

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)
