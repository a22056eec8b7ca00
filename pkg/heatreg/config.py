"""Application configuration using Pydantic settings."""

from enum import Enum
from typing import List, Tuple

from pydantic_settings import BaseSettings, SettingsConfigDict


class Environment(str, Enum):
    """Application environment types."""
    DEVELOPMENT = "development"
    TEST = "test"
    PRODUCTION = "production"


class Settings(BaseSettings):
    """Library and CLI defaults, overridable through HEATREG_* variables."""

    model_config = SettingsConfigDict(
        env_prefix="HEATREG_",
        env_file=".env",
        case_sensitive=True,
        extra="ignore"
    )

    # Application
    ENVIRONMENT: Environment = Environment.DEVELOPMENT
    LOG_LEVEL: str = "INFO"

    # Heatmap encoding
    SIGMA0: float = 2.0
    W_BASE: float = 256.0
    LN_CLAMP: float = 1e-12

    # Losses
    LAMBDA: float = 1.0
    GAMMA: float = 0.01
    FD_EPSILON: float = 1e-4

    # Toy optimizer
    LEARNING_RATE: float = 0.5
    STEPS: int = 5000
    CANVAS: int = 64
    SWEEP_WORKERS: int = 1

    # Decoding
    SCORE_FLOOR: float = 0.1
    MAX_PEAKS: int = 30
    TAG_THRESHOLD: float = 1.0


# Global settings instance
settings = Settings()


# COCO keypoint order; synthetic skeletons follow it so flip pairs and
# OKS constants carry over unchanged.
COCO_KEYPOINT_NAMES: List[str] = [
    "nose", "left_eye", "right_eye", "left_ear", "right_ear",
    "left_shoulder", "right_shoulder", "left_elbow", "right_elbow",
    "left_wrist", "right_wrist", "left_hip", "right_hip",
    "left_knee", "right_knee", "left_ankle", "right_ankle",
]

NUM_KEYPOINTS = len(COCO_KEYPOINT_NAMES)

COCO_FLIP_PAIRS: List[Tuple[int, int]] = [
    (1, 2), (3, 4), (5, 6), (7, 8), (9, 10), (11, 12), (13, 14), (15, 16),
]

# Per-keypoint sigmas of the COCO evaluator. The OKS falloff constant is
# k_i = 2 * sigma_i.
COCO_KEYPOINT_SIGMAS: List[float] = [
    0.026, 0.025, 0.025, 0.035, 0.035, 0.079, 0.079, 0.072, 0.072,
    0.062, 0.062, 0.107, 0.107, 0.087, 0.087, 0.089, 0.089,
]

COCO_K_CONSTS: List[float] = [2.0 * s for s in COCO_KEYPOINT_SIGMAS]

# Uniform falloff used for synthetic scenes
SYNTHETIC_K_CONST = 0.1

# AP_M / AP_L area boundaries (pixels^2)
MEDIUM_AREA_RANGE: Tuple[float, float] = (32.0 ** 2, 96.0 ** 2)
LARGE_AREA_MIN: float = 96.0 ** 2
