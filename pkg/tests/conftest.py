"""Pytest configuration and fixtures."""

import json

import numpy as np
import pytest

from heatreg.config import NUM_KEYPOINTS
from heatreg.models.grid import HeatmapStack
from heatreg.models.schemas.annotation import PersonInstance


def make_person(x: float, y: float, num_keypoints: int = NUM_KEYPOINTS, step: float = 2.0,
                image_id: int = 0) -> PersonInstance:
    """Person whose keypoints run down a vertical line from (x, y), one per step pixels."""
    arr = np.array(
        [[x, y + step * k, 2] for k in range(num_keypoints)],
        dtype=np.float64,
    )
    return PersonInstance.from_array(arr, image_id=image_id)


@pytest.fixture
def rng():
    """Seeded random generator."""
    return np.random.default_rng(1234)


@pytest.fixture
def single_person():
    """One upright person at integer coordinates on a 64x64 canvas."""
    return make_person(20.0, 10.0)


@pytest.fixture
def sample_annotation_payload():
    """Minimal one-person COCO annotation JSON payload."""
    flat = []
    for k in range(NUM_KEYPOINTS):
        flat.extend([20.0, 10.0 + 2.0 * k, 2])
    return {
        "annotations": [
            {
                "image_id": 0,
                "keypoints": flat,
                "num_keypoints": NUM_KEYPOINTS,
                "bbox": [18.0, 8.0, 128.0, 36.0],
                "area": 128.0 * 36.0,
            }
        ]
    }


@pytest.fixture
def annotation_file(tmp_path, sample_annotation_payload):
    """Annotation JSON written to a temporary file."""
    path = tmp_path / "annotations.json"
    path.write_text(json.dumps(sample_annotation_payload), encoding="utf-8")
    return path


@pytest.fixture
def small_stacks(rng):
    """(pred, base, alpha) random 3x8x8 arrays with a partial support."""
    shape = (3, 8, 8)
    base = rng.uniform(0.0, 1.0, size=shape)
    base[rng.uniform(size=shape) < 0.4] = 0.0
    pred = rng.uniform(-0.05, 1.05, size=shape)
    alpha = rng.uniform(-0.3, 0.3, size=shape)
    return HeatmapStack(pred), HeatmapStack(base), HeatmapStack(alpha)
