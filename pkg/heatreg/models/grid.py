"""Grid value types shared by every module.

Addressing convention: a stack is stored as a dense row-major array of
shape (K, H, W). Cell (i, j) of a channel means column i (x) and row j (y),
so ``data[k, j, i]`` is the value at x=i, y=j. Values are held in 64-bit
floats; loss sums accumulate in 64-bit as well. HMAP dumps carry float32,
so a computed stack is rounded with ``quantized()`` before it is written.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np

from heatreg.errors import DimensionError, InvalidParameterError

Shape3 = Tuple[int, int, int]


def _frozen_array(data, dtype) -> np.ndarray:
    arr = np.array(data, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Grid2D:
    """Single-channel grid of shape (H, W)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"Grid2D expects 2 dimensions, got {arr.ndim}")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    def at(self, i: int, j: int) -> float:
        """Value at column i (x), row j (y)."""
        return float(self.data[j, i])

    def __eq__(self, other) -> bool:
        return isinstance(other, Grid2D) and np.array_equal(self.data, other.data)

    __hash__ = None


@dataclass(frozen=True, eq=False)
class HeatmapStack:
    """K channel grids of identical shape (H^sigma0, H^(sigma0*s), predictions P)."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, np.float64)
        if arr.ndim != 3:
            raise DimensionError(
                f"{type(self).__name__} expects (K, H, W), got {arr.ndim} dimensions",
                details={"shape": list(arr.shape)},
            )
        object.__setattr__(self, "data", arr)
        self._validate()

    def _validate(self) -> None:
        """Hook for subclasses with value invariants."""

    @classmethod
    def zeros(cls, shape: Shape3):
        return cls(np.zeros(shape))

    @classmethod
    def full(cls, shape: Shape3, value: float):
        return cls(np.full(shape, value, dtype=np.float64))

    @property
    def shape(self) -> Shape3:
        return tuple(self.data.shape)

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def height(self) -> int:
        return self.data.shape[1]

    @property
    def width(self) -> int:
        return self.data.shape[2]

    @property
    def size(self) -> int:
        return int(self.data.size)

    def quantized(self):
        """Copy with every value rounded to float32, the HMAP payload precision."""
        return type(self)(self.data.astype(np.float32).astype(np.float64))

    @property
    def is_quantized(self) -> bool:
        return np.array_equal(self.data.astype(np.float32), self.data, equal_nan=True)

    def channel(self, k: int) -> Grid2D:
        return Grid2D(self.data[k])

    def require_same_shape(self, *others: "HeatmapStack") -> None:
        """Raise DimensionError unless every stack shares this shape."""
        for other in others:
            if other.shape != self.shape:
                raise DimensionError(
                    f"Shape mismatch: {self.shape} vs {other.shape}",
                    details={"left": list(self.shape), "right": list(other.shape)},
                )

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, HeatmapStack)
            and self.shape == other.shape
            and np.array_equal(self.data, other.data)
        )

    __hash__ = None


class ScaleField(HeatmapStack):
    """Per-cell scale factors s; strictly positive and finite."""

    def _validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise InvalidParameterError("Scale field contains non-finite values")
        if np.any(self.data <= 0):
            raise InvalidParameterError(
                "Scale field must be strictly positive",
                details={"min": float(self.data.min())},
            )

    @classmethod
    def ones(cls, shape: Shape3) -> "ScaleField":
        return cls(np.ones(shape))

    def to_alpha(self) -> "AlphaField":
        return AlphaField(1.0 / self.data - 1.0)


class AlphaField(HeatmapStack):
    """alpha = 1/s - 1; must stay above -1 so that s is positive."""

    def _validate(self) -> None:
        if not np.all(np.isfinite(self.data)):
            raise InvalidParameterError("Alpha field contains non-finite values")
        if np.any(self.data <= -1.0):
            raise InvalidParameterError(
                "Alpha field must be greater than -1",
                details={"min": float(self.data.min())},
            )

    def to_scale(self) -> ScaleField:
        return ScaleField(1.0 / (1.0 + self.data))


@dataclass(frozen=True, eq=False)
class SupportMask:
    """Boolean mask, true exactly where the base heatmap is positive."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen_array(self.data, bool)
        if arr.ndim != 3:
            raise DimensionError(f"SupportMask expects (K, H, W), got {arr.ndim} dimensions")
        object.__setattr__(self, "data", arr)

    @property
    def shape(self) -> Shape3:
        return tuple(self.data.shape)

    @property
    def count(self) -> int:
        return int(self.data.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, SupportMask) and np.array_equal(self.data, other.data)

    __hash__ = None


def elementwise_max(a: HeatmapStack, b: HeatmapStack) -> HeatmapStack:
    """Pixel-wise maximum of two stacks (the merge rule of overlapping persons)."""
    a.require_same_shape(b)
    return HeatmapStack(np.maximum(a.data, b.data))
