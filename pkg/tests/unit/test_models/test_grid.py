"""Unit tests for grid value types."""

import numpy as np
import pytest

from heatreg.errors import DimensionError, InvalidParameterError
from heatreg.models.grid import (
    AlphaField,
    Grid2D,
    HeatmapStack,
    ScaleField,
    SupportMask,
    elementwise_max,
)


class TestGrid2D:
    """Tests for Grid2D."""

    def test_column_row_addressing(self):
        """at(i, j) reads column i, row j."""
        grid = Grid2D(np.arange(6, dtype=np.float64).reshape(2, 3))
        assert grid.height == 2
        assert grid.width == 3
        assert grid.at(2, 0) == 2.0
        assert grid.at(0, 1) == 3.0

    def test_rejects_wrong_rank(self):
        with pytest.raises(DimensionError):
            Grid2D(np.zeros((2, 2, 2)))

    def test_data_is_read_only_copy(self):
        """Mutating the source array does not change the grid."""
        src = np.zeros((2, 2))
        grid = Grid2D(src)
        src[0, 0] = 5.0
        assert grid.at(0, 0) == 0.0
        with pytest.raises(ValueError):
            grid.data[0, 0] = 1.0


class TestHeatmapStack:
    """Tests for HeatmapStack."""

    def test_shape_properties(self):
        stack = HeatmapStack.zeros((3, 4, 5))
        assert stack.shape == (3, 4, 5)
        assert stack.channels == 3
        assert stack.height == 4
        assert stack.width == 5
        assert stack.size == 60

    def test_rejects_two_dimensional_data(self):
        with pytest.raises(DimensionError):
            HeatmapStack(np.zeros((4, 4)))

    def test_channel_returns_grid(self):
        data = np.zeros((2, 3, 3))
        data[1, 2, 0] = 0.5
        stack = HeatmapStack(data)
        assert stack.channel(1).at(0, 2) == 0.5

    def test_require_same_shape(self):
        a = HeatmapStack.zeros((1, 2, 2))
        b = HeatmapStack.zeros((1, 2, 3))
        a.require_same_shape(HeatmapStack.zeros((1, 2, 2)))
        with pytest.raises(DimensionError) as exc:
            a.require_same_shape(b)
        assert exc.value.details == {"left": [1, 2, 2], "right": [1, 2, 3]}

    def test_equality_is_by_value(self):
        assert HeatmapStack.full((1, 2, 2), 0.3) == HeatmapStack.full((1, 2, 2), 0.3)
        assert HeatmapStack.full((1, 2, 2), 0.3) != HeatmapStack.full((1, 2, 2), 0.4)

    def test_quantized_rounds_to_float32(self):
        stack = HeatmapStack.full((1, 2, 2), 0.1)
        assert not stack.is_quantized
        rounded = stack.quantized()
        assert rounded.is_quantized
        assert rounded.data[0, 0, 0] == float(np.float32(0.1))

    def test_quantized_keeps_field_type(self):
        assert isinstance(ScaleField(np.full((1, 1, 2), 1.3)).quantized(), ScaleField)


class TestScaleAndAlphaFields:
    """Tests for ScaleField and AlphaField."""

    def test_scale_must_be_positive(self):
        with pytest.raises(InvalidParameterError):
            ScaleField(np.zeros((1, 1, 1)))
        with pytest.raises(InvalidParameterError):
            ScaleField(np.full((1, 1, 1), -2.0))

    def test_scale_must_be_finite(self):
        with pytest.raises(InvalidParameterError):
            ScaleField(np.full((1, 1, 1), np.inf))

    def test_alpha_must_exceed_minus_one(self):
        with pytest.raises(InvalidParameterError):
            AlphaField(np.full((1, 1, 1), -1.0))

    def test_round_trip_is_float_exact(self, rng):
        """s -> alpha -> s agrees to rounding of the two divisions."""
        s = ScaleField(rng.uniform(0.5, 2.0, size=(3, 8, 8)))
        back = s.to_alpha().to_scale()
        ulps = np.abs(back.data - s.data) / np.spacing(s.data)
        assert np.all(ulps <= 1.5)

    def test_unit_scale_is_zero_alpha(self):
        alpha = ScaleField.ones((1, 2, 2)).to_alpha()
        assert np.all(alpha.data == 0.0)


class TestSupportMask:
    """Tests for SupportMask."""

    def test_count(self):
        data = np.zeros((1, 3, 3), dtype=bool)
        data[0, 1, 1] = True
        data[0, 0, 2] = True
        assert SupportMask(data).count == 2


class TestElementwiseMax:
    """Tests for elementwise_max."""

    def test_takes_larger_value(self):
        a = HeatmapStack.full((1, 1, 1), 0.6)
        b = HeatmapStack.full((1, 1, 1), 0.9)
        assert elementwise_max(a, b).data[0, 0, 0] == 0.9

    def test_idempotent(self, rng):
        a = HeatmapStack(rng.uniform(size=(2, 4, 4)))
        assert elementwise_max(a, a) == a

    def test_zeros_are_identity(self, rng):
        a = HeatmapStack(rng.uniform(size=(2, 4, 4)))
        assert elementwise_max(a, HeatmapStack.zeros(a.shape)) == a

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            elementwise_max(HeatmapStack.zeros((1, 2, 2)), HeatmapStack.zeros((2, 2, 2)))
