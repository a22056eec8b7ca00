"""Unit tests for HMAP dumps and PGM export."""

import io
import struct

import numpy as np
import pytest

from heatreg.errors import (
    PrecisionLossError,
    ShapeOverflowError,
    TensorFormatError,
    TruncatedStreamError,
)
from heatreg.models.grid import Grid2D, HeatmapStack
from heatreg.services.heatmap_codec import encode_gaussian, sahr_exact
from heatreg.utils.tensor_io import (
    HEADER,
    dump_tensor,
    dumps_tensor,
    load_tensor,
    loads_tensor,
    pgm_bytes,
    read_tensor,
    save_tensor,
)


class TestDumpTensor:
    """Tests for the HMAP writer."""

    def test_header_layout(self):
        blob = dumps_tensor(HeatmapStack.zeros((2, 3, 4)))
        assert blob[:4] == b"HMAP"
        assert struct.unpack("<III", blob[4:16]) == (2, 3, 4)
        assert len(blob) == 16 + 2 * 3 * 4 * 4

    def test_payload_is_little_endian_float32_channel_major(self):
        data = np.zeros((2, 1, 2))
        data[1, 0, 1] = 0.5
        blob = dumps_tensor(HeatmapStack(data))
        values = np.frombuffer(blob[16:], dtype="<f4")
        assert values.tolist() == [0.0, 0.0, 0.0, 0.5]


class TestLoadTensor:
    """Tests for the HMAP reader."""

    def test_round_trip_is_bit_exact(self, rng):
        values = rng.uniform(size=(3, 5, 7)).astype(np.float32).astype(np.float64)
        stack = HeatmapStack(values)
        assert loads_tensor(dumps_tensor(stack)) == stack

    def test_computed_stack_round_trips_after_quantizing(self, single_person):
        base = encode_gaussian([single_person], 2.0, (17, 48, 48))
        stack = sahr_exact(base, np.full(base.shape, 1.7)).quantized()
        assert loads_tensor(dumps_tensor(stack)) == stack

    def test_unquantized_stack_is_refused(self, single_person):
        base = encode_gaussian([single_person], 2.0, (17, 48, 48))
        stack = sahr_exact(base, np.full(base.shape, 1.7))
        with pytest.raises(PrecisionLossError) as exc:
            dumps_tensor(stack)
        assert 0.0 < exc.value.details["max_abs_error"] < 1e-6

    def test_empty_stream_is_truncated(self):
        with pytest.raises(TruncatedStreamError):
            load_tensor(io.BytesIO(b""))

    def test_short_payload_is_truncated(self):
        blob = dumps_tensor(HeatmapStack.zeros((1, 2, 2)))
        with pytest.raises(TruncatedStreamError) as exc:
            loads_tensor(blob[:-1])
        assert exc.value.details["expected"] == 16

    def test_wrong_magic(self):
        blob = b"NOPE" + dumps_tensor(HeatmapStack.zeros((1, 1, 1)))[4:]
        with pytest.raises(TensorFormatError):
            loads_tensor(blob)

    def test_shape_overflow(self):
        blob = HEADER.pack(b"HMAP", 1 << 16, 1 << 16, 1 << 16)
        with pytest.raises(ShapeOverflowError):
            loads_tensor(blob)

    def test_sequential_stacks_in_one_stream(self):
        """The reader consumes exactly one stack."""
        buf = io.BytesIO()
        dump_tensor(HeatmapStack.full((1, 1, 2), 0.25), buf)
        dump_tensor(HeatmapStack.full((1, 2, 1), 0.75), buf)
        buf.seek(0)
        assert load_tensor(buf).shape == (1, 1, 2)
        assert load_tensor(buf).data[0, 1, 0] == 0.75

    def test_file_round_trip(self, tmp_path):
        stack = HeatmapStack.full((2, 2, 2), 0.5)
        path = tmp_path / "stack.hmap"
        save_tensor(stack, path)
        assert read_tensor(path) == stack


class TestPgm:
    """Tests for PGM export."""

    def test_min_max_normalized(self):
        blob = pgm_bytes(Grid2D(np.array([[0.0, 1.0], [2.0, 4.0]])))
        header = b"P5\n2 2\n255\n"
        assert blob.startswith(header)
        assert list(blob[len(header):]) == [0, 64, 128, 255]

    def test_constant_grid_is_black(self):
        blob = pgm_bytes(Grid2D(np.full((2, 3), 7.0)))
        assert set(blob[len(b"P5\n3 2\n255\n"):]) == {0}
