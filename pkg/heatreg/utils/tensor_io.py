"""Binary tensor dumps (HMAP) and PGM visualization export.

HMAP layout: magic ``b"HMAP"``, then K, H, W as unsigned 32-bit
little-endian integers, then K*H*W little-endian float32 values in
channel-major, row-major order.
"""

import io
import logging
import struct
from pathlib import Path
from typing import BinaryIO, Union

import numpy as np

from heatreg.errors import (
    PrecisionLossError,
    ShapeOverflowError,
    TensorFormatError,
    TruncatedStreamError,
)
from heatreg.models.grid import Grid2D, HeatmapStack

logger = logging.getLogger(__name__)

MAGIC = b"HMAP"
HEADER = struct.Struct("<4sIII")
# Refuse payloads above 1 GiB
MAX_PAYLOAD_BYTES = 1 << 30

PathOrStream = Union[str, Path, BinaryIO]


def dump_tensor(stack: HeatmapStack, sink: BinaryIO) -> None:
    """
    Write a stack to a byte stream in HMAP format.

    Raises:
        PrecisionLossError: a value is not exactly representable as float32;
            call ``stack.quantized()`` first
    """
    payload = stack.data.astype("<f4")
    if not stack.is_quantized:
        worst = float(np.nanmax(np.abs(payload.astype(np.float64) - stack.data)))
        raise PrecisionLossError(
            "Stack values are not float32-exact; dump stack.quantized() instead",
            details={"shape": list(stack.shape), "max_abs_error": worst},
        )
    k, h, w = stack.shape
    sink.write(HEADER.pack(MAGIC, k, h, w))
    sink.write(payload.tobytes(order="C"))


def dumps_tensor(stack: HeatmapStack) -> bytes:
    buf = io.BytesIO()
    dump_tensor(stack, buf)
    return buf.getvalue()


def load_tensor(source: BinaryIO) -> HeatmapStack:
    """
    Read one HMAP stack from a byte stream.

    Raises:
        TruncatedStreamError: stream shorter than header or declared payload
        TensorFormatError: wrong magic bytes
        ShapeOverflowError: declared shape exceeds MAX_PAYLOAD_BYTES
    """
    header = source.read(HEADER.size)
    if len(header) < HEADER.size:
        raise TruncatedStreamError(
            "Stream ended inside the HMAP header",
            details={"expected": HEADER.size, "got": len(header)},
        )
    magic, k, h, w = HEADER.unpack(header)
    if magic != MAGIC:
        raise TensorFormatError(f"Bad magic bytes {magic!r}, expected {MAGIC!r}")

    count = k * h * w
    n_bytes = count * 4
    if n_bytes > MAX_PAYLOAD_BYTES:
        raise ShapeOverflowError(
            f"Declared shape {k}x{h}x{w} exceeds the payload limit",
            details={"shape": [k, h, w], "limit_bytes": MAX_PAYLOAD_BYTES},
        )

    payload = source.read(n_bytes)
    if len(payload) < n_bytes:
        raise TruncatedStreamError(
            "Stream ended inside the HMAP payload",
            details={"expected": n_bytes, "got": len(payload)},
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(k, h, w)
    return HeatmapStack(values)


def loads_tensor(blob: bytes) -> HeatmapStack:
    return load_tensor(io.BytesIO(blob))


def save_tensor(stack: HeatmapStack, path: Union[str, Path]) -> None:
    with open(path, "wb") as f:
        dump_tensor(stack, f)
    logger.debug(f"Wrote HMAP {stack.shape} to {path}")


def read_tensor(path: Union[str, Path]) -> HeatmapStack:
    with open(path, "rb") as f:
        return load_tensor(f)


def pgm_bytes(grid: Grid2D) -> bytes:
    """
    Encode a grid as binary PGM (P5, maxval 255), min-max normalized.

    A constant grid maps to all zeros.
    """
    data = grid.data
    lo = float(data.min())
    hi = float(data.max())
    if hi > lo:
        scaled = (data - lo) / (hi - lo)
    else:
        scaled = np.zeros_like(data)
    pixels = np.round(scaled * 255.0).astype(np.uint8)
    header = f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii")
    return header + pixels.tobytes(order="C")


def write_pgm(grid: Grid2D, path: Union[str, Path]) -> None:
    Path(path).write_bytes(pgm_bytes(grid))
