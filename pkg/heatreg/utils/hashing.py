"""Digests of heatmap stacks, used to compare runs bit for bit."""

import hashlib

from heatreg.models.grid import HeatmapStack
from heatreg.utils.tensor_io import dumps_tensor


def stack_digest(stack: HeatmapStack) -> str:
    """
    Generate the SHA256 digest of a stack's HMAP encoding.

    The stack is rounded to float32 first, so the digest matches that of the
    dumped file.

    Args:
        stack: Stack to fingerprint

    Returns:
        SHA256 hash as hexadecimal string (64 characters)
    """
    return hashlib.sha256(dumps_tensor(stack.quantized())).hexdigest()
