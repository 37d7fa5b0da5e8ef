"""Shape-prefixed binary tensor files (TNS1).

Layout: magic ``TNS1``, u8 rank, rank x u64 little-endian dims, then the
f32 row-major little-endian payload. Used for representations, luminance
frames, backbone features, and parameters.
"""

from __future__ import annotations

import os

import numpy as np

from .errors import ParseError

TNS_MAGIC = b"TNS1"


def write_tensor(path: str | os.PathLike, tensor: np.ndarray) -> None:
    arr = np.ascontiguousarray(tensor, np.float32)
    header = TNS_MAGIC + bytes([arr.ndim]) + np.asarray(arr.shape, "<u8").tobytes()
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(arr.astype("<f4", copy=False).tobytes())


def read_tensor(path: str | os.PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 5 or blob[:4] != TNS_MAGIC:
        raise ParseError(f"{path}: offset 0: missing {TNS_MAGIC!r} magic")
    rank = blob[4]
    dims_end = 5 + 8 * rank
    if len(blob) < dims_end:
        raise ParseError(f"{path}: offset 5: truncated dim list (rank {rank})")
    dims = np.frombuffer(blob, "<u8", rank, 5).astype(np.int64)
    n = int(np.prod(dims)) if rank else 1
    expected = dims_end + 4 * n
    if len(blob) != expected:
        raise ParseError(
            f"{path}: offset {dims_end}: payload is {len(blob) - dims_end} bytes, "
            f"expected {4 * n} for shape {tuple(dims)}"
        )
    data = np.frombuffer(blob, "<f4", n, dims_end)
    return data.reshape(tuple(dims)).copy()
