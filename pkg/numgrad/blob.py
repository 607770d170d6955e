from __future__ import annotations

import logging
import pathlib

import numpy as np

"""
BEVT tensor blobs: b"BEVT", u32 rank, rank x u32 dims, little-endian f32 payload.
"""

logger = logging.getLogger(__name__)

MAGIC = b"BEVT"
_U32 = np.dtype("<u4")
_F32 = np.dtype("<f4")


class BlobError(ValueError):
    """Malformed BEVT data"""

    def __init__(self, offset: int, reason: str) -> None:
        self.offset = offset
        self.reason = reason
        super().__init__(offset, reason)

    def __str__(self) -> str:
        return f"BlobError at byte {self.offset}: {self.reason}"


def encode_blob(arr: np.ndarray) -> bytes:
    arr = np.asarray(arr)
    header = MAGIC + np.array([arr.ndim, *arr.shape], dtype=_U32).tobytes()
    return header + np.ascontiguousarray(arr, dtype=_F32).tobytes()


def decode_blob(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one blob starting at offset. Returns the array and the offset just past it."""
    if buf[offset:offset + 4] != MAGIC:
        raise BlobError(offset, f"bad magic {bytes(buf[offset:offset + 4])!r}")
    pos = offset + 4
    if len(buf) < pos + 4:
        raise BlobError(pos, "truncated rank")
    rank = int(np.frombuffer(buf, _U32, 1, pos)[0])
    pos += 4
    if len(buf) < pos + 4 * rank:
        raise BlobError(pos, f"truncated dims for rank {rank}")
    dims = tuple(int(d) for d in np.frombuffer(buf, _U32, rank, pos))
    pos += 4 * rank
    count = int(np.prod(dims, dtype=np.int64))
    if len(buf) < pos + 4 * count:
        raise BlobError(pos, f"truncated payload: {count} floats expected for shape {dims}")
    arr = np.frombuffer(buf, _F32, count, pos).reshape(dims).astype(np.float32)
    return arr, pos + 4 * count


def write_blob(path: str | pathlib.Path, arr: np.ndarray) -> None:
    pathlib.Path(path).write_bytes(encode_blob(arr))
    logger.debug("wrote blob %s %s", path, np.shape(arr))


def read_blob(path: str | pathlib.Path) -> np.ndarray:
    buf = pathlib.Path(path).read_bytes()
    arr, end = decode_blob(buf)
    if end != len(buf):
        raise BlobError(end, f"{len(buf) - end} trailing bytes")
    return arr
