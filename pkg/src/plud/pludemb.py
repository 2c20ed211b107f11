"""Reader/writer for the PLUDEMB1 embedding blob format.

Layout: 8-byte ASCII magic ``PLUDEMB1``, little-endian u32 row count,
little-endian u32 dimension, then n*d little-endian IEEE-754 float32
values in row-major order. No padding, no trailing bytes.
"""

from __future__ import annotations

import struct
from typing import BinaryIO

import numpy as np

MAGIC = b"PLUDEMB1"
_HEADER = struct.Struct("<II")


class BlobFormatError(ValueError):
    """Raised when a blob does not conform to PLUDEMB1."""


def read_embeddings(source: BinaryIO | bytes | str) -> np.ndarray:
    """Load a PLUDEMB1 blob into an (n, d) float32 array, bit-exact.

    ``source`` may be a path, raw bytes, or a binary file object.
    Raises BlobFormatError on bad magic, truncated or oversized payload,
    and on non-finite values (the offending row is named).
    """
    if isinstance(source, (str, bytes)):
        data = open(source, "rb").read() if isinstance(source, str) else source
    else:
        data = source.read()
    if len(data) < len(MAGIC) + _HEADER.size:
        raise BlobFormatError("blob shorter than PLUDEMB1 header")
    if data[: len(MAGIC)] != MAGIC:
        raise BlobFormatError(f"bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    n, d = _HEADER.unpack_from(data, len(MAGIC))
    expected = len(MAGIC) + _HEADER.size + 4 * n * d
    if len(data) != expected:
        raise BlobFormatError(
            f"payload size mismatch: header says n={n} d={d} "
            f"({expected} bytes total), blob has {len(data)}"
        )
    flat = np.frombuffer(data, dtype="<f4", offset=len(MAGIC) + _HEADER.size)
    matrix = flat.reshape(n, d).astype(np.float32, copy=True)
    bad = ~np.isfinite(matrix)
    if bad.any():
        row = int(np.argwhere(bad)[0][0])
        raise BlobFormatError(f"non-finite value in row {row}")
    return matrix


def write_embeddings(matrix: np.ndarray, sink: BinaryIO | str) -> int:
    """Serialize an (n, d) array as PLUDEMB1; returns bytes written.

    Values are stored as little-endian float32; a float64 input is
    narrowed, a float32 input round-trips bit-exactly.
    """
    m = np.ascontiguousarray(matrix, dtype="<f4")
    if m.ndim != 2:
        raise ValueError(f"expected a 2-d matrix, got shape {matrix.shape}")
    if not np.isfinite(m).all():
        raise ValueError("matrix contains non-finite values")
    n, d = m.shape
    payload = MAGIC + _HEADER.pack(n, d) + m.tobytes()
    if isinstance(sink, str):
        with open(sink, "wb") as fh:
            fh.write(payload)
    else:
        sink.write(payload)
    return len(payload)
