"""Flat binary serialization for model weights.

Layout (all integers little-endian uint32, floats little-endian float64):

    magic            8 bytes ASCII, identifies the model kind
    n_arrays         uint32
    per array:
        name_len     uint32
        name         UTF-8 bytes
        ndim         uint32
        dims         uint32 * ndim
        data         float64 * prod(dims), C order

Round-trips are bit-exact. Truncated or mislabelled files raise
BlobFormatError rather than returning garbage.
"""

from __future__ import annotations

import struct

import numpy as np

EMBEDDING_MAGIC = b"SPLTEMB1"
SKIM_MAGIC = b"SPLTSKM1"

_MAGIC_LEN = 8


class BlobFormatError(ValueError):
    pass


def save_blob(path, magic: bytes, arrays: dict) -> None:
    if len(magic) != _MAGIC_LEN:
        raise ValueError(f"magic must be {_MAGIC_LEN} bytes, got {magic!r}")
    parts = [magic, struct.pack("<I", len(arrays))]
    for name, arr in arrays.items():
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim:  # ascontiguousarray would promote 0-d to shape (1,)
            a = np.ascontiguousarray(a)
        nb = name.encode("utf-8")
        parts.append(struct.pack("<I", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(a.astype("<f8").tobytes())
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


def load_blob(path, magic: bytes) -> dict:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _MAGIC_LEN or data[:_MAGIC_LEN] != magic:
        raise BlobFormatError(
            f"bad magic in {path}: expected {magic!r}, got {data[:_MAGIC_LEN]!r}")
    pos = _MAGIC_LEN

    def take(n):
        nonlocal pos
        if pos + n > len(data):
            raise BlobFormatError(f"truncated blob {path}")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    (n_arrays,) = struct.unpack("<I", take(4))
    arrays = {}
    for _ in range(n_arrays):
        (name_len,) = struct.unpack("<I", take(4))
        name = take(name_len).decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{ndim}I", take(4 * ndim))
        count = int(np.prod(dims)) if ndim else 1
        raw = take(8 * count)
        arrays[name] = np.frombuffer(raw, dtype="<f8").reshape(dims).copy()
    if pos != len(data):
        raise BlobFormatError(f"trailing bytes in blob {path}")
    return arrays
