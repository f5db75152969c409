"""Single-file binary container for trained models.

Layout (little-endian): magic ``SFCK``, a 4-byte record tag (``VAE0``,
``PCA0``, ``SCL0``), a u32 format version, a length-prefixed UTF-8 JSON
header (config, normalizer statistics), then named parameter blocks:
u32 count, and per block a u16-length UTF-8 name, u8 ndim, ndim u64
dims, followed by the raw float32 data.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"SFCK"
FORMAT_VERSION = 1


def write_checkpoint(path, tag: str, header: dict, arrays: dict[str, np.ndarray]) -> None:
    if len(tag) != 4:
        raise CheckpointError(f"tag must be 4 bytes, got {tag!r}")
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(tag.encode("ascii"))
        fh.write(struct.pack("<I", FORMAT_VERSION))
        fh.write(struct.pack("<I", len(header_bytes)))
        fh.write(header_bytes)
        fh.write(struct.pack("<I", len(arrays)))
        for name, arr in arrays.items():
            # ascontiguousarray would promote 0-d arrays to 1-d; convert
            # and copy in a way that preserves the rank
            data = np.asarray(arr, dtype="<f4")
            if not data.flags.c_contiguous:
                data = data.copy(order="C")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<H", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<B", data.ndim))
            for dim in data.shape:
                fh.write(struct.pack("<Q", dim))
            fh.write(data.tobytes())


def read_checkpoint(path, expected_tag: str | None = None):
    """Returns (tag, header dict, arrays dict of float32 ndarrays)."""
    with open(path, "rb") as fh:
        raw = fh.read()

    def take(n, off):
        if off + n > len(raw):
            raise CheckpointError("truncated checkpoint file")
        return raw[off:off + n], off + n

    chunk, off = take(4, 0)
    if chunk != MAGIC:
        raise CheckpointError(f"bad magic {chunk!r}")
    tag_b, off = take(4, off)
    tag = tag_b.decode("ascii")
    if expected_tag is not None and tag != expected_tag:
        raise CheckpointError(f"expected {expected_tag!r} checkpoint, found {tag!r}")
    chunk, off = take(4, off)
    version = struct.unpack("<I", chunk)[0]
    if version != FORMAT_VERSION:
        raise CheckpointError(f"unsupported format version {version}")
    chunk, off = take(4, off)
    header_len = struct.unpack("<I", chunk)[0]
    chunk, off = take(header_len, off)
    header = json.loads(chunk.decode("utf-8"))
    chunk, off = take(4, off)
    count = struct.unpack("<I", chunk)[0]
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        chunk, off = take(2, off)
        name_len = struct.unpack("<H", chunk)[0]
        chunk, off = take(name_len, off)
        name = chunk.decode("utf-8")
        chunk, off = take(1, off)
        ndim = chunk[0]
        dims = []
        for _ in range(ndim):
            chunk, off = take(8, off)
            dims.append(struct.unpack("<Q", chunk)[0])
        n_items = int(np.prod(dims)) if dims else 1
        chunk, off = take(4 * n_items, off)
        arrays[name] = np.frombuffer(chunk, dtype="<f4").reshape(dims).copy()
    if off != len(raw):
        raise CheckpointError("trailing bytes after last parameter block")
    return tag, header, arrays
