"""Binary tensor container.

Layout (all integers little-endian):

    magic    4 bytes  b"BGTC"
    version  u16      1
    flags    u8       bit0 = little-endian payload (always 1)
    reserved u8       0
    count    u32      number of tensors
    per tensor descriptor, in order:
        name_len u16, name utf-8 bytes
        dtype    u8   (0 = float32, 1 = int32)
        ndim     u8
        dims     u32 * ndim
    payloads: raw 32-bit little-endian values, C order, concatenated in
    descriptor order.

Feature dumps, model weight files, and attention stacks all use this format;
the descriptor block doubles as the name manifest.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

MAGIC = b"BGTC"
VERSION = 1
_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<i4"): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i4")}


class ContainerError(ValueError):
    pass


def _coerce(arr: np.ndarray) -> np.ndarray:
    arr = np.asarray(arr)
    if arr.dtype.kind == "f":
        return np.ascontiguousarray(arr, dtype="<f4")
    if arr.dtype.kind in "iub":
        out = np.ascontiguousarray(arr, dtype="<i4")
        if not np.array_equal(out, arr):
            raise ContainerError("integer tensor does not fit int32")
        return out
    raise ContainerError(f"unsupported dtype {arr.dtype}")


def write_tensors(path, tensors: Mapping[str, np.ndarray]) -> None:
    """Write named tensors; float arrays stored as f32, integers as i32."""
    coerced = {name: _coerce(a) for name, a in tensors.items()}
    head = [MAGIC, struct.pack("<HBB", VERSION, 1, 0),
            struct.pack("<I", len(coerced))]
    for name, arr in coerced.items():
        nb = name.encode("utf-8")
        head.append(struct.pack("<H", len(nb)))
        head.append(nb)
        head.append(struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim))
        head.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
    with open(path, "wb") as fh:
        fh.write(b"".join(head))
        for arr in coerced.values():
            fh.write(arr.tobytes())


def read_tensors(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        buf = fh.read()
    if buf[:4] != MAGIC:
        raise ContainerError(f"{path}: bad magic {buf[:4]!r}")
    version, flags, _ = struct.unpack_from("<HBB", buf, 4)
    if version != VERSION:
        raise ContainerError(f"{path}: unsupported version {version}")
    if not flags & 1:
        raise ContainerError(f"{path}: big-endian payloads unsupported")
    (count,) = struct.unpack_from("<I", buf, 8)
    off = 12
    descs = []
    for _ in range(count):
        (name_len,) = struct.unpack_from("<H", buf, off)
        off += 2
        name = buf[off:off + name_len].decode("utf-8")
        off += name_len
        code, ndim = struct.unpack_from("<BB", buf, off)
        off += 2
        dims = struct.unpack_from(f"<{ndim}I", buf, off)
        off += 4 * ndim
        if code not in _CODE_DTYPES:
            raise ContainerError(f"{path}: unknown dtype code {code}")
        descs.append((name, _CODE_DTYPES[code], dims))
    out: dict[str, np.ndarray] = {}
    for name, dtype, dims in descs:
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        arr = np.frombuffer(buf, dtype=dtype, count=n, offset=off)
        off += n * 4
        out[name] = arr.reshape(dims).copy()
    if off != len(buf):
        raise ContainerError(f"{path}: trailing bytes after payloads")
    return out
