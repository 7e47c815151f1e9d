"""Binary weight container IO, byte-compatible with the solver package.

Layout: magic ``EQWT`` | u32 format version (1) | u8 arch tag (0 =
centralized, 1 = decentralized) | dims block (u32 each; 5 values for the
centralized table, 9 for the decentralized one) | tensor records until
EOF, each ``u16 name length | name utf-8 | u8 rank | u32 dims | float32 LE
row-major payload``, written in sorted-name order.  A text manifest
sidecar ``<path>.manifest.txt`` lists arch, dims, and tensor shapes.
"""
from __future__ import annotations

import struct

import numpy as np

from .errors import WeightFormatError
from .netcore import ARCH_CEN, ARCH_DEC, CenDims, DecDims, tensor_shapes

_MAGIC = b"EQWT"
_FORMAT_VERSION = 1
_ARCH_TAGS = {ARCH_CEN: 0, ARCH_DEC: 1}
_TAG_ARCHS = {v: k for k, v in _ARCH_TAGS.items()}


def _check_table(arch: str, dims, tensors: dict[str, np.ndarray]) -> None:
    expected = tensor_shapes(arch, dims)
    if set(tensors) != set(expected):
        missing = sorted(set(expected) - set(tensors))
        extra = sorted(set(tensors) - set(expected))
        raise WeightFormatError(
            f"tensor table mismatch: missing {missing}, unexpected {extra}"
        )
    for name, shape in expected.items():
        if tuple(tensors[name].shape) != shape:
            raise WeightFormatError(
                f"{name}: shape {tensors[name].shape}, expected {shape}"
            )


def write_container(arch: str, dims, tensors: dict[str, np.ndarray], path) -> None:
    if arch not in _ARCH_TAGS:
        raise WeightFormatError(f"unknown architecture {arch!r}")
    _check_table(arch, dims, tensors)
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<I", _FORMAT_VERSION)
    blob += struct.pack("<B", _ARCH_TAGS[arch])
    for v in dims.as_tuple():
        blob += struct.pack("<I", v)
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name], dtype="<f4")
        enc = name.encode("utf-8")
        blob += struct.pack("<H", len(enc))
        blob += enc
        blob += struct.pack("<B", arr.ndim)
        for d in arr.shape:
            blob += struct.pack("<I", d)
        blob += arr.tobytes(order="C")
    path = str(path)
    with open(path, "wb") as fh:
        fh.write(blob)
    with open(path + ".manifest.txt", "w", encoding="utf-8") as fh:
        fh.write(f"eqwt manifest (format {_FORMAT_VERSION})\n")
        fh.write(f"arch {arch}\n")
        fh.write("dims " + " ".join(str(v) for v in dims.as_tuple()) + "\n")
        for name in sorted(tensors):
            shape = "x".join(str(d) for d in tensors[name].shape)
            fh.write(f"tensor {name} {shape}\n")


def read_container(path):
    """Returns (arch, dims, tensors) with float32 tensors keyed by name."""
    with open(str(path), "rb") as fh:
        blob = fh.read()
    if blob[:4] != _MAGIC:
        raise WeightFormatError("bad magic; not a weight container")
    off = 4
    (version,) = struct.unpack_from("<I", blob, off)
    off += 4
    if version != _FORMAT_VERSION:
        raise WeightFormatError(f"unsupported container version {version}")
    (tag,) = struct.unpack_from("<B", blob, off)
    off += 1
    if tag not in _TAG_ARCHS:
        raise WeightFormatError(f"unknown architecture tag {tag}")
    arch = _TAG_ARCHS[tag]
    ndims = 5 if arch == ARCH_CEN else 9
    if off + 4 * ndims > len(blob):
        raise WeightFormatError("truncated dims block")
    vals = struct.unpack_from(f"<{ndims}I", blob, off)
    off += 4 * ndims
    dims = CenDims(*vals) if arch == ARCH_CEN else DecDims(*vals)

    tensors: dict[str, np.ndarray] = {}
    while off < len(blob):
        if off + 2 > len(blob):
            raise WeightFormatError("truncated tensor record")
        (nlen,) = struct.unpack_from("<H", blob, off)
        off += 2
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<B", blob, off)
        off += 1
        if off + 4 * rank > len(blob):
            raise WeightFormatError(f"truncated shape for {name!r}")
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        nbytes = 4 * count
        if off + nbytes > len(blob):
            raise WeightFormatError(f"truncated payload for {name!r}")
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off)
        tensors[name] = arr.reshape(shape).astype(np.float32)
        off += nbytes
    _check_table(arch, dims, tensors)
    return arch, dims, tensors
