"""Voxel tensor files: native ``v3d`` and ``npy`` (format 1.0).

v3d layout, little-endian::

    b"V3D1" | u32 width | u32 height | u32 depth | u32 channels | u64 nbytes | payload

The payload is uint8 ``data[z][y][x][c]``, channel fastest. Nothing may follow
it. The npy export holds the same bytes with shape (depth, height, width,
channels).
"""
from __future__ import annotations

import ast
import struct
from pathlib import Path

import numpy as np

from .errors import TensorFormatError
from .voxelize import ChannelMode, VoxelGrid

V3D_MAGIC = b"V3D1"
V3D_HEADER = struct.Struct("<4sIIIIQ")
NPY_MAGIC = b"\x93NUMPY"
NPY_ALIGN = 64
FORMATS = ("v3d", "npy")

_MODE_BY_CHANNELS = {1: ChannelMode.NIR, 3: ChannelMode.RGB, 4: ChannelMode.RGBN}


def _mode_for(channels, offset):
    try:
        return _MODE_BY_CHANNELS[channels]
    except KeyError:
        raise TensorFormatError(offset, f"channel count {channels} not in 1, 3, 4") from None


def encode_v3d(grid: VoxelGrid) -> bytes:
    w, h, d = grid.dims
    payload = np.ascontiguousarray(grid.data).tobytes()
    return V3D_HEADER.pack(V3D_MAGIC, w, h, d, grid.channels, len(payload)) + payload


def decode_v3d(data: bytes) -> VoxelGrid:
    if len(data) < 4 or data[:4] != V3D_MAGIC:
        raise TensorFormatError(0, "missing V3D1 magic")
    if len(data) < V3D_HEADER.size:
        raise TensorFormatError(len(data), "header truncated")
    _, w, h, d, c, nbytes = V3D_HEADER.unpack_from(data)
    for off, (name, v) in zip((4, 8, 12), (("width", w), ("height", h), ("depth", d))):
        if v < 1:
            raise TensorFormatError(off, f"{name} must be >= 1")
    mode = _mode_for(c, 16)
    if nbytes != w * h * d * c:
        raise TensorFormatError(20, f"payload length {nbytes} != {w}*{h}*{d}*{c}")
    end = V3D_HEADER.size + nbytes
    if len(data) < end:
        raise TensorFormatError(len(data), f"payload truncated, expected {nbytes} bytes")
    if len(data) > end:
        raise TensorFormatError(end, f"{len(data) - end} trailing bytes")
    arr = np.frombuffer(data, np.uint8, nbytes, V3D_HEADER.size).reshape(d, h, w, c)
    return VoxelGrid(arr.copy(), mode)


def encode_npy(grid: VoxelGrid) -> bytes:
    shape = grid.data.shape
    header = "{'descr': '|u1', 'fortran_order': False, 'shape': (%d, %d, %d, %d), }" % shape
    # magic(6) + version(2) + length(2) + header + padding + newline
    prefix = len(NPY_MAGIC) + 4
    total = prefix + len(header) + 1
    header += " " * (-total % NPY_ALIGN) + "\n"
    return (NPY_MAGIC + b"\x01\x00" + struct.pack("<H", len(header))
            + header.encode("latin1") + np.ascontiguousarray(grid.data).tobytes())


def decode_npy(data: bytes) -> VoxelGrid:
    if data[:6] != NPY_MAGIC:
        raise TensorFormatError(0, "missing \\x93NUMPY magic")
    if len(data) < 10:
        raise TensorFormatError(len(data), "header truncated")
    if data[6:8] != b"\x01\x00":
        raise TensorFormatError(6, f"unsupported npy version {data[6]}.{data[7]}")
    (hlen,) = struct.unpack_from("<H", data, 8)
    start = 10 + hlen
    if len(data) < start:
        raise TensorFormatError(len(data), "header truncated")
    try:
        header = ast.literal_eval(data[10:start].decode("latin1"))
    except (ValueError, SyntaxError):
        raise TensorFormatError(10, "header is not a Python literal") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise TensorFormatError(10, "header must hold descr, fortran_order and shape")
    try:
        dtype = np.dtype(header["descr"])
    except TypeError:
        dtype = None
    if dtype != np.uint8:
        raise TensorFormatError(10, f"dtype {header['descr']!r} is not uint8")
    if header["fortran_order"]:
        raise TensorFormatError(10, "fortran-ordered arrays are not supported")
    shape = header["shape"]
    if not (isinstance(shape, tuple) and len(shape) == 4 and all(isinstance(s, int) and s >= 1 for s in shape)):
        raise TensorFormatError(10, f"shape {shape!r} is not (depth, height, width, channels)")
    mode = _mode_for(shape[3], 10)
    nbytes = int(np.prod(shape))
    if len(data) < start + nbytes:
        raise TensorFormatError(len(data), f"payload truncated, expected {nbytes} bytes")
    if len(data) > start + nbytes:
        raise TensorFormatError(start + nbytes, f"{len(data) - start - nbytes} trailing bytes")
    arr = np.frombuffer(data, np.uint8, nbytes, start).reshape(shape)
    return VoxelGrid(arr.copy(), mode)


def encode(grid: VoxelGrid, fmt: str) -> bytes:
    if fmt == "v3d":
        return encode_v3d(grid)
    if fmt == "npy":
        return encode_npy(grid)
    raise ValueError(f"unknown tensor format {fmt!r}")


def decode(data: bytes) -> VoxelGrid:
    """Decode either format, chosen by magic bytes."""
    if data[:4] == V3D_MAGIC:
        return decode_v3d(data)
    if data[:6] == NPY_MAGIC:
        return decode_npy(data)
    raise TensorFormatError(0, "unknown magic; expected V3D1 or \\x93NUMPY")


def write_tensor(grid: VoxelGrid, path, fmt: str) -> Path:
    path = Path(path)
    path.write_bytes(encode(grid, fmt))
    return path


def read_tensor(path) -> VoxelGrid:
    return decode(Path(path).read_bytes())


def describe(data: bytes) -> dict:
    grid = decode(data)
    return {
        "format": "v3d" if data[:4] == V3D_MAGIC else "npy",
        "magic": data[:4].decode("latin1") if data[:4] == V3D_MAGIC else "\\x93NUMPY",
        "dims": grid.dims,
        "channels": grid.channels,
        "occupied": grid.occupied,
    }
