"""Point cloud to dense multispectral voxel image.

Each axis is mapped with ``index = ceil(a * coord + b)`` where
``a = ceil(R * range) / range`` and ``b = -a * min``. The minimum lands on
index 0 and the maximum on ``ceil(R * range)``, so an axis needs
``ceil(R * range) + 1`` voxels.

When several points fall into one voxel the point with the highest index in
the cloud wins. Work is split two ways, both independent of thread count:
index computation is chunked over points, and the scatter is chunked over
disjoint voxel slabs with every slab visiting points in ascending order.
"""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .batch import Extents, SoABatch, build_soa_batch, minmax_reduce
from .errors import InvalidResolutionError
from .ply import PointCloud

# Grids beyond this many voxels are refused rather than allocated.
MAX_VOXELS = 1 << 31
# Below this many points a cloud is processed on the calling thread.
PARALLEL_MIN_POINTS = 1 << 16


class ChannelMode(str, enum.Enum):
    RGB = "rgb"
    NIR = "nir"
    RGBN = "rgbn"

    @property
    def channel_index(self) -> tuple:
        return {"rgb": (0, 1, 2), "nir": (3,), "rgbn": (0, 1, 2, 3)}[self.value]

    @property
    def channels(self) -> int:
        return len(self.channel_index)

    @classmethod
    def parse(cls, value) -> "ChannelMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown channel mode {value!r}; use rgb, nir or rgbn") from None


@dataclass(frozen=True)
class InterpParams:
    """Per-axis slope/intercept for the x, y, z mappings.

    ``steps[k]`` is ``ceil(R * range_k)`` (0 on a degenerate axis), the largest
    index an axis can produce.
    """

    a: tuple
    b: tuple
    R: float
    steps: tuple

    @property
    def dims(self) -> tuple:
        return tuple(s + 1 for s in self.steps)


@dataclass(frozen=True, eq=False)
class VoxelGrid:
    """Dense image stored as ``data[z, y, x, c]`` (uint8)."""

    data: np.ndarray
    mode: ChannelMode

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.dtype != np.uint8:
            raise ValueError("voxel data must be a 4-D uint8 array")
        object.__setattr__(self, "mode", ChannelMode.parse(self.mode))
        if self.data.shape[3] != self.mode.channels:
            raise ValueError(
                f"{self.mode.value} grids carry {self.mode.channels} channels, "
                f"data has {self.data.shape[3]}")

    @property
    def dims(self) -> tuple:
        """(width, height, depth)."""
        d, h, w, _ = self.data.shape
        return (w, h, d)

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    def occupancy(self) -> np.ndarray:
        return self.data.any(axis=3)

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.occupancy()))

    def __eq__(self, other):
        if not isinstance(other, VoxelGrid):
            return NotImplemented
        return self.mode == other.mode and np.array_equal(self.data, other.data)

    __hash__ = None


def _check_resolution(R):
    try:
        R = float(R)
    except (TypeError, ValueError):
        raise InvalidResolutionError(f"resolution factor {R!r} is not a number") from None
    if not math.isfinite(R) or R <= 0:
        raise InvalidResolutionError(f"resolution factor must be finite and > 0, got {R}")
    return R


def compute_interp_params(extents: Extents, R: float) -> InterpParams:
    R = _check_resolution(R)
    a, b, steps = [], [], []
    for lo, hi in zip(extents.lo, extents.hi):
        span = hi - lo
        if span == 0:
            a.append(0.0)
            b.append(0.0)
            steps.append(0)
            continue
        k = math.ceil(R * span)
        slope = k / span
        a.append(slope)
        b.append(-slope * lo)
        steps.append(k)
    return InterpParams(tuple(a), tuple(b), R, tuple(steps))


def compute_dims(extents: Extents, R: float) -> tuple:
    return compute_interp_params(extents, R).dims


@numba.njit(nogil=True, cache=True)
def _flat_indices(xs, ys, zs, a, b, steps, out, start, stop):
    width = steps[0] + 1
    height = steps[1] + 1
    for i in range(start, stop):
        ix = math.ceil(a[0] * xs[i] + b[0])
        iy = math.ceil(a[1] * ys[i] + b[1])
        iz = math.ceil(a[2] * zs[i] + b[2])
        # Rounding in a*max + b can overshoot the top index by one ulp.
        if ix > steps[0]:
            ix = steps[0]
        if iy > steps[1]:
            iy = steps[1]
        if iz > steps[2]:
            iz = steps[2]
        out[i] = (iz * height + iy) * width + ix


@numba.njit(nogil=True, cache=True)
def _scatter(flat, chans, grid, vlo, vhi):
    nc = chans.shape[0]
    for i in range(flat.shape[0]):
        v = flat[i]
        if v >= vlo and v < vhi:
            base = v * nc
            for c in range(nc):
                grid[base + c] = chans[c, i]


def _chunks(total, parts):
    bounds = np.linspace(0, total, parts + 1).astype(np.int64)
    return [(int(bounds[i]), int(bounds[i + 1])) for i in range(parts)]


def voxel_indices(cloud: PointCloud, R: float) -> np.ndarray:
    """(N, 3) array of the (x, y, z) voxel each point maps to."""
    params = compute_interp_params(Extents(tuple(cloud.points.min(axis=0)),
                                           tuple(cloud.points.max(axis=0))), R)
    xs, ys, zs = (np.ascontiguousarray(cloud.points[:, j]) for j in range(3))
    flat = np.empty(cloud.n, dtype=np.int64)
    _flat_indices(xs, ys, zs, np.asarray(params.a, dtype=np.float64),
                  np.asarray(params.b, dtype=np.float64),
                  np.asarray(params.steps, dtype=np.int64), flat, 0, cloud.n)
    w, h, _ = params.dims
    return np.stack([flat % w, flat // w % h, flat // (w * h)], axis=1)


def _voxelize_arrays(xs, ys, zs, chans, params: InterpParams, mode: ChannelMode,
                     threads: int = 1) -> VoxelGrid:
    """Core scatter. ``chans`` is a (C, N) uint8 array already reduced to ``mode``."""
    w, h, d = params.dims
    nvox = w * h * d
    if nvox * mode.channels > MAX_VOXELS:
        raise InvalidResolutionError(
            f"grid {w}x{h}x{d} exceeds the {MAX_VOXELS}-voxel limit; lower R")
    n = xs.shape[0]
    a = np.asarray(params.a, dtype=np.float64)
    b = np.asarray(params.b, dtype=np.float64)
    steps = np.asarray(params.steps, dtype=np.int64)
    flat = np.empty(n, dtype=np.int64)
    grid = np.zeros(nvox * mode.channels, dtype=np.uint8)

    if threads <= 1 or n < PARALLEL_MIN_POINTS:
        _flat_indices(xs, ys, zs, a, b, steps, flat, 0, n)
        _scatter(flat, chans, grid, 0, nvox)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(lambda se: _flat_indices(xs, ys, zs, a, b, steps, flat, *se),
                          _chunks(n, threads)))
            list(pool.map(lambda se: _scatter(flat, chans, grid, *se),
                          _chunks(nvox, threads)))
    return VoxelGrid(grid.reshape(d, h, w, mode.channels), mode)


def _mode_channels(channel_arrays, mode: ChannelMode):
    return np.ascontiguousarray(np.stack([channel_arrays[j] for j in mode.channel_index]))


def voxelize_cloud(cloud: PointCloud, params: InterpParams, mode="rgb",
                   threads: int = 1) -> VoxelGrid:
    mode = ChannelMode.parse(mode)
    pts = cloud.points
    xs, ys, zs = (np.ascontiguousarray(pts[:, j]) for j in range(3))
    chans = _mode_channels([cloud.colors[:, j] for j in range(4)], mode)
    return _voxelize_arrays(xs, ys, zs, chans, params, mode, threads)


def voxelize_batch(batch: SoABatch, R: float, mode="rgb", threads: int = 1) -> list:
    mode = ChannelMode.parse(mode)
    R = _check_resolution(R)
    extents = minmax_reduce(batch, threads)
    grids = []
    for i, ext in enumerate(extents):
        params = compute_interp_params(ext, R)
        xs, ys, zs = batch.coords(i)
        chans = _mode_channels(batch.channels(i), mode)
        grids.append(_voxelize_arrays(xs, ys, zs, chans, params, mode, threads))
    return grids


def convert_batch(clouds: Sequence[PointCloud], R: float, mode="rgb",
                  threads: int = 1) -> list:
    """Convert clouds to minimum-bounding-box grids, preserving input order."""
    return voxelize_batch(build_soa_batch(clouds), R, mode, threads)
