"""Aspect-preserving resize into a fixed training envelope, then zero padding."""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
import math

import numpy as np

from .errors import PadError
from .voxelize import VoxelGrid


@dataclass(frozen=True)
class Envelope:
    width: int
    height: int
    depth: int

    def __post_init__(self):
        for name in ("width", "height", "depth"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValueError(f"envelope {name} must be a positive integer, got {v}")

    @property
    def dims(self) -> tuple:
        return (self.width, self.height, self.depth)

    @classmethod
    def parse(cls, text: str) -> "Envelope":
        """Accept a preset name or ``WxHxD``."""
        if text in ENVELOPES:
            return ENVELOPES[text]
        parts = text.lower().split("x")
        if len(parts) != 3:
            raise ValueError(f"envelope {text!r} is neither a preset nor WxHxD")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError:
            raise ValueError(f"envelope {text!r} is neither a preset nor WxHxD") from None


ENVELOPES = {
    "spike-rgb": Envelope(75, 300, 95),
    "head": Envelope(161, 51, 93),
    "dataset2": Envelope(227, 70, 111),
}


def envelope_scale(dims, env: Envelope) -> Fraction:
    """Largest uniform scale keeping ``dims`` inside ``env`` (exact)."""
    return min(Fraction(e, d) for e, d in zip(env.dims, dims))


def fitted_dims(dims, env: Envelope) -> tuple:
    s = envelope_scale(dims, env)
    # round half up, at least one voxel
    return tuple(max(1, math.floor(d * s + Fraction(1, 2))) for d in dims)


def _nearest(src: int, dst: int) -> np.ndarray:
    """Source index sampled by each of ``dst`` output cells (centre alignment)."""
    i = np.arange(dst, dtype=np.int64)
    return ((2 * i + 1) * src) // (2 * dst)


def resize_nearest(grid: VoxelGrid, dims) -> VoxelGrid:
    w, h, d = grid.dims
    nw, nh, nd = dims
    if (nw, nh, nd) == (w, h, d):
        return grid
    data = grid.data[np.ix_(_nearest(d, nd), _nearest(h, nh), _nearest(w, nw))]
    return VoxelGrid(np.ascontiguousarray(data), grid.mode)


def pad_to(grid: VoxelGrid, env: Envelope) -> VoxelGrid:
    """Zero-pad with the content anchored at voxel (0, 0, 0)."""
    for axis, size, limit in zip("xyz", grid.dims, env.dims):
        if size > limit:
            raise PadError(axis, size, limit)
    if grid.dims == env.dims:
        return grid
    w, h, d = grid.dims
    out = np.zeros((env.depth, env.height, env.width, grid.channels), dtype=np.uint8)
    out[:d, :h, :w] = grid.data
    return VoxelGrid(out, grid.mode)


def fit_to_envelope(grid: VoxelGrid, env: Envelope) -> VoxelGrid:
    return pad_to(resize_nearest(grid, fitted_dims(grid.dims, env)), env)
