"""Structure-of-arrays batch layout and per-cloud extents.

A batch of clouds is flattened into seven contiguous arrays. Coordinates are
axis-major over the whole batch (all x, then all y, then all z) and colour
channels are channel-major with each cloud's values kept contiguous inside a
channel. ``offsets[i] = (start, count)`` locates cloud ``i`` in every array.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidBatchError
from .ply import PointCloud

CHANNELS = ("r", "g", "b", "nir")


@dataclass(frozen=True, eq=False)
class SoABatch:
    xs: np.ndarray
    ys: np.ndarray
    zs: np.ndarray
    r: np.ndarray
    g: np.ndarray
    b: np.ndarray
    nir: np.ndarray
    offsets: np.ndarray  # (n, 2) int64: start, count
    source_ids: tuple = ()

    @property
    def n(self) -> int:
        return self.offsets.shape[0]

    @property
    def total(self) -> int:
        return self.xs.shape[0]

    def span(self, i: int) -> slice:
        start, count = self.offsets[i]
        return slice(int(start), int(start + count))

    def coords(self, i: int) -> tuple:
        s = self.span(i)
        return self.xs[s], self.ys[s], self.zs[s]

    def channels(self, i: int) -> tuple:
        s = self.span(i)
        return self.r[s], self.g[s], self.b[s], self.nir[s]

    def cloud(self, i: int) -> PointCloud:
        pts = np.stack(self.coords(i), axis=1)
        cols = np.stack(self.channels(i), axis=1)
        sid = self.source_ids[i] if self.source_ids else ""
        return PointCloud(pts, cols, source_id=sid)


@dataclass(frozen=True)
class Extents:
    """Axis-aligned bounds of one cloud, ``lo`` and ``hi`` as (x, y, z) tuples."""

    lo: tuple
    hi: tuple

    @property
    def ranges(self) -> tuple:
        return tuple(h - l for l, h in zip(self.lo, self.hi))


def build_soa_batch(clouds: Sequence[PointCloud]) -> SoABatch:
    clouds = list(clouds)
    if not clouds:
        raise InvalidBatchError("a batch needs at least one cloud")
    counts = np.array([c.n for c in clouds], dtype=np.int64)
    if (counts < 1).any():
        raise InvalidBatchError("every cloud in a batch must be non-empty")
    starts = np.concatenate(([0], np.cumsum(counts)[:-1]))
    offsets = np.stack([starts, counts], axis=1)

    coords = [np.concatenate([c.points[:, j] for c in clouds]) for j in range(3)]
    chans = [np.concatenate([c.colors[:, j] for c in clouds]) for j in range(4)]
    for a in (*coords, *chans, offsets):
        a.setflags(write=False)
    return SoABatch(*coords, *chans, offsets=offsets,
                    source_ids=tuple(c.source_id for c in clouds))


def deinterleave(batch: SoABatch) -> list:
    return [batch.cloud(i) for i in range(batch.n)]


def _extent(batch: SoABatch, i: int) -> Extents:
    xs, ys, zs = batch.coords(i)
    return Extents(
        lo=(float(xs.min()), float(ys.min()), float(zs.min())),
        hi=(float(xs.max()), float(ys.max()), float(zs.max())),
    )


def minmax_reduce(batch: SoABatch, threads: int = 1) -> list:
    """Per-cloud coordinate extrema. min/max are order-insensitive, so the
    result does not depend on ``threads``."""
    if threads <= 1 or batch.n == 1:
        return [_extent(batch, i) for i in range(batch.n)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda i: _extent(batch, i), range(batch.n)))
