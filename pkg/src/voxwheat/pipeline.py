"""File-level jobs behind the command line: conversion, splitting, benchmarking."""
from __future__ import annotations

import glob
import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import tensorio
from .dataset import make_splits, read_manifest, write_manifest
from .errors import InvalidResolutionError, VoxwheatError
from .ply import DEFAULT_NIR_NAMES, generate_synthetic_cloud, read_ply
from .resample import Envelope, fit_to_envelope
from .voxelize import ChannelMode, convert_batch

THREADS_ENV = "VOXWHEAT_THREADS"


def default_threads() -> int:
    value = os.environ.get(THREADS_ENV, "")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


@dataclass
class JobConfig:
    inputs: Sequence[str] = ()
    out_dir: str = "."
    resolution: float = 1.0
    channels: str = "rgb"
    envelope: Optional[Envelope] = None
    fmt: str = "v3d"
    threads: int = 1
    seed: int = 0
    test_fraction: float = 0.1
    folds: int = 5
    batch_size: int = 16
    nir_names: Sequence[str] = DEFAULT_NIR_NAMES

    def __post_init__(self):
        if self.threads < 1:
            raise ValueError("thread count must be >= 1")
        if self.fmt not in tensorio.FORMATS:
            raise ValueError(f"output format must be one of {tensorio.FORMATS}")
        if not self.resolution > 0:
            raise InvalidResolutionError(f"resolution factor must be > 0, got {self.resolution}")
        self.channels = ChannelMode.parse(self.channels).value


@dataclass
class FileResult:
    file: str
    status: str
    output: Optional[str] = None
    dims: Optional[tuple] = None
    output_dims: Optional[tuple] = None
    points: Optional[int] = None
    occupied: Optional[int] = None
    warnings: list = field(default_factory=list)
    error: Optional[str] = None

    def to_json(self) -> str:
        return json.dumps({k: v for k, v in asdict(self).items() if v is not None},
                          sort_keys=True)


@dataclass
class ConvertReport:
    results: list
    seconds: float

    @property
    def failed(self) -> list:
        return [r for r in self.results if r.status != "ok"]

    @property
    def exit_code(self) -> int:
        return 2 if self.failed else 0

    def lines(self) -> list:
        out = [r.to_json() for r in self.results]
        out.append(json.dumps({"summary": True, "files": len(self.results),
                               "failed": len(self.failed),
                               "seconds": round(self.seconds, 6)}, sort_keys=True))
        return out


def expand_inputs(patterns: Sequence[str]) -> list:
    paths = []
    for pat in patterns:
        if glob.has_magic(pat):
            paths.extend(sorted(glob.glob(pat, recursive=True)))
        else:
            paths.append(pat)
    seen = set()
    return [p for p in paths if not (p in seen or seen.add(p))]


def _load(path, nir_names):
    try:
        return read_ply(path, nir_names=nir_names), None
    except (OSError, VoxwheatError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def convert_files(config: JobConfig) -> ConvertReport:
    """Convert every input PLY into ``<stem>.<fmt>`` under ``config.out_dir``.

    Failures are recorded per file; the remaining files are still written.
    """
    t0 = time.perf_counter()
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = expand_inputs(config.inputs)
    results = []
    claimed = set()
    step = max(1, config.batch_size)
    with ThreadPoolExecutor(max_workers=config.threads) as pool:
        for i in range(0, len(paths), step):
            chunk = paths[i:i + step]
            loaded = list(pool.map(lambda p: _load(p, config.nir_names), chunk))
            clouds, owners = [], []
            for path, (cloud, err) in zip(chunk, loaded):
                if err is not None:
                    results.append(FileResult(path, "error", error=err))
                    continue
                target = out_dir / f"{Path(path).stem}.{config.fmt}"
                if target in claimed:
                    results.append(FileResult(path, "error",
                                              error=f"output {target} already written by another input"))
                    continue
                claimed.add(target)
                clouds.append(cloud)
                owners.append((path, target, cloud))
            if not clouds:
                continue
            try:
                grids = convert_batch(clouds, config.resolution, config.channels, config.threads)
            except VoxwheatError as exc:
                for path, _, _ in owners:
                    results.append(FileResult(path, "error", error=f"{type(exc).__name__}: {exc}"))
                continue
            for (path, target, cloud), grid in zip(owners, grids):
                dims = grid.dims
                if config.envelope is not None:
                    grid = fit_to_envelope(grid, config.envelope)
                tensorio.write_tensor(grid, target, config.fmt)
                results.append(FileResult(
                    path, "ok", output=str(target), dims=dims, output_dims=grid.dims,
                    points=cloud.n, occupied=grid.occupied,
                    warnings=cloud.report.warnings if cloud.report else []))
    order = {p: k for k, p in enumerate(paths)}
    results.sort(key=lambda r: order.get(r.file, len(order)))
    return ConvertReport(results, time.perf_counter() - t0)


def split_labels(text: str, test_fraction: float, folds: int, seed: int,
                 strata: str = "auto") -> str:
    """Label table in, manifest text out."""
    manifest = read_manifest(text)
    return write_manifest(make_splits(manifest, test_fraction, folds, seed, strata))


# --------------------------------------------------------------------------
# benchmark

BENCH_EXTENTS = ((0.0, 200.0), (0.0, 300.0), (0.0, 150.0))


@dataclass
class BenchRun:
    threads: int
    seconds: float
    points_per_second: float
    digest: str


@dataclass
class BenchReport:
    clouds: int
    points_per_cloud: int
    runs: list

    @property
    def deterministic(self) -> bool:
        return len({r.digest for r in self.runs}) == 1

    def speedup(self, threads: int, base: int = 1) -> float:
        by = {r.threads: r.seconds for r in self.runs}
        return by[base] / by[threads]

    def lines(self) -> list:
        out = [json.dumps(asdict(r), sort_keys=True) for r in self.runs]
        out.append(json.dumps({"summary": True, "clouds": self.clouds,
                               "points_per_cloud": self.points_per_cloud,
                               "deterministic": self.deterministic}, sort_keys=True))
        return out


def _digest(grids) -> str:
    h = hashlib.sha256()
    for g in grids:
        h.update(repr(g.data.shape).encode())
        h.update(g.data.tobytes())
    return h.hexdigest()


def bench(points: int, threads: Sequence[int] = (1, 2, 4, 8), clouds: int = 10,
          resolution: float = 1.0, mode: str = "rgb", seed: int = 0,
          extents=BENCH_EXTENTS, repeats: int = 1) -> BenchReport:
    """Time end-to-end batch conversion of a synthetic workload per thread count."""
    workload = [generate_synthetic_cloud(extents, points, seed + i, source_id=f"bench{i}")
                for i in range(clouds)]
    convert_batch(workload[:1], resolution, mode, 1)  # compile kernels outside the timer
    runs = []
    for t in threads:
        best = float("inf")
        grids = None
        for _ in range(max(1, repeats)):
            grids = None
            t0 = time.perf_counter()
            grids = convert_batch(workload, resolution, mode, t)
            best = min(best, time.perf_counter() - t0)
        runs.append(BenchRun(t, best, points * clouds / best, _digest(grids)))
        del grids
    return BenchReport(clouds, points, runs)
