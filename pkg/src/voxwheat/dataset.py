"""Sample manifests, severity labels, stratified test split and k-fold assignment.

Assignments depend only on the seed and the set of records: records are
ordered by path before any shuffling, so input order is irrelevant.
"""
from __future__ import annotations

import csv
import io
import math
import random
import warnings
from collections import defaultdict
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Iterable, Optional, Sequence

from .errors import FoldError, LabelError, ManifestError

CLASS_LABELS = ("FHB", "WC")
SPLITS = ("train", "test", "unassigned")
COLUMNS = ("path", "class_label", "total_spikelets", "infected_spikelets",
           "severity_pct", "dpi", "split", "fold")
NUMERIC_STRATA = ("severity_pct", "infected_spikelets", "total_spikelets")
QUANTILE_BINS = 4
SEVERITY_TOL = 1e-9

# Published label ranges, inclusive.
LABEL_RANGES = {
    "spikes": {},
    "heads": {"total_spikelets": (7, 22)},
    "dataset2": {"total_spikelets": (13, 21), "infected_spikelets": (2, 15)},
}


class MissingLabelError(LabelError):
    def __init__(self, paths):
        super().__init__(f"{len(paths)} record(s) lack a stratum label: {', '.join(paths[:10])}")
        self.paths = list(paths)


def compute_severity(infected: int, total: int) -> float:
    """Percentage of infected spikelets on a head."""
    if total < 1:
        raise LabelError(f"total spikelets must be >= 1, got {total}")
    if infected < 0 or infected > total:
        raise LabelError(f"infected spikelets {infected} outside [0, {total}]")
    return 100.0 * infected / total


@dataclass(frozen=True)
class SampleRecord:
    path: str
    class_label: Optional[str] = None
    total_spikelets: Optional[int] = None
    infected_spikelets: Optional[int] = None
    severity_pct: Optional[float] = None
    dpi: Optional[int] = None
    split: str = "unassigned"
    fold: Optional[int] = None

    def __post_init__(self):
        if not self.path:
            raise LabelError("record path is empty")
        if self.class_label is not None and self.class_label not in CLASS_LABELS:
            raise LabelError(f"{self.path}: class label {self.class_label!r} not in {CLASS_LABELS}")
        if self.split not in SPLITS:
            raise LabelError(f"{self.path}: split {self.split!r} not in {SPLITS}")
        if self.total_spikelets is not None and self.infected_spikelets is not None:
            expected = compute_severity(self.infected_spikelets, self.total_spikelets)
            if self.severity_pct is not None and abs(self.severity_pct - expected) > SEVERITY_TOL:
                raise LabelError(
                    f"{self.path}: severity {self.severity_pct} != 100*{self.infected_spikelets}"
                    f"/{self.total_spikelets}")
        if self.severity_pct is not None and not 0 <= self.severity_pct <= 100:
            raise LabelError(f"{self.path}: severity {self.severity_pct} outside [0, 100]")

    def with_severity(self) -> "SampleRecord":
        if self.total_spikelets is None or self.infected_spikelets is None:
            return self
        return replace(self, severity_pct=compute_severity(
            self.infected_spikelets, self.total_spikelets))


@dataclass(frozen=True)
class DatasetManifest:
    records: tuple
    seed: Optional[int] = None
    test_fraction: Optional[float] = None
    fold_count: Optional[int] = None
    strata: str = "auto"
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        recs = tuple(self.records)
        seen = set()
        for r in recs:
            if r.path in seen:
                raise ManifestError(f"duplicate record path {r.path!r}")
            seen.add(r.path)
        object.__setattr__(self, "records", recs)

    def __len__(self):
        return len(self.records)

    def by_split(self, split: str) -> list:
        return [r for r in self.records if r.split == split]


def check_label_ranges(records: Iterable[SampleRecord], dataset: str) -> list:
    """Return ``(path, field, value)`` for every label outside the published range."""
    bad = []
    for r in records:
        if dataset == "spikes" and r.class_label is None:
            bad.append((r.path, "class_label", None))
        for name, (lo, hi) in LABEL_RANGES[dataset].items():
            v = getattr(r, name)
            if v is not None and not lo <= v <= hi:
                bad.append((r.path, name, v))
    return bad


# --------------------------------------------------------------------------
# strata

def _resolve_strata(records: Sequence[SampleRecord], by: str) -> str:
    if by != "auto":
        return by
    if all(r.class_label is not None for r in records):
        return "class_label"
    for name in NUMERIC_STRATA:
        if all(getattr(r, name) is not None for r in records):
            return name
    return "class_label"


def stratum_keys(records: Sequence[SampleRecord], by: str = "auto") -> dict:
    """Map record path to stratum key.

    Class labels are used as-is. Numeric labels are cut into quantile bins by
    rank; equal values always share a bin.
    """
    by = _resolve_strata(records, by)
    if by not in ("class_label", *NUMERIC_STRATA):
        raise LabelError(f"cannot stratify by {by!r}")
    missing = sorted(r.path for r in records if getattr(r, by) is None)
    if missing:
        raise MissingLabelError(missing)
    if by == "class_label":
        return {r.path: r.class_label for r in records}

    ordered = sorted(records, key=lambda r: (getattr(r, by), r.path))
    n = len(ordered)
    keys = {}
    first_rank = {}
    for rank, r in enumerate(ordered):
        v = getattr(r, by)
        first_rank.setdefault(v, rank)
        keys[r.path] = f"q{first_rank[v] * QUANTILE_BINS // n}"
    return keys


def _groups(records, keys):
    groups = defaultdict(list)
    for r in sorted(records, key=lambda r: r.path):
        groups[keys[r.path]].append(r)
    return dict(sorted(groups.items(), key=lambda kv: str(kv[0])))


def _exact_fraction(x: float) -> Fraction:
    # decimal literal of the float, so 0.29 * 100 is 29 and not 28.999...
    return Fraction(repr(float(x)))


def allocate_test_counts(sizes: dict, test_fraction: float) -> dict:
    """Per-stratum test counts.

    Each stratum first gets ``floor(size * f)``. The shortfall against
    ``round(total * f)`` (half up) is then handed out one sample at a time to
    the largest strata first, never emptying a stratum's training share.
    Strata with fewer than two samples stay entirely in training.
    """
    f = _exact_fraction(test_fraction)
    if not 0 < f < 1:
        raise ValueError(f"test fraction must lie in (0, 1), got {test_fraction}")
    quota = {}
    for key, size in sizes.items():
        if size < 2:
            warnings.warn(f"stratum {key!r} has {size} sample(s); kept in training")
            quota[key] = 0
        else:
            quota[key] = math.floor(size * f)
    total = sum(sizes.values())
    target = math.floor(total * f + Fraction(1, 2))
    short = target - sum(quota.values())
    for key in sorted(sizes, key=lambda k: (-sizes[k], str(k))):
        if short <= 0:
            break
        if sizes[key] >= 2 and quota[key] + 1 <= sizes[key] - 1:
            quota[key] += 1
            short -= 1
    return quota


def stratified_split(manifest: DatasetManifest, test_fraction: float, seed: int,
                     strata: Optional[str] = None) -> DatasetManifest:
    strata = strata or manifest.strata
    keys = stratum_keys(manifest.records, strata)
    groups = _groups(manifest.records, keys)
    quota = allocate_test_counts({k: len(v) for k, v in groups.items()}, test_fraction)
    rng = random.Random(seed)
    out = []
    for key, members in groups.items():
        order = list(members)
        rng.shuffle(order)
        for i, r in enumerate(order):
            out.append(replace(r, split="test" if i < quota[key] else "train", fold=None))
    out.sort(key=lambda r: r.path)
    return replace(manifest, records=tuple(out), seed=seed,
                   test_fraction=float(test_fraction), fold_count=None, strata=strata)


def assign_folds(manifest: DatasetManifest, k: int, seed: int,
                 strata: Optional[str] = None) -> DatasetManifest:
    """Deal training records into ``k`` folds (1-based), stratum by stratum.

    A single running counter is used across strata so both the per-stratum and
    the overall fold sizes differ by at most one.
    """
    if k < 2:
        raise FoldError(f"fold count must be >= 2, got {k}")
    train = manifest.by_split("train")
    if k > len(train):
        raise FoldError(f"{k} folds requested but only {len(train)} training records")
    strata = strata or manifest.strata
    keys = stratum_keys(manifest.records, strata)
    rng = random.Random(f"folds:{seed}")
    folds = {}
    pos = 0
    for members in _groups(train, keys).values():
        order = list(members)
        rng.shuffle(order)
        for r in order:
            folds[r.path] = pos % k + 1
            pos += 1
    out = tuple(replace(r, fold=folds.get(r.path)) for r in manifest.records)
    return replace(manifest, records=out, fold_count=k, strata=strata)


def make_splits(manifest: DatasetManifest, test_fraction: float, folds: int, seed: int,
                strata: str = "auto") -> DatasetManifest:
    m = stratified_split(manifest, test_fraction, seed, strata)
    return assign_folds(m, folds, seed)


# --------------------------------------------------------------------------
# file format

def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_manifest(manifest: DatasetManifest) -> str:
    buf = io.StringIO()
    params = {"seed": manifest.seed, "test_fraction": manifest.test_fraction,
              "folds": manifest.fold_count, "strata": manifest.strata, **manifest.meta}
    for key, value in params.items():
        if value is not None:
            buf.write(f"# {key}={value}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in manifest.records:
        w.writerow([_cell(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def _opt(value, conv, path, column):
    value = value.strip() if value is not None else ""
    if value == "":
        return None
    try:
        return conv(value)
    except ValueError:
        raise ManifestError(f"{path}: bad {column} value {value!r}") from None


def read_manifest(text: str) -> DatasetManifest:
    """Parse a manifest or a bare label table (split/fold columns optional)."""
    params = {}
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, sep, value = line[1:].strip().partition("=")
            if sep:
                params[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise ManifestError("manifest has no header row")
    reader = csv.DictReader(body)
    if "path" not in (reader.fieldnames or []):
        raise ManifestError("manifest header lacks a 'path' column")
    records = []
    for row in reader:
        path = (row.get("path") or "").strip()
        records.append(SampleRecord(
            path=path,
            class_label=_opt(row.get("class_label"), str, path, "class_label"),
            total_spikelets=_opt(row.get("total_spikelets"), int, path, "total_spikelets"),
            infected_spikelets=_opt(row.get("infected_spikelets"), int, path, "infected_spikelets"),
            severity_pct=_opt(row.get("severity_pct"), float, path, "severity_pct"),
            dpi=_opt(row.get("dpi"), int, path, "dpi"),
            split=_opt(row.get("split"), str, path, "split") or "unassigned",
            fold=_opt(row.get("fold"), int, path, "fold"),
        ))
    known = {"seed", "test_fraction", "folds", "strata"}
    return DatasetManifest(
        records=tuple(records),
        seed=int(params["seed"]) if "seed" in params else None,
        test_fraction=float(params["test_fraction"]) if "test_fraction" in params else None,
        fold_count=int(params["folds"]) if "folds" in params else None,
        strata=params.get("strata", "auto"),
        meta={k: v for k, v in params.items() if k not in known},
    )
