"""PLY point-cloud ingestion.

Only the vertex element is materialised. Other elements (faces, edges,
scanner-specific extras) are walked over so that the payload size can be
checked, but their contents are discarded.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import (
    DataError,
    InvalidSpecError,
    ParseError,
    TruncatedError,
    UnsupportedFormatError,
)

DEFAULT_NIR_NAMES = ("nir", "NIR", "scalar_NIR", "alpha")
COLOR_NAMES = ("red", "green", "blue")

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

FORMATS = ("ascii", "binary_little_endian")


@dataclass
class ParseReport:
    format: str = ""
    vertex_count: int = 0
    comments: list = field(default_factory=list)
    nir_property: Optional[str] = None
    missing_channels: list = field(default_factory=list)
    skipped_elements: list = field(default_factory=list)

    @property
    def warnings(self) -> list:
        return [f"missing channel: {c}" for c in self.missing_channels]


@dataclass(frozen=True, eq=False)
class PointCloud:
    """One scanned plant: ``points`` (N, 3) float64 mm, ``colors`` (N, 4) uint8 RGBN.

    Arrays are copied on construction and made read-only.
    """

    points: np.ndarray
    colors: np.ndarray
    source_id: str = ""
    report: Optional[ParseReport] = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2 or pts.shape[1] != 3:
            raise InvalidSpecError(f"points must be (N, 3), got {pts.shape}")
        cols = np.asarray(self.colors)
        if cols.shape != (pts.shape[0], 4):
            raise InvalidSpecError(
                f"colors must be ({pts.shape[0]}, 4), got {cols.shape}")
        if pts.shape[0] < 1:
            raise InvalidSpecError("a point cloud needs at least one point")
        if cols.dtype != np.uint8:
            if cols.size and (cols.min() < 0 or cols.max() > 255):
                raise InvalidSpecError("colour intensities must lie in [0, 255]")
            cols = cols.astype(np.uint8)
        else:
            cols = cols.copy()
        bad = ~np.isfinite(pts).all(axis=1)
        if bad.any():
            raise DataError(int(np.flatnonzero(bad)[0]))
        pts.setflags(write=False)
        cols.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "colors", cols)

    def __len__(self):
        return self.points.shape[0]

    @property
    def n(self) -> int:
        return self.points.shape[0]

    def __eq__(self, other):
        if not isinstance(other, PointCloud):
            return NotImplemented
        return (self.source_id == other.source_id
                and np.array_equal(self.points, other.points)
                and np.array_equal(self.colors, other.colors))

    __hash__ = None


# --------------------------------------------------------------------------
# header

@dataclass
class _Property:
    name: str
    dtype: str
    count_dtype: Optional[str] = None  # set for list properties

    @property
    def is_list(self):
        return self.count_dtype is not None


@dataclass
class _Element:
    name: str
    count: int
    line: int
    properties: list = field(default_factory=list)

    def prop(self, name):
        for p in self.properties:
            if p.name == name:
                return p
        return None

    @property
    def has_lists(self):
        return any(p.is_list for p in self.properties)

    def scalar_dtype(self):
        return np.dtype([(p.name, "<" + p.dtype) for p in self.properties])


def _ply_type(token, lineno):
    try:
        return PLY_TYPES[token]
    except KeyError:
        raise ParseError(lineno, f"unknown property type {token!r}") from None


def _parse_header(data: bytes):
    end = data.find(b"end_header")
    if not data.startswith(b"ply") or data[3:4] not in (b"\n", b"\r"):
        raise ParseError(1, "missing 'ply' magic line")
    if end < 0:
        raise ParseError(0, "no end_header line")
    nl = data.find(b"\n", end)
    body_offset = len(data) if nl < 0 else nl + 1
    try:
        text = data[:end].decode("ascii")
    except UnicodeDecodeError as exc:
        raise ParseError(0, f"header is not ASCII ({exc.reason})") from None

    fmt = None
    elements: list[_Element] = []
    comments: list[str] = []
    lines = text.replace("\r", "").split("\n")
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        key, _, rest = line.partition(" ")
        rest = rest.strip()
        if key == "format":
            parts = rest.split()
            if len(parts) != 2:
                raise ParseError(lineno, "format line needs a name and a version")
            if parts[0] == "binary_big_endian":
                raise UnsupportedFormatError("binary_big_endian PLY is not supported")
            if parts[0] not in FORMATS:
                raise ParseError(lineno, f"unknown format {parts[0]!r}")
            if parts[1] != "1.0":
                raise ParseError(lineno, f"unsupported version {parts[1]!r}")
            fmt = parts[0]
        elif key in ("comment", "obj_info"):
            comments.append(rest)
        elif key == "element":
            parts = rest.split()
            if len(parts) != 2:
                raise ParseError(lineno, "element line needs a name and a count")
            try:
                count = int(parts[1])
            except ValueError:
                raise ParseError(lineno, f"bad element count {parts[1]!r}") from None
            if count < 0:
                raise ParseError(lineno, "negative element count")
            elements.append(_Element(parts[0], count, lineno))
        elif key == "property":
            if not elements:
                raise ParseError(lineno, "property declared before any element")
            parts = rest.split()
            if parts and parts[0] == "list":
                if len(parts) != 4:
                    raise ParseError(lineno, "list property needs count type, item type, name")
                prop = _Property(parts[3], _ply_type(parts[2], lineno),
                                 _ply_type(parts[1], lineno))
            else:
                if len(parts) != 2:
                    raise ParseError(lineno, "property line needs a type and a name")
                prop = _Property(parts[1], _ply_type(parts[0], lineno))
            if elements[-1].prop(prop.name) is not None:
                raise ParseError(lineno, f"duplicate property {prop.name!r}")
            elements[-1].properties.append(prop)
        else:
            raise ParseError(lineno, f"unexpected header keyword {key!r}")

    if fmt is None:
        raise ParseError(2, "no format line")
    return fmt, elements, comments, body_offset


# --------------------------------------------------------------------------
# payload

def _read_binary_element(data, offset, el: _Element):
    """Return (structured array or None, new offset). List elements yield None."""
    if not el.has_lists:
        dt = el.scalar_dtype()
        need = el.count * dt.itemsize
        if offset + need > len(data):
            raise TruncatedError(
                f"element {el.name!r}: need {need} bytes at offset {offset}, "
                f"only {len(data) - offset} available")
        arr = np.frombuffer(data, dtype=dt, count=el.count, offset=offset)
        return arr, offset + need
    return None, _skip_binary_list_element(data, offset, el)


def _skip_binary_list_element(data, offset, el: _Element):
    if el.count == 0:
        return offset
    # Fast path: every row has the same list lengths as the first one.
    fields = []
    pos = offset
    for p in el.properties:
        if p.is_list:
            cdt = np.dtype("<" + p.count_dtype)
            if pos + cdt.itemsize > len(data):
                raise TruncatedError(f"element {el.name!r} ends early")
            k = int(np.frombuffer(data, cdt, 1, pos)[0])
            fields.append((p.name + "_n", cdt))
            if k:
                fields.append((p.name, np.dtype("<" + p.dtype), (k,)))
            pos += cdt.itemsize + k * np.dtype(p.dtype).itemsize
        else:
            fields.append((p.name, np.dtype("<" + p.dtype)))
            pos += np.dtype(p.dtype).itemsize
    row = np.dtype(fields)
    need = el.count * row.itemsize
    if offset + need <= len(data):
        arr = np.frombuffer(data, row, el.count, offset)
        uniform = all(
            (arr[p.name + "_n"] == arr[p.name + "_n"][0]).all()
            for p in el.properties if p.is_list)
        if uniform:
            return offset + need

    pos = offset
    for _ in range(el.count):
        for p in el.properties:
            if p.is_list:
                cdt = np.dtype("<" + p.count_dtype)
                if pos + cdt.itemsize > len(data):
                    raise TruncatedError(f"element {el.name!r} ends early")
                k = int(np.frombuffer(data, cdt, 1, pos)[0])
                pos += cdt.itemsize + k * np.dtype(p.dtype).itemsize
            else:
                pos += np.dtype(p.dtype).itemsize
            if pos > len(data):
                raise TruncatedError(f"element {el.name!r} ends early")
    return pos


def _read_ascii_vertices(lines, start, el: _Element):
    if el.has_lists:
        raise ParseError(el.line, "list properties on the vertex element are not supported")
    rows = lines[start:start + el.count]
    if len(rows) < el.count:
        raise TruncatedError(
            f"declared {el.count} vertices, payload has {len(rows)} lines")
    width = len(el.properties)
    tokens = b" ".join(r for _, r in rows).split()
    if len(tokens) != width * el.count:
        for lineno, r in rows:
            if len(r.split()) != width:
                raise ParseError(lineno, f"expected {width} values, found {len(r.split())}")
    try:
        values = np.array(tokens, dtype=np.float64).reshape(el.count, width)
    except ValueError:
        for lineno, r in rows:
            try:
                [float(t) for t in r.split()]
            except ValueError:
                raise ParseError(lineno, "non-numeric vertex value") from None
        raise
    return {p.name: values[:, j] for j, p in enumerate(el.properties)}


def _ascii_payload_lines(data: bytes, offset: int, header_lines: int):
    out = []
    for i, raw in enumerate(data[offset:].split(b"\n")):
        s = raw.strip()
        if s:
            out.append((header_lines + 1 + i, s))
    return out


def _colour_column(values, name, nverts):
    col = np.asarray(values, dtype=np.float64)
    bad = (col < 0) | (col > 255) | (col != np.floor(col))
    if bad.any():
        raise DataError(int(np.flatnonzero(bad)[0]),
                        f"{name} intensity outside integer range [0, 255]")
    return col.astype(np.uint8)


def parse_ply(data: bytes, nir_names: Sequence[str] = DEFAULT_NIR_NAMES,
              source_id: str = "") -> PointCloud:
    """Parse PLY bytes into a PointCloud.

    The returned cloud carries a ParseReport in ``cloud.report`` listing header
    comments, skipped elements and colour channels that were absent (filled
    with 0).
    """
    fmt, elements, comments, body = _parse_header(data)
    vertex = next((e for e in elements if e.name == "vertex"), None)
    if vertex is None:
        raise ParseError(0, "no vertex element")
    for axis in "xyz":
        if vertex.prop(axis) is None:
            raise ParseError(vertex.line, f"vertex element lacks property {axis!r}")
        if vertex.prop(axis).is_list:
            raise ParseError(vertex.line, f"property {axis!r} must be scalar")
    if vertex.count < 1:
        raise DataError(0, "vertex element is empty")

    report = ParseReport(format=fmt, vertex_count=vertex.count, comments=comments)
    columns = None
    if fmt == "ascii":
        header_lines = data[:body].count(b"\n")
        lines = _ascii_payload_lines(data, body, header_lines)
        pos = 0
        for el in elements:
            if el is vertex:
                columns = _read_ascii_vertices(lines, pos, el)
            else:
                report.skipped_elements.append(el.name)
                if pos + el.count > len(lines):
                    raise TruncatedError(f"element {el.name!r} ends early")
            pos += el.count
        if pos != len(lines):
            raise TruncatedError(
                f"{len(lines) - pos} lines beyond the declared elements")
    else:
        pos = body
        for el in elements:
            arr, pos = _read_binary_element(data, pos, el)
            if el is vertex:
                columns = {p.name: arr[p.name] for p in el.properties}
            else:
                report.skipped_elements.append(el.name)
        if pos != len(data):
            raise TruncatedError(f"{len(data) - pos} bytes beyond the declared elements")

    n = vertex.count
    points = np.empty((n, 3), dtype=np.float64)
    for j, axis in enumerate("xyz"):
        points[:, j] = columns[axis]
    bad = ~np.isfinite(points).all(axis=1)
    if bad.any():
        raise DataError(int(np.flatnonzero(bad)[0]))

    colors = np.zeros((n, 4), dtype=np.uint8)
    for j, name in enumerate(COLOR_NAMES):
        if name in columns:
            colors[:, j] = _colour_column(columns[name], name, n)
        else:
            report.missing_channels.append(name)
    nir = next((c for c in nir_names if c in columns), None)
    report.nir_property = nir
    if nir is None:
        report.missing_channels.append("nir")
    else:
        colors[:, 3] = _colour_column(columns[nir], nir, n)

    return PointCloud(points, colors, source_id=source_id, report=report)


def read_ply(path, nir_names: Sequence[str] = DEFAULT_NIR_NAMES) -> PointCloud:
    path = Path(path)
    return parse_ply(path.read_bytes(), nir_names=nir_names, source_id=path.stem)


def write_ply(cloud: PointCloud, binary: bool = False, coord_type: str = "double",
              nir_name: str = "nir", comments: Iterable[str] = ()) -> bytes:
    """Serialise the vertices of ``cloud``. ASCII coordinates are written with
    17 significant digits so that double precision survives a round trip."""
    if coord_type not in ("float", "double"):
        raise ValueError("coord_type must be 'float' or 'double'")
    fmt = "binary_little_endian" if binary else "ascii"
    head = ["ply", f"format {fmt} 1.0"]
    head += [f"comment {c}" for c in comments]
    head += [f"element vertex {cloud.n}"]
    head += [f"property {coord_type} {a}" for a in "xyz"]
    head += [f"property uchar {c}" for c in (*COLOR_NAMES, nir_name)]
    head += ["end_header", ""]
    header = "\n".join(head).encode("ascii")

    if binary:
        ct = "<f4" if coord_type == "float" else "<f8"
        dt = np.dtype([("x", ct), ("y", ct), ("z", ct), ("red", "u1"),
                       ("green", "u1"), ("blue", "u1"), ("nir", "u1")])
        rec = np.empty(cloud.n, dtype=dt)
        for j, a in enumerate("xyz"):
            rec[a] = cloud.points[:, j]
        for j, c in enumerate((*COLOR_NAMES, "nir")):
            rec[c] = cloud.colors[:, j]
        return header + rec.tobytes()

    if coord_type == "float":
        pts = cloud.points.astype(np.float32).astype(np.float64)
    else:
        pts = cloud.points
    rows = [
        "%r %r %r %d %d %d %d" % (float(p[0]), float(p[1]), float(p[2]), *c)
        for p, c in zip(pts.tolist(), cloud.colors.tolist())
    ]
    return header + ("\n".join(rows) + "\n").encode("ascii")


def generate_synthetic_cloud(extents, count: int, seed: int, source_id: str = "") -> PointCloud:
    """Random cloud whose bounding box is exactly ``extents``.

    ``extents`` is ``((xmin, xmax), (ymin, ymax), (zmin, zmax))``. The first
    point sits on the low corner and the second on the high corner; the rest
    are uniform inside the box. Colours are uniform over [0, 255].
    """
    if count < 1:
        raise InvalidSpecError("count must be at least 1")
    ext = np.asarray(extents, dtype=np.float64)
    if ext.shape != (3, 2):
        raise InvalidSpecError("extents must be three (low, high) pairs")
    if not np.isfinite(ext).all():
        raise InvalidSpecError("extents must be finite")
    lo, hi = ext[:, 0], ext[:, 1]
    if (lo > hi).any():
        raise InvalidSpecError("extent low bound exceeds high bound")
    rng = np.random.default_rng(seed)
    pts = rng.uniform(lo, hi, size=(count, 3))
    # uniform(lo, hi) may return hi itself only by rounding; clip keeps the box exact
    np.clip(pts, lo, hi, out=pts)
    pts[0] = lo
    if count > 1:
        pts[1] = hi
    colors = rng.integers(0, 256, size=(count, 4), dtype=np.uint8)
    return PointCloud(pts, colors, source_id=source_id)
