import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import TWO_POINT_PLY
from voxwheat.errors import (DataError, InvalidSpecError, ParseError, TruncatedError,
                             UnsupportedFormatError)
from voxwheat.ply import PointCloud, generate_synthetic_cloud, parse_ply, read_ply, write_ply


def _binary_one_vertex(extra_header=b"", extra_body=b""):
    header = (b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n"
              b"property float x\nproperty float y\nproperty float z\n"
              b"property uchar red\nproperty uchar green\nproperty uchar blue\n"
              b"property uchar nir\n" + extra_header + b"end_header\n")
    return header + struct.pack("<fffBBBB", 1.5, -2.0, 3.25, 1, 2, 3, 4) + extra_body


def test_ascii_two_vertices():
    cloud = parse_ply(TWO_POINT_PLY)
    assert cloud.points.tolist() == [[0, 0, 0], [1, 2, 4]]
    assert cloud.colors.tolist() == [[10, 20, 30, 40], [50, 60, 70, 80]]
    assert cloud.report.comments == ["two-point fixture"]
    assert cloud.report.missing_channels == []
    assert cloud.report.nir_property == "nir"


def test_binary_one_vertex():
    cloud = parse_ply(_binary_one_vertex())
    assert cloud.n == 1
    assert cloud.points.tolist() == [[1.5, -2.0, 3.25]]
    assert cloud.colors.tolist() == [[1, 2, 3, 4]]
    assert cloud.points.dtype == np.float64


def test_missing_nir_is_zero_filled():
    data = TWO_POINT_PLY.replace(b"property uchar nir\n", b"") \
        .replace(b" 40\n", b"\n").replace(b" 80\n", b"\n")
    cloud = parse_ply(data)
    assert cloud.colors[:, 3].tolist() == [0, 0]
    assert cloud.colors[:, :3].tolist() == [[10, 20, 30], [50, 60, 70]]
    assert cloud.report.missing_channels == ["nir"]


@pytest.mark.parametrize("name", ["NIR", "scalar_NIR", "alpha"])
def test_nir_candidates(name):
    data = TWO_POINT_PLY.replace(b"uchar nir", b"uchar " + name.encode())
    cloud = parse_ply(data)
    assert cloud.report.nir_property == name
    assert cloud.colors[:, 3].tolist() == [40, 80]


def test_custom_nir_names():
    data = TWO_POINT_PLY.replace(b"uchar nir", b"uchar infrared")
    assert parse_ply(data).report.missing_channels == ["nir"]
    assert parse_ply(data, nir_names=["infrared"]).colors[:, 3].tolist() == [40, 80]


def test_faces_are_skipped_ascii():
    data = TWO_POINT_PLY.replace(
        b"end_header", b"element face 1\nproperty list uchar int vertex_indices\nend_header")
    data += b"3 0 1 1\n"
    cloud = parse_ply(data)
    assert cloud.n == 2
    assert cloud.report.skipped_elements == ["face"]


def test_faces_are_skipped_binary():
    faces = struct.pack("<Biii", 3, 0, 0, 0) + struct.pack("<Biiii", 4, 0, 0, 0, 0)
    data = _binary_one_vertex(
        b"element face 2\nproperty list uchar int vertex_indices\n", faces)
    cloud = parse_ply(data)
    assert cloud.points.tolist() == [[1.5, -2.0, 3.25]]
    assert cloud.report.skipped_elements == ["face"]


def test_binary_uniform_faces_fast_path():
    faces = b"".join(struct.pack("<Biii", 3, 0, 0, 0) for _ in range(50))
    data = _binary_one_vertex(b"element face 50\nproperty list uchar int vertex_indices\n", faces)
    assert parse_ply(data).n == 1
    with pytest.raises(TruncatedError):
        parse_ply(data[:-1])


def test_element_before_vertex_binary():
    header = (b"ply\nformat binary_little_endian 1.0\nelement camera 1\nproperty double f\n"
              b"element vertex 1\nproperty double x\nproperty double y\nproperty double z\n"
              b"end_header\n")
    data = header + struct.pack("<d", 9.0) + struct.pack("<ddd", 1, 2, 3)
    cloud = parse_ply(data)
    assert cloud.points.tolist() == [[1, 2, 3]]
    assert cloud.report.missing_channels == ["red", "green", "blue", "nir"]


def test_big_endian_rejected():
    data = TWO_POINT_PLY.replace(b"format ascii", b"format binary_big_endian")
    with pytest.raises(UnsupportedFormatError):
        parse_ply(data)


@pytest.mark.parametrize("data, line", [
    (b"plx\nformat ascii 1.0\nend_header\n", 1),
    (TWO_POINT_PLY.replace(b"element vertex 2", b"element vertex two"), 4),
    (TWO_POINT_PLY.replace(b"property float x", b"property quad x"), 5),
    (TWO_POINT_PLY.replace(b"format ascii 1.0", b"format ascii 2.0"), 2),
    (TWO_POINT_PLY.replace(b"comment", b"bogus"), 3),
])
def test_malformed_header(data, line):
    with pytest.raises(ParseError) as exc:
        parse_ply(data)
    assert exc.value.line == line


def test_missing_axis():
    data = TWO_POINT_PLY.replace(b"property float z\n", b"")
    with pytest.raises(ParseError, match="'z'"):
        parse_ply(data)


def test_short_ascii_row_reports_line():
    data = TWO_POINT_PLY.replace(b"1 2 4 50 60 70 80", b"1 2 4 50 60 70")
    with pytest.raises(ParseError) as exc:
        parse_ply(data)
    assert exc.value.line == 14


def test_truncated_ascii():
    with pytest.raises(TruncatedError):
        parse_ply(TWO_POINT_PLY.replace(b"element vertex 2", b"element vertex 3"))


def test_extra_ascii_rows():
    with pytest.raises(TruncatedError):
        parse_ply(TWO_POINT_PLY + b"5 5 5 1 1 1 1\n")


def test_truncated_binary():
    with pytest.raises(TruncatedError):
        parse_ply(_binary_one_vertex()[:-2])
    with pytest.raises(TruncatedError):
        parse_ply(_binary_one_vertex(extra_body=b"\x00"))


def test_non_finite_coordinate():
    data = TWO_POINT_PLY.replace(b"1 2 4 50", b"1 nan 4 50")
    with pytest.raises(DataError) as exc:
        parse_ply(data)
    assert exc.value.index == 1


def test_colour_out_of_range():
    data = TWO_POINT_PLY.replace(b"property uchar red", b"property int red") \
        .replace(b"0 0 0 10", b"0 0 0 300")
    with pytest.raises(DataError):
        parse_ply(data)


def test_crlf_header():
    data = TWO_POINT_PLY.replace(b"\n", b"\r\n")
    assert parse_ply(data).points.tolist() == [[0, 0, 0], [1, 2, 4]]


def test_read_ply_sets_stem(two_point_ply):
    assert read_ply(two_point_ply).source_id == "fixture"


def test_point_cloud_is_immutable(two_point_cloud):
    with pytest.raises(ValueError):
        two_point_cloud.points[0, 0] = 5


def test_point_cloud_rejects_bad_shapes():
    with pytest.raises(InvalidSpecError):
        PointCloud(np.zeros((0, 3)), np.zeros((0, 4)))
    with pytest.raises(InvalidSpecError):
        PointCloud(np.zeros((2, 3)), np.zeros((3, 4)))
    with pytest.raises(DataError):
        PointCloud([(0, 0, np.inf)], [(0, 0, 0, 0)])


# --- synthetic clouds ------------------------------------------------------

def test_synthetic_extents_exact():
    c = generate_synthetic_cloud(((0, 10), (0, 20), (0, 5)), 100, seed=7)
    assert c.points.min(axis=0).tolist() == [0, 0, 0]
    assert c.points.max(axis=0).tolist() == [10, 20, 5]
    assert c.colors.dtype == np.uint8


def test_synthetic_single_point():
    c = generate_synthetic_cloud(((-1, 10), (2, 20), (3, 5)), 1, seed=0)
    assert c.points.tolist() == [[-1, 2, 3]]


def test_synthetic_deterministic():
    ext = ((0, 10), (0, 20), (0, 5))
    assert generate_synthetic_cloud(ext, 100, 7) == generate_synthetic_cloud(ext, 100, 7)
    assert generate_synthetic_cloud(ext, 100, 7) != generate_synthetic_cloud(ext, 100, 8)


def test_synthetic_rejects_zero_count():
    with pytest.raises(InvalidSpecError):
        generate_synthetic_cloud(((0, 1), (0, 1), (0, 1)), 0, seed=0)


# --- round trips -------------------------------------------------------------

coords = st.floats(min_value=-1e4, max_value=1e4, allow_nan=False, allow_infinity=False)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords, coords,
                          *[st.integers(0, 255)] * 4), min_size=1, max_size=30))
def test_ascii_round_trip(rows):
    cloud = PointCloud([r[:3] for r in rows], [r[3:] for r in rows])
    back = parse_ply(write_ply(cloud))
    assert np.array_equal(back.points, cloud.points)
    assert np.array_equal(back.colors, cloud.colors)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(coords, coords, coords,
                          *[st.integers(0, 255)] * 4), min_size=1, max_size=30))
def test_ascii_and_binary_agree(rows):
    cloud = PointCloud([r[:3] for r in rows], [r[3:] for r in rows])
    a = parse_ply(write_ply(cloud, binary=False, coord_type="float"))
    b = parse_ply(write_ply(cloud, binary=True, coord_type="float"))
    assert np.array_equal(a.points, b.points)
    assert np.array_equal(a.colors, b.colors)
    assert np.array_equal(b.points, cloud.points.astype(np.float32).astype(np.float64))


def test_binary_double_round_trip():
    c = generate_synthetic_cloud(((-5, 5), (0, 1), (1e-3, 2e-3)), 500, seed=3)
    assert parse_ply(write_ply(c, binary=True)) == c
