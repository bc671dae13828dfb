import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from voxwheat.ply import PointCloud  # noqa: E402

TWO_POINT_PLY = b"""ply
format ascii 1.0
comment two-point fixture
element vertex 2
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
property uchar nir
end_header
0 0 0 10 20 30 40
1 2 4 50 60 70 80
"""


@pytest.fixture
def two_point_cloud():
    return PointCloud([(0, 0, 0), (1, 2, 4)], [(10, 20, 30, 40), (50, 60, 70, 80)])


@pytest.fixture
def two_point_ply(tmp_path):
    path = tmp_path / "fixture.ply"
    path.write_bytes(TWO_POINT_PLY)
    return path


def random_cloud(rng, n, extent=10.0, offset=0.0, collide=False):
    pts = rng.uniform(offset, offset + extent, size=(n, 3))
    if collide and n > 1:
        dup = rng.integers(0, n, size=n // 2)
        pts[rng.integers(0, n, size=n // 2)] = pts[dup]
    cols = rng.integers(0, 256, size=(n, 4), dtype=np.uint8)
    return PointCloud(pts, cols)


# Acceptance results, one line per criterion, echoed after the run.
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
