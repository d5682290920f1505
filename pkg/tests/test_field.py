from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpack import _accel
from dualpack.field import (ResolutionError, SdfGrid, compute_sdf_grid, exact_distance,
                            marching_cubes, read_grid, write_grid)
from dualpack.fixtures import box_mesh, icosphere, torus_mesh
from dualpack.mesh_io import TriangleMesh, boundary_edge_count, enclosed_volume, euler_characteristic
from dualpack.voxel import Occupancy, index_range, voxelize_solid


def _brute_udf(tris, pts):
    """Dense closest-point distance via barycentric projection + edge checks."""
    def seg(p, a, b):
        ab = b - a
        t = np.clip(((p - a) @ ab) / (ab @ ab), 0, 1)
        return np.linalg.norm(p - (a + t[:, None] * ab), axis=1)

    best = np.full(len(pts), np.inf)
    for a, b, c in tris:
        n = np.cross(b - a, c - a)
        n /= np.linalg.norm(n)
        d = (pts - a) @ n
        q = pts - d[:, None] * n
        # barycentric inside test
        v0, v1, v2 = b - a, c - a, q - a
        d00, d01, d11 = v0 @ v0, v0 @ v1, v1 @ v1
        d20, d21 = v2 @ v0, v2 @ v1
        den = d00 * d11 - d01 * d01
        v = (d11 * d20 - d01 * d21) / den
        w = (d00 * d21 - d01 * d20) / den
        inside = (v >= 0) & (w >= 0) & (v + w <= 1)
        dist = np.where(inside, np.abs(d), np.minimum(np.minimum(seg(pts, a, b), seg(pts, b, c)), seg(pts, c, a)))
        best = np.minimum(best, dist)
    return best


def test_bvh_distance_matches_brute_force(rng):
    mesh = icosphere(2, 0.6)
    pts = rng.uniform(-1, 1, size=(500, 3))
    np.testing.assert_allclose(exact_distance(mesh, pts), _brute_udf(mesh.triangles, pts), atol=1e-12)


def test_grid_udf_matches_points_udf():
    mesh = box_mesh((-0.3, -0.2, -0.1), (0.4, 0.3, 0.2))
    n = 16
    bvh = _accel.BVH(mesh.triangles)
    g = _accel.grid_udf(np.zeros(3, np.int64), np.array([n, n, n]), 2.0 / n, *bvh.arrays)
    c = -1 + (np.arange(n) + 0.5) * 2.0 / n
    pts = np.stack(np.meshgrid(c, c, c, indexing="ij"), -1).reshape(-1, 3)
    np.testing.assert_allclose(g.reshape(-1), _brute_udf(mesh.triangles, pts), atol=1e-12)


def test_segment_hits():
    tri = np.array([[[0.0, -1, -1], [0, 1, -1], [0, 0, 1]]])
    bvh = _accel.BVH(tri)
    assert _accel.segment_hits(np.array([-0.5, 0, 0]), 0, 1.0, *bvh.arrays)
    assert not _accel.segment_hits(np.array([0.1, 0, 0]), 0, 1.0, *bvh.arrays)
    assert not _accel.segment_hits(np.array([-0.5, 0, 0]), 1, 1.0, *bvh.arrays)


def test_sphere_sdf_signs_and_values():
    grid = compute_sdf_grid([icosphere(4, 0.5)], 32)
    assert grid.values[0, 0, 0] > 0
    assert grid.values[16, 16, 16] < 0
    # voxel centre near the middle lies ~0.5 from the surface
    assert grid.values[16, 16, 16] == pytest.approx(-(0.5 - np.sqrt(3) * 0.5 * grid.voxel_size), abs=2e-3)
    assert np.all(grid.values != 0)


def test_resolution_guard():
    with pytest.raises(ResolutionError):
        compute_sdf_grid([icosphere(1, 0.5)], 8)


def test_empty_volume_grid():
    grid = compute_sdf_grid([], 16)
    assert np.isinf(grid.values).all()
    assert grid.occupancy_ratio == 0.0
    assert marching_cubes(grid).n_faces == 0


def test_open_surface_is_not_occupied():
    # a single square sheet encloses nothing
    sheet = TriangleMesh(np.array([[-0.5, -0.5, 0.01], [0.5, -0.5, 0.01], [0.5, 0.5, 0.01], [-0.5, 0.5, 0.01]]),
                         np.array([[0, 1, 2], [0, 2, 3]]))
    assert compute_sdf_grid([sheet], 32).occupancy_ratio == 0.0


def test_torus_marching_cubes_genus_one():
    grid = compute_sdf_grid([torus_mesh()], 64)
    mesh = marching_cubes(grid)
    assert boundary_edge_count(mesh) == 0
    assert euler_characteristic(mesh) == 0


def test_box_occupancy_exact_when_faces_on_voxel_boundaries():
    n = 32
    h = 2.0 / n
    grid = compute_sdf_grid([box_mesh((-8 * h, -4 * h, -2 * h), (8 * h, 4 * h, 2 * h))], n)
    assert int((grid.values < 0).sum()) == 16 * 8 * 4


def test_grid_roundtrip(tmp_path):
    vals = np.random.default_rng(0).normal(size=(16, 16, 16)).astype(np.float32)
    raw, side = write_grid(SdfGrid(16, vals), tmp_path / "g")
    back = read_grid(tmp_path / "g")
    np.testing.assert_array_equal(back.values, vals)
    # x varies fastest on disk
    flat = np.frombuffer(raw.read_bytes(), "<f4")
    assert flat[1] == vals[1, 0, 0]


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-0.99, 0.99), min_size=3, max_size=3))
def test_trilinear_reproduces_linear_fields(p):
    n = 16
    c = -1 + (np.arange(n) + 0.5) * 2.0 / n
    x, y, z = np.meshgrid(c, c, c, indexing="ij")
    grid = SdfGrid(n, (2 * x - y + 0.5 * z + 0.25).astype(np.float64))
    lo, hi = c[0], c[-1]
    q = np.clip(np.array([p]), lo, hi)
    expect = 2 * q[0, 0] - q[0, 1] + 0.5 * q[0, 2] + 0.25
    assert grid.trilinear(q)[0] == pytest.approx(expect, abs=1e-9)


def test_voxelize_solid_box_and_dilation():
    n = 32
    h = 2.0 / n
    occ = voxelize_solid(box_mesh((0, 0, 0), (4 * h, 4 * h, 4 * h)), n)
    assert occ.count() == 64
    d = occ.dilate(1)
    assert d.count() == 6 ** 3
    assert occ.iou(d) == pytest.approx(64 / 216)
    assert Occupancy(occ.lo, occ.mask, n).union(d).count() == 216


def test_index_range_clips():
    a, b = index_range([-2, -2, -2], [2, 2, 2], 16, margin=3)
    assert a.tolist() == [0, 0, 0] and b.tolist() == [16, 16, 16]
