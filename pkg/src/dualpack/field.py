"""Signed distance grids from unsigned distance + corner flood fill, and
iso-surface extraction."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from skimage import measure

from . import _accel
from .mesh_io import TriangleMesh, concatenate
from .voxel import signed_reachability, voxel_size

MIN_RESOLUTION = 16
# keeps every voxel strictly signed: an unreachable voxel centred exactly on
# the surface must still count as occupied
_TINY = np.float32(1e-12)


class ResolutionError(ValueError):
    pass


@dataclass
class SdfGrid:
    """Signed distances at the N^3 voxel centres of ``[-1, 1]^3``.

    ``values[i, j, k]`` is indexed x, y, z; positive means empty space.
    """

    resolution: int
    values: np.ndarray

    @property
    def voxel_size(self) -> float:
        return voxel_size(self.resolution)

    @property
    def occupancy_ratio(self) -> float:
        return float(np.count_nonzero(self.values < 0)) / self.values.size

    def centers(self, axis_index) -> np.ndarray:
        return -1.0 + (np.asarray(axis_index) + 0.5) * self.voxel_size

    def trilinear(self, points) -> np.ndarray:
        """Trilinear interpolation of the grid values at arbitrary points;
        coordinates are clamped to the span of voxel centres."""
        n = self.resolution
        f = (np.asarray(points, dtype=np.float64) + 1.0) / self.voxel_size - 0.5
        f = np.clip(f, 0.0, n - 1.0)
        i0 = np.minimum(np.floor(f).astype(np.int64), n - 2)
        t = f - i0
        v = self.values
        out = np.zeros(len(f))
        for dx in (0, 1):
            wx = t[:, 0] if dx else 1.0 - t[:, 0]
            for dy in (0, 1):
                wy = t[:, 1] if dy else 1.0 - t[:, 1]
                for dz in (0, 1):
                    wz = t[:, 2] if dz else 1.0 - t[:, 2]
                    out += wx * wy * wz * v[i0[:, 0] + dx, i0[:, 1] + dy, i0[:, 2] + dz]
        return out


def compute_sdf_grid(parts, resolution: int) -> SdfGrid:
    """Exact UDF at voxel centres, signed by flood fill from voxel ``[0,0,0]``.

    Voxels reached from the corner without crossing the surface are empty
    (positive); the complement is occupied (negative).
    """
    if resolution < MIN_RESOLUTION:
        raise ResolutionError(f"resolution {resolution} < {MIN_RESOLUTION}")
    parts = [parts] if isinstance(parts, TriangleMesh) else list(parts)
    mesh = concatenate([p for p in parts if p.n_faces])
    n = resolution
    if mesh.n_faces == 0:
        return SdfGrid(n, np.full((n, n, n), np.inf, dtype=np.float32))
    udf, reached = signed_reachability(mesh, n, (0, 0, 0), (n, n, n), seeds=np.zeros((1, 3), np.int64))
    udf = np.maximum(udf.astype(np.float32), _TINY)
    values = np.where(reached, udf, -udf)
    return SdfGrid(n, values)


def marching_cubes(grid: SdfGrid, iso: float = 0.0) -> TriangleMesh:
    """Zero level set of the grid as a triangle mesh with outward normals."""
    v = grid.values
    if not np.isfinite(v).any() or not (v < iso).any() or not (v > iso).any():
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    finite = np.where(np.isfinite(v), v, np.float32(4.0))
    h = grid.voxel_size
    verts, faces, _, _ = measure.marching_cubes(finite, level=iso, gradient_direction="descent",
                                                method="lewiner", allow_degenerate=False)
    return TriangleMesh(-1.0 + (verts.astype(np.float64) + 0.5) * h, faces.astype(np.int64))


def exact_distance(mesh: TriangleMesh, points) -> np.ndarray:
    """Exact unsigned distance from each point to the mesh surface."""
    bvh = _accel.BVH(mesh.triangles)
    return _accel.points_udf(np.ascontiguousarray(points, dtype=np.float64), *bvh.arrays)


def write_grid(grid: SdfGrid, path) -> tuple[Path, Path]:
    """Raw little-endian float32 values, x fastest, plus a JSON sidecar."""
    path = Path(path)
    raw = path.with_suffix(".f32")
    side = path.with_suffix(".json")
    raw.write_bytes(np.asarray(grid.values, dtype="<f4").ravel(order="F").tobytes())
    side.write_text(json.dumps({
        "resolution": grid.resolution,
        "bounds": [[-1.0, -1.0, -1.0], [1.0, 1.0, 1.0]],
        "dtype": "float32-le",
        "order": "x-fastest",
        "occupancy_ratio": grid.occupancy_ratio,
        "file": raw.name,
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return raw, side


def read_grid(path) -> SdfGrid:
    side = Path(path).with_suffix(".json")
    meta = json.loads(side.read_text(encoding="utf-8"))
    n = meta["resolution"]
    data = np.frombuffer((side.parent / meta["file"]).read_bytes(), dtype="<f4")
    return SdfGrid(n, data.reshape((n, n, n), order="F").astype(np.float32))
