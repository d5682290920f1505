"""Voxel grid over ``[-1, 1]^3`` and cropped per-part solid occupancy.

Voxel ``i`` along an axis covers ``[-1 + i*h, -1 + (i+1)*h]`` with
``h = 2 / N``; its centre is ``-1 + (i + 0.5) * h``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import _accel
from .mesh_io import TriangleMesh

CUBE_3x3 = np.ones((3, 3, 3), dtype=bool)


def voxel_size(resolution: int) -> float:
    return 2.0 / resolution


def passable_threshold(resolution: int) -> float:
    """Half a voxel diagonal: a 6-neighbour step between two voxels both farther
    than this from the surface can never cross it."""
    return math.sqrt(3.0) / 2.0 * voxel_size(resolution)


def index_range(lo, hi, resolution: int, margin: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Half-open voxel index window covering the box ``[lo, hi]`` plus margin."""
    h = voxel_size(resolution)
    a = np.floor((np.asarray(lo) + 1.0) / h).astype(np.int64) - margin
    b = np.floor((np.asarray(hi) + 1.0) / h).astype(np.int64) + 1 + margin
    return np.clip(a, 0, resolution), np.clip(b, 0, resolution)


def box_seeds(shape) -> np.ndarray:
    """All voxel indices on the faces of a box of the given shape."""
    nx, ny, nz = shape
    m = np.zeros(shape, dtype=bool)
    m[[0, -1], :, :] = True
    m[:, [0, -1], :] = True
    m[:, :, [0, -1]] = True
    return np.argwhere(m)


def signed_reachability(mesh: TriangleMesh, resolution: int, lo_idx, shape, seeds=None):
    """Exact UDF on a sub-box of the grid and the outside-reachable mask.

    ``seeds`` defaults to every far voxel on the sub-box boundary.
    """
    lo_idx = np.asarray(lo_idx, dtype=np.int64)
    shape = np.asarray(shape, dtype=np.int64)
    h = voxel_size(resolution)
    thr = passable_threshold(resolution)
    bvh = _accel.BVH(mesh.triangles)
    udf = _accel.grid_udf(lo_idx, shape, h, *bvh.arrays)
    if seeds is None:
        seeds = box_seeds(tuple(shape))
        seeds = seeds[udf[seeds[:, 0], seeds[:, 1], seeds[:, 2]] > thr]
    seeds = np.ascontiguousarray(seeds, dtype=np.int64).reshape(-1, 3)
    reached = _accel.flood_outside(udf, thr, seeds, lo_idx, h, *bvh.arrays)
    return udf, reached


@dataclass
class Occupancy:
    """Boolean voxel mask stored as a crop ``mask`` placed at index ``lo``."""

    lo: np.ndarray
    mask: np.ndarray
    resolution: int

    @property
    def hi(self) -> np.ndarray:
        return self.lo + np.array(self.mask.shape)

    def count(self) -> int:
        return int(self.mask.sum())

    def empty(self) -> bool:
        return not self.mask.any()

    def dilate(self, voxels: int = 1) -> "Occupancy":
        if voxels <= 0 or self.empty():
            return self
        pad = voxels
        m = np.pad(self.mask, pad)
        m = ndimage.binary_dilation(m, structure=CUBE_3x3, iterations=voxels)
        lo = self.lo - pad
        # clip to the grid
        a = np.maximum(-lo, 0)
        b = np.array(m.shape) - np.maximum(lo + np.array(m.shape) - self.resolution, 0)
        m = m[a[0]:b[0], a[1]:b[1], a[2]:b[2]]
        return Occupancy(lo + a, m, self.resolution)

    def window(self, lo, hi) -> np.ndarray:
        """Mask restricted to the global window ``[lo, hi)`` (zero-padded)."""
        lo = np.asarray(lo)
        hi = np.asarray(hi)
        out = np.zeros(tuple(hi - lo), dtype=bool)
        a = np.maximum(lo, self.lo)
        b = np.minimum(hi, self.hi)
        if (b <= a).any():
            return out
        out[a[0] - lo[0]:b[0] - lo[0], a[1] - lo[1]:b[1] - lo[1], a[2] - lo[2]:b[2] - lo[2]] = \
            self.mask[a[0] - self.lo[0]:b[0] - self.lo[0], a[1] - self.lo[1]:b[1] - self.lo[1],
                      a[2] - self.lo[2]:b[2] - self.lo[2]]
        return out

    def intersection_count(self, other: "Occupancy") -> int:
        a = np.maximum(self.lo, other.lo)
        b = np.minimum(self.hi, other.hi)
        if (b <= a).any():
            return 0
        return int((self.window(a, b) & other.window(a, b)).sum())

    def iou(self, other: "Occupancy") -> float:
        inter = self.intersection_count(other)
        union = self.count() + other.count() - inter
        return inter / union if union else 0.0

    def union(self, other: "Occupancy") -> "Occupancy":
        if self.empty():
            return other
        if other.empty():
            return self
        a = np.minimum(self.lo, other.lo)
        b = np.maximum(self.hi, other.hi)
        return Occupancy(a, self.window(a, b) | other.window(a, b), self.resolution)


def voxelize_solid(mesh: TriangleMesh, resolution: int, margin: int = 3) -> Occupancy:
    """Voxels whose centre lies inside the part.

    Inside means not reachable from the crop boundary without crossing the
    surface. Open or sub-voxel-thin parts enclose no centre; they fall back to
    the voxels whose centre is within half a voxel of the surface.
    """
    if mesh.n_faces == 0:
        return Occupancy(np.zeros(3, np.int64), np.zeros((0, 0, 0), bool), resolution)
    lo, hi = mesh.bounds()
    a, b = index_range(lo, hi, resolution, margin)
    udf, reached = signed_reachability(mesh, resolution, a, b - a)
    inside = ~reached
    if not inside.any():
        inside = udf <= 0.5 * voxel_size(resolution)
    if not inside.any():
        return Occupancy(a, np.zeros((0, 0, 0), bool), resolution)
    nz = np.argwhere(inside)
    c0 = nz.min(axis=0)
    c1 = nz.max(axis=0) + 1
    return Occupancy(a + c0, inside[c0[0]:c1[0], c0[1]:c1[1], c0[2]:c1[2]].copy(), resolution)


def vertex_occupancy(mesh: TriangleMesh, resolution: int) -> Occupancy:
    """Voxels containing the mesh vertices; a last resort for parts too small
    to enclose or approach any voxel centre."""
    h = voxel_size(resolution)
    idx = np.clip(np.floor((mesh.positions + 1.0) / h).astype(np.int64), 0, resolution - 1)
    a = idx.min(axis=0)
    b = idx.max(axis=0) + 1
    m = np.zeros(tuple(b - a), dtype=bool)
    rel = idx - a
    m[rel[:, 0], rel[:, 1], rel[:, 2]] = True
    return Occupancy(a, m, resolution)
