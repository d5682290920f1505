"""Surface, salient-edge and point-SDF samples of a watertight volume mesh.

Binary layout (little-endian float32, one file per volume): the sections
``uniform_surface`` (n x 6: xyz, normal), ``salient_edge`` (n x 6),
``sdf_uniform``, ``sdf_near_surface``, ``sdf_near_salient`` (n x 4: xyz,
value), concatenated in that order. The JSON sidecar records counts, float
offsets, seed, noise sigma, dihedral threshold and the fallback flag.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .field import SdfGrid, exact_distance
from .mesh_io import TriangleMesh

SURFACE_COUNT = 32768
SALIENT_COUNT = 16384
SDF_COUNTS = (65536, 32768, 32768)
NOISE_SIGMA = 0.01
DIHEDRAL_THRESHOLD = 165.0

SECTIONS = (("uniform_surface", 6), ("salient_edge", 6), ("sdf_uniform", 4),
            ("sdf_near_surface", 4), ("sdf_near_salient", 4))


class EmptyMeshError(ValueError):
    pass


@dataclass
class SampleSet:
    uniform_surface: np.ndarray
    salient_edge: np.ndarray
    sdf_uniform: np.ndarray
    sdf_near_surface: np.ndarray
    sdf_near_salient: np.ndarray
    meta: dict = field(default_factory=dict)

    def sections(self):
        for name, _ in SECTIONS:
            yield name, getattr(self, name)


def _check(mesh: TriangleMesh):
    if mesh.n_faces == 0:
        raise EmptyMeshError("cannot sample an empty mesh")


def sample_surface_uniform(mesh: TriangleMesh, n: int, rng: np.random.Generator):
    """Area-weighted faces, uniform barycentric points, face normals.

    Returns ``(points, normals, face_ids)``.
    """
    _check(mesh)
    area = mesh.face_areas()
    total = area.sum()
    if total <= 0:
        raise EmptyMeshError("mesh has zero surface area")
    fid = rng.choice(mesh.n_faces, size=n, p=area / total)
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    t = mesh.triangles[fid]
    pts = ((1 - r1)[:, None] * t[:, 0] + (r1 * (1 - r2))[:, None] * t[:, 1]
           + (r1 * r2)[:, None] * t[:, 2])
    return pts, mesh.face_normals()[fid], fid


def salient_edges(mesh: TriangleMesh, angle_threshold: float = DIHEDRAL_THRESHOLD):
    """Interior edges whose dihedral angle (180 = flat) is below the threshold.

    Returns ``(endpoints (k, 2, 3), bisector normals (k, 3))``.
    """
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    owner = np.tile(np.arange(len(f)), 3)
    key = np.sort(e, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    key, owner = key[order], owner[order]
    # interior = exactly two incident faces
    start = np.flatnonzero(np.r_[True, (key[1:] != key[:-1]).any(axis=1)])
    counts = np.diff(np.r_[start, len(key)])
    first = start[counts == 2]
    nrm = mesh.face_normals()
    n1, n2 = nrm[owner[first]], nrm[owner[first + 1]]
    dihedral = 180.0 - np.degrees(np.arccos(np.clip((n1 * n2).sum(axis=1), -1.0, 1.0)))
    sel = dihedral < angle_threshold
    bis = n1[sel] + n2[sel]
    bis /= np.maximum(np.linalg.norm(bis, axis=1, keepdims=True), 1e-300)
    return mesh.positions[key[first[sel]]], bis


def sample_salient_edges(mesh: TriangleMesh, n: int, rng: np.random.Generator,
                         angle_threshold: float = DIHEDRAL_THRESHOLD, uniform=None):
    """Length-weighted points on salient edges with bisector normals.

    Without salient edges, falls back to a random subsample of uniform surface
    samples (``uniform`` = ``(points, normals)``, drawn here if omitted).
    Returns ``(points, normals, fallback)``.
    """
    _check(mesh)
    ends, bis = salient_edges(mesh, angle_threshold)
    length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1) if len(ends) else np.zeros(0)
    if length.sum() <= 0:
        if uniform is None:
            uniform = sample_surface_uniform(mesh, n, rng)[:2]
        pts, nrm = uniform
        idx = rng.choice(len(pts), size=n, replace=n > len(pts))
        return pts[idx], nrm[idx], True
    eid = rng.choice(len(ends), size=n, p=length / length.sum())
    t = rng.random(n)[:, None]
    pts = (1 - t) * ends[eid, 0] + t * ends[eid, 1]
    return pts, bis[eid], False


def sdf_values(grid: SdfGrid, mesh: TriangleMesh, points) -> np.ndarray:
    """Exact distance to ``mesh`` signed by the interpolated grid."""
    d = exact_distance(mesh, points)
    sign = np.where(grid.trilinear(points) < 0, -1.0, 1.0)
    return sign * d


def sample_sdf_pairs(grid: SdfGrid, mesh: TriangleMesh, salient_points, counts=SDF_COUNTS,
                     rng: np.random.Generator | None = None, sigma: float = NOISE_SIGMA):
    """Uniform-in-cube, near-surface and near-salient point/value pairs
    (isotropic Gaussian offsets), each returned as an ``(n, 4)`` array."""
    rng = np.random.default_rng(0) if rng is None else rng
    n_u, n_s, n_e = counts
    pu = rng.uniform(-1.0, 1.0, size=(n_u, 3))
    ps = sample_surface_uniform(mesh, n_s, rng)[0] + rng.normal(0.0, sigma, size=(n_s, 3))
    sal = np.asarray(salient_points)
    pe = sal[rng.integers(0, len(sal), size=n_e)] + rng.normal(0.0, sigma, size=(n_e, 3))
    out = []
    for p in (pu, np.clip(ps, -1, 1), np.clip(pe, -1, 1)):
        out.append(np.column_stack([p, sdf_values(grid, mesh, p)]))
    return tuple(out)


def sample_volume(grid: SdfGrid, mesh: TriangleMesh, seed: int, surface_count: int = SURFACE_COUNT,
                  salient_count: int = SALIENT_COUNT, sdf_counts=SDF_COUNTS,
                  sigma: float = NOISE_SIGMA, angle_threshold: float = DIHEDRAL_THRESHOLD) -> SampleSet:
    """Every sample family for one volume from a single seeded stream."""
    rng = np.random.default_rng(seed)
    up, un, _ = sample_surface_uniform(mesh, surface_count, rng)
    sp, sn, fallback = sample_salient_edges(mesh, salient_count, rng, angle_threshold, uniform=(up, un))
    su, ss, se = sample_sdf_pairs(grid, mesh, sp, sdf_counts, rng, sigma)
    meta = {"seed": int(seed), "sigma": sigma, "dihedral_threshold": angle_threshold,
            "salient_fallback": bool(fallback)}
    return SampleSet(np.column_stack([up, un]), np.column_stack([sp, sn]), su, ss, se, meta)


def write_samples(samples: SampleSet, path) -> tuple[Path, Path]:
    path = Path(path)
    raw = path.with_suffix(".bin")
    side = path.with_suffix(".json")
    offsets, counts, chunks, off = {}, {}, [], 0
    for name, width in SECTIONS:
        arr = np.ascontiguousarray(getattr(samples, name), dtype="<f4").reshape(-1, width)
        offsets[name] = off
        counts[name] = len(arr)
        off += arr.size
        chunks.append(arr.tobytes())
    raw.write_bytes(b"".join(chunks))
    widths = {name: w for name, w in SECTIONS}
    meta = dict(samples.meta, file=raw.name, dtype="float32-le", counts=counts,
                float_offsets=offsets, widths=widths)
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return raw, side


def read_samples(path) -> SampleSet:
    side = Path(path).with_suffix(".json")
    meta = json.loads(side.read_text(encoding="utf-8"))
    data = np.frombuffer((side.parent / meta["file"]).read_bytes(), dtype="<f4")
    arrays = {}
    for name, width in SECTIONS:
        o, c = meta["float_offsets"][name], meta["counts"][name]
        arrays[name] = data[o:o + c * width].reshape(c, width).copy()
    keep = {k: meta[k] for k in ("seed", "sigma", "dihedral_threshold", "salient_fallback") if k in meta}
    return SampleSet(meta=keep, **arrays)


def write_ply(points, path, normals=None, values=None) -> None:
    """ASCII PLY point cloud for inspection."""
    points = np.asarray(points)
    props = ["x", "y", "z"]
    cols = [points]
    if normals is not None:
        props += ["nx", "ny", "nz"]
        cols.append(np.asarray(normals))
    if values is not None:
        props.append("value")
        cols.append(np.asarray(values).reshape(-1, 1))
    data = np.hstack(cols)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"ply\nformat ascii 1.0\nelement vertex {len(data)}\n")
        for p in props:
            fh.write(f"property float {p}\n")
        fh.write("end_header\n")
        np.savetxt(fh, data, fmt="%.7g")
