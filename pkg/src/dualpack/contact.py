"""Part-contact graph: dilated voxel occupancy overlap, weighted by voxel
penetration depth."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .voxel import Occupancy, voxelize_solid

logger = logging.getLogger(__name__)

MIN_CONTACT_RESOLUTION = 16


@dataclass
class ContactGraph:
    """Vertices are part groups (index = vertex id); edges are ``(u, v, w)``
    with ``u < v`` and ``w`` the penetration depth in voxel units."""

    vertex_parts: list[list[int]]
    edges: list[tuple[int, int, float]] = field(default_factory=list)
    dilation_voxels: int = 1
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        norm = {}
        for u, v, w in self.edges:
            u, v, w = int(u), int(v), float(w)
            if u == v:
                raise ValueError(f"self-loop on vertex {u}")
            if not np.isfinite(w) or w < 0:
                raise ValueError(f"edge ({u}, {v}) has invalid weight {w}")
            key = (min(u, v), max(u, v))
            norm[key] = max(w, norm.get(key, w))
        self.edges = sorted((u, v, w) for (u, v), w in norm.items())
        n = len(self.vertex_parts)
        if any(v >= n or u < 0 for u, v, _ in self.edges):
            raise ValueError("edge endpoint out of range")

    @classmethod
    def from_edges(cls, n: int, edges, **kw) -> "ContactGraph":
        return cls([[k] for k in range(n)], list(edges), **kw)

    @property
    def n_vertices(self) -> int:
        return len(self.vertex_parts)

    def weight(self, u: int, v: int) -> float | None:
        key = (min(u, v), max(u, v))
        for a, b, w in self.edges:
            if (a, b) == key:
                return w
        return None

    def adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for u, v, _ in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        for a in adj:
            a.sort()
        return adj

    def to_dict(self) -> dict:
        return {
            "vertices": [{"id": k, "parts": list(map(int, p))} for k, p in enumerate(self.vertex_parts)],
            "edges": [{"u": u, "v": v, "weight": w} for u, v, w in self.edges],
            "dilation_voxels": self.dilation_voxels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContactGraph":
        verts = sorted(d["vertices"], key=lambda x: x["id"])
        if [v["id"] for v in verts] != list(range(len(verts))):
            raise ValueError("vertex ids must be 0..n-1")
        return cls([list(v["parts"]) for v in verts],
                   [(e["u"], e["v"], e["weight"]) for e in d["edges"]],
                   d.get("dilation_voxels", 1))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_dot(self) -> str:
        lines = ["graph contacts {"]
        for k, p in enumerate(self.vertex_parts):
            lines.append(f'  {k} [label="{k}: {",".join(map(str, p))}"];')
        for u, v, w in self.edges:
            lines.append(f'  {u} -- {v} [label="{w:g}", weight={w:g}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass
class _DilatedPart:
    occ: Occupancy
    depth: np.ndarray


def _dilated_with_depth(solid: Occupancy, voxels: int) -> _DilatedPart:
    dil = solid.dilate(voxels)
    # pad so the complement surrounds the mask inside the crop
    m = np.pad(dil.mask, 1)
    depth = ndimage.distance_transform_cdt(m, metric="taxicab")[1:-1, 1:-1, 1:-1]
    return _DilatedPart(dil, depth.astype(np.int32))


def pair_weight(a: _DilatedPart, b: _DilatedPart) -> float | None:
    lo = np.maximum(a.occ.lo, b.occ.lo)
    hi = np.minimum(a.occ.hi, b.occ.hi)
    if (hi <= lo).any():
        return None
    sa = tuple(slice(lo[i] - a.occ.lo[i], hi[i] - a.occ.lo[i]) for i in range(3))
    sb = tuple(slice(lo[i] - b.occ.lo[i], hi[i] - b.occ.lo[i]) for i in range(3))
    both = a.occ.mask[sa] & b.occ.mask[sb]
    if not both.any():
        return None
    return float(np.minimum(a.depth[sa], b.depth[sb])[both].max())


def build_contact_graph(parts, resolution: int, dilation_voxels: int = 1,
                        occupancies: list[Occupancy] | None = None) -> ContactGraph:
    """Voxelise every part at ``resolution``, dilate by ``dilation_voxels``
    (3x3x3 element) and connect parts whose dilated occupancies intersect.

    Edge weight is the largest, over shared voxels, of the smaller of the two
    city-block depths into each part's dilated occupancy.
    """
    meshes = list(getattr(parts, "parts", parts))
    if not meshes:
        raise ValueError("no parts")
    if resolution < MIN_CONTACT_RESOLUTION:
        raise ValueError(f"resolution {resolution} < {MIN_CONTACT_RESOLUTION}")
    if occupancies is None:
        occupancies = [voxelize_solid(m, resolution) for m in meshes]
    degenerate = [k for k, o in enumerate(occupancies) if o.empty()]
    for k in degenerate:
        logger.warning("part %d occupies no voxels at resolution %d; it gets no edges", k, resolution)
    dil = [None if o.empty() else _dilated_with_depth(o, dilation_voxels) for o in occupancies]
    edges = []
    n = len(meshes)
    for i in range(n):
        if dil[i] is None:
            continue
        for j in range(i + 1, n):
            if dil[j] is None:
                continue
            w = pair_weight(dil[i], dil[j])
            if w is not None:
                edges.append((i, j, w))
    g = ContactGraph([[k] for k in range(n)], edges, dilation_voxels)
    g.diagnostics = {"degenerate_parts": degenerate, "resolution": resolution,
                     "voxel_counts": [o.count() for o in occupancies]}
    return g
