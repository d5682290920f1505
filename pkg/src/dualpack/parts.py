"""Part extraction from scene nodes or connected components, the three merge
rules, and boundary-loop repair."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .mesh_io import SceneObject, TriangleMesh, concatenate
from .voxel import Occupancy, vertex_occupancy, voxel_size, voxelize_solid

logger = logging.getLogger(__name__)

WELD_EPS = 1e-6
SMALL_FACE_COUNT = 10
SMALL_DIAGONAL_VOXELS = 2.0
IOU_THRESHOLD = 0.9
CAP_MAX_VERTICES = 64
CAP_MAX_RMS = 0.02

RULES = ("shared_boundary_loop", "small_component", "high_iou")


@dataclass
class PartSet:
    """Parts in the shared object frame.

    ``sources[k]`` lists the original (pre-merge) part ids folded into part k,
    always sorted; merge_log entries are ``(a, b, rule)`` with ``a``/``b`` the
    smallest original id of each merged side.
    """

    parts: list[TriangleMesh]
    provenance: list[str]
    sources: list[list[int]] = field(default_factory=list)
    merge_log: list[tuple[int, int, str]] = field(default_factory=list)

    def __post_init__(self):
        if not self.sources:
            self.sources = [[k] for k in range(len(self.parts))]

    def __len__(self):
        return len(self.parts)

    @property
    def total_faces(self) -> int:
        return sum(p.n_faces for p in self.parts)


@dataclass
class BoundaryLoop:
    part_id: int
    indices: np.ndarray
    vertices: np.ndarray

    def __len__(self):
        return len(self.indices)


def _component_labels(faces: np.ndarray, n_vertices: int) -> np.ndarray:
    """Label faces by index-connected component (faces sharing a vertex)."""
    m = len(faces)
    rows = np.repeat(np.arange(m), 3)
    adj = sparse.coo_matrix((np.ones(3 * m), (rows, faces.reshape(-1))), shape=(m, n_vertices)).tocsr()
    # bipartite face/vertex graph
    g = sparse.bmat([[None, adj], [adj.T, None]])
    _, labels = connected_components(g, directed=False)
    face_labels = labels[:m]
    _, dense = np.unique(face_labels, return_inverse=True)
    return dense


def submesh(mesh: TriangleMesh, face_mask) -> TriangleMesh:
    faces = mesh.faces[face_mask]
    used, inv = np.unique(faces, return_inverse=True)
    return TriangleMesh(mesh.positions[used], inv.reshape(-1, 3))


def extract_parts(obj: SceneObject) -> PartSet:
    """One part per geometry node; a single-node object falls back to its
    index-connected components."""
    nodes = [n for n in obj.nodes if n.mesh.n_faces]
    if len(nodes) > 1:
        return PartSet([n.mesh for n in nodes], ["scene_node"] * len(nodes))
    if not nodes:
        raise ValueError("object has no triangles")
    mesh = nodes[0].mesh
    labels = _component_labels(mesh.faces, len(mesh.positions))
    parts = [submesh(mesh, labels == c) for c in range(labels.max() + 1)]
    return PartSet(parts, ["connected_component"] * len(parts))


# ----------------------------------------------------------------------------
# boundary loops

def find_boundary_loops(part: TriangleMesh, part_id: int = 0,
                        diagnostics: dict | None = None) -> list[BoundaryLoop]:
    """Closed cycles of edges incident to exactly one face.

    Edges with three or more incident faces are left out and counted in
    ``diagnostics["nonmanifold_edges"]``; boundary chains that fail to close
    are counted in ``diagnostics["open_chains"]``.
    """
    if part.n_faces == 0:
        return []
    edges, counts = part.edges()
    bnd = edges[counts == 1]
    if diagnostics is not None:
        diagnostics["nonmanifold_edges"] = diagnostics.get("nonmanifold_edges", 0) + int((counts >= 3).sum())
    if len(bnd) == 0:
        return []
    adj: dict[int, list[int]] = defaultdict(list)
    for a, b in bnd:
        adj[int(a)].append(int(b))
        adj[int(b)].append(int(a))
    for v in adj:
        adj[v].sort()
    used: set[tuple[int, int]] = set()
    loops, open_chains = [], 0
    for a, b in bnd:
        a, b = int(a), int(b)
        if (a, b) in used:
            continue
        start = a
        path = [a]
        used.add((a, b))
        used.add((b, a))
        prev, cur = a, b
        closed = False
        while True:
            if cur == start:
                closed = True
                break
            path.append(cur)
            nxt = next((w for w in adj[cur] if (cur, w) not in used), None)
            if nxt is None:
                break
            used.add((cur, nxt))
            used.add((nxt, cur))
            prev, cur = cur, nxt
        if closed and len(path) >= 3:
            idx = np.asarray(path, dtype=np.int64)
            loops.append(BoundaryLoop(part_id, idx, part.positions[idx]))
        else:
            open_chains += 1
    if diagnostics is not None and open_chains:
        diagnostics["open_chains"] = diagnostics.get("open_chains", 0) + open_chains
    return loops


def loops_match(a: np.ndarray, b: np.ndarray, eps: float = WELD_EPS) -> bool:
    """True when every vertex of each loop lies within ``eps`` of a vertex of
    the other (order-free)."""
    if len(a) != len(b):
        return False
    d_ab, _ = cKDTree(b).query(a, distance_upper_bound=eps * 1.000001)
    if not np.isfinite(d_ab).all():
        return False
    d_ba, _ = cKDTree(a).query(b, distance_upper_bound=eps * 1.000001)
    return bool(np.isfinite(d_ba).all())


def _matching_loop_pairs(loops: list[BoundaryLoop], eps: float = WELD_EPS):
    """All index pairs (i, j), i < j, of loops with matching vertex sets."""
    if len(loops) < 2:
        return []
    firsts = np.array([lp.vertices[0] for lp in loops])
    allv = np.concatenate([lp.vertices for lp in loops])
    owner = np.repeat(np.arange(len(loops)), [len(lp) for lp in loops])
    tree = cKDTree(allv)
    pairs = set()
    for i, hits in enumerate(tree.query_ball_point(firsts, eps)):
        for j in sorted({int(owner[h]) for h in hits}):
            if j == i:
                continue
            key = (min(i, j), max(i, j))
            if key in pairs:
                continue
            if loops_match(loops[i].vertices, loops[j].vertices, eps):
                pairs.add(key)
    return sorted(pairs)


# ----------------------------------------------------------------------------
# merge rules

class _UnionFind:
    def __init__(self, n):
        self.p = list(range(n))

    def find(self, x):
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.p[rb] = ra
        return True


@dataclass
class MergeConfig:
    resolution: int = 512
    small_face_count: int = SMALL_FACE_COUNT
    small_diagonal_voxels: float = SMALL_DIAGONAL_VOXELS
    iou_threshold: float = IOU_THRESHOLD
    dilation_voxels: int = 1
    weld_eps: float = WELD_EPS


class _OccupancyCache:
    def __init__(self, cfg: MergeConfig):
        self.cfg = cfg
        self._solid: dict[tuple[int, ...], Occupancy] = {}

    def solid(self, key: tuple[int, ...], mesh: TriangleMesh) -> Occupancy:
        if key not in self._solid:
            occ = voxelize_solid(mesh, self.cfg.resolution)
            if occ.empty():
                occ = vertex_occupancy(mesh, self.cfg.resolution)
            self._solid[key] = occ
        return self._solid[key]

    def dilated(self, key, mesh) -> Occupancy:
        return self.solid(key, mesh).dilate(self.cfg.dilation_voxels)


def _apply_unions(ps: PartSet, uf: _UnionFind, rule: str, pairs) -> PartSet:
    log = list(ps.merge_log)
    for a, b in pairs:
        ra, rb = uf.find(a), uf.find(b)
        if ra == rb:
            continue
        log.append((min(ps.sources[ra][0], ps.sources[rb][0]), max(ps.sources[ra][0], ps.sources[rb][0]), rule))
        uf.union(ra, rb)
    groups: dict[int, list[int]] = defaultdict(list)
    for k in range(len(ps.parts)):
        groups[uf.find(k)].append(k)
    parts, prov, sources = [], [], []
    for root in sorted(groups, key=lambda r: min(ps.sources[r])):
        members = groups[root]
        if len(members) == 1:
            k = members[0]
            parts.append(ps.parts[k])
            prov.append(ps.provenance[k])
            sources.append(ps.sources[k])
        else:
            parts.append(concatenate(ps.parts[k] for k in members))
            prov.append("merged")
            sources.append(sorted(s for k in members for s in ps.sources[k]))
    order = sorted(range(len(parts)), key=lambda k: sources[k][0])
    return PartSet([parts[k] for k in order], [prov[k] for k in order],
                   [sources[k] for k in order], log)


def _rule_shared_loops(ps: PartSet, cfg: MergeConfig) -> PartSet:
    loops = []
    for k, p in enumerate(ps.parts):
        loops.extend(find_boundary_loops(p, part_id=k))
    pairs = []
    for i, j in _matching_loop_pairs(loops, cfg.weld_eps):
        a, b = loops[i].part_id, loops[j].part_id
        if a != b:
            pairs.append((min(a, b), max(a, b)))
    if not pairs:
        return ps
    return _apply_unions(ps, _UnionFind(len(ps.parts)), RULES[0], sorted(set(pairs)))


def _is_small(mesh: TriangleMesh, cfg: MergeConfig) -> bool:
    if mesh.n_faces < cfg.small_face_count:
        return True
    lo, hi = mesh.bounds()
    return float(np.linalg.norm(hi - lo)) < cfg.small_diagonal_voxels * voxel_size(cfg.resolution)


def _rule_small(ps: PartSet, cfg: MergeConfig, cache: _OccupancyCache) -> PartSet:
    if len(ps.parts) < 2:
        return ps
    keys = [tuple(s) for s in ps.sources]
    small = [k for k, p in enumerate(ps.parts) if _is_small(p, cfg)]
    if not small:
        return ps
    uf = _UnionFind(len(ps.parts))
    pairs = []
    for k in small:
        dk = cache.dilated(keys[k], ps.parts[k])
        best, best_ov = None, 0
        for j in range(len(ps.parts)):
            if j == k:
                continue
            ov = dk.intersection_count(cache.dilated(keys[j], ps.parts[j]))
            if ov > best_ov:
                best, best_ov = j, ov
        if best is not None:
            pairs.append((k, best))
    if not pairs:
        return ps
    return _apply_unions(ps, uf, RULES[1], pairs)


def _rule_iou(ps: PartSet, cfg: MergeConfig, cache: _OccupancyCache) -> PartSet:
    n = len(ps.parts)
    if n < 2:
        return ps
    keys = [tuple(s) for s in ps.sources]
    occ = [cache.solid(keys[k], ps.parts[k]) for k in range(n)]
    pairs = []
    for i in range(n):
        for j in range(i + 1, n):
            if (np.minimum(occ[i].hi, occ[j].hi) <= np.maximum(occ[i].lo, occ[j].lo)).any():
                continue
            if occ[i].iou(occ[j]) > cfg.iou_threshold:
                pairs.append((i, j))
    if not pairs:
        return ps
    return _apply_unions(ps, _UnionFind(n), RULES[2], pairs)


def merge_rules(parts: PartSet, config: MergeConfig | None = None, max_rounds: int = 100) -> PartSet:
    """Apply shared-boundary-loop, small-component and high-IoU merges in that
    order, repeating until a full round changes nothing."""
    cfg = config or MergeConfig()
    cache = _OccupancyCache(cfg)
    ps = parts
    for _ in range(max_rounds):
        before = len(ps.parts)
        ps = _rule_shared_loops(ps, cfg)
        ps = _rule_small(ps, cfg, cache)
        ps = _rule_iou(ps, cfg, cache)
        if len(ps.parts) == before:
            return ps
    logger.warning("merge rules did not reach a fixpoint in %d rounds", max_rounds)
    return ps


# ----------------------------------------------------------------------------
# repair

def _loop_direction(mesh: TriangleMesh, idx: np.ndarray) -> int:
    """+1 if the adjacent faces traverse the loop edges in loop order."""
    half = set(map(tuple, mesh.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2).tolist()))
    votes = 0
    for a, b in zip(idx, np.roll(idx, -1)):
        if (int(a), int(b)) in half:
            votes += 1
        elif (int(b), int(a)) in half:
            votes -= 1
    return 1 if votes >= 0 else -1


def _weld(mesh: TriangleMesh, pairs: list[tuple[BoundaryLoop, BoundaryLoop]], eps: float) -> TriangleMesh:
    remap = np.arange(len(mesh.positions))
    for la, lb in pairs:
        _, nearest = cKDTree(la.vertices).query(lb.vertices)
        remap[lb.indices] = la.indices[nearest]
    # resolve chains so every index points at a fixed point
    while True:
        nxt = remap[remap]
        if np.array_equal(nxt, remap):
            break
        remap = nxt
    faces = remap[mesh.faces]
    ok = (faces[:, 0] != faces[:, 1]) & (faces[:, 1] != faces[:, 2]) & (faces[:, 0] != faces[:, 2])
    faces = faces[ok]
    used, inv = np.unique(faces, return_inverse=True)
    return TriangleMesh(mesh.positions[used], inv.reshape(-1, 3))


def plane_rms(points: np.ndarray) -> float:
    c = points - points.mean(axis=0)
    s = np.linalg.svd(c, compute_uv=False)
    return float(s[-1] / np.sqrt(len(points)))


def repair_part(part: TriangleMesh, diagnostics: dict | None = None,
                max_vertices: int = CAP_MAX_VERTICES, max_rms: float = CAP_MAX_RMS,
                eps: float = WELD_EPS) -> TriangleMesh:
    """Weld matching boundary-loop pairs, then cap small near-planar loops with
    a centroid fan. Watertight input is returned unchanged (same object)."""
    loops = find_boundary_loops(part, diagnostics=diagnostics)
    if not loops:
        return part
    mesh = part
    pairs = _matching_loop_pairs(loops, eps)
    if pairs:
        taken: set[int] = set()
        chosen = []
        for i, j in pairs:
            if i in taken or j in taken:
                continue
            taken.update((i, j))
            chosen.append((loops[i], loops[j]))
        mesh = _weld(mesh, chosen, eps)
        loops = find_boundary_loops(mesh)
        if diagnostics is not None:
            diagnostics["welded_loops"] = diagnostics.get("welded_loops", 0) + len(chosen)

    positions = [mesh.positions]
    new_faces = [mesh.faces]
    nxt = len(mesh.positions)
    left_open = []
    for lp in loops:
        n = len(lp)
        rms = plane_rms(lp.vertices)
        if n > max_vertices or rms >= max_rms:
            left_open.append({"vertices": n, "plane_rms": rms})
            continue
        idx = lp.indices if _loop_direction(mesh, lp.indices) < 0 else lp.indices[::-1]
        # cap faces traverse each loop edge opposite to its existing face
        if n == 3:
            new_faces.append(idx[None, :])
            continue
        positions.append(lp.vertices.mean(axis=0)[None, :])
        ring = np.stack([idx, np.roll(idx, -1), np.full(n, nxt)], axis=1)
        new_faces.append(ring)
        nxt += 1
    if diagnostics is not None:
        diagnostics["capped_loops"] = diagnostics.get("capped_loops", 0) + (len(loops) - len(left_open))
        if left_open:
            diagnostics.setdefault("open_loops", []).extend(left_open)
    return TriangleMesh(np.concatenate(positions), np.concatenate(new_faces))


def repair_parts(ps: PartSet, diagnostics: dict | None = None, **kw) -> PartSet:
    per_part = []
    parts = []
    for k, p in enumerate(ps.parts):
        d: dict = {}
        parts.append(repair_part(p, diagnostics=d, **kw))
        per_part.append(d)
    if diagnostics is not None:
        diagnostics["repair"] = per_part
    return PartSet(parts, list(ps.provenance), [list(s) for s in ps.sources], list(ps.merge_log))
