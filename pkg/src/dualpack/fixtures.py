"""Deterministic synthetic meshes and graphs, and a brute-force contraction
oracle for small graphs.

Box scenes are built already normalised (longest side exactly 1.9, centred at
the origin) so that loading them is an identity transform and overlaps quoted
in voxels survive the trip.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .contact import ContactGraph
from .mesh_io import NORMALIZED_HALF_EXTENT, SceneNode, SceneObject, TriangleMesh, save_glb

DEFAULT_RESOLUTION = 128
ORACLE_MAX_VERTICES = 7

MESH_KINDS = ("boxes_chain", "boxes_K3", "boxes_K4", "nested_cubes", "open_box",
              "seam_split_sphere", "analytic_sphere", "fine_sphere", "torus", "cube",
              "random_boxes", "pebble_on_box")
GRAPH_KINDS = ("random_graph", "random_connected_graph", "cycle", "complete")
KINDS = MESH_KINDS + GRAPH_KINDS

_BOX_FACES = np.array([
    [0, 2, 1], [0, 3, 2],  # z-
    [4, 5, 6], [4, 6, 7],  # z+
    [0, 1, 5], [0, 5, 4],  # y-
    [3, 7, 6], [3, 6, 2],  # y+
    [0, 4, 7], [0, 7, 3],  # x-
    [1, 2, 6], [1, 6, 5],  # x+
], dtype=np.int64)


@dataclass
class FixtureSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}


# ----------------------------------------------------------------------------
# primitives

def box_mesh(lo, hi) -> TriangleMesh:
    """Axis-aligned box with outward-facing triangles."""
    (x0, y0, z0), (x1, y1, z1) = lo, hi
    v = np.array([[x0, y0, z0], [x1, y0, z0], [x1, y1, z0], [x0, y1, z0],
                  [x0, y0, z1], [x1, y0, z1], [x1, y1, z1], [x0, y1, z1]], dtype=np.float64)
    return TriangleMesh(v, _BOX_FACES.copy())


def icosphere(level: int = 4, radius: float = 1.0, center=(0.0, 0.0, 0.0)) -> TriangleMesh:
    """Subdivided icosahedron projected onto the sphere; outward winding."""
    t = (1.0 + math.sqrt(5.0)) / 2.0
    verts = [(-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0), (0, -1, t), (0, 1, t),
             (0, -1, -t), (0, 1, -t), (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1)]
    faces = [(0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11), (1, 5, 9), (5, 11, 4),
             (11, 10, 2), (10, 7, 6), (7, 1, 8), (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8),
             (3, 8, 9), (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1)]
    v = [np.array(p, dtype=np.float64) / np.linalg.norm(p) for p in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def mid(a, b):
            key = (min(a, b), max(a, b))
            if key not in cache:
                m = v[a] + v[b]
                v.append(m / np.linalg.norm(m))
                cache[key] = len(v) - 1
            return cache[key]

        nf = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            nf += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = nf
    pos = np.array(v) * radius + np.asarray(center, dtype=np.float64)
    return TriangleMesh(pos, np.array(faces, dtype=np.int64))


def chord_error(mesh: TriangleMesh, radius: float, center=(0.0, 0.0, 0.0)) -> float:
    """Largest gap between a sphere and the face centroids of its tessellation
    (the deepest point of each face)."""
    c = mesh.triangles.mean(axis=1) - np.asarray(center)
    return float((radius - np.linalg.norm(c, axis=1)).max())


def max_dihedral_deg(mesh: TriangleMesh) -> float:
    """Largest interior dihedral angle (180 = flat) over manifold edges."""
    ang = _edge_dihedrals(mesh)[1]
    return float(ang.max()) if len(ang) else 180.0


def _edge_dihedrals(mesh: TriangleMesh):
    f = mesh.faces
    e = np.concatenate([f[:, [0, 1]], f[:, [1, 2]], f[:, [2, 0]]])
    owner = np.tile(np.arange(len(f)), 3)
    key = np.sort(e, axis=1)
    order = np.lexsort((key[:, 1], key[:, 0]))
    key, owner = key[order], owner[order]
    same = (key[1:] == key[:-1]).all(axis=1)
    first = np.flatnonzero(same)
    n = mesh.face_normals()
    cosang = np.clip((n[owner[first]] * n[owner[first + 1]]).sum(axis=1), -1.0, 1.0)
    return key[first], 180.0 - np.degrees(np.arccos(cosang))


def uv_hemispheres(radius: float = 0.95, n_lat: int = 16, n_lon: int = 32) -> list[TriangleMesh]:
    """Upper and lower closed-at-the-pole hemispheres whose equator rings are
    separate vertex copies at identical positions."""
    out = []
    for sgn in (1.0, -1.0):
        rings = [np.array([[radius * math.sin(th) * math.cos(ph), radius * math.sin(th) * math.sin(ph),
                            sgn * radius * math.cos(th)] for ph in np.linspace(0, 2 * math.pi, n_lon,
                                                                               endpoint=False)])
                 for th in np.linspace(0, math.pi / 2, n_lat + 1)[1:]]
        pos = [np.array([[0.0, 0.0, sgn * radius]])] + rings
        faces = []
        for j in range(n_lon):
            faces.append((0, 1 + j, 1 + (j + 1) % n_lon))
        for r in range(n_lat - 1):
            a0 = 1 + r * n_lon
            b0 = a0 + n_lon
            for j in range(n_lon):
                j1 = (j + 1) % n_lon
                faces.append((a0 + j, b0 + j, b0 + j1))
                faces.append((a0 + j, b0 + j1, a0 + j1))
        f = np.array(faces, dtype=np.int64)
        if sgn < 0:
            f = f[:, ::-1].copy()
        out.append(TriangleMesh(np.vstack(pos), f))
    return out


def torus_mesh(major: float = 0.6, minor: float = 0.25, n_major: int = 64, n_minor: int = 32) -> TriangleMesh:
    u = np.linspace(0, 2 * math.pi, n_major, endpoint=False)
    v = np.linspace(0, 2 * math.pi, n_minor, endpoint=False)
    uu, vv = np.meshgrid(u, v, indexing="ij")
    pos = np.stack([(major + minor * np.cos(vv)) * np.cos(uu),
                    (major + minor * np.cos(vv)) * np.sin(uu),
                    minor * np.sin(vv)], axis=-1).reshape(-1, 3)
    faces = []
    for i in range(n_major):
        for j in range(n_minor):
            a = i * n_minor + j
            b = ((i + 1) % n_major) * n_minor + j
            c = ((i + 1) % n_major) * n_minor + (j + 1) % n_minor
            d = i * n_minor + (j + 1) % n_minor
            faces += [(a, b, c), (a, c, d)]
    return TriangleMesh(pos, np.array(faces, dtype=np.int64))


def bipyramid(center, size: float) -> TriangleMesh:
    """Pentagonal bipyramid: a closed 10-face pebble."""
    ring = [(size * math.cos(2 * math.pi * k / 5), size * math.sin(2 * math.pi * k / 5), 0.0)
            for k in range(5)]
    pos = np.array(ring + [(0, 0, size), (0, 0, -size)], dtype=np.float64) + np.asarray(center)
    faces = [(k, (k + 1) % 5, 5) for k in range(5)] + [((k + 1) % 5, k, 6) for k in range(5)]
    return TriangleMesh(pos, np.array(faces, dtype=np.int64))


# ----------------------------------------------------------------------------
# scenes

def _voxel(resolution: int) -> float:
    return 2.0 / resolution


def boxes_chain(n: int = 5, overlap_voxels: float = 2.0, resolution: int = DEFAULT_RESOLUTION,
                half_width: float = 0.3) -> list[TriangleMesh]:
    """``n`` boxes along x; neighbours overlap by ``overlap_voxels``."""
    e = NORMALIZED_HALF_EXTENT
    ov = overlap_voxels * _voxel(resolution)
    length = (2 * e + (n - 1) * ov) / n
    out = []
    for k in range(n):
        x0 = -e + k * (length - ov)
        out.append(box_mesh((x0, -half_width, -half_width), (x0 + length, half_width, half_width)))
    return out


def boxes_k3(overlap_voxels: float = 2.0, resolution: int = DEFAULT_RESOLUTION,
             half_depth: float = 0.4) -> list[TriangleMesh]:
    """Three slabs overlapping pairwise by ``overlap_voxels``: two lower
    halves meeting in the middle and one upper slab across both."""
    e = NORMALIZED_HALF_EXTENT
    ov = overlap_voxels * _voxel(resolution)
    z = (-half_depth, half_depth)
    return [box_mesh((-e, -e, z[0]), (ov / 2, ov, z[1])),
            box_mesh((-ov / 2, -e, z[0]), (e, ov, z[1])),
            box_mesh((-e, 0.0, z[0]), (e, e, z[1]))]


def boxes_k4(overlap_voxels: float = 2.0, resolution: int = DEFAULT_RESOLUTION) -> list[TriangleMesh]:
    """The three K3 slabs plus a central block touching all of them."""
    c = 0.2
    return boxes_k3(overlap_voxels, resolution) + [box_mesh((-c, -c, -0.5), (c, c, 0.5))]


def nested_cubes(inner_half_width: float = 0.3) -> list[TriangleMesh]:
    e = NORMALIZED_HALF_EXTENT
    r = inner_half_width
    return [box_mesh((-e, -e, -e), (e, e, e)), box_mesh((-r, -r, -r), (r, r, r))]


def open_box() -> list[TriangleMesh]:
    """Cube with its top face (two triangles) removed."""
    e = NORMALIZED_HALF_EXTENT
    b = box_mesh((-e, -e, -e), (e, e, e))
    return [TriangleMesh(b.positions, np.delete(b.faces, [2, 3], axis=0))]


def random_boxes(n: int = 10, seed: int = 0) -> list[TriangleMesh]:
    """``n`` random axis-aligned boxes, rescaled as a whole to the
    normalised cube."""
    rng = np.random.default_rng(seed)
    c = rng.uniform(-0.45, 0.45, size=(n, 3))
    hw = rng.uniform(0.08, 0.3, size=(n, 3))
    lo, hi = c - hw, c + hw
    glo, ghi = lo.min(axis=0), hi.max(axis=0)
    s = 2 * NORMALIZED_HALF_EXTENT / (ghi - glo).max()
    mid = (glo + ghi) / 2
    return [box_mesh((a - mid) * s, (b - mid) * s) for a, b in zip(lo, hi)]


def pebble_on_box(resolution: int = DEFAULT_RESOLUTION) -> list[TriangleMesh]:
    """A box and a pebble whose bounding diagonal is under two voxels, resting
    against the box top."""
    e = NORMALIZED_HALF_EXTENT
    size = 0.5 * _voxel(resolution)
    return [box_mesh((-e, -e, -e), (e, e, 0.0)), bipyramid((0.0, 0.0, 0.0), size)]


# ----------------------------------------------------------------------------
# graphs

def _weights(rng, m, low, high, integer):
    if integer:
        return rng.integers(low, high + 1, size=m).astype(np.float64)
    return rng.uniform(low, high, size=m)


def random_graph(n: int = 6, p: float = 0.5, seed: int = 0, low: float = 1, high: float = 10,
                 integer_weights: bool = True) -> ContactGraph:
    """Erdos-Renyi graph with random positive weights."""
    rng = np.random.default_rng(seed)
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    keep = rng.random(len(pairs)) < p
    w = _weights(rng, len(pairs), low, high, integer_weights)
    return ContactGraph.from_edges(n, [(i, j, w[k]) for k, (i, j) in enumerate(pairs) if keep[k]])


def random_connected_graph(n: int = 12, max_edges: int = 30, seed: int = 0, low: float = 1,
                           high: float = 10, integer_weights: bool = True) -> ContactGraph:
    """Random spanning tree plus random extra edges; at most ``max_edges``."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    edges = set()
    for k in range(1, n):
        a, b = int(perm[k]), int(perm[rng.integers(0, k)])
        edges.add((min(a, b), max(a, b)))
    cap = min(max_edges, n * (n - 1) // 2)
    target = int(rng.integers(len(edges), cap + 1)) if cap > len(edges) else len(edges)
    rest = [(i, j) for i in range(n) for j in range(i + 1, n) if (i, j) not in edges]
    for k in rng.permutation(len(rest))[:target - len(edges)]:
        edges.add(rest[k])
    edges = sorted(edges)
    w = _weights(rng, len(edges), low, high, integer_weights)
    return ContactGraph.from_edges(n, [(i, j, w[k]) for k, (i, j) in enumerate(edges)])


def cycle_graph(n: int, weights=None) -> ContactGraph:
    w = [1.0] * n if weights is None else list(weights)
    return ContactGraph.from_edges(n, [(k, (k + 1) % n, w[k]) for k in range(n)])


def complete_graph(n: int, weight: float = 1.0) -> ContactGraph:
    return ContactGraph.from_edges(n, [(i, j, weight) for i in range(n) for j in range(i + 1, n)])


# ----------------------------------------------------------------------------
# dispatch

def generate_fixture(spec: FixtureSpec):
    """Meshes (list of TriangleMesh, one per scene node) or a ContactGraph."""
    p = dict(spec.params)
    k = spec.kind
    if k == "boxes_chain":
        return boxes_chain(**p)
    if k == "boxes_K3":
        return boxes_k3(**p)
    if k == "boxes_K4":
        return boxes_k4(**p)
    if k == "nested_cubes":
        return nested_cubes(**p)
    if k == "open_box":
        return open_box()
    if k == "seam_split_sphere":
        return [_merge_nodes(uv_hemispheres(**p))]
    if k == "analytic_sphere":
        return [icosphere(p.get("level", 4), p.get("radius", 0.5))]
    if k == "fine_sphere":
        return [icosphere(p.get("level", 5), p.get("radius", 0.5))]
    if k == "torus":
        return [torus_mesh(**p)]
    if k == "cube":
        h = p.get("half_width", 0.5)
        return [box_mesh((-h, -h, -h), (h, h, h))]
    if k == "random_boxes":
        return random_boxes(**p)
    if k == "pebble_on_box":
        return pebble_on_box(**p)
    if k == "random_graph":
        return random_graph(**p)
    if k == "random_connected_graph":
        return random_connected_graph(**p)
    if k == "cycle":
        return cycle_graph(**p)
    if k == "complete":
        return complete_graph(**p)
    raise ValueError(f"unknown fixture kind {k!r}; expected one of {', '.join(KINDS)}")


def _merge_nodes(meshes: list[TriangleMesh]) -> TriangleMesh:
    """One node holding several disconnected vertex sets."""
    pos, faces, off = [], [], 0
    for m in meshes:
        pos.append(m.positions)
        faces.append(m.faces + off)
        off += len(m.positions)
    return TriangleMesh(np.vstack(pos), np.vstack(faces))


def fixture_object(spec: FixtureSpec) -> SceneObject:
    meshes = generate_fixture(spec)
    if isinstance(meshes, ContactGraph):
        raise ValueError(f"{spec.kind} is a graph fixture")
    return SceneObject([SceneNode(f"part{i}", m) for i, m in enumerate(meshes)], source=spec.kind)


def emit_fixture(spec: FixtureSpec, path) -> Path:
    """Write a mesh fixture as GLB or a graph fixture as JSON."""
    path = Path(path)
    out = generate_fixture(spec)
    if isinstance(out, ContactGraph):
        path.write_text(out.to_json() + "\n", encoding="utf-8")
    else:
        save_glb(out, path)
    return path


def default_fixture_set(resolution: int = DEFAULT_RESOLUTION) -> dict[str, FixtureSpec]:
    """Mesh fixtures used for batch and determinism runs."""
    r = {"resolution": resolution}
    return {
        "chain5": FixtureSpec("boxes_chain", r),
        "k3": FixtureSpec("boxes_K3", r),
        "k4": FixtureSpec("boxes_K4", r),
        "nested": FixtureSpec("nested_cubes"),
        "open_box": FixtureSpec("open_box"),
        "seam_sphere": FixtureSpec("seam_split_sphere"),
        "sphere": FixtureSpec("analytic_sphere"),
        "torus": FixtureSpec("torus"),
        "random10": FixtureSpec("random_boxes", {"n": 10, "seed": 0}),
        "pebble": FixtureSpec("pebble_on_box", r),
    }


# ----------------------------------------------------------------------------
# oracle

@dataclass
class OracleResult:
    """Minimum contraction sets of a small graph under both orderings."""

    min_cardinality: int
    cardinality_plans: list[tuple[tuple[int, int], ...]]
    min_weight: float
    weight_plans: list[tuple[tuple[int, int], ...]]


def _contraction_bipartite(n: int, edges: list[tuple[int, int]], subset) -> bool:
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for k in subset:
        a, b = find(edges[k][0]), find(edges[k][1])
        if a != b:
            parent[max(a, b)] = min(a, b)
    adj: dict[int, set[int]] = {}
    for u, v in edges:
        a, b = find(u), find(v)
        if a != b:
            adj.setdefault(a, set()).add(b)
            adj.setdefault(b, set()).add(a)
    color: dict[int, int] = {}
    for s in adj:
        if s in color:
            continue
        color[s] = 0
        stack = [s]
        while stack:
            x = stack.pop()
            for y in adj[x]:
                if y not in color:
                    color[y] = 1 - color[x]
                    stack.append(y)
                elif color[y] == color[x]:
                    return False
    return True


def brute_force_min_contraction(g: ContactGraph, max_vertices: int = ORACLE_MAX_VERTICES) -> OracleResult:
    """Exhaustive search over edge subsets in increasing size.

    Returns every minimum-cardinality subset whose contraction is bipartite,
    and every minimum-total-weight one. Positive weights make the lightest
    plans forests, so subsets beyond ``|V| - 2`` edges are never needed.
    """
    if g.n_vertices > max_vertices:
        raise ValueError(f"{g.n_vertices} vertices exceeds oracle limit {max_vertices}")
    edges = [(u, v) for u, v, _ in g.edges]
    w = [x for _, _, x in g.edges]
    n = g.n_vertices
    card, card_plans = None, []
    best_w, w_plans = math.inf, []
    for k in range(0, max(n - 1, 1)):
        for sub in itertools.combinations(range(len(edges)), k):
            tw = sum(w[i] for i in sub)
            if card is not None and k > card and tw > best_w + 1e-12:
                continue
            if not _contraction_bipartite(n, edges, sub):
                continue
            plan = tuple(edges[i] for i in sub)
            if card is None or card == k:
                card = k
                card_plans.append(plan)
            if tw < best_w - 1e-12:
                best_w, w_plans = tw, [plan]
            elif abs(tw - best_w) <= 1e-12:
                w_plans.append(plan)
    return OracleResult(card, card_plans, best_w, w_plans)
