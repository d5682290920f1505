"""Triangle mesh containers, GLB/OBJ loading and writing, and normalisation
into the canonical ``[-0.95, 0.95]^3`` cube."""

from __future__ import annotations

import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

NORMALIZED_HALF_EXTENT = 0.95
DEGENERATE_AREA = 1e-12

GLB_MAGIC = 0x46546C67
_CHUNK_JSON = 0x4E4F534A
_CHUNK_BIN = 0x004E4942
_COMPONENT_DTYPES = {
    5120: np.int8,
    5121: np.uint8,
    5122: np.int16,
    5123: np.uint16,
    5125: np.uint32,
    5126: np.float32,
}
_TYPE_WIDTH = {"SCALAR": 1, "VEC2": 2, "VEC3": 3, "VEC4": 4, "MAT4": 16}


class MeshError(Exception):
    """Base class for mesh loading problems."""


class EmptyGeometryError(MeshError):
    pass


class MeshValidationError(MeshError):
    pass


@dataclass
class TriangleMesh:
    """Indexed triangle mesh.

    Parameters
    ----------
    positions : (n, 3) float64 array
    faces : (m, 3) int64 array of vertex indices
    face_part_id : optional (m,) int array of per-face part labels
    """

    positions: np.ndarray
    faces: np.ndarray
    face_part_id: np.ndarray | None = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if self.face_part_id is not None:
            self.face_part_id = np.asarray(self.face_part_id, dtype=np.int64).reshape(-1)
            if len(self.face_part_id) != len(self.faces):
                raise MeshValidationError("face_part_id length does not match faces")
        if len(self.faces) and (self.faces.min() < 0 or self.faces.max() >= len(self.positions)):
            raise MeshValidationError("face index out of range")

    @property
    def n_faces(self) -> int:
        return len(self.faces)

    @property
    def triangles(self) -> np.ndarray:
        return self.positions[self.faces]

    def face_areas(self) -> np.ndarray:
        t = self.triangles
        return 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)

    def face_normals(self) -> np.ndarray:
        t = self.triangles
        n = np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0])
        norm = np.linalg.norm(n, axis=1, keepdims=True)
        return n / np.where(norm > 0, norm, 1.0)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        used = self.positions[np.unique(self.faces)] if len(self.faces) else self.positions
        return used.min(axis=0), used.max(axis=0)

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges (sorted pairs) and their face counts."""
        e = np.sort(self.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        uniq, counts = np.unique(e, axis=0, return_counts=True)
        return uniq, counts

    def transformed(self, scale: float, translation) -> "TriangleMesh":
        return TriangleMesh(self.positions * scale + np.asarray(translation), self.faces.copy(),
                            None if self.face_part_id is None else self.face_part_id.copy())


def concatenate(meshes) -> TriangleMesh:
    meshes = list(meshes)
    if not meshes:
        return TriangleMesh(np.zeros((0, 3)), np.zeros((0, 3), np.int64))
    offsets = np.cumsum([0] + [len(m.positions) for m in meshes[:-1]])
    pos = np.concatenate([m.positions for m in meshes])
    faces = np.concatenate([m.faces + o for m, o in zip(meshes, offsets)])
    labels = None
    if all(m.face_part_id is not None for m in meshes):
        labels = np.concatenate([m.face_part_id for m in meshes])
    return TriangleMesh(pos, faces, labels)


def euler_characteristic(mesh: TriangleMesh) -> int:
    used = np.unique(mesh.faces)
    edges, _ = mesh.edges()
    return len(used) - len(edges) + len(mesh.faces)


def boundary_edge_count(mesh: TriangleMesh) -> int:
    _, counts = mesh.edges()
    return int((counts == 1).sum())


def nonmanifold_edge_count(mesh: TriangleMesh) -> int:
    _, counts = mesh.edges()
    return int((counts >= 3).sum())


def enclosed_volume(mesh: TriangleMesh) -> float:
    t = mesh.triangles
    return float(np.einsum("ij,ij->i", t[:, 0], np.cross(t[:, 1], t[:, 2])).sum() / 6.0)


@dataclass
class SceneNode:
    name: str
    mesh: TriangleMesh
    transform: np.ndarray = field(default_factory=lambda: np.eye(4))
    parent: int | None = None


@dataclass
class SceneObject:
    """Loaded object: geometry nodes in world coordinates plus the uniform
    normalisation ``p_norm = p * scale + translation`` already applied."""

    nodes: list[SceneNode]
    scale: float = 1.0
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    source: str = ""
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_triangles(self) -> int:
        return sum(n.mesh.n_faces for n in self.nodes)

    def merged(self) -> TriangleMesh:
        return concatenate(
            TriangleMesh(n.mesh.positions, n.mesh.faces, np.full(n.mesh.n_faces, i))
            for i, n in enumerate(self.nodes)
        )

    def normalization(self) -> dict:
        return {"scale": float(self.scale), "translation": [float(x) for x in self.translation]}


def normalization_params(lo, hi, half_extent: float = NORMALIZED_HALF_EXTENT):
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    extent = float((hi - lo).max())
    if not np.isfinite(extent) or extent <= 0:
        raise MeshValidationError("object has zero extent; cannot normalise")
    scale = 2.0 * half_extent / extent
    center = (lo + hi) / 2.0
    return scale, -center * scale


def normalize(obj: SceneObject, half_extent: float = NORMALIZED_HALF_EXTENT) -> SceneObject:
    """Uniformly rescale the whole object so its longest bounding-box axis
    spans ``[-half_extent, half_extent]`` and its box is centred at the origin.

    Parts are never re-centred individually. Returns a new object whose
    recorded scale/translation compose with any earlier normalisation.
    """
    los, his = zip(*(n.mesh.bounds() for n in obj.nodes if n.mesh.n_faces))
    scale, trans = normalization_params(np.min(los, axis=0), np.max(his, axis=0), half_extent)
    if scale == 1.0 and not trans.any():
        nodes = list(obj.nodes)
    else:
        nodes = [SceneNode(n.name, n.mesh.transformed(scale, trans), n.transform, n.parent)
                 for n in obj.nodes]
    return SceneObject(nodes, obj.scale * scale, obj.translation * scale + trans,
                       obj.source, dict(obj.diagnostics))


def clean_faces(positions: np.ndarray, faces: np.ndarray) -> tuple[np.ndarray, int]:
    """Drop faces with repeated indices or area below ``DEGENERATE_AREA``."""
    if len(faces) == 0:
        return faces, 0
    repeated = (faces[:, 0] == faces[:, 1]) | (faces[:, 1] == faces[:, 2]) | (faces[:, 0] == faces[:, 2])
    t = positions[faces]
    area = 0.5 * np.linalg.norm(np.cross(t[:, 1] - t[:, 0], t[:, 2] - t[:, 0]), axis=1)
    keep = ~repeated & (area >= DEGENERATE_AREA)
    return faces[keep], int((~keep).sum())


# ----------------------------------------------------------------------------
# GLB

def _node_matrix(node: dict) -> np.ndarray:
    if "matrix" in node:
        return np.asarray(node["matrix"], dtype=np.float64).reshape(4, 4).T
    t = np.asarray(node.get("translation", [0, 0, 0]), dtype=np.float64)
    x, y, z, w = node.get("rotation", [0, 0, 0, 1])
    s = np.asarray(node.get("scale", [1, 1, 1]), dtype=np.float64)
    r = np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
        [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
        [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
    ])
    m = np.eye(4)
    m[:3, :3] = r * s
    m[:3, 3] = t
    return m


def _read_accessor(gltf: dict, binary: bytes, index: int) -> np.ndarray:
    acc = gltf["accessors"][index]
    if "sparse" in acc:
        raise MeshError("sparse accessors are not supported")
    dtype = np.dtype(_COMPONENT_DTYPES[acc["componentType"]]).newbyteorder("<")
    width = _TYPE_WIDTH[acc["type"]]
    count = acc["count"]
    view = gltf["bufferViews"][acc["bufferView"]]
    if view.get("buffer", 0) != 0:
        raise MeshError("only the embedded GLB buffer is supported")
    offset = view.get("byteOffset", 0) + acc.get("byteOffset", 0)
    stride = view.get("byteStride", 0)
    item = dtype.itemsize * width
    if stride and stride != item:
        raw = np.frombuffer(binary, np.uint8, count=stride * (count - 1) + item, offset=offset)
        rows = np.lib.stride_tricks.as_strided(raw, (count, item), (stride, 1))
        out = np.frombuffer(rows.copy().tobytes(), dtype).reshape(count, width)
    else:
        out = np.frombuffer(binary, dtype, count=count * width, offset=offset).reshape(count, width)
    if acc.get("normalized"):
        raise MeshError("normalized integer positions are not supported")
    return out


def _primitive_faces(mode: int, idx: np.ndarray) -> np.ndarray:
    if mode == 4:
        return idx.reshape(-1, 3)
    if mode == 5:  # strip
        f = [(idx[i], idx[i + 1], idx[i + 2]) if i % 2 == 0 else (idx[i + 1], idx[i], idx[i + 2])
             for i in range(len(idx) - 2)]
        return np.asarray(f, dtype=np.int64).reshape(-1, 3)
    if mode == 6:  # fan
        return np.stack([np.full(len(idx) - 2, idx[0]), idx[1:-1], idx[2:]], axis=1)
    return np.zeros((0, 3), np.int64)


def load_glb(path) -> SceneObject:
    data = Path(path).read_bytes()
    if len(data) < 20:
        raise MeshError(f"{path}: file too short for GLB")
    magic, version, length = struct.unpack_from("<III", data, 0)
    if magic != GLB_MAGIC:
        raise MeshError(f"{path}: not a GLB file")
    if version != 2:
        raise MeshError(f"{path}: unsupported GLB version {version}")
    gltf, binary = None, b""
    off = 12
    while off + 8 <= min(length, len(data)):
        clen, ctype = struct.unpack_from("<II", data, off)
        chunk = data[off + 8: off + 8 + clen]
        if ctype == _CHUNK_JSON:
            gltf = json.loads(chunk.decode("utf-8"))
        elif ctype == _CHUNK_BIN:
            binary = chunk
        off += 8 + clen
    if gltf is None:
        raise MeshError(f"{path}: missing JSON chunk")

    nodes_json = gltf.get("nodes", [])
    scene_idx = gltf.get("scene", 0)
    scenes = gltf.get("scenes") or [{"nodes": list(range(len(nodes_json)))}]
    roots = scenes[scene_idx].get("nodes", [])

    nodes: list[SceneNode] = []
    dropped = 0
    stack = [(r, np.eye(4), None) for r in reversed(roots)]
    while stack:
        ni, parent_m, parent = stack.pop()
        nd = nodes_json[ni]
        world = parent_m @ _node_matrix(nd)
        me = parent
        if "mesh" in nd:
            pos_parts, face_parts, base = [], [], 0
            for prim in gltf["meshes"][nd["mesh"]].get("primitives", []):
                mode = prim.get("mode", 4)
                if mode not in (4, 5, 6):
                    logger.warning("%s: skipping non-triangle primitive (mode %d)", path, mode)
                    continue
                pos = _read_accessor(gltf, binary, prim["attributes"]["POSITION"]).astype(np.float64)
                if "indices" in prim:
                    idx = _read_accessor(gltf, binary, prim["indices"]).reshape(-1).astype(np.int64)
                else:
                    idx = np.arange(len(pos), dtype=np.int64)
                pos_parts.append(pos)
                face_parts.append(_primitive_faces(mode, idx) + base)
                base += len(pos)
            if pos_parts:
                pos = np.concatenate(pos_parts)
                pos = pos @ world[:3, :3].T + world[:3, 3]
                faces = np.concatenate(face_parts)
                if not np.isfinite(pos).all():
                    raise MeshValidationError(f"{path}: non-finite vertex coordinates")
                faces, nd_drop = clean_faces(pos, faces)
                dropped += nd_drop
                me = len(nodes)
                nodes.append(SceneNode(nd.get("name", f"node{ni}"), TriangleMesh(pos, faces), world, parent))
        for child in reversed(nd.get("children", [])):
            stack.append((child, world, me))
    return SceneObject(nodes, source=str(path), diagnostics={"degenerate_faces_dropped": dropped})


def save_glb(obj_or_meshes, path, names=None) -> None:
    """Write meshes as separate geometry nodes of a GLB scene (float32 positions,
    uint32 indices, identity transforms)."""
    if isinstance(obj_or_meshes, SceneObject):
        meshes = [n.mesh for n in obj_or_meshes.nodes]
        names = names or [n.name for n in obj_or_meshes.nodes]
    else:
        meshes = list(obj_or_meshes)
    names = names or [f"part{i}" for i in range(len(meshes))]
    blob = bytearray()
    views, accessors, gl_meshes, gl_nodes = [], [], [], []
    for i, m in enumerate(meshes):
        pos = np.ascontiguousarray(m.positions, dtype="<f4")
        idx = np.ascontiguousarray(m.faces.reshape(-1), dtype="<u4")
        for arr, target in ((pos, 34962), (idx, 34963)):
            while len(blob) % 4:
                blob.append(0)
            views.append({"buffer": 0, "byteOffset": len(blob), "byteLength": arr.nbytes, "target": target})
            blob.extend(arr.tobytes())
        accessors.append({"bufferView": 2 * i, "componentType": 5126, "count": len(pos), "type": "VEC3",
                          "min": pos.min(axis=0).tolist() if len(pos) else [0, 0, 0],
                          "max": pos.max(axis=0).tolist() if len(pos) else [0, 0, 0]})
        accessors.append({"bufferView": 2 * i + 1, "componentType": 5125, "count": len(idx), "type": "SCALAR"})
        gl_meshes.append({"primitives": [{"attributes": {"POSITION": 2 * i}, "indices": 2 * i + 1, "mode": 4}]})
        gl_nodes.append({"name": names[i], "mesh": i})
    while len(blob) % 4:
        blob.append(0)
    gltf = {
        "asset": {"version": "2.0", "generator": "dualpack"},
        "scene": 0,
        "scenes": [{"nodes": list(range(len(gl_nodes)))}],
        "nodes": gl_nodes,
        "meshes": gl_meshes,
        "accessors": accessors,
        "bufferViews": views,
        "buffers": [{"byteLength": len(blob)}],
    }
    js = json.dumps(gltf, separators=(",", ":")).encode("utf-8")
    js += b" " * (-len(js) % 4)
    total = 12 + 8 + len(js) + 8 + len(blob)
    out = struct.pack("<III", GLB_MAGIC, 2, total)
    out += struct.pack("<II", len(js), _CHUNK_JSON) + js
    out += struct.pack("<II", len(blob), _CHUNK_BIN) + bytes(blob)
    Path(path).write_bytes(out)


# ----------------------------------------------------------------------------
# OBJ

def load_obj(path) -> SceneObject:
    """Read ``v``/``f`` records; ``o`` statements start new nodes. Polygons
    are fan-triangulated, negative (relative) indices are honoured."""
    positions: list[list[float]] = []
    groups: list[tuple[str, list]] = []
    current: list = []
    name = Path(path).stem
    try:
        text = Path(path).read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        raise MeshError(f"{path}: {exc}") from exc
    for lineno, line in enumerate(text.splitlines(), 1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        tag = parts[0]
        try:
            if tag == "v":
                positions.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                idx = []
                for tok in parts[1:]:
                    k = int(tok.split("/")[0])
                    idx.append(k - 1 if k > 0 else len(positions) + k)
                for a in range(1, len(idx) - 1):
                    current.append((idx[0], idx[a], idx[a + 1]))
            elif tag == "o":
                if current:
                    groups.append((name, current))
                current = []
                name = " ".join(parts[1:]) or f"object{len(groups)}"
        except ValueError as exc:
            raise MeshError(f"{path}:{lineno}: cannot parse {line!r}") from exc
    if current:
        groups.append((name, current))
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    if not np.isfinite(pos).all():
        raise MeshValidationError(f"{path}: non-finite vertex coordinates")
    nodes, dropped = [], 0
    for gname, faces in groups:
        f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
        if len(f) and (f.min() < 0 or f.max() >= len(pos)):
            raise MeshValidationError(f"{path}: face index out of range")
        used, inv = np.unique(f, return_inverse=True)
        f = inv.reshape(-1, 3)
        p = pos[used]
        f, nd_drop = clean_faces(p, f)
        dropped += nd_drop
        nodes.append(SceneNode(gname, TriangleMesh(p, f)))
    return SceneObject(nodes, source=str(path), diagnostics={"degenerate_faces_dropped": dropped})


def write_obj(mesh: TriangleMesh, path, name: str | None = None) -> None:
    """Write an OBJ with 17 significant digits so float64 positions round-trip."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        if name:
            fh.write(f"o {name}\n")
        if len(mesh.positions):
            np.savetxt(fh, mesh.positions, fmt="v %.17g %.17g %.17g")
        if len(mesh.faces):
            np.savetxt(fh, mesh.faces + 1, fmt="f %d %d %d")


def load_object(path, format: str | None = None, normalize_object: bool = True) -> SceneObject:
    """Load a GLB scene or OBJ mesh, bake transforms, drop degenerate faces
    and normalise into the canonical cube.

    ``format`` is ``"glb"`` or ``"obj"``; by default it is sniffed from the
    file header / suffix.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            head = fh.read(4)
    except OSError as exc:
        raise MeshError(f"{path}: {exc}") from exc
    if format is None:
        format = "glb" if head == b"glTF" else "obj"
    if format == "glb":
        obj = load_glb(path)
    elif format == "obj":
        obj = load_obj(path)
    else:
        raise ValueError(f"unknown format {format!r}")
    obj.nodes = [n for n in obj.nodes if n.mesh.n_faces]
    if obj.n_triangles == 0:
        raise EmptyGeometryError(f"{path}: no triangles")
    if obj.diagnostics.get("degenerate_faces_dropped"):
        logger.warning("%s: dropped %d degenerate faces", path, obj.diagnostics["degenerate_faces_dropped"])
    return normalize(obj) if normalize_object else obj


# ----------------------------------------------------------------------------
# part export

def save_part_meshes(parts, assignment, out_dir, normalization: dict | None = None,
                     extra: dict | None = None) -> dict:
    """Write ``vol{v}_part{k}.obj`` per part plus ``manifest.json``.

    ``parts`` is a PartSet (or list of meshes) in the shared object frame;
    ``assignment`` a VolumeAssignment. Returns the manifest dict.
    """
    meshes = list(getattr(parts, "parts", parts))
    if not meshes:
        raise ValueError("empty part set; nothing written")
    volumes = assignment.part_volumes()
    if len(volumes) != len(meshes):
        raise ValueError("assignment does not cover every part")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise MeshError(f"{out}: {exc}") from exc
    files = []
    for k, (m, vol) in enumerate(zip(meshes, volumes)):
        fname = f"vol{vol}_part{k}.obj"
        write_obj(m, out / fname, name=f"part{k}")
        files.append({"part": k, "volume": int(vol), "file": fname,
                      "faces": int(m.n_faces), "group": int(assignment.group_of(k))})
    manifest = {
        "parts": files,
        "volumes": {str(v): [f["part"] for f in files if f["volume"] == v] for v in (0, 1)},
        "contraction": assignment.plan.to_dict(),
        "normalization": normalization,
    }
    if extra:
        manifest.update(extra)
    write_json(manifest, out / "manifest.json")
    return manifest


def write_json(data, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(data, fh, indent=2, sort_keys=True)
        fh.write("\n")
