"""Per-object pipeline and batch runner.

Run directory layout::

    run.json                     effective config, object list, summary
    <object_id>/manifest.json    deterministic description of every result
    <object_id>/report.json      curation report with stage timings
    <object_id>/parts/           vol{v}_part{k}.obj and a part index
    <object_id>/vol{v}.obj       watertight volume mesh
    <object_id>/vol{v}_samples.bin/.json
"""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import hashlib
import json
import logging
import multiprocessing as mp
import os
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

from . import curation, sampling
from .contact import build_contact_graph
from .contraction import contract_to_bipartite
from .field import compute_sdf_grid, marching_cubes, write_grid
from .mesh_io import (MeshError, boundary_edge_count, euler_characteristic, load_object,
                      save_part_meshes, write_json, write_obj)
from .packing import assign_volumes
from .parts import MergeConfig, extract_parts, merge_rules, repair_parts

logger = logging.getLogger(__name__)

WORKERS_ENV = "DUALPACK_WORKERS"
MESH_SUFFIXES = (".glb", ".obj")
EXIT_KEPT = 0
EXIT_ERROR = 1
EXIT_FILTERED = 3
# fields that describe where/how a run executes rather than what it computes
_RUNTIME_FIELDS = ("output_dir", "workers")


@dataclass
class PipelineConfig:
    resolution: int = 512
    edge_limit: int = 100
    max_cycles: int = 2_000_000
    dilation_voxels: int = 1
    dihedral_threshold: float = sampling.DIHEDRAL_THRESHOLD
    small_face_count: int = 10
    small_diagonal_voxels: float = 2.0
    iou_threshold: float = 0.9
    surface_count: int = sampling.SURFACE_COUNT
    salient_count: int = sampling.SALIENT_COUNT
    sdf_counts: list[int] = field(default_factory=lambda: list(sampling.SDF_COUNTS))
    noise_sigma: float = sampling.NOISE_SIGMA
    seed: int = 0
    write_grids: bool = False
    write_ply: bool = False
    output_dir: str = "runs"
    workers: int | None = None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg = cls(**d)
        cfg.sdf_counts = list(cfg.sdf_counts)
        return cfg

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def save(self, path) -> None:
        write_json(self.to_dict(), path)

    def provenance(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in _RUNTIME_FIELDS}

    def merge_config(self) -> MergeConfig:
        return MergeConfig(self.resolution, self.small_face_count, self.small_diagonal_voxels,
                           self.iou_threshold, self.dilation_voxels)


class PipelineError(RuntimeError):
    def __init__(self, stage: str, object_id: str, cause: BaseException):
        super().__init__(f"[{object_id}] stage '{stage}' failed: {type(cause).__name__}: {cause}")
        self.stage = stage
        self.object_id = object_id
        self.cause = cause


def derive_seed(seed: int, *keys) -> int:
    """Stable 63-bit seed from the run seed and object-specific keys."""
    text = ":".join(str(k) for k in (seed, *keys))
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "little") >> 1


class _Stages:
    """Runs named stages, recording wall time and wrapping failures."""

    def __init__(self, object_id: str):
        self.object_id = object_id
        self.timing: dict[str, float] = {}

    def __call__(self, name, fn, /, *args, **kw):
        t = time.perf_counter()
        try:
            return fn(*args, **kw)
        except PipelineError:
            raise
        except Exception as exc:
            raise PipelineError(name, self.object_id, exc) from exc
        finally:
            self.timing[name] = self.timing.get(name, 0.0) + time.perf_counter() - t


def _volume_outputs(v, meshes, cfg, object_id, obj_dir, stage):
    grid = stage("field", compute_sdf_grid, meshes, cfg.resolution)
    info = {"parts": None, "occupancy_ratio": grid.occupancy_ratio}
    if cfg.write_grids:
        stage("write", write_grid, grid, obj_dir / f"vol{v}_grid")
        info["grid"] = f"vol{v}_grid.f32"
    mesh = stage("marching_cubes", marching_cubes, grid)
    if mesh.n_faces == 0:
        info.update(mesh=None, samples=None)
        return info
    stage("write", write_obj, mesh, obj_dir / f"vol{v}.obj", name=f"vol{v}")
    info["mesh"] = f"vol{v}.obj"
    info["mesh_stats"] = {"faces": int(mesh.n_faces), "euler": euler_characteristic(mesh),
                          "boundary_edges": boundary_edge_count(mesh)}
    samples = stage("sample", sampling.sample_volume, grid, mesh, derive_seed(cfg.seed, object_id, v),
                    cfg.surface_count, cfg.salient_count, tuple(cfg.sdf_counts), cfg.noise_sigma,
                    cfg.dihedral_threshold)
    stage("write", sampling.write_samples, samples, obj_dir / f"vol{v}_samples")
    if cfg.write_ply:
        s = samples.uniform_surface
        stage("write", sampling.write_ply, s[:, :3], obj_dir / f"vol{v}_surface.ply", s[:, 3:])
    info["samples"] = f"vol{v}_samples.bin"
    info["salient_fallback"] = samples.meta["salient_fallback"]
    return info


def run_pack(input_path, config: PipelineConfig | None = None, out_dir=None,
             object_id: str | None = None) -> curation.CurationReport:
    """Full pipeline for one mesh file; writes ``out_dir/<object_id>/``.

    Filtered-out objects still get every artifact (``kept = false``).
    Raises PipelineError naming the failing stage.
    """
    cfg = config or PipelineConfig()
    input_path = Path(input_path)
    object_id = object_id or input_path.stem
    run_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    obj_dir = run_dir / object_id
    stage = _Stages(object_id)
    stage("setup", obj_dir.mkdir, parents=True, exist_ok=True)

    obj = stage("load", load_object, input_path)
    ps = stage("extract", extract_parts, obj)
    n_extracted = len(ps)
    ps = stage("merge", merge_rules, ps, cfg.merge_config())
    repair_diag: dict = {}
    ps = stage("repair", repair_parts, ps, repair_diag)
    graph = stage("contact", build_contact_graph, ps, cfg.resolution, cfg.dilation_voxels)
    plan = stage("contract", contract_to_bipartite, graph, cfg.edge_limit, cfg.max_cycles)
    assignment = stage("assign", assign_volumes, graph, plan, graph.diagnostics["voxel_counts"])
    part_volumes = assignment.part_volumes()

    volumes = {}
    for v in (0, 1):
        meshes = [m for m, pv in zip(ps.parts, part_volumes) if pv == v]
        info = _volume_outputs(v, meshes, cfg, object_id, obj_dir, stage)
        info["parts"] = [k for k, pv in enumerate(part_volumes) if pv == v]
        volumes[str(v)] = info

    o1, o2 = volumes["0"]["occupancy_ratio"], volumes["1"]["occupancy_ratio"]
    report = stage("curate", curation.curate, object_id, o1, o2, len(ps))
    parts_manifest = stage("write", save_part_meshes, ps, assignment, obj_dir / "parts",
                           obj.normalization())
    manifest = {
        "object_id": object_id,
        "source": input_path.name,
        "config": cfg.provenance(),
        "normalization": obj.normalization(),
        "load_diagnostics": obj.diagnostics,
        "parts": {
            "extracted": n_extracted,
            "final": len(ps),
            "sources": ps.sources,
            "provenance": ps.provenance,
            "merge_log": [list(e) for e in ps.merge_log],
            "repair": repair_diag.get("repair", []),
            "files": parts_manifest["parts"],
        },
        "contact_graph": dict(graph.to_dict(), degenerate_parts=graph.diagnostics["degenerate_parts"],
                              voxel_counts=graph.diagnostics["voxel_counts"]),
        "contraction": plan.to_dict(),
        "assignment": assignment.to_dict(),
        "volumes": volumes,
        "curation": {"o1": o1, "o2": o2, "kept": report.kept, "reason": report.reason,
                     "part_count": report.part_count},
    }
    write_json(manifest, obj_dir / "manifest.json")
    report.timing = {k: round(v, 6) for k, v in stage.timing.items()}
    write_json(report.to_dict(), obj_dir / "report.json")
    return report


def write_run_json(run_dir, cfg: PipelineConfig, reports, failures, inputs) -> dict:
    summary = curation.dataset_stats(reports) if reports else None
    run = {
        "config": cfg.provenance(),
        "inputs": sorted(inputs),
        "objects": [r.object_id for r in sorted(reports, key=lambda r: r.object_id)],
        "failures": sorted(failures, key=lambda f: f["object_id"]),
        "summary": summary,
    }
    write_json(run, Path(run_dir) / "run.json")
    return run


def _pack_worker(path: str, cfg_dict: dict, run_dir: str):
    logging.basicConfig(level=logging.WARNING)
    cfg = PipelineConfig.from_dict(cfg_dict)
    try:
        return "ok", run_pack(path, cfg, run_dir).to_dict()
    except PipelineError as exc:
        return "error", {"object_id": exc.object_id, "stage": exc.stage, "error": str(exc)}
    except Exception as exc:  # never let one object take the batch down
        return "error", {"object_id": Path(path).stem, "stage": "unknown",
                         "error": f"{type(exc).__name__}: {exc}", "traceback": traceback.format_exc()}


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    return max(1, int(env)) if env else 1


def list_inputs(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"{d} is not a directory")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in MESH_SUFFIXES and p.is_file())
    if not files:
        raise ValueError(f"no {'/'.join(MESH_SUFFIXES)} files in {d}")
    stems = [p.stem for p in files]
    if len(set(stems)) != len(stems):
        raise ValueError("input files must have distinct stems (they name the output folders)")
    return files


def run_batch(directory, config: PipelineConfig | None = None, out_dir=None,
              workers: int | None = None) -> dict:
    """Run every mesh in ``directory``; failures are recorded, not raised.

    Returns the run record (also written to ``run.json``).
    """
    cfg = config or PipelineConfig()
    files = list_inputs(directory)
    run_dir = Path(out_dir if out_dir is not None else cfg.output_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    workers = workers or cfg.workers or default_workers()
    cfg_dict = cfg.to_dict()
    results = []
    if workers <= 1:
        results = [_pack_worker(str(p), cfg_dict, str(run_dir)) for p in files]
    else:
        ctx = mp.get_context("spawn")
        with cf.ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
            futs = {pool.submit(_pack_worker, str(p), cfg_dict, str(run_dir)): p for p in files}
            for fut in cf.as_completed(futs):
                try:
                    results.append(fut.result())
                except Exception as exc:  # worker died
                    results.append(("error", {"object_id": futs[fut].stem, "stage": "worker",
                                              "error": f"{type(exc).__name__}: {exc}"}))
    reports = [curation.CurationReport.from_dict(r) for kind, r in results if kind == "ok"]
    failures = [r for kind, r in results if kind == "error"]
    for f in failures:
        logger.error("object %s failed in stage %s: %s", f["object_id"], f["stage"], f["error"])
    return write_run_json(run_dir, cfg, reports, failures, [p.name for p in files])


__all__ = ["PipelineConfig", "PipelineError", "run_pack", "run_batch", "derive_seed",
           "EXIT_KEPT", "EXIT_FILTERED", "EXIT_ERROR", "MeshError"]
