"""Command-line entry point: ``dualpack <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import curation, fixtures, pipeline, sampling
from .contact import ContactGraph, build_contact_graph
from .contraction import contract_to_bipartite
from .field import compute_sdf_grid, marching_cubes, write_grid
from .mesh_io import load_object, write_json, write_obj
from .parts import extract_parts, merge_rules, repair_parts

logger = logging.getLogger("dualpack")

# flag name -> config field
_CONFIG_FLAGS = {
    "resolution": int, "edge_limit": int, "max_cycles": int, "dilation_voxels": int,
    "dihedral_threshold": float, "small_face_count": int, "small_diagonal_voxels": float,
    "iou_threshold": float, "surface_count": int, "salient_count": int, "noise_sigma": float,
    "seed": int,
}


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("pipeline config (override --config)")
    g.add_argument("--config", type=Path, help="JSON config file")
    for name, typ in _CONFIG_FLAGS.items():
        g.add_argument("--" + name.replace("_", "-"), dest=name, type=typ, default=None)
    g.add_argument("--sdf-counts", type=int, nargs=3, default=None, metavar=("UNIFORM", "NEAR", "SALIENT"))
    g.add_argument("--write-grids", action="store_true", default=None)
    g.add_argument("--write-ply", action="store_true", default=None)


def config_from_args(args) -> pipeline.PipelineConfig:
    cfg = pipeline.PipelineConfig.load(args.config) if getattr(args, "config", None) else pipeline.PipelineConfig()
    d = cfg.to_dict()
    for name in list(_CONFIG_FLAGS) + ["sdf_counts", "write_grids", "write_ply"]:
        val = getattr(args, name, None)
        if val is not None:
            d[name] = val
    if getattr(args, "output", None) is not None:
        d["output_dir"] = str(args.output)
    if getattr(args, "workers", None) is not None:
        d["workers"] = args.workers
    return pipeline.PipelineConfig.from_dict(d)


def _prepared_parts(path, cfg):
    obj = load_object(path)
    ps = merge_rules(extract_parts(obj), cfg.merge_config())
    return repair_parts(ps)


def _write_or_print(text: str, out) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8")


def cmd_pack(args) -> int:
    cfg = config_from_args(args)
    run_dir = Path(cfg.output_dir)
    try:
        report = pipeline.run_pack(args.input, cfg, run_dir)
    except pipeline.PipelineError as exc:
        logger.error("%s", exc)
        return pipeline.EXIT_ERROR
    pipeline.write_run_json(run_dir, cfg, [report], [], [Path(args.input).name])
    print(json.dumps(report.to_dict(), sort_keys=True))
    return pipeline.EXIT_KEPT if report.kept else pipeline.EXIT_FILTERED


def cmd_batch(args) -> int:
    cfg = config_from_args(args)
    run = pipeline.run_batch(args.directory, cfg, cfg.output_dir, cfg.workers)
    print(json.dumps({"objects": len(run["objects"]), "failures": len(run["failures"]),
                      "summary": run["summary"]}, indent=2, sort_keys=True))
    return pipeline.EXIT_KEPT if not run["failures"] else pipeline.EXIT_ERROR


def cmd_graph(args) -> int:
    cfg = config_from_args(args)
    ps = _prepared_parts(args.input, cfg)
    g = build_contact_graph(ps, cfg.resolution, cfg.dilation_voxels)
    _write_or_print(g.to_dot() if args.dot else g.to_json(), args.output)
    return 0


def cmd_contract(args) -> int:
    g = ContactGraph.from_dict(json.loads(Path(args.graph).read_text(encoding="utf-8")))
    plan = contract_to_bipartite(g, args.edge_limit)
    _write_or_print(json.dumps(plan.to_dict(), indent=2, sort_keys=True), args.output)
    return 0


def cmd_voxelize(args) -> int:
    cfg = config_from_args(args)
    ps = _prepared_parts(args.input, cfg)
    grid = compute_sdf_grid(ps.parts, cfg.resolution)
    raw, side = write_grid(grid, args.output)
    if args.mesh:
        write_obj(marching_cubes(grid), args.mesh)
    print(json.dumps({"grid": str(raw), "sidecar": str(side), "occupancy_ratio": grid.occupancy_ratio}))
    return 0


def cmd_sample(args) -> int:
    """Sample a (watertight) mesh: its own SDF grid signs the values."""
    cfg = config_from_args(args)
    obj = load_object(args.input, normalize_object=not args.no_normalize)
    mesh = obj.merged()
    grid = compute_sdf_grid([mesh], cfg.resolution)
    s = sampling.sample_volume(grid, mesh, pipeline.derive_seed(cfg.seed, Path(args.input).stem),
                               cfg.surface_count, cfg.salient_count, tuple(cfg.sdf_counts),
                               cfg.noise_sigma, cfg.dihedral_threshold)
    raw, side = sampling.write_samples(s, args.output)
    if cfg.write_ply:
        sampling.write_ply(s.uniform_surface[:, :3], Path(args.output).with_suffix(".ply"),
                           s.uniform_surface[:, 3:])
    print(json.dumps({"samples": str(raw), "sidecar": str(side), **s.meta}, sort_keys=True))
    return 0


def cmd_stats(args) -> int:
    root = Path(args.run_dir)
    reports = [curation.CurationReport.from_dict(json.loads(p.read_text(encoding="utf-8")))
               for p in sorted(root.glob("*/report.json"))]
    if not reports:
        logger.error("no report.json files under %s", root)
        return pipeline.EXIT_ERROR
    stats = curation.dataset_stats(reports)
    if args.output:
        write_json(stats, args.output)
    if args.csv:
        curation.write_histogram_csv(stats, args.csv)
    print(json.dumps(stats, indent=2, sort_keys=True))
    return 0


def _parse_param(text: str):
    key, _, raw = text.partition("=")
    if not key or not _:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    try:
        return key, json.loads(raw)
    except json.JSONDecodeError:
        return key, raw


def cmd_fixtures(args) -> int:
    if args.action == "list":
        for k in fixtures.KINDS:
            print(k)
        return 0
    spec = fixtures.FixtureSpec(args.kind, dict(args.param or []))
    default = ".json" if args.kind in fixtures.GRAPH_KINDS else ".glb"
    out = args.output or Path(args.kind + default)
    fixtures.emit_fixture(spec, out)
    print(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dualpack", description="Pack mesh parts into two non-contacting volumes.")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("pack", help="run the full pipeline on one mesh")
    s.add_argument("input", type=Path)
    s.add_argument("-o", "--output", type=Path, help="run directory")
    _add_config_flags(s)
    s.set_defaults(func=cmd_pack)

    s = sub.add_parser("batch", help="run the pipeline on every mesh in a directory")
    s.add_argument("directory", type=Path)
    s.add_argument("-o", "--output", type=Path, help="run directory")
    s.add_argument("-j", "--workers", type=int, default=None,
                   help=f"worker processes (default ${pipeline.WORKERS_ENV} or 1)")
    _add_config_flags(s)
    s.set_defaults(func=cmd_batch)

    s = sub.add_parser("graph", help="emit the contact graph of a mesh")
    s.add_argument("input", type=Path)
    s.add_argument("-o", "--output", type=Path)
    s.add_argument("--dot", action="store_true", help="Graphviz instead of JSON")
    _add_config_flags(s)
    s.set_defaults(func=cmd_graph)

    s = sub.add_parser("contract", help="contraction plan for a contact graph JSON")
    s.add_argument("graph", type=Path)
    s.add_argument("-o", "--output", type=Path)
    s.add_argument("--edge-limit", type=int, default=100)
    s.set_defaults(func=cmd_contract)

    s = sub.add_parser("voxelize", help="signed distance grid of all parts of a mesh")
    s.add_argument("input", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True, help="grid path stem")
    s.add_argument("--mesh", type=Path, help="also write the iso-surface as OBJ")
    _add_config_flags(s)
    s.set_defaults(func=cmd_voxelize)

    s = sub.add_parser("sample", help="surface, salient-edge and SDF samples of a mesh")
    s.add_argument("input", type=Path)
    s.add_argument("-o", "--output", type=Path, required=True, help="sample path stem")
    s.add_argument("--no-normalize", action="store_true", help="keep input coordinates")
    _add_config_flags(s)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("stats", help="dataset statistics over a run directory")
    s.add_argument("run_dir", type=Path)
    s.add_argument("-o", "--output", type=Path, help="summary JSON")
    s.add_argument("--csv", type=Path, help="part-count histogram CSV")
    s.set_defaults(func=cmd_stats)

    s = sub.add_parser("fixtures", help="synthetic test geometry and graphs")
    s.add_argument("action", choices=("emit", "list"))
    s.add_argument("kind", nargs="?", choices=fixtures.KINDS)
    s.add_argument("-o", "--output", type=Path)
    s.add_argument("-p", "--param", type=_parse_param, action="append", help="key=value (JSON value)")
    s.set_defaults(func=cmd_fixtures)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "fixtures" and args.action == "emit" and not args.kind:
        parser.error("fixtures emit needs a kind")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        logger.error("%s", exc)
        return pipeline.EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
