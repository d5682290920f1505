from __future__ import annotations

import json
import shutil

import pytest

from dualpack import cli
from dualpack.fixtures import FixtureSpec, emit_fixture
from dualpack.pipeline import PipelineConfig, PipelineError, derive_seed, run_batch, run_pack

FAST = dict(resolution=64, surface_count=512, salient_count=256, sdf_counts=[512, 256, 256])


def fast_cfg(**kw):
    return PipelineConfig(**{**FAST, **kw})


def test_config_defaults_and_roundtrip(tmp_path):
    c = PipelineConfig()
    assert (c.resolution, c.edge_limit, c.dilation_voxels, c.dihedral_threshold) == (512, 100, 1, 165.0)
    assert (c.surface_count, c.salient_count, c.sdf_counts) == (32768, 16384, [65536, 32768, 32768])
    assert (c.small_face_count, c.small_diagonal_voxels, c.iou_threshold, c.noise_sigma) == (10, 2.0, 0.9, 0.01)
    c.save(tmp_path / "c.json")
    assert PipelineConfig.load(tmp_path / "c.json") == c
    with pytest.raises(ValueError):
        PipelineConfig.from_dict({"resolutoin": 3})


def test_seed_derivation_stable():
    assert derive_seed(0, "a", 0) == derive_seed(0, "a", 0)
    assert derive_seed(0, "a", 0) != derive_seed(0, "a", 1) != derive_seed(1, "a", 1)


@pytest.fixture(scope="module")
def k3_run(tmp_path_factory):
    d = tmp_path_factory.mktemp("k3")
    emit_fixture(FixtureSpec("boxes_K3", {"resolution": 64}), d / "k3.glb")
    report = run_pack(d / "k3.glb", fast_cfg(), d / "run")
    return d, report, json.loads((d / "run" / "k3" / "manifest.json").read_text())


def test_k3_end_to_end(k3_run):
    d, report, m = k3_run
    assert report.kept and report.part_count == 3
    assert len(m["contraction"]["contracted_edges"]) == 1
    assert len(m["contraction"]["groups"]) == 2
    assert m["volumes"]["0"]["occupancy_ratio"] > 0 and m["volumes"]["1"]["occupancy_ratio"] > 0
    assert "output_dir" not in m["config"] and "workers" not in m["config"]
    out = d / "run" / "k3"
    for f in ("vol0.obj", "vol1.obj", "vol0_samples.bin", "vol1_samples.json", "report.json",
              "parts/manifest.json"):
        assert (out / f).exists(), f
    assert sorted(p.name for p in (out / "parts").glob("*.obj")) == \
        ["vol0_part0.obj", "vol0_part1.obj", "vol1_part2.obj"]


def test_chain_end_to_end(tmp_path):
    emit_fixture(FixtureSpec("boxes_chain", {"resolution": 64}), tmp_path / "chain.glb")
    r = run_pack(tmp_path / "chain.glb", fast_cfg(), tmp_path / "run")
    m = json.loads((tmp_path / "run" / "chain" / "manifest.json").read_text())
    assert r.kept
    assert m["contraction"]["contracted_edges"] == []
    v = m["assignment"]["part_volumes"]
    assert all(v[k] != v[k + 1] for k in range(4))


def test_single_sphere_filtered(tmp_path):
    emit_fixture(FixtureSpec("analytic_sphere", {"level": 2}), tmp_path / "s.glb")
    r = run_pack(tmp_path / "s.glb", fast_cfg(), tmp_path / "run")
    assert not r.kept and r.reason == "unbalanced_ratio" and r.o2 == 0.0
    assert (tmp_path / "run" / "s" / "manifest.json").exists()


def test_stage_error_names_stage(tmp_path):
    (tmp_path / "bad.glb").write_bytes(b"glTF\x02\x00\x00\x00garbage")
    with pytest.raises(PipelineError) as exc:
        run_pack(tmp_path / "bad.glb", fast_cfg(), tmp_path / "run")
    assert exc.value.stage == "load" and exc.value.object_id == "bad"


def test_batch_isolates_failures(tmp_path):
    src = tmp_path / "in"
    src.mkdir()
    emit_fixture(FixtureSpec("boxes_chain", {"resolution": 64}), src / "a.glb")
    emit_fixture(FixtureSpec("boxes_K3", {"resolution": 64}), src / "b.glb")
    (src / "c.obj").write_text("this is not a mesh\n")
    run = run_batch(src, fast_cfg(), tmp_path / "run", workers=1)
    assert run["objects"] == ["a", "b"]
    assert [f["object_id"] for f in run["failures"]] == ["c"]
    assert run["summary"]["objects"] == 2
    assert json.loads((tmp_path / "run" / "run.json").read_text()) == run


def test_batch_empty_dir(tmp_path):
    with pytest.raises(ValueError):
        run_batch(tmp_path, fast_cfg(), tmp_path / "run")


def _cli(*args):
    return cli.main([str(a) for a in args])


def test_cli_pack_exit_codes(tmp_path, k3_run, capsys):
    d, _, _ = k3_run
    cfg = tmp_path / "cfg.json"
    fast_cfg().save(cfg)
    assert _cli("pack", d / "k3.glb", "-o", tmp_path / "r", "--config", cfg) == 0
    run = json.loads((tmp_path / "r" / "run.json").read_text())
    assert run["objects"] == ["k3"] and run["config"]["resolution"] == 64
    emit_fixture(FixtureSpec("cube"), tmp_path / "cube.glb")
    assert _cli("pack", tmp_path / "cube.glb", "-o", tmp_path / "r", "--config", cfg) == 3
    (tmp_path / "x.obj").write_text("v 0 0 0\n")
    assert _cli("pack", tmp_path / "x.obj", "-o", tmp_path / "r", "--config", cfg) == 1


def test_cli_flags_override_config(tmp_path):
    cfg = tmp_path / "cfg.json"
    fast_cfg().save(cfg)
    args = cli.build_parser().parse_args(["pack", "x.glb", "--config", str(cfg), "--resolution", "32",
                                          "--sdf-counts", "1", "2", "3", "--seed", "9"])
    c = cli.config_from_args(args)
    assert (c.resolution, c.sdf_counts, c.seed, c.surface_count) == (32, [1, 2, 3], 9, 512)


def test_cli_graph_contract_voxelize_sample_stats(tmp_path, k3_run, capsys):
    d, _, _ = k3_run
    assert _cli("graph", d / "k3.glb", "-o", tmp_path / "g.json", "--resolution", 64) == 0
    g = json.loads((tmp_path / "g.json").read_text())
    assert len(g["edges"]) == 3
    assert _cli("contract", tmp_path / "g.json", "-o", tmp_path / "p.json") == 0
    assert len(json.loads((tmp_path / "p.json").read_text())["contracted_edges"]) == 1
    assert _cli("graph", d / "k3.glb", "--dot", "--resolution", 64) == 0
    assert "graph contacts" in capsys.readouterr().out
    assert _cli("voxelize", d / "k3.glb", "-o", tmp_path / "grid", "--resolution", 32,
                "--mesh", tmp_path / "iso.obj") == 0
    assert (tmp_path / "grid.f32").stat().st_size == 4 * 32 ** 3
    assert (tmp_path / "iso.obj").exists()
    assert _cli("sample", d / "k3.glb", "-o", tmp_path / "s", "--resolution", 32, "--surface-count", 100,
                "--salient-count", 50, "--sdf-counts", 10, 10, 10, "--write-ply") == 0
    assert (tmp_path / "s.bin").stat().st_size == 4 * (150 * 6 + 30 * 4)
    assert (tmp_path / "s.ply").exists()
    capsys.readouterr()
    assert _cli("stats", d / "run", "--csv", tmp_path / "h.csv") == 0
    assert json.loads(capsys.readouterr().out)["objects"] == 1
    assert _cli("stats", tmp_path / "nothing") == 1


def test_cli_fixtures(tmp_path, capsys):
    assert _cli("fixtures", "list") == 0
    assert "boxes_K3" in capsys.readouterr().out.split()
    assert _cli("fixtures", "emit", "boxes_K4", "-o", tmp_path / "k4.glb") == 0
    assert (tmp_path / "k4.glb").read_bytes()[:4] == b"glTF"
    assert _cli("fixtures", "emit", "random_graph", "-p", "n=5", "-p", "seed=2", "-o", tmp_path / "g.json") == 0
    assert len(json.loads((tmp_path / "g.json").read_text())["vertices"]) == 5
