from __future__ import annotations

import numpy as np
import pytest

from conftest import scene
from dualpack.fixtures import (FixtureSpec, box_mesh, default_fixture_set, fixture_object, icosphere,
                               open_box, uv_hemispheres)
from dualpack.mesh_io import TriangleMesh, boundary_edge_count, normalize
from dualpack.parts import (MergeConfig, PartSet, extract_parts, find_boundary_loops, loops_match,
                            merge_rules, repair_part, repair_parts)

CFG = MergeConfig(resolution=128)


def test_scene_nodes_become_parts():
    ps = extract_parts(scene([box_mesh((0, 0, 0), (1, 1, 1)), box_mesh((2, 0, 0), (3, 1, 1))]))
    assert len(ps) == 2 and ps.provenance == ["scene_node"] * 2


def test_single_node_splits_into_components():
    a, b = box_mesh((0, 0, 0), (1, 1, 1)), box_mesh((2, 0, 0), (3, 1, 1))
    merged = TriangleMesh(np.vstack([a.positions, b.positions]), np.vstack([a.faces, b.faces + 8]))
    ps = extract_parts(scene([merged]))
    assert len(ps) == 2 and ps.provenance == ["connected_component"] * 2


def test_boundary_loops_of_open_box():
    loops = find_boundary_loops(open_box()[0])
    assert len(loops) == 1 and len(loops[0]) == 4
    assert find_boundary_loops(box_mesh((0, 0, 0), (1, 1, 1))) == []


def test_loop_matching_is_order_free():
    a = np.array([[0, 0, 0], [1, 0, 0], [1, 1, 0.0]])
    assert loops_match(a, a[::-1] + 1e-8)
    assert not loops_match(a, a + 1e-3)
    assert not loops_match(a, np.vstack([a, a[:1]]))


def test_seam_split_sphere_merges_by_shared_loop():
    obj = normalize(fixture_object(FixtureSpec("seam_split_sphere")))
    ps = extract_parts(obj)
    assert len(ps) == 2
    out = merge_rules(ps, CFG)
    assert len(out) == 1
    assert out.merge_log == [(0, 1, "shared_boundary_loop")]
    fixed = repair_parts(out)
    assert boundary_edge_count(fixed.parts[0]) == 0


def test_small_part_joins_its_contact():
    obj = normalize(fixture_object(FixtureSpec("pebble_on_box", {"resolution": 128})))
    out = merge_rules(extract_parts(obj), CFG)
    assert len(out) == 1 and out.merge_log[0][2] == "small_component"


def test_far_away_small_part_stays():
    big = box_mesh((-0.9, -0.9, -0.9), (0, 0, 0))
    tiny = box_mesh((0.5, 0.5, 0.5), (0.505, 0.505, 0.505))
    out = merge_rules(extract_parts(scene([big, tiny])), CFG)
    assert len(out) == 2


def test_duplicate_parts_merge_by_iou():
    a = box_mesh((-0.5, -0.5, -0.5), (0.5, 0.5, 0.5))
    b = box_mesh((-0.5, -0.5, -0.5), (0.5, 0.5, 0.51))
    c = box_mesh((0.6, -0.5, -0.5), (0.9, 0.5, 0.5))
    out = merge_rules(extract_parts(scene([a, b, c])), CFG)
    assert len(out) == 2
    assert out.sources == [[0, 1], [2]]
    assert out.merge_log == [(0, 1, "high_iou")]


def test_open_box_repair_closes_hole():
    d = {}
    fixed = repair_part(open_box()[0], diagnostics=d)
    assert find_boundary_loops(fixed) == []
    assert d["capped_loops"] == 1
    # cap keeps a consistent orientation: every edge used once in each direction
    half = fixed.faces[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2)
    assert len({tuple(e) for e in half.tolist()}) == len(half)


def test_repair_leaves_watertight_part_untouched():
    b = box_mesh((0, 0, 0), (1, 1, 1))
    assert repair_part(b) is b


def test_large_open_loop_left_open():
    s = icosphere(3, 0.5)
    keep = s.triangles.mean(axis=1)[:, 2] < 0.2
    cut = TriangleMesh(s.positions, s.faces[keep])
    d = {}
    repaired = repair_part(cut, diagnostics=d, max_vertices=8)
    assert d.get("open_loops")
    assert boundary_edge_count(repaired) > 0


@pytest.mark.parametrize("name", sorted(default_fixture_set()))
def test_merge_rules_fixpoint(name):
    obj = normalize(fixture_object(default_fixture_set()[name]))
    once = merge_rules(extract_parts(obj), CFG)
    twice = merge_rules(once, CFG)
    assert twice.sources == once.sources
    assert twice.merge_log == once.merge_log
