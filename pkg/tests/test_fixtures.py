from __future__ import annotations

import itertools

import pytest

from dualpack.contact import ContactGraph
from dualpack.contraction import apply_contractions, is_bipartite
from dualpack.fixtures import (FixtureSpec, brute_force_min_contraction, chord_error, complete_graph,
                               cycle_graph, generate_fixture, icosphere, max_dihedral_deg,
                               random_connected_graph, random_graph)
from dualpack.mesh_io import boundary_edge_count, enclosed_volume


def test_oracle_named():
    assert brute_force_min_contraction(complete_graph(3)).min_cardinality == 1
    assert len(brute_force_min_contraction(complete_graph(3)).cardinality_plans) == 3
    assert brute_force_min_contraction(complete_graph(4)).min_cardinality == 2
    assert brute_force_min_contraction(cycle_graph(4)).min_cardinality == 0


def test_oracle_min_weight():
    g = ContactGraph.from_edges(3, [(0, 1, 3.0), (1, 2, 1.0), (0, 2, 2.0)])
    r = brute_force_min_contraction(g)
    assert r.min_weight == 1.0 and r.weight_plans == [((1, 2),)]


def test_oracle_refuses_large():
    with pytest.raises(ValueError):
        brute_force_min_contraction(complete_graph(8))


@pytest.mark.parametrize("seed", range(15))
def test_oracle_self_check(seed):
    g = random_graph(6, 0.6, seed=seed)
    r = brute_force_min_contraction(g)
    for plan in r.cardinality_plans + r.weight_plans:
        assert is_bipartite(apply_contractions(g, plan)[0])
    if r.min_cardinality:
        for sub in itertools.combinations([(u, v) for u, v, _ in g.edges], r.min_cardinality - 1):
            assert not is_bipartite(apply_contractions(g, sub)[0])


def test_random_graph_reproducible():
    assert random_graph(6, 0.5, seed=7).edges == random_graph(6, 0.5, seed=7).edges
    g = random_connected_graph(12, 30, seed=4)
    assert len(g.edges) <= 30
    import networkx as nx
    G = nx.Graph()
    G.add_nodes_from(range(12))
    G.add_edges_from((u, v) for u, v, _ in g.edges)
    assert nx.is_connected(G)


def test_sphere_tessellation_bounds():
    assert chord_error(icosphere(4, 0.5), 0.5) < 1e-3
    assert max_dihedral_deg(icosphere(5, 0.5)) > 178


@pytest.mark.parametrize("kind", ["boxes_chain", "boxes_K3", "boxes_K4", "nested_cubes", "torus",
                                  "analytic_sphere", "cube", "random_boxes"])
def test_closed_fixtures(kind):
    for m in generate_fixture(FixtureSpec(kind)):
        assert boundary_edge_count(m) == 0
        assert enclosed_volume(m) > 0


def test_boxes_k3_overlaps_two_voxels():
    a, b, c = generate_fixture(FixtureSpec("boxes_K3", {"resolution": 128}))
    h = 2 / 128
    assert a.bounds()[1][0] - b.bounds()[0][0] == pytest.approx(2 * h)
    assert a.bounds()[1][1] - c.bounds()[0][1] == pytest.approx(2 * h)


def test_fixtures_deterministic():
    a = generate_fixture(FixtureSpec("random_boxes", {"n": 10, "seed": 3}))
    b = generate_fixture(FixtureSpec("random_boxes", {"n": 10, "seed": 3}))
    for x, y in zip(a, b):
        assert (x.positions == y.positions).all()


def test_unknown_kind():
    with pytest.raises(ValueError):
        generate_fixture(FixtureSpec("nope"))
