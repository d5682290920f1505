from __future__ import annotations

import itertools
import json

import networkx as nx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dualpack.contact import ContactGraph
from dualpack.contraction import (ContractionPlan, CycleLimitError, apply_contractions,
                                  contract_to_bipartite, enumerate_simple_cycles,
                                  fallback_two_coloring, greedy_odd_cycle_contraction, is_bipartite,
                                  two_coloring)
from dualpack.fixtures import complete_graph, cycle_graph, random_connected_graph


@st.composite
def graphs(draw, max_n=9):
    n = draw(st.integers(1, max_n))
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), unique=True, max_size=min(len(pairs), 18))) if pairs else []
    weights = draw(st.lists(st.integers(1, 5), min_size=len(chosen), max_size=len(chosen)))
    return ContactGraph.from_edges(n, [(u, v, float(w)) for (u, v), w in zip(chosen, weights)])


def _nx(g):
    G = nx.Graph()
    G.add_nodes_from(range(g.n_vertices))
    G.add_edges_from((u, v) for u, v, _ in g.edges)
    return G


# --- cycles -----------------------------------------------------------------

def test_cycle_counts_named():
    assert len(enumerate_simple_cycles(complete_graph(3))) == 1
    assert len(enumerate_simple_cycles(complete_graph(4))) == 7
    tree = ContactGraph.from_edges(4, [(0, 1, 1), (1, 2, 1), (1, 3, 1)])
    assert enumerate_simple_cycles(tree) == []


def test_cycles_are_canonical():
    for c in enumerate_simple_cycles(complete_graph(5)):
        assert len(c) >= 3
        assert all(u < v for u, v in c)
    # K5: 10 triangles + 15 four-cycles + 12 five-cycles
    assert len(enumerate_simple_cycles(complete_graph(5))) == 37


@settings(max_examples=60, deadline=None)
@given(graphs())
def test_cycles_match_networkx(g):
    ours = enumerate_simple_cycles(g)
    keys = {frozenset(c) for c in ours}
    assert len(keys) == len(ours)  # each cycle once
    theirs = [c for c in nx.simple_cycles(_nx(g)) if len(c) >= 3]
    assert len(ours) == len(theirs)


def test_edge_limit_refuses():
    g = complete_graph(15)  # 105 edges
    with pytest.raises(CycleLimitError):
        enumerate_simple_cycles(g)
    with pytest.raises(CycleLimitError):
        enumerate_simple_cycles(complete_graph(5), edge_limit=10)


def test_cycle_cap_falls_back():
    g = complete_graph(9)
    plan = contract_to_bipartite(g, max_cycles=100)
    assert plan.method == "two_coloring_fallback"
    assert is_bipartite(apply_contractions(g, plan.edges())[0])


# --- greedy -----------------------------------------------------------------

def test_k3_contracts_heaviest_edge():
    g = ContactGraph.from_edges(3, [(0, 1, 3.0), (1, 2, 1.0), (0, 2, 2.0)])
    plan = greedy_odd_cycle_contraction(g)
    assert plan.contracted_edges == [(0, 1, 3.0, "odd_cycle")]
    assert plan.groups == [[0, 1], [2]]


def test_c5_one_contraction_tie_broken():
    plan = greedy_odd_cycle_contraction(cycle_graph(5))
    assert plan.edges() == [(0, 1)]


def test_k4_two_contractions():
    plan = greedy_odd_cycle_contraction(complete_graph(4))
    assert len(plan.contracted_edges) == 2
    assert all(r == "odd_cycle" for *_, r in plan.contracted_edges)


@pytest.mark.parametrize("g", [cycle_graph(4), cycle_graph(6),
                               ContactGraph.from_edges(5, [(0, 1, 1), (1, 2, 1), (1, 3, 1), (3, 4, 1)]),
                               ContactGraph.from_edges(1, [])])
def test_bipartite_input_gives_empty_plan(g):
    assert greedy_odd_cycle_contraction(g).contracted_edges == []
    assert fallback_two_coloring(g).contracted_edges == []


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.lists(st.integers(1, 9), min_size=13, max_size=13))
def test_single_odd_cycle_contracts_max_edge(k, weights):
    n = 2 * k + 1
    g = cycle_graph(n, [float(w) for w in weights[:n]])
    plan = greedy_odd_cycle_contraction(g)
    assert len(plan.contracted_edges) == 1
    u, v, w, _ = plan.contracted_edges[0]
    best = min(g.edges, key=lambda e: (-e[2], e[0], e[1]))
    assert (u, v, w) == best


@settings(max_examples=80, deadline=None)
@given(graphs())
def test_plan_always_bipartite_and_valid(g):
    plan = greedy_odd_cycle_contraction(g)
    cg, groups, _ = apply_contractions(g, plan.edges())
    assert is_bipartite(cg)
    edges = plan.edges()
    assert len(set(edges)) == len(edges)
    assert set(edges) <= {(u, v) for u, v, _ in g.edges}
    assert sorted(x for grp in groups for x in grp) == list(range(g.n_vertices))
    again = greedy_odd_cycle_contraction(g)
    assert json.dumps(again.to_dict()) == json.dumps(plan.to_dict())


@settings(max_examples=40, deadline=None)
@given(graphs())
def test_bipartite_graphs_idempotent(g):
    plan = greedy_odd_cycle_contraction(g)
    cg, _, _ = apply_contractions(g, plan.edges())
    assert greedy_odd_cycle_contraction(cg).contracted_edges == []


# --- fallback ---------------------------------------------------------------

def test_fallback_k3():
    plan = fallback_two_coloring(complete_graph(3))
    assert plan.edges() == [(1, 2)]
    assert plan.contracted_edges[0][3] == "conflict_fallback"


def test_fallback_two_disjoint_triangles():
    g = ContactGraph.from_edges(6, [(0, 1, 1), (1, 2, 1), (0, 2, 1), (3, 4, 1), (4, 5, 1), (3, 5, 1)])
    plan = fallback_two_coloring(g)
    assert len(plan.contracted_edges) == 2
    assert {frozenset(grp) for grp in plan.groups if len(grp) > 1} == {frozenset({1, 2}), frozenset({4, 5})}


@settings(max_examples=60, deadline=None)
@given(graphs(max_n=12))
def test_fallback_always_bipartite(g):
    plan = fallback_two_coloring(g)
    assert is_bipartite(apply_contractions(g, plan.edges())[0])


def test_large_graph_uses_fallback():
    g = random_connected_graph(40, 150, seed=3)
    assert len(g.edges) >= 100
    plan = contract_to_bipartite(g)
    assert plan.method == "two_coloring_fallback"
    assert is_bipartite(apply_contractions(g, plan.edges())[0])


# --- contraction semantics ----------------------------------------------------

def test_apply_keeps_max_weight_on_parallel_edges():
    g = ContactGraph.from_edges(4, [(0, 1, 1.0), (0, 2, 5.0), (1, 2, 2.0), (2, 3, 1.0)])
    cg, groups, vmap = apply_contractions(g, [(0, 1)])
    assert groups == [[0, 1], [2], [3]]
    assert cg.edges == [(0, 1, 5.0), (1, 2, 1.0)]
    assert cg.vertex_parts == [[0, 1], [2], [3]]


def test_two_coloring_conflicts():
    colors, conflicts = two_coloring(complete_graph(3))
    assert colors == [0, 1, 1] and conflicts == [(1, 2)]


def test_plan_json_roundtrip():
    plan = greedy_odd_cycle_contraction(complete_graph(4))
    back = ContractionPlan.from_dict(json.loads(json.dumps(plan.to_dict())))
    assert back == plan
