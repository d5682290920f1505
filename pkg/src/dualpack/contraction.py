"""Edge contraction plans that make the contact graph bipartite.

Two routes: greedy odd-cycle contraction over every simple cycle (small
graphs), and BFS two-colouring that contracts the conflicting edges (large
graphs). Both finish by applying the plan and verifying a proper 2-colouring.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .contact import ContactGraph

EDGE_LIMIT = 100
MAX_CYCLES = 2_000_000
REASONS = ("odd_cycle", "conflict_fallback")


class CycleLimitError(RuntimeError):
    """Raised when cycle enumeration is refused (too many edges or cycles)."""


@dataclass
class ContractionPlan:
    """Ordered contracted input edges and the resulting vertex groups.

    ``groups`` partitions the input graph's vertex ids; group ``k`` is vertex
    ``k`` of the contracted graph. ``part_groups`` is the same partition in
    part ids.
    """

    contracted_edges: list[tuple[int, int, float, str]] = field(default_factory=list)
    groups: list[list[int]] = field(default_factory=list)
    part_groups: list[list[int]] = field(default_factory=list)
    method: str = "greedy_odd_cycle"
    n_cycles: int | None = None

    def edges(self) -> list[tuple[int, int]]:
        return [(u, v) for u, v, _, _ in self.contracted_edges]

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "n_cycles": self.n_cycles,
            "contracted_edges": [{"u": u, "v": v, "weight": w, "reason": r}
                                 for u, v, w, r in self.contracted_edges],
            "groups": self.groups,
            "part_groups": self.part_groups,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ContractionPlan":
        return cls([(e["u"], e["v"], e["weight"], e["reason"]) for e in d["contracted_edges"]],
                   [list(g) for g in d["groups"]], [list(g) for g in d.get("part_groups", [])],
                   d.get("method", "greedy_odd_cycle"), d.get("n_cycles"))


class _UnionFind:
    def __init__(self, n: int):
        self.p = list(range(n))

    def find(self, x: int) -> int:
        while self.p[x] != x:
            self.p[x] = self.p[self.p[x]]
            x = self.p[x]
        return x

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if rb < ra:
            ra, rb = rb, ra
        self.p[rb] = ra  # smaller id survives
        return True


def apply_contractions(g: ContactGraph, edges) -> tuple[ContactGraph, list[list[int]], list[int]]:
    """Contract ``edges`` of ``g``.

    Returns the contracted graph (self-loops dropped, parallel edges merged
    keeping the largest weight), the groups of input vertices ordered by
    smallest member, and the input-vertex -> group index map.
    """
    uf = _UnionFind(g.n_vertices)
    for u, v in edges:
        uf.union(int(u), int(v))
    roots = sorted({uf.find(x) for x in range(g.n_vertices)})
    gid = {r: k for k, r in enumerate(roots)}
    vmap = [gid[uf.find(x)] for x in range(g.n_vertices)]
    groups = [[] for _ in roots]
    for x in range(g.n_vertices):
        groups[vmap[x]].append(x)
    best: dict[tuple[int, int], float] = {}
    for u, v, w in g.edges:
        a, b = vmap[u], vmap[v]
        if a == b:
            continue
        key = (min(a, b), max(a, b))
        best[key] = max(w, best.get(key, w))
    parts = [sorted(p for x in grp for p in g.vertex_parts[x]) for grp in groups]
    return (ContactGraph(parts, [(a, b, w) for (a, b), w in best.items()], g.dilation_voxels),
            groups, vmap)


def two_coloring(g: ContactGraph) -> tuple[list[int], list[tuple[int, int]]]:
    """BFS colouring from the smallest uncoloured vertex of each component,
    neighbours visited in ascending order. Returns colours and the edges whose
    endpoints ended up with equal colours."""
    adj = g.adjacency()
    color = [-1] * g.n_vertices
    for s in range(g.n_vertices):
        if color[s] >= 0:
            continue
        color[s] = 0
        q = deque([s])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if color[y] < 0:
                    color[y] = 1 - color[x]
                    q.append(y)
    conflicts = [(u, v) for u, v, _ in g.edges if color[u] == color[v]]
    return color, conflicts


def is_bipartite(g: ContactGraph) -> bool:
    return not two_coloring(g)[1]


def _representative_edge(g: ContactGraph, vmap, ga: int, gb: int) -> tuple[int, int, float]:
    """Heaviest input edge between two groups, ties to the smallest pair."""
    cands = [(u, v, w) for u, v, w in g.edges if {vmap[u], vmap[v]} == {ga, gb}]
    return min(cands, key=lambda e: (-e[2], e[0], e[1]))


def _finish(g: ContactGraph, contracted: list, method: str, n_cycles=None) -> ContractionPlan:
    """Apply, verify, and contract any residual conflicts until proper."""
    contracted = list(contracted)
    for _ in range(len(g.edges) + 1):
        cg, groups, vmap = apply_contractions(g, [(u, v) for u, v, _, _ in contracted])
        _, conflicts = two_coloring(cg)
        if not conflicts:
            return ContractionPlan(contracted, groups, [list(p) for p in cg.vertex_parts], method, n_cycles)
        for a, b in conflicts:
            u, v, w = _representative_edge(g, vmap, a, b)
            contracted.append((u, v, w, "conflict_fallback"))
    raise AssertionError("conflict contraction did not converge")  # unreachable: each round merges groups


# ----------------------------------------------------------------------------
# cycles

def _cycles_as_vertices(adj: list[list[int]], max_cycles: int):
    """Every simple cycle once, as a vertex list starting at its smallest
    vertex and oriented so the second vertex is smaller than the last."""
    out = []
    n = len(adj)
    for s in range(n):
        nbrs = [[y for y in adj[x] if y > s] for x in range(n)]
        path = [s]
        on_path = [False] * n
        on_path[s] = True
        stack = [iter(nbrs[s])]
        while stack:
            nxt = next(stack[-1], None)
            if nxt is None:
                stack.pop()
                on_path[path.pop()] = False
                continue
            if on_path[nxt]:
                continue
            path.append(nxt)
            on_path[nxt] = True
            # closing edge back to s, counted once per orientation
            if len(path) >= 3 and path[1] < path[-1] and s in adj[nxt]:
                out.append(list(path))
                if len(out) > max_cycles:
                    raise CycleLimitError(f"more than {max_cycles} simple cycles")
            stack.append(iter(nbrs[nxt]))
        on_path[s] = False
    return out


def enumerate_simple_cycles(g: ContactGraph, edge_limit: int = EDGE_LIMIT,
                            max_cycles: int = MAX_CYCLES) -> list[list[tuple[int, int]]]:
    """All simple cycles of ``g`` (length >= 3), each exactly once, as lists of
    ``(u, v)`` edges with ``u < v`` in traversal order.

    Cycles are found by depth-first search from each vertex in ascending
    order, restricted to larger vertices, so each cycle is reported rotated to
    its smallest vertex and in its lexicographically smaller direction.
    """
    if len(g.edges) >= edge_limit:
        raise CycleLimitError(f"{len(g.edges)} edges >= limit {edge_limit}; use the two-colouring fallback")
    cycles = _cycles_as_vertices(g.adjacency(), max_cycles)
    return [[(min(a, b), max(a, b)) for a, b in zip(c, c[1:] + c[:1])] for c in cycles]


# ----------------------------------------------------------------------------
# greedy

def _cycle_masks(g: ContactGraph, max_cycles: int) -> list[int]:
    """Same DFS as ``_cycles_as_vertices`` (same order), yielding each cycle as
    a bitmask over edge ids."""
    n = g.n_vertices
    adj: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for k, (u, v, _) in enumerate(g.edges):
        adj[u].append((v, k))
        adj[v].append((u, k))
    for a in adj:
        a.sort()
    out: list[int] = []
    for s in range(n):
        nbrs = [[(y, e) for y, e in adj[x] if y > s] for x in range(n)]
        closing = dict(nbrs[s])
        on_path = [False] * n
        on_path[s] = True
        path = [s]
        masks = [0]
        stack = [iter(nbrs[s])]
        while stack:
            item = next(stack[-1], None)
            if item is None:
                stack.pop()
                masks.pop()
                on_path[path.pop()] = False
                continue
            y, e = item
            if on_path[y]:
                continue
            m = masks[-1] | (1 << e)
            path.append(y)
            on_path[y] = True
            masks.append(m)
            if len(path) >= 3 and path[1] < y and y in closing:
                out.append(m | (1 << closing[y]))
                if len(out) > max_cycles:
                    raise CycleLimitError(f"more than {max_cycles} simple cycles")
            stack.append(iter(nbrs[y]))
    return out


def _pack_rows(masks: list[int], n_edges: int) -> np.ndarray:
    words = max(1, (n_edges + 63) // 64)
    full = (1 << 64) - 1
    return np.array([[(x >> (64 * w)) & full for w in range(words)] for x in masks],
                    dtype=np.uint64).reshape(len(masks), words)


def greedy_odd_cycle_contraction(g: ContactGraph, edge_limit: int = EDGE_LIMIT,
                                 max_cycles: int = MAX_CYCLES) -> ContractionPlan:
    """Greedy odd-cycle contraction.

    Walks the cycle list in order; whenever the current cycle is odd it
    contracts that cycle's heaviest surviving edge (ties: smallest
    ``(u, v)``) and removes it from every cycle. Passes repeat while any odd
    cycle remains. An edge survives while its endpoints are in different
    groups, so edges collapsed into self-loops by earlier contractions leave
    the cycles too. Cycles with fewer than three surviving edges are ignored.
    """
    m = len(g.edges)
    if m >= edge_limit:
        raise CycleLimitError(f"{m} edges >= limit {edge_limit}; use the two-colouring fallback")
    cycles = _cycle_masks(g, max_cycles)
    contracted: list[tuple[int, int, float, str]] = []
    if cycles:
        rows = _pack_rows(cycles, m)
        # rank 0 = heaviest edge, ties broken by smallest (u, v)
        order = sorted(range(m), key=lambda k: (-g.edges[k][2], g.edges[k][0], g.edges[k][1]))
        rank = [0] * m
        for r, k in enumerate(order):
            rank[k] = r
        uf = _UnionFind(g.n_vertices)
        alive = (1 << m) - 1
        pos = 0
        while True:
            cnt = np.bitwise_count(rows & _pack_rows([alive], m)[0]).sum(axis=1)
            odd = (cnt % 2 == 1) & (cnt >= 3)
            hits = np.flatnonzero(odd[pos:])
            if len(hits):
                idx = pos + int(hits[0])
            else:
                hits = np.flatnonzero(odd)
                if not len(hits):
                    break
                idx = int(hits[0])
            live = cycles[idx] & alive
            ids = [k for k in range(m) if live >> k & 1]
            k = min(ids, key=rank.__getitem__)
            u, v, w = g.edges[k]
            contracted.append((u, v, w, "odd_cycle"))
            uf.union(u, v)
            for j, (a, b, _) in enumerate(g.edges):
                if alive >> j & 1 and uf.find(a) == uf.find(b):
                    alive &= ~(1 << j)
            pos = idx + 1
    return _finish(g, contracted, "greedy_odd_cycle", n_cycles=len(cycles))


def fallback_two_coloring(g: ContactGraph) -> ContractionPlan:
    """Two-colour by BFS and contract every edge whose endpoints share a colour,
    recolouring until the colouring is proper."""
    return _finish(g, [], "two_coloring_fallback")


def contract_to_bipartite(g: ContactGraph, edge_limit: int = EDGE_LIMIT,
                          max_cycles: int = MAX_CYCLES) -> ContractionPlan:
    """Greedy route below ``edge_limit`` edges, two-colouring fallback otherwise
    (also when the cycle count exceeds ``max_cycles``)."""
    if len(g.edges) < edge_limit:
        try:
            return greedy_odd_cycle_contraction(g, edge_limit, max_cycles)
        except CycleLimitError:
            pass
    return fallback_two_coloring(g)
