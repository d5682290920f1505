"""Two-volume assignment of merged part groups with occupancy balancing."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .contact import ContactGraph
from .contraction import ContractionPlan, apply_contractions


@dataclass
class VolumeAssignment:
    """``color[k]`` is the volume (0 or 1) of group ``k`` of ``plan``.

    ``components`` lists the groups of each connected component of the
    contracted graph, in balancing order; ``component_flips`` records whether
    that component's BFS colouring was inverted.
    """

    plan: ContractionPlan
    color: list[int]
    components: list[list[int]] = field(default_factory=list)
    component_flips: list[bool] = field(default_factory=list)
    volume_occupancy: list[float] = field(default_factory=lambda: [0.0, 0.0])

    def group_of(self, part: int) -> int:
        for k, parts in enumerate(self.plan.part_groups):
            if part in parts:
                return k
        raise KeyError(f"part {part} is in no group")

    def part_volumes(self) -> list[int]:
        """Volume of every part id, indexed by part id."""
        n = sum(len(p) for p in self.plan.part_groups)
        out = [-1] * n
        for k, parts in enumerate(self.plan.part_groups):
            for p in parts:
                out[p] = self.color[k]
        return out

    def volume_parts(self, volume: int) -> list[int]:
        return [p for p, v in enumerate(self.part_volumes()) if v == volume]

    def to_dict(self) -> dict:
        return {
            "group_volumes": self.color,
            "part_volumes": self.part_volumes(),
            "components": self.components,
            "component_flips": self.component_flips,
            "volume_occupancy": self.volume_occupancy,
        }


def _components_with_colors(g: ContactGraph) -> list[tuple[list[int], dict[int, int]]]:
    adj = g.adjacency()
    seen = [False] * g.n_vertices
    out = []
    for s in range(g.n_vertices):
        if seen[s]:
            continue
        col = {s: 0}
        seen[s] = True
        q = deque([s])
        while q:
            x = q.popleft()
            for y in adj[x]:
                if y not in col:
                    col[y] = 1 - col[x]
                    seen[y] = True
                    q.append(y)
                elif col[y] == col[x]:
                    raise ValueError(f"contracted graph is not bipartite at edge ({x}, {y})")
        out.append((sorted(col), col))
    return out


def assign_volumes(g: ContactGraph, plan: ContractionPlan, part_voxel_counts) -> VolumeAssignment:
    """Colour every group of the contracted graph 0/1.

    Components (isolated groups included) are visited largest occupancy first,
    ties to the smallest group id; each is placed as BFS-coloured or flipped,
    whichever leaves the smaller occupancy difference between the volumes
    (ties keep the BFS colouring).
    """
    cg, _, _ = apply_contractions(g, plan.edges())
    counts = list(part_voxel_counts)
    group_occ = [float(sum(counts[p] for p in parts)) for parts in cg.vertex_parts]
    comps = _components_with_colors(cg)
    comps.sort(key=lambda c: (-sum(group_occ[k] for k in c[0]), c[0][0]))
    totals = [0.0, 0.0]
    color = [0] * cg.n_vertices
    flips = []
    for members, col in comps:
        side = [0.0, 0.0]
        for k in members:
            side[col[k]] += group_occ[k]
        keep = abs((totals[0] + side[0]) - (totals[1] + side[1]))
        flip = abs((totals[0] + side[1]) - (totals[1] + side[0]))
        do_flip = flip < keep
        for k in members:
            color[k] = col[k] ^ int(do_flip)
        totals[0] += side[int(do_flip)]
        totals[1] += side[1 - int(do_flip)]
        flips.append(do_flip)
    return VolumeAssignment(plan, color, [m for m, _ in comps], flips, totals)
