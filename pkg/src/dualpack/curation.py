"""Occupancy-balance filter and dataset statistics."""

from __future__ import annotations

import csv
import math
from collections import Counter
from dataclasses import asdict, dataclass, field

EMPTY_THRESHOLD = 0.001
RATIO_THRESHOLD = 0.1
REASONS = ("balanced", "both_empty", "unbalanced_ratio")
BINS = (("1", 1, 1), ("2-9", 2, 9), ("10-49", 10, 49), ("50-199", 50, 199), (">=200", 200, math.inf))


@dataclass
class CurationReport:
    object_id: str
    o1: float
    o2: float
    kept: bool
    reason: str
    part_count: int
    timing: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "CurationReport":
        return cls(d["object_id"], d["o1"], d["o2"], d["kept"], d["reason"], d["part_count"],
                   dict(d.get("timing", {})))


def filter_object(o1: float, o2: float) -> tuple[bool, str]:
    """Discard when both volumes are near-empty, or when the smaller
    occupancy is under a tenth of the larger (a zero maximum counts as ratio
    zero). Returns ``(kept, reason)``."""
    for o in (o1, o2):
        if not 0.0 <= float(o) <= 1.0:  # NaN fails too
            raise ValueError(f"occupancy ratio {o!r} outside [0, 1]")
    if o1 < EMPTY_THRESHOLD and o2 < EMPTY_THRESHOLD:
        return False, "both_empty"
    hi = max(o1, o2)
    ratio = min(o1, o2) / hi if hi > 0 else 0.0
    if ratio < RATIO_THRESHOLD:
        return False, "unbalanced_ratio"
    return True, "balanced"


def curate(object_id: str, o1: float, o2: float, part_count: int, timing: dict | None = None) -> CurationReport:
    kept, reason = filter_object(o1, o2)
    return CurationReport(object_id, float(o1), float(o2), kept, reason, int(part_count), dict(timing or {}))


def part_count_bin(n: int) -> str:
    for name, lo, hi in BINS:
        if lo <= n <= hi:
            return name
    raise ValueError(f"part count {n} must be >= 1")


def dataset_stats(reports) -> dict:
    """Part-count histogram (counts and fractions), keep rate and reason
    breakdown."""
    reports = list(reports)
    if not reports:
        raise ValueError("dataset_stats needs at least one report")
    counts = Counter(part_count_bin(r.part_count) for r in reports)
    n = len(reports)
    kept = sum(r.kept for r in reports)
    reasons = Counter(r.reason for r in reports)
    return {
        "objects": n,
        "kept": kept,
        "discarded": n - kept,
        "keep_rate": kept / n,
        "reasons": {k: reasons.get(k, 0) for k in REASONS},
        "part_count_histogram": {name: counts.get(name, 0) for name, _, _ in BINS},
        "part_count_fractions": {name: counts.get(name, 0) / n for name, _, _ in BINS},
    }


def write_histogram_csv(stats: dict, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["bin", "count", "fraction"])
        for name, _, _ in BINS:
            w.writerow([name, stats["part_count_histogram"][name], stats["part_count_fractions"][name]])
