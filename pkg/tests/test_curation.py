from __future__ import annotations

import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dualpack.curation import CurationReport, curate, dataset_stats, filter_object, write_histogram_csv

ratio = st.floats(0.0, 1.0, allow_nan=False)


@pytest.mark.parametrize("o1,o2,kept,reason", [
    (0.0005, 0.0005, False, "both_empty"),
    (0.3, 0.02, False, "unbalanced_ratio"),
    (0.2, 0.1, True, "balanced"),
    (0.0005, 0.3, False, "unbalanced_ratio"),
    (0.0, 0.0, False, "both_empty"),
    (0.5, 0.0, False, "unbalanced_ratio"),
    (1.0, 0.1, True, "balanced"),  # ratio exactly at the threshold keeps
    (0.8, 0.078, False, "unbalanced_ratio"),
])
def test_truth_table(o1, o2, kept, reason):
    assert filter_object(o1, o2) == (kept, reason)


@pytest.mark.parametrize("bad", [-0.1, 1.5, math.nan])
def test_out_of_range(bad):
    with pytest.raises(ValueError):
        filter_object(bad, 0.5)


@given(ratio, ratio)
def test_symmetric_and_kept_means_balanced(a, b):
    assert filter_object(a, b) == filter_object(b, a)
    kept, _ = filter_object(a, b)
    if kept:
        assert min(a, b) / max(a, b) >= 0.1


def test_stats_bins(tmp_path):
    reps = [curate(str(i), 0.2, 0.2, n) for i, n in enumerate([1, 2, 3, 15, 300])]
    s = dataset_stats(reps)
    assert s["part_count_histogram"] == {"1": 1, "2-9": 2, "10-49": 1, "50-199": 0, ">=200": 1}
    assert sum(s["part_count_fractions"].values()) == pytest.approx(1, abs=1e-12)
    assert s["keep_rate"] == 1.0
    write_histogram_csv(s, tmp_path / "h.csv")
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin,count,fraction"


def test_stats_reasons_and_errors():
    reps = [curate("a", 0.2, 0.2, 2), curate("b", 0.3, 0.0, 1), curate("c", 0, 0, 4)]
    s = dataset_stats(reps)
    assert s["reasons"] == {"balanced": 1, "both_empty": 1, "unbalanced_ratio": 1}
    assert s["keep_rate"] == pytest.approx(1 / 3)
    with pytest.raises(ValueError):
        dataset_stats([])


def test_report_roundtrip():
    r = curate("x", 0.2, 0.1, 3, {"field": 1.5})
    assert CurationReport.from_dict(r.to_dict()) == r
