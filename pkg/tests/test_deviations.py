import math

import pytest
from hypothesis import given, strategies as st

from simbed.timing import EdgeEvent, deviation_cdf, pairwise_deviations


def events_for(timestamps_by_node):
    events = []
    for node, stamps in timestamps_by_node.items():
        for idx, ts in enumerate(stamps):
            events.append(EdgeEvent(idx, node, ts))
    return events


def test_identical_timestamps_give_zero_deviations():
    events = events_for({"a": [10, 20, 30], "b": [10, 20, 30], "c": [10, 20, 30]})
    devs = pairwise_deviations(events)
    assert len(devs) == 3 * 3  # 3 edges x 3 pairs
    assert all(d == 0.0 for d in devs)


def test_four_nodes_1800_edges_give_10800_deviations():
    stamps = {f"n{i}": list(range(1800)) for i in range(4)}
    devs = pairwise_deviations(events_for(stamps))
    assert len(devs) == 1800 * 6


def test_constant_opposite_errors_give_constant_deviation():
    # +1 ms and -1 ms nodes differ by exactly 2 ms at every edge
    base = [int(1e9 * k) for k in range(5)]
    events = events_for({
        "plus": [t + 1_000_000 for t in base],
        "minus": [t - 1_000_000 for t in base],
    })
    devs = pairwise_deviations(events)
    assert devs == pytest.approx([2.0] * 5)


def test_mismatched_edge_sets_rejected():
    events = events_for({"a": [1, 2, 3], "b": [1, 2]})
    with pytest.raises(ValueError):
        pairwise_deviations(events)


def test_duplicate_edge_rejected():
    events = [EdgeEvent(0, "a", 1), EdgeEvent(0, "a", 2)]
    with pytest.raises(ValueError):
        pairwise_deviations(events)


def test_p95_is_nearest_rank_order_statistic():
    summary = deviation_cdf([float(v) for v in range(1, 101)])
    assert summary.p95_ms == 95.0
    assert summary.n == 100
    assert summary.points[0] == (1.0, 0.01)
    assert summary.points[-1] == (100.0, 1.0)


def test_all_zero_deviations():
    summary = deviation_cdf([0.0] * 50)
    assert summary.p95_ms == 0.0
    assert summary.rmse_ms == 0.0


def test_empty_input_rejected():
    with pytest.raises(ValueError):
        deviation_cdf([])


def brute_force_p95(values):
    ordered = sorted(values)
    n = len(ordered)
    for v in ordered:
        if sum(1 for w in ordered if w <= v) / n >= 0.95:
            return v
    return ordered[-1]


def brute_force_rmse(values):
    return math.sqrt(math.fsum(v * v for v in values) / len(values))


@given(st.lists(st.floats(min_value=0.0, max_value=1e4, allow_nan=False), min_size=1, max_size=400))
def test_cdf_summary_matches_brute_force(values):
    summary = deviation_cdf(values)
    assert summary.p95_ms == brute_force_p95(values)
    assert summary.rmse_ms == pytest.approx(brute_force_rmse(values), rel=1e-12, abs=1e-15)
