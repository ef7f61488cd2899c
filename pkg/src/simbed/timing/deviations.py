"""Pairwise timestamp deviation statistics for sync-accuracy runs.

Nodes log one timestamp per rising edge; for every edge and every pair of
nodes the absolute timestamp difference is one deviation. The empirical
CDF of those deviations, its 95th percentile and its RMSE summarize how
well the fleet agrees on time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations


@dataclass
class EdgeEvent:
    edge_index: int
    node_id: str
    local_timestamp_ns: int


@dataclass
class CdfSummary:
    points: list[tuple[float, float]]  # (value_ms, cumulative probability)
    p95_ms: float
    rmse_ms: float
    n: int


def pairwise_deviations(events: list[EdgeEvent]) -> list[float]:
    """|Δt| in ms for every node pair at every edge.

    Every node must have contributed the same set of edge indices; with E
    edges and N nodes the result has E*N*(N-1)/2 entries.
    """
    by_node: dict[str, dict[int, int]] = {}
    for ev in events:
        per = by_node.setdefault(ev.node_id, {})
        if ev.edge_index in per:
            raise ValueError(f"duplicate edge {ev.edge_index} for node {ev.node_id!r}")
        per[ev.edge_index] = ev.local_timestamp_ns
    if not by_node:
        return []
    nodes = sorted(by_node)
    index_sets = {node: frozenset(by_node[node]) for node in nodes}
    reference = index_sets[nodes[0]]
    for node in nodes[1:]:
        if index_sets[node] != reference:
            raise ValueError(f"edge index sets differ between {nodes[0]!r} and {node!r}")
    deviations: list[float] = []
    for edge in sorted(reference):
        for a, b in combinations(nodes, 2):
            deviations.append(abs(by_node[a][edge] - by_node[b][edge]) * 1e-6)
    return deviations


def deviation_cdf(deviations_ms: list[float]) -> CdfSummary:
    """Empirical CDF plus p95 (nearest-rank) and RMSE."""
    if not deviations_ms:
        raise ValueError("no deviations")
    ordered = sorted(deviations_ms)
    n = len(ordered)
    points = [(v, (i + 1) / n) for i, v in enumerate(ordered)]
    rank = math.ceil(0.95 * n)
    p95 = ordered[rank - 1]
    rmse = math.sqrt(sum(v * v for v in ordered) / n)
    return CdfSummary(points=points, p95_ms=p95, rmse_ms=rmse, n=n)
