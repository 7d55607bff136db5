"""Weighted core decomposition and core/periphery statistics.

The decomposition peels the market iteratively: the node with the smallest
current weighted degree (contract count among remaining nodes) is removed
and assigned a core number equal to that degree or the highest degree seen
at removal so far, whichever is larger. A node's weighted core number is
therefore the largest k for which it survives in a subgraph where every
weighted degree is at least k.

Core membership thresholds on the class mean: an issuer (winner) is in the
core iff its weighted core number strictly exceeds the mean weighted degree
of issuers (winners) in the full graph. Centralization is the share of all
contracts awarded between core issuers and core winners.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

from .market import MarketGraph
from .util import UNDEFINED, write_csv


def weighted_core_numbers(graph: MarketGraph,
                          tie_order: Mapping[str, int] | None = None) -> dict[str, int]:
    """Peel the graph by minimum weighted degree; returns node -> core number.

    ``tie_order`` only picks which of several minimum-degree nodes goes
    first; the result is the same for every choice (asserted in tests).
    Default tie-break is sorted node id, so traces are reproducible.
    """
    adjacency: dict[str, list[tuple[str, int]]] = {
        n: [] for n in graph.issuers + graph.winners
    }
    for (issuer, winner), stats in graph.edges.items():
        w = stats.weight
        adjacency[issuer].append((winner, w))
        adjacency[winner].append((issuer, w))

    if tie_order is None:
        rank = {n: k for k, n in enumerate(sorted(adjacency))}
    else:
        rank = dict(tie_order)

    current = dict(graph.strengths)
    heap = [(d, rank[n], n) for n, d in current.items()]
    heapq.heapify(heap)

    core: dict[str, int] = {}
    removed: set[str] = set()
    k = 0
    while heap:
        degree, _, node = heapq.heappop(heap)
        if node in removed or degree != current[node]:
            continue  # stale entry
        k = max(k, degree)
        core[node] = k
        removed.add(node)
        for neighbor, w in adjacency[node]:
            if neighbor not in removed:
                current[neighbor] -= w
                heapq.heappush(heap, (current[neighbor], rank[neighbor], neighbor))
    return core


@dataclass(frozen=True)
class CorePartition:
    """Core numbers plus per-class membership cut at the class mean degree."""

    core_number: dict[str, int]
    issuer_threshold: float
    winner_threshold: float
    core_issuers: frozenset[str]
    core_winners: frozenset[str]


def core_membership(graph: MarketGraph,
                    core_numbers: Mapping[str, int],
                    weighted_threshold: bool = True) -> CorePartition:
    """Split nodes into core and periphery.

    Thresholds are the class means of weighted degree over the full graph
    (``weighted_threshold=False`` switches to unweighted means for
    sensitivity checks); membership requires a strictly larger core number.
    """
    degrees = graph.strengths if weighted_threshold else graph.degrees
    issuer_threshold = sum(degrees[n] for n in graph.issuers) / len(graph.issuers)
    winner_threshold = sum(degrees[n] for n in graph.winners) / len(graph.winners)
    core_issuers = frozenset(
        n for n in graph.issuers if core_numbers[n] > issuer_threshold
    )
    core_winners = frozenset(
        n for n in graph.winners if core_numbers[n] > winner_threshold
    )
    return CorePartition(
        core_number=dict(core_numbers),
        issuer_threshold=issuer_threshold,
        winner_threshold=winner_threshold,
        core_issuers=core_issuers,
        core_winners=core_winners,
    )


@dataclass(frozen=True, slots=True)
class CoreStats:
    """Contract-level view of the core: a contract is a core contract iff
    both its issuer and winner are core members."""

    core_contracts: int
    core_share: float
    core_n_winners: int
    core_n_issuers: int
    core_n_edges: int
    core_single_bidding_rate: float


def core_stats(graph: MarketGraph, partition: CorePartition) -> CoreStats:
    core_contracts = 0
    core_sb = 0
    core_edges = 0
    for (issuer, winner), stats in graph.edges.items():
        if issuer in partition.core_issuers and winner in partition.core_winners:
            core_edges += 1
            core_contracts += stats.weight
            core_sb += stats.single_bid_count
    total = graph.n_contracts
    return CoreStats(
        core_contracts=core_contracts,
        core_share=core_contracts / total,
        core_n_winners=len(partition.core_winners),
        core_n_issuers=len(partition.core_issuers),
        core_n_edges=core_edges,
        core_single_bidding_rate=(core_sb / core_contracts) if core_contracts else UNDEFINED,
    )


def write_core_nodes(graph: MarketGraph, partition: CorePartition, path: Path | str) -> None:
    rows = []
    for node in graph.issuers:
        rows.append((node, "issuer", partition.core_number[node],
                     int(node in partition.core_issuers)))
    for node in graph.winners:
        rows.append((node, "winner", partition.core_number[node],
                     int(node in partition.core_winners)))
    write_csv(path, ("node_id", "role", "core_number", "is_core"), rows)


def write_core_stats(stats: CoreStats, path: Path | str) -> None:
    header = ("core_contracts", "core_share", "core_n_winners", "core_n_issuers",
              "core_n_edges", "core_single_bidding_rate")
    row = (stats.core_contracts, stats.core_share, stats.core_n_winners,
           stats.core_n_issuers, stats.core_n_edges, stats.core_single_bidding_rate)
    write_csv(path, header, [row])
