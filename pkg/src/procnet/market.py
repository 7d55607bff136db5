"""Weighted bipartite issuer-winner market networks and descriptive statistics.

An edge connects an issuer and a winner; its weight is the number of
contracts between them and it tracks how many of those attracted a single
bid. Descriptive statistics cover density, weighted-degree moments per node
class, the market single-bidding rate and Robins-Alexander clustering (the
bipartite analogue of the clustering coefficient).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp

from .errors import DataError
from .ingest import ContractTable
from .util import UNDEFINED, write_csv

EdgeKey = tuple[str, str]


@dataclass(frozen=True, slots=True)
class EdgeStats:
    """Contracts aggregated on one issuer-winner edge."""

    contract_ids: tuple[str, ...]
    single_bid_count: int

    @property
    def weight(self) -> int:
        return len(self.contract_ids)


class ContractRef(NamedTuple):
    edge: EdgeKey
    cpv_class: str
    single_bid: bool


@dataclass(frozen=True)
class MarketGraph:
    """Weighted bipartite market network. Treat as immutable after build.

    ``contract_index`` preserves the source table's contract order, which
    fixes the contract ordering used by array views and permutation nulls.
    """

    issuers: tuple[str, ...]
    winners: tuple[str, ...]
    edges: dict[EdgeKey, EdgeStats]
    contract_index: dict[str, ContractRef]

    @property
    def n_contracts(self) -> int:
        return len(self.contract_index)

    @cached_property
    def edge_keys(self) -> tuple[EdgeKey, ...]:
        """Edges in sorted order; the canonical edge indexing."""
        return tuple(sorted(self.edges))

    @cached_property
    def strengths(self) -> dict[str, int]:
        """Weighted degree (contract count) per node."""
        out: dict[str, int] = {n: 0 for n in self.issuers}
        out.update({n: 0 for n in self.winners})
        for (issuer, winner), stats in self.edges.items():
            out[issuer] += stats.weight
            out[winner] += stats.weight
        return out

    @cached_property
    def degrees(self) -> dict[str, int]:
        """Unweighted degree (distinct partners) per node."""
        out: dict[str, int] = {n: 0 for n in self.issuers}
        out.update({n: 0 for n in self.winners})
        for issuer, winner in self.edges:
            out[issuer] += 1
            out[winner] += 1
        return out


def build_market_graph(table: ContractTable) -> MarketGraph:
    """Aggregate a contract table into its bipartite market network."""
    if not table.records:
        raise DataError("empty market")
    contracts: dict[EdgeKey, list[str]] = {}
    sb_counts: dict[EdgeKey, int] = {}
    contract_index: dict[str, ContractRef] = {}
    issuers: set[str] = set()
    winners: set[str] = set()

    for rec in table.records:
        key = (rec.issuer_id, rec.winner_id)
        contracts.setdefault(key, []).append(rec.contract_id)
        if rec.single_bid:
            sb_counts[key] = sb_counts.get(key, 0) + 1
        contract_index[rec.contract_id] = ContractRef(key, rec.cpv.class2, rec.single_bid)
        issuers.add(rec.issuer_id)
        winners.add(rec.winner_id)

    overlap = issuers & winners
    if overlap:
        raise DataError(f"node ids appear as both issuer and winner: {sorted(overlap)[:5]}")
    edges = {
        key: EdgeStats(contract_ids=tuple(ids), single_bid_count=sb_counts.get(key, 0))
        for key, ids in contracts.items()
    }
    return MarketGraph(
        issuers=tuple(sorted(issuers)),
        winners=tuple(sorted(winners)),
        edges=edges,
        contract_index=contract_index,
    )


@dataclass(frozen=True, slots=True)
class MarketStats:
    """One market's summary row.

    Degree moments are over weighted degrees (strengths); the standard
    deviations use population normalization.
    """

    n_contracts: int
    n_winners: int
    n_issuers: int
    density: float
    ra_clustering: float
    mu_deg_w: float
    sigma_deg_w: float
    mu_deg_i: float
    sigma_deg_i: float
    single_bidding_rate: float


def market_stats(graph: MarketGraph) -> MarketStats:
    strengths = graph.strengths
    deg_w = np.array([strengths[n] for n in graph.winners], dtype=float)
    deg_i = np.array([strengths[n] for n in graph.issuers], dtype=float)
    n_contracts = graph.n_contracts
    sb_total = sum(stats.single_bid_count for stats in graph.edges.values())
    return MarketStats(
        n_contracts=n_contracts,
        n_winners=len(graph.winners),
        n_issuers=len(graph.issuers),
        density=len(graph.edges) / (len(graph.issuers) * len(graph.winners)),
        ra_clustering=robins_alexander_clustering(graph),
        mu_deg_w=float(deg_w.mean()),
        sigma_deg_w=float(deg_w.std()),
        mu_deg_i=float(deg_i.mean()),
        sigma_deg_i=float(deg_i.std()),
        single_bidding_rate=sb_total / n_contracts,
    )


def robins_alexander_clustering(graph: MarketGraph, scaled: bool = True) -> float:
    """Bipartite clustering: 4 * (4-cycles) / (3-paths), ignoring weights.

    With the factor 4 every complete bipartite graph scores 1.0; pass
    ``scaled=False`` for the literal cycle/path ratio. Returns NaN when the
    graph has no 3-edge path.

    4-cycles are counted from pairwise common-neighbor counts rather than
    enumeration, so hub-heavy markets stay tractable.
    """
    degrees = graph.degrees
    paths3 = sum(
        (degrees[i] - 1) * (degrees[w] - 1) for (i, w) in graph.edges
    )
    if paths3 == 0:
        return UNDEFINED

    issuer_idx = {n: k for k, n in enumerate(graph.issuers)}
    winner_idx = {n: k for k, n in enumerate(graph.winners)}
    rows = np.fromiter((issuer_idx[i] for (i, _) in graph.edges), dtype=np.int64, count=len(graph.edges))
    cols = np.fromiter((winner_idx[w] for (_, w) in graph.edges), dtype=np.int64, count=len(graph.edges))
    biadj = sp.csr_matrix(
        (np.ones(len(rows), dtype=np.int64), (rows, cols)),
        shape=(len(graph.issuers), len(graph.winners)),
    )
    common = biadj @ biadj.T  # issuer-pair common neighbor counts
    counts = common.data
    pairs_all = int((counts * (counts - 1) // 2).sum())
    diag = common.diagonal()
    pairs_diag = int((diag * (diag - 1) // 2).sum())
    cycles4 = (pairs_all - pairs_diag) // 2

    ratio = cycles4 / paths3
    return 4.0 * ratio if scaled else ratio


@dataclass(frozen=True)
class ContractArrays:
    """Array view of a market's contracts, in table order.

    The canonical flat representation used by permutation null models and
    vectorized statistics: contract i sits on edge ``edge_index[i]`` (into
    ``edge_keys``), belongs to CPV class ``cpv_class[i]`` (into
    ``cpv_labels``) and carries the observed flag ``single_bid[i]``.
    """

    contract_ids: tuple[str, ...]
    edge_keys: tuple[EdgeKey, ...]
    edge_index: np.ndarray
    cpv_labels: tuple[str, ...]
    cpv_class: np.ndarray
    single_bid: np.ndarray

    @property
    def n_contracts(self) -> int:
        return len(self.contract_ids)


def contract_arrays(graph: MarketGraph) -> ContractArrays:
    edge_pos = {key: k for k, key in enumerate(graph.edge_keys)}
    labels = tuple(sorted({ref.cpv_class for ref in graph.contract_index.values()}))
    label_pos = {lab: k for k, lab in enumerate(labels)}

    n = graph.n_contracts
    edge_index = np.empty(n, dtype=np.int32)
    cpv_class = np.empty(n, dtype=np.int16)
    single_bid = np.empty(n, dtype=bool)
    ids = []
    for k, (cid, ref) in enumerate(graph.contract_index.items()):
        ids.append(cid)
        edge_index[k] = edge_pos[ref.edge]
        cpv_class[k] = label_pos[ref.cpv_class]
        single_bid[k] = ref.single_bid
    return ContractArrays(
        contract_ids=tuple(ids),
        edge_keys=graph.edge_keys,
        edge_index=edge_index,
        cpv_labels=labels,
        cpv_class=cpv_class,
        single_bid=single_bid,
    )


def write_edge_list(graph: MarketGraph, path: Path | str) -> None:
    rows = (
        (issuer, winner, graph.edges[(issuer, winner)].weight,
         graph.edges[(issuer, winner)].single_bid_count)
        for issuer, winner in graph.edge_keys
    )
    write_csv(path, ("issuer_id", "winner_id", "weight", "single_bid_count"), rows)


def write_market_stats(stats: MarketStats, path: Path | str) -> None:
    header = (
        "n_contracts", "n_winners", "n_issuers", "density", "ra_clustering",
        "mu_deg_w", "sigma_deg_w", "mu_deg_i", "sigma_deg_i", "single_bidding_rate",
    )
    row = (
        stats.n_contracts, stats.n_winners, stats.n_issuers, stats.density,
        stats.ra_clustering, stats.mu_deg_w, stats.sigma_deg_w,
        stats.mu_deg_i, stats.sigma_deg_i, stats.single_bidding_rate,
    )
    write_csv(path, header, [row])
