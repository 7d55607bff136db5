"""Link communities and the clustering of single bidding.

Market edges become nodes of a line graph (adjacent when the underlying
edges share an issuer or a winner); Louvain on that line graph assigns
every market edge, hence every contract, to a community. The spread of
single-bidding rates across those contract clusters is summarized by
size-weighted mean/std and their ratio, the weighted coefficient of
variation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DataError
from .louvain import louvain_labels
from .market import EdgeKey, MarketGraph
from .util import UNDEFINED, write_csv

logger = logging.getLogger(__name__)

DEFAULT_LINE_EDGE_CAP = 10 ** 8


@dataclass(frozen=True)
class LineGraph:
    """Line graph of a market: one node per market edge.

    ``edge_keys[i]`` is the market edge behind line node i; ``pairs_u`` /
    ``pairs_v`` list the line edges (u < v), one per pair of market edges
    sharing an endpoint.
    """

    edge_keys: tuple[EdgeKey, ...]
    pairs_u: np.ndarray
    pairs_v: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.edge_keys)

    @property
    def n_edges(self) -> int:
        return int(self.pairs_u.size)


def line_graph(graph: MarketGraph, max_line_edges: int = DEFAULT_LINE_EDGE_CAP) -> LineGraph:
    """Build the line graph; cost is sum over nodes of C(degree, 2).

    Refuses to materialize more than ``max_line_edges`` line edges and
    names the hub nodes responsible when the cap is hit.
    """
    if not graph.edges:
        raise DataError("market has no edges")
    edge_keys = graph.edge_keys
    incident: dict[str, list[int]] = {}
    for idx, (issuer, winner) in enumerate(edge_keys):
        incident.setdefault(issuer, []).append(idx)
        incident.setdefault(winner, []).append(idx)

    projected = sum(len(inc) * (len(inc) - 1) // 2 for inc in incident.values())
    if projected > max_line_edges:
        hubs = sorted(incident, key=lambda n: len(incident[n]), reverse=True)[:5]
        detail = ", ".join(f"{n} (degree {len(incident[n])})" for n in hubs)
        raise DataError(
            f"line graph would have {projected} edges (cap {max_line_edges}); "
            f"dominant hub nodes: {detail}"
        )

    us: list[np.ndarray] = []
    vs: list[np.ndarray] = []
    for inc in incident.values():
        if len(inc) < 2:
            continue
        arr = np.asarray(inc, dtype=np.int64)  # ascending by construction
        iu, iv = np.triu_indices(arr.size, 1)
        us.append(arr[iu])
        vs.append(arr[iv])
    if us:
        pairs_u = np.concatenate(us)
        pairs_v = np.concatenate(vs)
    else:
        pairs_u = np.empty(0, dtype=np.int64)
        pairs_v = np.empty(0, dtype=np.int64)
    return LineGraph(edge_keys=edge_keys, pairs_u=pairs_u, pairs_v=pairs_v)


@dataclass(frozen=True)
class EdgePartition:
    """Assignment of every market edge to a link community."""

    community: dict[EdgeKey, int]
    modularity: float


def partition_labels(lg: LineGraph, partition: EdgePartition) -> np.ndarray:
    """Community id per line node, aligned with ``lg.edge_keys``."""
    try:
        return np.asarray([partition.community[key] for key in lg.edge_keys], dtype=np.int64)
    except KeyError as exc:
        raise ValueError(f"partition does not cover market edge {exc.args[0]!r}") from None


def louvain(lg: LineGraph, seed: int) -> EdgePartition:
    """Louvain partition of the line graph, mapped back to market edges.

    A line graph with no line edges degenerates to singleton communities
    with modularity 0 by convention.
    """
    if lg.n_nodes == 0:
        raise DataError("empty line graph")
    if lg.n_edges == 0:
        logger.info("line graph has no edges; every market edge is its own community")
        labels = np.arange(lg.n_nodes, dtype=np.int64)
    else:
        labels = louvain_labels(lg.n_nodes, lg.pairs_u, lg.pairs_v, seed=seed)
    community = {key: int(c) for key, c in zip(lg.edge_keys, labels.tolist())}
    return EdgePartition(community=community, modularity=modularity(lg, labels))


def modularity(lg: LineGraph, labels_or_partition) -> float:
    """Newman-Girvan modularity of a line-graph partition (unweighted)."""
    if isinstance(labels_or_partition, EdgePartition):
        labels = partition_labels(lg, labels_or_partition)
    else:
        labels = np.asarray(labels_or_partition, dtype=np.int64)
        if labels.size != lg.n_nodes:
            raise ValueError("partition does not cover all line nodes")
    m = lg.n_edges
    if m == 0:
        return 0.0
    n_comms = int(labels.max()) + 1
    cu = labels[lg.pairs_u]
    cv = labels[lg.pairs_v]
    e_c = np.bincount(cu[cu == cv], minlength=n_comms).astype(np.float64)
    deg = (np.bincount(lg.pairs_u, minlength=lg.n_nodes)
           + np.bincount(lg.pairs_v, minlength=lg.n_nodes)).astype(np.float64)
    d_c = np.bincount(labels, weights=deg, minlength=n_comms)
    return float((e_c / m - (d_c / (2.0 * m)) ** 2).sum())


def weighted_sb_moments(clusters: Mapping[object, tuple[int, float]]) -> tuple[float, float]:
    """Size-weighted mean and std of single-bidding rates across clusters.

    mean = sum(|c| * sb_c) / sum(|c|); the squared std divides the weighted
    sum of squared deviations by ((|C|-1)/|C|) * sum(|c|). With fewer than
    two clusters the std is undefined (NaN).
    """
    if not clusters:
        raise ValueError("no clusters")
    sizes = np.array([size for size, _ in clusters.values()], dtype=np.float64)
    rates = np.array([rate for _, rate in clusters.values()], dtype=np.float64)
    if (sizes <= 0).any():
        raise ValueError("cluster sizes must be positive")
    total = sizes.sum()
    mu = float((sizes * rates).sum() / total)
    n_clusters = sizes.size
    if n_clusters < 2:
        return mu, UNDEFINED
    denom = ((n_clusters - 1) / n_clusters) * total
    sigma = float(math.sqrt(float((sizes * (rates - mu) ** 2).sum()) / denom))
    return mu, sigma


@dataclass(frozen=True)
class RiskClusteringResult:
    """Weighted variation of single bidding across contract clusters."""

    mu_w: float
    sigma_w: float
    cv: float
    cluster_sizes: dict[int, int]
    cluster_sb: dict[int, float]


def sb_clustering_cv(graph: MarketGraph, partition: EdgePartition) -> RiskClusteringResult:
    """Clustering of single bidding: weighted CV of rates across clusters.

    Contracts inherit the community of their edge. The CV is NaN when the
    weighted mean is zero (no single bidding) or only one cluster exists.
    """
    sizes: dict[int, int] = {}
    sb: dict[int, int] = {}
    for ref in graph.contract_index.values():
        try:
            community = partition.community[ref.edge]
        except KeyError:
            raise ValueError(f"partition does not cover market edge {ref.edge!r}") from None
        sizes[community] = sizes.get(community, 0) + 1
        if ref.single_bid:
            sb[community] = sb.get(community, 0) + 1
    cluster_sizes = dict(sorted(sizes.items()))
    cluster_sb = {c: sb.get(c, 0) / n for c, n in cluster_sizes.items()}
    mu, sigma = weighted_sb_moments(
        {c: (cluster_sizes[c], cluster_sb[c]) for c in cluster_sizes}
    )
    if math.isnan(sigma) or mu == 0.0:
        cv = UNDEFINED
    else:
        cv = sigma / mu
    return RiskClusteringResult(
        mu_w=mu, sigma_w=sigma, cv=cv,
        cluster_sizes=cluster_sizes, cluster_sb=cluster_sb,
    )


def write_edge_partition(partition: EdgePartition, path: Path | str) -> None:
    rows = (
        (issuer, winner, community)
        for (issuer, winner), community in sorted(partition.community.items())
    )
    write_csv(path, ("issuer_id", "winner_id", "community"), rows)


def write_cluster_summary(result: RiskClusteringResult, path: Path | str) -> None:
    rows = (
        (community, result.cluster_sizes[community], result.cluster_sb[community])
        for community in result.cluster_sizes
    )
    write_csv(path, ("community", "n_contracts", "sb_rate"), rows)
