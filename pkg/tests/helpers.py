"""Shared test fixtures: record factories and random market generators."""

from __future__ import annotations

import numpy as np

from procnet.ingest import ContractRecord, ContractTable, cpv_code


def make_record(cid, issuer, winner, sb=False, cls="45", country="HU",
                year=2014, bids=None, value=None):
    n_bids = bids if bids is not None else (1 if sb else 3)
    return ContractRecord(
        contract_id=cid, country=country, year=year,
        issuer_id=issuer, winner_id=winner, cpv=cpv_code(cls + "000000"),
        n_bids=n_bids, single_bid=n_bids == 1, value=value,
    )


def make_table(records) -> ContractTable:
    return ContractTable(records=tuple(records))


def random_market_table(rng: np.random.Generator, max_side: int = 6,
                        max_weight: int = 5, sb_prob: float = 0.3,
                        n_classes: int = 3) -> ContractTable:
    """Small random bipartite market with integer edge weights.

    Every node is guaranteed at least one incident edge.
    """
    n_issuers = int(rng.integers(1, max_side + 1))
    n_winners = int(rng.integers(1, max_side + 1))
    records = []
    k = 0
    seen_edges = set()
    # at least one edge per node so the graph has no isolated vertices
    for i in range(n_issuers):
        w = int(rng.integers(0, n_winners))
        seen_edges.add((i, w))
    for w in range(n_winners):
        i = int(rng.integers(0, n_issuers))
        seen_edges.add((i, w))
    extra = int(rng.integers(0, n_issuers * n_winners // 2 + 1))
    for _ in range(extra):
        seen_edges.add((int(rng.integers(0, n_issuers)), int(rng.integers(0, n_winners))))
    for (i, w) in sorted(seen_edges):
        weight = int(rng.integers(1, max_weight + 1))
        for _ in range(weight):
            records.append(make_record(
                f"c{k:05d}", f"I{i}", f"W{w}",
                sb=bool(rng.random() < sb_prob),
                cls=f"{int(rng.integers(0, n_classes)) + 10}",
            ))
            k += 1
    return make_table(records)


def sample_discrete_power_law(alpha: float, size: int, rng: np.random.Generator,
                              xmax: int = 10 ** 6) -> np.ndarray:
    """Inverse-CDF sampler for p(x) ~ x^-alpha on 1..xmax (test oracle).

    Kept independent of the fitting code on purpose; truncation mass above
    xmax is ~1e-9 for alpha=2.5.
    """
    support = np.arange(1, xmax + 1, dtype=np.float64)
    cdf = np.cumsum(support ** -alpha)
    cdf /= cdf[-1]
    return 1 + np.searchsorted(cdf, rng.random(size), side="left")
