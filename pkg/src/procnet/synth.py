"""Synthetic procurement markets with planted structure.

Ground-truth generator for validating the detectors: issuers and winners
are split evenly into blocks, pairs connect with p_intra inside a block and
p_inter across blocks, edge weights (contract volumes) follow a constant or
truncated power-law law, and a configurable fraction of nodes is promoted
to hubs whose incident edge weights are multiplied up, manufacturing
high-volume core candidates. Single-bid flags follow one of three regimes:
uniform Bernoulli(p_base), hot on hub-hub edges (core_hot), or hot inside
selected blocks (blocks_hot).

Generation is fully deterministic given the config and seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError
from .ingest import ContractRecord, ContractTable, Provenance, cpv_code
from .util import read_kv_config

_CHUNK = 512  # issuer rows per Bernoulli draw; fixed so runs replay exactly


@dataclass(frozen=True, slots=True)
class WeightLaw:
    """Edge-weight distribution: constant, or truncated discrete power law."""

    kind: str = "constant"  # "constant" | "powerlaw"
    constant: int = 1
    exponent: float = 2.5
    max_weight: int = 100

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "powerlaw"):
            raise ValueError(f"unknown weight law {self.kind!r}")
        if self.kind == "constant" and self.constant < 1:
            raise ValueError("constant weight must be >= 1")
        if self.kind == "powerlaw" and (self.exponent <= 1.0 or self.max_weight < 1):
            raise ValueError("power-law weight law needs exponent > 1 and max >= 1")


@dataclass(frozen=True, slots=True)
class RiskRegime:
    """Where single-bidding risk is planted."""

    kind: str = "uniform"  # "uniform" | "core_hot" | "blocks_hot"
    p_base: float = 0.1
    p_hot: float = 0.0
    hot_blocks: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "core_hot", "blocks_hot"):
            raise ValueError(f"unknown risk regime {self.kind!r}")
        for p in (self.p_base, self.p_hot):
            if not 0.0 <= p <= 1.0:
                raise ValueError("risk probabilities must be in [0, 1]")


@dataclass(frozen=True)
class SynthConfig:
    n_issuers: int = 100
    n_winners: int = 100
    n_blocks: int = 1
    p_intra: float = 0.1
    p_inter: float = 0.0
    weight_law: WeightLaw = field(default_factory=WeightLaw)
    hub_fraction: float = 0.0
    hub_weight_multiplier: int = 1
    n_cpv_classes: int = 10
    risk_regime: RiskRegime = field(default_factory=RiskRegime)
    seed: int | None = None
    country: str = "XX"
    year: int = 2015
    n_years: int = 1

    def __post_init__(self) -> None:
        if self.n_issuers < 1 or self.n_winners < 1 or self.n_blocks < 1:
            raise ValueError("node and block counts must be positive")
        if not (0.0 <= self.p_inter <= self.p_intra <= 1.0):
            raise ValueError("need 0 <= p_inter <= p_intra <= 1")
        if not 0.0 <= self.hub_fraction <= 1.0:
            raise ValueError("hub_fraction must be in [0, 1]")
        if self.hub_weight_multiplier < 1:
            raise ValueError("hub_weight_multiplier must be >= 1")
        if not 1 <= self.n_cpv_classes <= 99:
            raise ValueError("n_cpv_classes must be in 1..99")
        if self.n_years < 1:
            raise ValueError("n_years must be >= 1")
        bad = [b for b in self.risk_regime.hot_blocks if not 0 <= b < self.n_blocks]
        if bad:
            raise ValueError(f"hot blocks {bad} outside 0..{self.n_blocks - 1}")


def _block_of(n_nodes: int, n_blocks: int) -> np.ndarray:
    return (np.arange(n_nodes, dtype=np.int64) * n_blocks) // n_nodes


def _sample_weights(law: WeightLaw, size: int, rng: np.random.Generator) -> np.ndarray:
    if law.kind == "constant":
        return np.full(size, law.constant, dtype=np.int64)
    support = np.arange(1, law.max_weight + 1, dtype=np.float64)
    cdf = np.cumsum(support ** -law.exponent)
    cdf /= cdf[-1]
    return 1 + np.searchsorted(cdf, rng.random(size), side="left").astype(np.int64)


def generate_market(config: SynthConfig, seed: int | None = None) -> ContractTable:
    """Generate a synthetic contract table; same (config, seed) replays exactly."""
    if seed is None:
        seed = config.seed
    if seed is None:
        raise ValueError("a seed is required (in the config or as an argument)")
    rng = np.random.default_rng(seed)

    issuer_block = _block_of(config.n_issuers, config.n_blocks)
    winner_block = _block_of(config.n_winners, config.n_blocks)

    n_hub_issuers = int(round(config.hub_fraction * config.n_issuers))
    n_hub_winners = int(round(config.hub_fraction * config.n_winners))
    issuer_hub = np.zeros(config.n_issuers, dtype=bool)
    winner_hub = np.zeros(config.n_winners, dtype=bool)
    if n_hub_issuers:
        issuer_hub[rng.choice(config.n_issuers, n_hub_issuers, replace=False)] = True
    if n_hub_winners:
        winner_hub[rng.choice(config.n_winners, n_hub_winners, replace=False)] = True

    # Edge sampling, chunked over issuer rows in fixed order.
    edge_i: list[np.ndarray] = []
    edge_w: list[np.ndarray] = []
    for start in range(0, config.n_issuers, _CHUNK):
        stop = min(start + _CHUNK, config.n_issuers)
        same = issuer_block[start:stop, None] == winner_block[None, :]
        p = np.where(same, config.p_intra, config.p_inter)
        hit_i, hit_w = np.nonzero(rng.random(p.shape) < p)
        edge_i.append(hit_i + start)
        edge_w.append(hit_w)
    issuers_of_edge = np.concatenate(edge_i) if edge_i else np.empty(0, dtype=np.int64)
    winners_of_edge = np.concatenate(edge_w) if edge_w else np.empty(0, dtype=np.int64)
    n_edges = issuers_of_edge.size
    if n_edges == 0:
        raise DataError("synthetic market has no edges; raise the connection probabilities")

    weights = _sample_weights(config.weight_law, n_edges, rng)
    mult = config.hub_weight_multiplier
    if mult > 1:
        weights = weights * mult ** (
            issuer_hub[issuers_of_edge].astype(np.int64)
            + winner_hub[winners_of_edge].astype(np.int64)
        )
    n_contracts = int(weights.sum())
    if n_contracts == 0:
        raise DataError("synthetic market has no contracts")

    contract_edge = np.repeat(np.arange(n_edges, dtype=np.int64), weights)
    cpv_class = rng.integers(1, config.n_cpv_classes + 1, size=n_contracts)

    regime = config.risk_regime
    if regime.kind == "uniform":
        p_contract = np.full(n_contracts, regime.p_base)
    elif regime.kind == "core_hot":
        hot_edge = issuer_hub[issuers_of_edge] & winner_hub[winners_of_edge]
        p_contract = np.where(hot_edge[contract_edge], regime.p_hot, regime.p_base)
    else:  # blocks_hot
        hot_set = np.zeros(config.n_blocks, dtype=bool)
        hot_set[list(regime.hot_blocks)] = True
        intra = issuer_block[issuers_of_edge] == winner_block[winners_of_edge]
        hot_edge = intra & hot_set[issuer_block[issuers_of_edge]]
        p_contract = np.where(hot_edge[contract_edge], regime.p_hot, regime.p_base)
    single_bid = rng.random(n_contracts) < p_contract

    extra_bids = rng.integers(2, 6, size=n_contracts)
    n_bids = np.where(single_bid, 1, extra_bids)
    if config.n_years > 1:
        years = rng.integers(config.year, config.year + config.n_years, size=n_contracts)
    else:
        years = np.full(n_contracts, config.year)

    issuer_names = [f"I{k:05d}" for k in range(config.n_issuers)]
    winner_names = [f"W{k:05d}" for k in range(config.n_winners)]
    cpv_codes = {c: cpv_code(f"{c:02d}000000") for c in range(1, config.n_cpv_classes + 1)}

    records = []
    edge_iss = issuers_of_edge[contract_edge].tolist()
    edge_win = winners_of_edge[contract_edge].tolist()
    for k, (iss, win, cls, bids, flag, year) in enumerate(zip(
            edge_iss, edge_win, cpv_class.tolist(), n_bids.tolist(),
            single_bid.tolist(), years.tolist())):
        records.append(ContractRecord(
            contract_id=f"C{k:07d}",
            country=config.country,
            year=int(year),
            issuer_id=issuer_names[iss],
            winner_id=winner_names[win],
            cpv=cpv_codes[cls],
            n_bids=int(bids),
            single_bid=bool(flag),
            value=None,
        ))
    provenance = Provenance(source=f"<synthetic seed={seed}>", n_rows=len(records))
    return ContractTable(records=tuple(records), provenance=provenance)


def read_synth_config(path: Path | str) -> SynthConfig:
    """Load a SynthConfig from a plain-text key-value file.

    Example::

        n_issuers = 200
        n_winners = 300
        n_blocks = 10
        p_intra = 0.2
        p_inter = 0.005
        weight_law = powerlaw:2.5:50
        hub_fraction = 0.1
        hub_weight_multiplier = 10
        n_cpv_classes = 20
        risk_regime = core_hot:0.1:0.4
        seed = 7
    """
    raw = read_kv_config(path)
    kwargs: dict = {}
    try:
        for key, value in raw.items():
            if key in ("n_issuers", "n_winners", "n_blocks", "hub_weight_multiplier",
                       "n_cpv_classes", "seed", "year", "n_years"):
                kwargs[key] = int(value)
            elif key in ("p_intra", "p_inter", "hub_fraction"):
                kwargs[key] = float(value)
            elif key == "country":
                kwargs[key] = value
            elif key == "weight_law":
                kwargs[key] = _parse_weight_law(value)
            elif key == "risk_regime":
                kwargs[key] = _parse_risk_regime(value)
            else:
                raise DataError(f"unknown synth config key {key!r}")
        return SynthConfig(**kwargs)
    except ValueError as exc:
        raise DataError(f"invalid synth config {path}: {exc}") from exc


def _parse_weight_law(text: str) -> WeightLaw:
    parts = text.split(":")
    if parts[0] == "constant" and len(parts) == 2:
        return WeightLaw(kind="constant", constant=int(parts[1]))
    if parts[0] == "powerlaw" and len(parts) == 3:
        return WeightLaw(kind="powerlaw", exponent=float(parts[1]), max_weight=int(parts[2]))
    raise DataError(f"cannot parse weight law {text!r} "
                    "(expected constant:<w> or powerlaw:<exponent>:<max>)")


def _parse_risk_regime(text: str) -> RiskRegime:
    parts = text.split(":")
    if parts[0] == "uniform" and len(parts) == 2:
        return RiskRegime(kind="uniform", p_base=float(parts[1]))
    if parts[0] == "core_hot" and len(parts) == 3:
        return RiskRegime(kind="core_hot", p_base=float(parts[1]), p_hot=float(parts[2]))
    if parts[0] == "blocks_hot" and len(parts) == 4:
        hot = tuple(int(b) for b in parts[3].split(",") if b != "")
        return RiskRegime(kind="blocks_hot", p_base=float(parts[1]),
                          p_hot=float(parts[2]), hot_blocks=hot)
    raise DataError(f"cannot parse risk regime {text!r} (expected uniform:<p>, "
                    "core_hot:<p_base>:<p_hot> or blocks_hot:<p_base>:<p_hot>:<b1,b2>)")
