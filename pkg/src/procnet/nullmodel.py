"""Sector-preserving permutation null models.

Replicates shuffle single-bid labels uniformly within each 2-digit CPV
class, leaving topology, edge weights and per-class label counts untouched.
A contract-level statistic is re-evaluated on every permuted labeling; the
observed value is then scored against the replicate distribution as a
ratio (observed / null mean) and a z-score.

Replicate i draws its generator from (seed, i), so the sample sequence is
reproducible and independent of how replicates are scheduled; runs with
different worker counts produce identical results.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .communities import EdgePartition
from .core import CorePartition
from .errors import DataError
from .market import ContractArrays
from .util import UNDEFINED, write_csv

Statistic = Callable[[np.ndarray], float]


def class_blocks(arrays: ContractArrays) -> list[np.ndarray]:
    """Contract indices grouped by CPV class (classes in label order)."""
    order = np.argsort(arrays.cpv_class, kind="stable")
    boundaries = np.searchsorted(arrays.cpv_class[order], np.arange(len(arrays.cpv_labels) + 1))
    return [order[boundaries[c]:boundaries[c + 1]]
            for c in range(len(arrays.cpv_labels))
            if boundaries[c + 1] > boundaries[c]]


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng([seed, replicate])


def cpv_shuffle(flags: np.ndarray, blocks: Sequence[np.ndarray],
                rng: np.random.Generator) -> np.ndarray:
    """Permute flags uniformly at random within each class block."""
    out = flags.copy()
    for block in blocks:
        out[block] = flags[block][rng.permutation(block.size)]
    return out


def permuted_flags(arrays: ContractArrays, seed: int, replicate: int) -> np.ndarray:
    """The exact flag permutation replicate ``replicate`` of a seeded run uses."""
    return cpv_shuffle(arrays.single_bid, class_blocks(arrays), replicate_rng(seed, replicate))


def relative_score(observed: float, null_mean: float, null_std: float) -> tuple[float, float]:
    """(observed/null_mean, z-score); each NaN when its denominator is zero."""
    ratio = observed / null_mean if null_mean != 0.0 else UNDEFINED
    z = (observed - null_mean) / null_std if null_std != 0.0 else UNDEFINED
    return ratio, z


@dataclass(frozen=True)
class NullModelResult:
    statistic: str
    observed: float
    null_mean: float
    null_std: float
    ratio: float
    z: float
    n_reps: int
    n_missing: int
    seed: int
    samples: np.ndarray | None = None  # length n_reps; NaN marks missing replicates


def null_distribution(statistic: Statistic,
                      arrays: ContractArrays,
                      n_reps: int = 1000,
                      seed: int = 0,
                      workers: int = 1,
                      keep_samples: bool = False,
                      name: str = "statistic") -> NullModelResult:
    """Score ``statistic`` against the CPV-preserving null.

    Replicates on which the statistic is undefined (NaN) are excluded from
    the null moments and counted in ``n_missing``. The null std uses n-1
    normalization: replicates are an i.i.d. sample from the null.
    """
    if n_reps < 1:
        raise ValueError("n_reps must be >= 1")
    observed = float(statistic(arrays.single_bid))
    if math.isnan(observed):
        raise DataError(f"statistic {name!r} is undefined on the observed labels")

    blocks = class_blocks(arrays)
    flags = arrays.single_bid

    def run_replicate(i: int) -> float:
        permuted = cpv_shuffle(flags, blocks, replicate_rng(seed, i))
        return float(statistic(permuted))

    if workers > 1:
        # Chunked so scheduling overhead stays negligible; replicate i's
        # result depends only on (seed, i), never on the chunking.
        chunks = np.array_split(np.arange(n_reps), min(workers * 4, n_reps))

        def run_chunk(chunk: np.ndarray) -> list[float]:
            return [run_replicate(int(i)) for i in chunk]

        with ThreadPoolExecutor(max_workers=workers) as pool:
            samples = np.fromiter(
                (value for chunk in pool.map(run_chunk, chunks) for value in chunk),
                dtype=np.float64, count=n_reps,
            )
    else:
        samples = np.fromiter(
            (run_replicate(i) for i in range(n_reps)), dtype=np.float64, count=n_reps
        )

    valid = samples[~np.isnan(samples)]
    n_missing = n_reps - valid.size
    if valid.size == 0:
        raise DataError(f"statistic {name!r} was undefined on every replicate")
    if valid.min() == valid.max():
        # identical replicates: summation must not perturb the exact value
        null_mean = float(valid[0])
        null_std = 0.0 if valid.size > 1 else UNDEFINED
    else:
        null_mean = float(valid.mean())
        null_std = float(valid.std(ddof=1)) if valid.size > 1 else UNDEFINED
    if math.isnan(null_std):
        ratio, _ = relative_score(observed, null_mean, 0.0)
        z = UNDEFINED
    else:
        ratio, z = relative_score(observed, null_mean, null_std)
    return NullModelResult(
        statistic=name,
        observed=observed,
        null_mean=null_mean,
        null_std=null_std,
        ratio=ratio,
        z=z,
        n_reps=n_reps,
        n_missing=n_missing,
        seed=seed,
        samples=samples if keep_samples else None,
    )


# ---------------------------------------------------------------------------
# Statistic factories. Each returns a read-only closure over precomputed
# index arrays; the only per-replicate input is the permuted flag vector.
# ---------------------------------------------------------------------------

def global_rate_statistic() -> Statistic:
    """Market-wide single-bidding rate (conserved by the null exactly)."""

    def stat(flags: np.ndarray) -> float:
        return float(flags.mean()) if flags.size else UNDEFINED

    return stat


def core_rate_statistic(arrays: ContractArrays, partition: CorePartition) -> Statistic:
    """Single-bidding rate on contracts whose issuer and winner are both core."""
    core_edge = np.fromiter(
        ((issuer in partition.core_issuers and winner in partition.core_winners)
         for issuer, winner in arrays.edge_keys),
        dtype=bool, count=len(arrays.edge_keys),
    )
    mask = core_edge[arrays.edge_index]

    def stat(flags: np.ndarray) -> float:
        return float(flags[mask].mean()) if mask.any() else UNDEFINED

    return stat


def cv_statistic(arrays: ContractArrays, partition: EdgePartition) -> Statistic:
    """Weighted CV of single-bidding rates across contract clusters."""
    edge_comm = np.fromiter(
        (partition.community[key] for key in arrays.edge_keys),
        dtype=np.int64, count=len(arrays.edge_keys),
    )
    cluster = edge_comm[arrays.edge_index]
    n_comms = int(edge_comm.max()) + 1 if edge_comm.size else 0
    sizes = np.bincount(cluster, minlength=n_comms).astype(np.float64)
    present = sizes > 0
    sizes = sizes[present]
    n_clusters = int(present.sum())
    total = sizes.sum()
    if n_clusters >= 2:
        denom = ((n_clusters - 1) / n_clusters) * total
    else:
        denom = UNDEFINED

    def stat(flags: np.ndarray) -> float:
        if n_clusters < 2:
            return UNDEFINED
        counts = np.bincount(cluster, weights=flags, minlength=n_comms)[present]
        rates = counts / sizes
        mu = float((sizes * rates).sum() / total)
        if mu == 0.0:
            return UNDEFINED
        sigma = math.sqrt(float((sizes * (rates - mu) ** 2).sum()) / denom)
        return sigma / mu

    return stat


def write_null_result(result: NullModelResult, path: Path | str,
                      samples_path: Path | str | None = None) -> None:
    """Write the result as JSON (NaN rendered as null); samples optionally as CSV."""
    payload = {
        "statistic": result.statistic,
        "observed": _jsonable(result.observed),
        "null_mean": _jsonable(result.null_mean),
        "null_std": _jsonable(result.null_std),
        "ratio": _jsonable(result.ratio),
        "z": _jsonable(result.z),
        "n_reps": result.n_reps,
        "n_missing": result.n_missing,
        "seed": result.seed,
    }
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    if samples_path is not None and result.samples is not None:
        write_csv(
            samples_path,
            ("replicate", "value"),
            ((i, None if math.isnan(v) else v) for i, v in enumerate(result.samples.tolist())),
        )


def _jsonable(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x
