"""Country/year aggregation, survey-indicator correlations and figure data.

Runs the full per-market analysis (descriptives, core decomposition, link
communities, permutation nulls) for every country-year slice of a table,
averages per-year results by country, correlates country single-bidding
rates against user-supplied perception indices, and emits one CSV per
analysis plus a JSON manifest. External indices are consumed as plain
``country,value`` CSVs; this package never embeds third-party index data.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .communities import line_graph, louvain, sb_clustering_cv
from .core import core_membership, core_stats, weighted_core_numbers
from .errors import DataError
from .ingest import ContractTable
from .market import build_market_graph, contract_arrays, market_stats
from .nullmodel import core_rate_statistic, cv_statistic, null_distribution
from .util import UNDEFINED, subseed, write_csv

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def country_sb_rate(table: ContractTable) -> float:
    """Share of single-bid contracts among contracts with known bid counts."""
    known = [r for r in table.records if r.n_bids is not None]
    if not known:
        return UNDEFINED
    return sum(r.single_bid for r in known) / len(known)


@dataclass(frozen=True)
class IndicatorSeries:
    """One external country-level indicator vintage."""

    name: str
    values: dict[str, float]
    year: int
    polarity: str  # "higher_is_worse" | "higher_is_better"

    def __post_init__(self) -> None:
        if self.polarity not in ("higher_is_worse", "higher_is_better"):
            raise ValueError(f"unknown polarity {self.polarity!r}")


def load_indicator_csv(path: Path | str, name: str, year: int, polarity: str) -> IndicatorSeries:
    values: dict[str, float] = {}
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read indicator file {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"country", "value"} <= set(reader.fieldnames):
            raise DataError(f"{path}: indicator CSV needs columns country,value")
        for row in reader:
            country = row["country"].strip().upper()
            if country in values:
                raise DataError(f"{path}: duplicate country {country}")
            try:
                value = float(row["value"])
            except ValueError as exc:
                raise DataError(f"{path}: bad value for {country}: {row['value']!r}") from exc
            if not math.isfinite(value):
                raise DataError(f"{path}: non-finite value for {country}")
            values[country] = value
    return IndicatorSeries(name=name, values=values, year=year, polarity=polarity)


@dataclass(frozen=True, slots=True)
class CorrelationResult:
    r: float
    ci_low: float
    ci_high: float
    n: int
    n_boot: int


def pearson_with_bootstrap(x, y, n_boot: int = 1000, seed: int = 0) -> CorrelationResult:
    """Pearson r with a seeded percentile-bootstrap 95% interval.

    Resampling is over pairs, with replacement; degenerate resamples (zero
    variance) are dropped from the percentile computation.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    n = x.size
    if n < 3:
        raise DataError("need at least 3 paired observations")
    if x.std() == 0.0 or y.std() == 0.0:
        raise DataError("zero variance")

    r = float(np.corrcoef(x, y)[0, 1])
    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(n_boot, n))
    xs = x[idx]
    ys = y[idx]
    xc = xs - xs.mean(axis=1, keepdims=True)
    yc = ys - ys.mean(axis=1, keepdims=True)
    num = (xc * yc).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        rs = num / np.sqrt((xc ** 2).sum(axis=1) * (yc ** 2).sum(axis=1))
    rs = rs[np.isfinite(rs)]
    if rs.size == 0:
        raise DataError("all bootstrap resamples degenerate")
    ci_low, ci_high = np.percentile(rs, [2.5, 97.5])
    return CorrelationResult(r=r, ci_low=float(ci_low), ci_high=float(ci_high),
                             n=n, n_boot=n_boot)


@dataclass(frozen=True, slots=True)
class MarketYearMetrics:
    """Full analysis of one country-year market."""

    country: str
    year: int
    n_contracts: int
    sb_rate: float
    density: float
    ra_clustering: float
    core_share: float
    core_sb_rate: float
    core_sb_ratio: float
    core_sb_z: float
    modularity: float
    cv: float
    cv_ratio: float
    cv_z: float


def split_by_country_year(table: ContractTable) -> dict[tuple[str, int], ContractTable]:
    groups: dict[tuple[str, int], list] = {}
    for rec in table.records:
        groups.setdefault((rec.country, rec.year), []).append(rec)
    return {
        key: ContractTable(records=tuple(recs), provenance=table.provenance)
        for key, recs in sorted(groups.items())
    }


def analyze_market_year(table: ContractTable, country: str, year: int,
                        seed: int, reps: int = 0, workers: int = 1,
                        country_index: int = 0) -> MarketYearMetrics:
    """Run the whole per-market pipeline on one country-year slice.

    ``reps=0`` disables the permutation nulls (ratio/z come back NaN).
    Null comparisons that are not evaluable on this market (empty core, no
    single bidding, a single cluster) also yield NaN.
    """
    graph = build_market_graph(table)
    stats = market_stats(graph)
    cores = weighted_core_numbers(graph)
    partition = core_membership(graph, cores)
    cstats = core_stats(graph, partition)
    lg = line_graph(graph)
    epart = louvain(lg, seed=subseed(seed, year, country_index, 0))
    risk = sb_clustering_cv(graph, epart)

    core_ratio = core_z = cv_ratio = cv_z = UNDEFINED
    if reps > 0:
        arrays = contract_arrays(graph)
        null_seed = subseed(seed, year, country_index, 1)
        try:
            res = null_distribution(core_rate_statistic(arrays, partition), arrays,
                                    n_reps=reps, seed=null_seed, workers=workers,
                                    name="core_sb")
            core_ratio, core_z = res.ratio, res.z
        except DataError as exc:
            logger.info("core_sb null not evaluable for %s %s: %s", country, year, exc)
        try:
            res = null_distribution(cv_statistic(arrays, epart), arrays,
                                    n_reps=reps, seed=null_seed, workers=workers,
                                    name="cv")
            cv_ratio, cv_z = res.ratio, res.z
        except DataError as exc:
            logger.info("cv null not evaluable for %s %s: %s", country, year, exc)

    return MarketYearMetrics(
        country=country,
        year=year,
        n_contracts=graph.n_contracts,
        sb_rate=stats.single_bidding_rate,
        density=stats.density,
        ra_clustering=stats.ra_clustering,
        core_share=cstats.core_share,
        core_sb_rate=cstats.core_single_bidding_rate,
        core_sb_ratio=core_ratio,
        core_sb_z=core_z,
        modularity=epart.modularity,
        cv=risk.cv,
        cv_ratio=cv_ratio,
        cv_z=cv_z,
    )


@dataclass(frozen=True, slots=True)
class CountryMetrics:
    """Per-year metrics averaged by country (NaN years excluded)."""

    country: str
    n_years: int
    n_contracts: int
    sb_rate: float
    core_share: float
    core_sb_ratio: float
    core_sb_z: float
    modularity: float
    cv: float
    cv_ratio: float
    cv_z: float


def _mean(values: list[float], weights: list[float] | None = None) -> float:
    pairs = [(v, 1.0 if weights is None else weights[i])
             for i, v in enumerate(values) if not math.isnan(v)]
    if not pairs:
        return UNDEFINED
    total = sum(w for _, w in pairs)
    if total == 0:
        return UNDEFINED
    return sum(v * w for v, w in pairs) / total


def average_by_country(rows: list[MarketYearMetrics],
                       weighted: bool = False) -> list[CountryMetrics]:
    """Average per-year metrics within each country.

    Default is the unweighted mean of per-year values; ``weighted=True``
    weights years by contract count instead. The country single-bidding
    rate is always the pooled (contract-weighted) rate so that it matches
    a direct computation on the pooled table.
    """
    by_country: dict[str, list[MarketYearMetrics]] = {}
    for row in rows:
        by_country.setdefault(row.country, []).append(row)
    out = []
    for country in sorted(by_country):
        group = by_country[country]
        weights = [float(r.n_contracts) for r in group] if weighted else None
        pooled_contracts = sum(r.n_contracts for r in group)
        pooled_sb = _mean([r.sb_rate for r in group], [float(r.n_contracts) for r in group])
        out.append(CountryMetrics(
            country=country,
            n_years=len(group),
            n_contracts=pooled_contracts,
            sb_rate=pooled_sb,
            core_share=_mean([r.core_share for r in group], weights),
            core_sb_ratio=_mean([r.core_sb_ratio for r in group], weights),
            core_sb_z=_mean([r.core_sb_z for r in group], weights),
            modularity=_mean([r.modularity for r in group], weights),
            cv=_mean([r.cv for r in group], weights),
            cv_ratio=_mean([r.cv_ratio for r in group], weights),
            cv_z=_mean([r.cv_z for r in group], weights),
        ))
    return out


@dataclass(frozen=True, slots=True)
class IndicatorCorrelation:
    indicator: str
    year: int
    polarity: str
    result: CorrelationResult
    expected_sign: str
    sign_as_expected: bool


def correlate_indicators(sb_rates: dict[str, float],
                         indicators: list[IndicatorSeries],
                         n_boot: int = 1000, seed: int = 0) -> list[IndicatorCorrelation]:
    """Correlate country single-bidding rates against each indicator.

    Indicators scoring good outcomes high (``higher_is_better``) are
    expected to correlate negatively with single bidding; the output flags
    whether the observed sign matches.
    """
    out = []
    for k, series in enumerate(indicators):
        shared = sorted(c for c in sb_rates if c in series.values
                        and not math.isnan(sb_rates[c]))
        if len(shared) < 3:
            logger.warning("indicator %s shares only %d countries with the data; skipped",
                           series.name, len(shared))
            continue
        x = [sb_rates[c] for c in shared]
        y = [series.values[c] for c in shared]
        result = pearson_with_bootstrap(x, y, n_boot=n_boot, seed=subseed(seed, 2, k))
        expected = "negative" if series.polarity == "higher_is_better" else "positive"
        matches = (result.r < 0) == (expected == "negative")
        out.append(IndicatorCorrelation(
            indicator=series.name, year=series.year, polarity=series.polarity,
            result=result, expected_sign=expected, sign_as_expected=matches,
        ))
    return out


def emit_report(country_rows: list[CountryMetrics],
                correlations: list[IndicatorCorrelation],
                outdir: Path | str,
                include_null: bool,
                manifest_extra: dict | None = None,
                n_boot: int = 1000, boot_seed: int = 0) -> list[str]:
    """Write every figure-data CSV plus the run manifest; returns file names.

    Null-model files are omitted when ``include_null`` is false; the
    manifest records the omission.
    """
    outdir = Path(outdir)
    try:
        outdir.mkdir(parents=True, exist_ok=True)
        probe = outdir / ".write_probe"
        probe.write_text("", encoding="utf-8")
        probe.unlink()
    except OSError as exc:
        raise DataError(f"output directory {outdir} is not writable: {exc}") from exc

    written: list[str] = []

    def emit(name: str, header, rows) -> None:
        write_csv(outdir / name, header, rows)
        written.append(name)

    emit("country_sb_rates.csv",
         ("country", "sb_rate", "n_contracts"),
         ((r.country, r.sb_rate, r.n_contracts) for r in country_rows))

    if correlations:
        emit("indicator_correlations.csv",
             ("indicator", "year", "polarity", "r", "ci_low", "ci_high",
              "n", "n_boot", "expected_sign", "sign_as_expected"),
             ((c.indicator, c.year, c.polarity, c.result.r, c.result.ci_low,
               c.result.ci_high, c.result.n, c.result.n_boot, c.expected_sign,
               int(c.sign_as_expected)) for c in correlations))

    emit("centralization_vs_risk.csv",
         ("country", "core_share", "sb_rate"),
         ((r.country, r.core_share, r.sb_rate) for r in country_rows))

    defined = [r for r in country_rows
               if not math.isnan(r.core_share) and not math.isnan(r.sb_rate)]
    if len(defined) >= 3 and len({r.core_share for r in defined}) > 1 \
            and len({r.sb_rate for r in defined}) > 1:
        corr = pearson_with_bootstrap(
            [r.core_share for r in defined], [r.sb_rate for r in defined],
            n_boot=n_boot, seed=subseed(boot_seed, 3),
        )
        emit("centralization_correlations.csv",
             ("target", "r", "ci_low", "ci_high", "n", "n_boot"),
             [("sb_rate", corr.r, corr.ci_low, corr.ci_high, corr.n, corr.n_boot)])

    emit("modularity_by_country.csv",
         ("country", "modularity", "n_years"),
         ((r.country, r.modularity, r.n_years) for r in country_rows))

    omitted: list[str] = []
    if include_null:
        emit("core_sb_vs_null.csv",
             ("country", "core_sb_ratio", "core_sb_z", "n_years"),
             ((r.country, r.core_sb_ratio, r.core_sb_z, r.n_years) for r in country_rows))
        emit("sb_clustering_vs_null.csv",
             ("country", "cv_ratio", "cv_z", "n_years"),
             ((r.country, r.cv_ratio, r.cv_z, r.n_years) for r in country_rows))
        emit("core_vs_clustering.csv",
             ("country", "core_sb_ratio", "cv_ratio"),
             ((r.country, r.core_sb_ratio, r.cv_ratio) for r in country_rows))
    else:
        omitted = ["core_sb_vs_null.csv", "sb_clustering_vs_null.csv",
                   "core_vs_clustering.csv"]

    manifest = {
        "schema_version": SCHEMA_VERSION,
        "files": sorted(written),
        "omitted_files": omitted,
        "sigma_normalization": "population",
        "cross_year_average": "unweighted",
    }
    if manifest_extra:
        manifest.update(manifest_extra)
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    written.append("manifest.json")
    return written
