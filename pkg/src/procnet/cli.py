"""Command-line pipeline with reproducible, manifest-logged runs.

Every subcommand writes only inside its ``--outdir`` and leaves a
``manifest.json`` there recording the command, semantic parameters, input
hashes and seeds, so a run can be replayed from the manifest alone.
Stochastic subcommands require an explicit ``--seed``; there are no
wall-clock seed defaults. Manifest timestamps honor the SOURCE_DATE_EPOCH
convention for byte-reproducible runs.

Exit codes: 0 success, 1 data error, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .communities import line_graph, louvain, modularity, sb_clustering_cv, \
    write_cluster_summary, write_edge_partition
from .core import core_membership, core_stats, weighted_core_numbers, \
    write_core_nodes, write_core_stats
from .errors import DataError
from .ingest import ContractTable, FormatConfig, deduplicate_entities, filter_contracts, \
    parse_contracts, read_format_config, write_contracts, write_entity_mapping
from .market import build_market_graph, contract_arrays, market_stats, \
    write_edge_list, write_market_stats
from .nullmodel import core_rate_statistic, cv_statistic, global_rate_statistic, \
    null_distribution, write_null_result
from .powerlaw import fit_power_law
from .report import analyze_market_year, average_by_country, correlate_indicators, \
    country_sb_rate, emit_report, load_indicator_csv, split_by_country_year
from .synth import generate_market, read_synth_config
from .util import sha256_file, subseed, write_csv


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procnet",
        description="Corruption-risk network diagnostics for procurement markets",
    )
    parser.add_argument("--version", action="version", version=f"procnet {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="parse, deduplicate and filter contract records")
    _add_input_options(p)
    p.add_argument("--allow-missing-bids", action="store_true",
                   help="keep records without a bid count (excluded from risk stats)")
    p.add_argument("--outdir", required=True, type=Path)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("stats", help="market summary statistics")
    _add_input_options(p)
    p.add_argument("--outdir", required=True, type=Path)
    p.add_argument("--edge-list", action="store_true", help="also export the edge list")
    p.add_argument("--power-law", action="store_true",
                   help="also fit power laws to winner/issuer strength distributions")
    p.add_argument("--unscaled-ra", action="store_true",
                   help="report the literal 4-cycle/3-path ratio without the factor 4")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("core", help="weighted core decomposition and core statistics")
    _add_input_options(p)
    p.add_argument("--outdir", required=True, type=Path)
    p.add_argument("--pooled", action="store_true",
                   help="decompose the pooled table as one graph instead of per year")
    p.add_argument("--unweighted-threshold", action="store_true",
                   help="cut core membership at unweighted mean degrees (sensitivity)")
    p.set_defaults(func=_cmd_core)

    p = sub.add_parser("communities", help="link communities, modularity and risk clustering")
    _add_input_options(p)
    p.add_argument("--outdir", required=True, type=Path)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--q-sweep", type=int, default=0, metavar="N",
                   help="also report modularity mean/std over N extra seeds")
    p.set_defaults(func=_cmd_communities)

    p = sub.add_parser("null", help="permutation null for a contract-level statistic")
    _add_input_options(p)
    p.add_argument("--outdir", required=True, type=Path)
    p.add_argument("--statistic", required=True,
                   choices=("core_sb", "cv", "global_sb_rate"))
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--keep-samples", action="store_true",
                   help="also write per-replicate values as CSV")
    p.set_defaults(func=_cmd_null)

    p = sub.add_parser("synth", help="generate a synthetic market from a config file")
    p.add_argument("--config", required=True, type=Path)
    p.add_argument("--seed", type=int, default=None,
                   help="overrides the seed in the config file")
    p.add_argument("--outdir", required=True, type=Path)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("correlate", help="correlate country rates against indicator CSVs")
    p.add_argument("--rates", required=True, type=Path,
                   help="CSV with columns country,sb_rate (e.g. country_sb_rates.csv)")
    p.add_argument("--indicator", required=True, action="append", nargs=4,
                   metavar=("NAME", "PATH", "YEAR", "POLARITY"),
                   help="repeatable; POLARITY is higher_is_worse or higher_is_better")
    p.add_argument("--n-boot", type=int, default=1000)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--outdir", required=True, type=Path)
    p.set_defaults(func=_cmd_correlate)

    p = sub.add_parser("report", help="full pipeline: per-country-year analyses + figure data")
    _add_input_options(p)
    p.add_argument("--outdir", required=True, type=Path)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--reps", type=int, default=1000,
                   help="null-model replicates; 0 disables the null comparisons")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--indicator", action="append", nargs=4, default=None,
                   metavar=("NAME", "PATH", "YEAR", "POLARITY"))
    p.add_argument("--weighted-average", action="store_true",
                   help="weight cross-year averages by contract counts")
    p.add_argument("--n-boot", type=int, default=1000)
    p.set_defaults(func=_cmd_report)

    return parser


def _add_input_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--input", required=True, type=Path)
    p.add_argument("--format-config", type=Path, default=None,
                   help="key-value file with delimiter / column remapping")
    p.add_argument("--country", default=None)
    p.add_argument("--years", type=_parse_years, default=None,
                   help="inclusive range, e.g. 2008:2016")
    p.add_argument("--require-bids", action="store_true",
                   help="drop records without a bid count")


def _parse_years(text: str) -> tuple[int, int]:
    try:
        if ":" in text:
            lo, hi = text.split(":", 1)
            years = (int(lo), int(hi))
        else:
            years = (int(text), int(text))
    except ValueError:
        raise argparse.ArgumentTypeError(f"cannot parse year range {text!r}") from None
    if years[0] > years[1]:
        raise argparse.ArgumentTypeError(f"empty year range {text!r}")
    return years


def _load_table(args) -> ContractTable:
    config = read_format_config(args.format_config) if args.format_config else None
    if getattr(args, "allow_missing_bids", False):
        config = config or FormatConfig()
        config = FormatConfig(delimiter=config.delimiter, columns=config.columns,
                              allow_missing_bids=True)
    table = parse_contracts(args.input, config)
    return filter_contracts(table, country=args.country, years=args.years,
                            require_bids=args.require_bids)


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    moment = int(epoch) if epoch else int(time.time())
    return datetime.fromtimestamp(moment, timezone.utc).isoformat()


def _input_digests(inputs: list[Path]) -> list[dict]:
    """Input files by name and content hash; paths stay out of manifests so
    runs relocate cleanly."""
    return [{"name": Path(p).name, "sha256": sha256_file(p)} for p in inputs]


def _write_manifest(outdir: Path, command: str, params: dict, inputs: list[Path]) -> None:
    """Record what produced this directory.

    Execution-only knobs (worker counts) are excluded: they do not affect
    outputs, and runs must replay from the manifest regardless of them.
    """
    manifest = {
        "schema_version": 1,
        "command": command,
        "parameters": params,
        "inputs": _input_digests(inputs),
        "package_version": __version__,
        "created_utc": _timestamp(),
    }
    (outdir / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


def _ensure_outdir(args) -> Path:
    outdir = Path(args.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    return outdir


def _common_params(args) -> dict:
    return {
        "country": args.country,
        "years": list(args.years) if args.years else None,
        "require_bids": args.require_bids,
    }


def _cmd_ingest(args) -> int:
    outdir = _ensure_outdir(args)
    table = _load_table(args)
    result = deduplicate_entities(table)
    write_contracts(result.table, outdir / "contracts.csv")
    write_entity_mapping(result.mapping, outdir / "entity_map.csv")
    _write_manifest(outdir, "ingest",
                    {**_common_params(args),
                     "allow_missing_bids": args.allow_missing_bids},
                    [args.input])
    prov = result.table.provenance
    print(f"{len(result.table)} records "
          f"({prov.n_rejected} rejected, {prov.n_missing_bids_dropped} without bid counts); "
          f"issuers {result.n_issuers_before}->{result.n_issuers_after}, "
          f"winners {result.n_winners_before}->{result.n_winners_after}")
    return 0


def _cmd_stats(args) -> int:
    outdir = _ensure_outdir(args)
    graph = build_market_graph(_load_table(args))
    stats = market_stats(graph)
    write_market_stats(stats, outdir / "market_stats.csv")
    if args.unscaled_ra:
        from .market import robins_alexander_clustering
        write_csv(outdir / "ra_unscaled.csv", ("ra_clustering_unscaled",),
                  [(robins_alexander_clustering(graph, scaled=False),)])
    if args.edge_list:
        write_edge_list(graph, outdir / "edge_list.csv")
    if args.power_law:
        rows = []
        strengths = graph.strengths
        for role, nodes in (("winner", graph.winners), ("issuer", graph.issuers)):
            try:
                fit = fit_power_law([strengths[n] for n in nodes])
                rows.append((role, fit.alpha, fit.xmin, fit.n_tail, fit.ks_distance))
            except DataError as exc:
                print(f"power-law fit skipped for {role}s: {exc}", file=sys.stderr)
        write_csv(outdir / "power_law.csv",
                  ("role", "alpha", "xmin", "n_tail", "ks_distance"), rows)
    _write_manifest(outdir, "stats",
                    {**_common_params(args), "sigma_normalization": "population"},
                    [args.input])
    print(f"{stats.n_contracts} contracts, {stats.n_issuers} issuers, "
          f"{stats.n_winners} winners, sb_rate={stats.single_bidding_rate:.4f}")
    return 0


def _run_core(table: ContractTable, weighted_threshold: bool):
    graph = build_market_graph(table)
    cores = weighted_core_numbers(graph)
    partition = core_membership(graph, cores, weighted_threshold=weighted_threshold)
    return graph, partition, core_stats(graph, partition)


def _cmd_core(args) -> int:
    outdir = _ensure_outdir(args)
    table = _load_table(args)
    weighted = not args.unweighted_threshold
    header = ("country", "year", "core_contracts", "core_share", "core_n_winners",
              "core_n_issuers", "core_n_edges", "core_single_bidding_rate")
    if args.pooled:
        graph, partition, stats = _run_core(table, weighted)
        write_core_nodes(graph, partition, outdir / "core_nodes.csv")
        write_core_stats(stats, outdir / "core_stats.csv")
        print(f"core: {stats.core_n_issuers} issuers, {stats.core_n_winners} winners, "
              f"share={stats.core_share:.4f}")
    else:
        rows = []
        for (country, year), group in split_by_country_year(table).items():
            graph, partition, stats = _run_core(group, weighted)
            suffix = f"{country or 'ALL'}_{year}"
            write_core_nodes(graph, partition, outdir / f"core_nodes_{suffix}.csv")
            rows.append((country, year, stats.core_contracts, stats.core_share,
                         stats.core_n_winners, stats.core_n_issuers,
                         stats.core_n_edges, stats.core_single_bidding_rate))
        write_csv(outdir / "core_stats.csv", header, rows)
        print(f"decomposed {len(rows)} country-year markets")
    _write_manifest(outdir, "core",
                    {**_common_params(args), "pooled": args.pooled,
                     "weighted_threshold": weighted},
                    [args.input])
    return 0


def _cmd_communities(args) -> int:
    outdir = _ensure_outdir(args)
    graph = build_market_graph(_load_table(args))
    lg = line_graph(graph)
    partition = louvain(lg, seed=args.seed)
    risk = sb_clustering_cv(graph, partition)
    write_edge_partition(partition, outdir / "edge_communities.csv")
    write_cluster_summary(risk, outdir / "cluster_summary.csv")
    summary = {
        "n_communities": len(risk.cluster_sizes),
        "modularity": _nan_to_none(partition.modularity),
        "mu_w": _nan_to_none(risk.mu_w),
        "sigma_w": _nan_to_none(risk.sigma_w),
        "cv": _nan_to_none(risk.cv),
        "seed": args.seed,
    }
    if args.q_sweep > 0:
        qs = [louvain(lg, seed=subseed(args.seed, 4, k)).modularity
              for k in range(args.q_sweep)]
        n = len(qs)
        mean = sum(qs) / n
        var = sum((q - mean) ** 2 for q in qs) / (n - 1) if n > 1 else 0.0
        summary["q_sweep"] = {"n_seeds": n, "q_mean": mean, "q_std": var ** 0.5}
    (outdir / "communities.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    _write_manifest(outdir, "communities",
                    {**_common_params(args), "seed": args.seed, "q_sweep": args.q_sweep},
                    [args.input])
    print(f"{summary['n_communities']} communities, modularity={partition.modularity:.4f}")
    return 0


def _cmd_null(args) -> int:
    outdir = _ensure_outdir(args)
    graph = build_market_graph(_load_table(args))
    arrays = contract_arrays(graph)
    if args.statistic == "core_sb":
        partition = core_membership(graph, weighted_core_numbers(graph))
        statistic = core_rate_statistic(arrays, partition)
    elif args.statistic == "cv":
        partition = louvain(line_graph(graph), seed=subseed(args.seed, 0))
        statistic = cv_statistic(arrays, partition)
    else:
        statistic = global_rate_statistic()
    result = null_distribution(statistic, arrays, n_reps=args.reps, seed=args.seed,
                               workers=args.threads, keep_samples=args.keep_samples,
                               name=args.statistic)
    samples_path = outdir / f"null_{args.statistic}_samples.csv" if args.keep_samples else None
    write_null_result(result, outdir / f"null_{args.statistic}.json", samples_path)
    _write_manifest(outdir, "null",
                    {**_common_params(args), "statistic": args.statistic,
                     "reps": args.reps, "seed": args.seed,
                     "keep_samples": args.keep_samples},
                    [args.input])
    print(f"{args.statistic}: observed={result.observed:.6g} "
          f"ratio={result.ratio:.6g} z={result.z:.6g} "
          f"({result.n_reps} reps, {result.n_missing} missing)")
    return 0


def _cmd_synth(args) -> int:
    outdir = _ensure_outdir(args)
    config = read_synth_config(args.config)
    if args.seed is None and config.seed is None:
        print("error: no seed given (use --seed or put seed= in the config)",
              file=sys.stderr)
        return 2
    table = generate_market(config, seed=args.seed)
    write_contracts(table, outdir / "contracts.csv")
    seed = args.seed if args.seed is not None else config.seed
    _write_manifest(outdir, "synth", {"config": Path(args.config).name, "seed": seed},
                    [args.config])
    print(f"generated {len(table)} contracts, "
          f"sb_rate={country_sb_rate(table):.4f}")
    return 0


def _parse_indicator_args(specs) -> list:
    indicators = []
    for name, path, year, polarity in specs:
        try:
            year_int = int(year)
        except ValueError:
            raise DataError(f"indicator {name}: bad year {year!r}") from None
        if polarity not in ("higher_is_worse", "higher_is_better"):
            raise DataError(f"indicator {name}: bad polarity {polarity!r}")
        indicators.append(load_indicator_csv(path, name, year_int, polarity))
    return indicators


def _cmd_correlate(args) -> int:
    outdir = _ensure_outdir(args)
    rates: dict[str, float] = {}
    try:
        fh = open(args.rates, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {args.rates}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"country", "sb_rate"} <= set(reader.fieldnames):
            raise DataError(f"{args.rates}: needs columns country,sb_rate")
        for row in reader:
            if row["sb_rate"] in ("", "NaN"):
                continue
            rates[row["country"].strip().upper()] = float(row["sb_rate"])
    indicators = _parse_indicator_args(args.indicator)
    correlations = correlate_indicators(rates, indicators, n_boot=args.n_boot,
                                        seed=args.seed)
    if not correlations:
        raise DataError("no indicator shares at least 3 countries with the rates file")
    write_csv(outdir / "indicator_correlations.csv",
              ("indicator", "year", "polarity", "r", "ci_low", "ci_high",
               "n", "n_boot", "expected_sign", "sign_as_expected"),
              ((c.indicator, c.year, c.polarity, c.result.r, c.result.ci_low,
                c.result.ci_high, c.result.n, c.result.n_boot, c.expected_sign,
                int(c.sign_as_expected)) for c in correlations))
    _write_manifest(outdir, "correlate",
                    {"n_boot": args.n_boot, "seed": args.seed,
                     "indicators": [spec[0] for spec in args.indicator]},
                    [args.rates] + [Path(spec[1]) for spec in args.indicator])
    for c in correlations:
        print(f"{c.indicator}: r={c.result.r:.3f} "
              f"[{c.result.ci_low:.3f}, {c.result.ci_high:.3f}] n={c.result.n}")
    return 0


def _cmd_report(args) -> int:
    outdir = _ensure_outdir(args)
    table = _load_table(args)
    groups = split_by_country_year(table)
    if not groups:
        raise DataError("no contracts to analyze")
    countries = sorted({country for country, _ in groups})
    country_pos = {c: k for k, c in enumerate(countries)}

    rows = []
    for (country, year), group in groups.items():
        rows.append(analyze_market_year(
            group, country, year, seed=args.seed, reps=args.reps,
            workers=args.threads, country_index=country_pos[country],
        ))
    country_rows = average_by_country(rows, weighted=args.weighted_average)

    indicators = _parse_indicator_args(args.indicator) if args.indicator else []
    sb_rates = {r.country: r.sb_rate for r in country_rows}
    correlations = correlate_indicators(sb_rates, indicators, n_boot=args.n_boot,
                                        seed=args.seed) if indicators else []

    manifest_extra = {
        "command": "report",
        "parameters": {**_common_params(args), "seed": args.seed, "reps": args.reps,
                       "n_boot": args.n_boot,
                       "weighted_average": args.weighted_average,
                       "indicators": [
                           {"name": s.name, "year": s.year, "polarity": s.polarity}
                           for s in indicators
                       ]},
        "inputs": _input_digests([args.input]),
        "package_version": __version__,
        "created_utc": _timestamp(),
    }
    files = emit_report(country_rows, correlations, outdir,
                        include_null=args.reps > 0, manifest_extra=manifest_extra,
                        n_boot=args.n_boot, boot_seed=args.seed)
    print(f"analyzed {len(rows)} country-year markets -> {len(files)} files in {outdir}")
    return 0


def _nan_to_none(x: float):
    return None if isinstance(x, float) and math.isnan(x) else x


if __name__ == "__main__":
    sys.exit(main())
