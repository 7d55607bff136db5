"""Contract-award ingestion.

Reads delimited award records into an immutable :class:`ContractTable`,
derives the single-bid risk flag from the bid count, normalizes entity
names deterministically (lowercase, ASCII-folded, punctuation stripped,
trailing legal-form tokens removed) and merges entities whose normal forms
coincide within the same role and country. Matching is exact on the normal
form; there is no fuzzy or learned record linkage.
"""

from __future__ import annotations

import csv
import logging
import re
import unicodedata
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Iterator, Mapping, Sequence

from .errors import DataError
from .util import read_kv_config

logger = logging.getLogger(__name__)

CPV_RE = re.compile(r"^[0-9]{8}$")

#: Trailing legal-form tokens stripped during name normalization.
DEFAULT_LEGAL_SUFFIXES = frozenset({
    "ltd", "gmbh", "kft", "zrt", "sa", "srl", "sro", "spzoo",
    "bv", "oy", "ab", "as", "sas", "plc",
})

# Removed outright (no replacement) so dotted abbreviations collapse:
# "S.R.L" -> "srl". Every other non-alphanumeric becomes a space.
_DROP_CHARS = dict.fromkeys(map(ord, ".'’`´"), None)
_NON_ALNUM_RE = re.compile(r"[^0-9a-z]+")

# Canonical entity ids produced by deduplicate_entities. Recognizing them
# makes deduplication idempotent: already-canonical ids pass through.
_CANONICAL_ID_RE = re.compile(r"^(issuer|winner)\|([A-Z0-9]*)\|(.+)$")

#: Column order of the canonical contract CSV.
CANONICAL_COLUMNS = (
    "contract_id", "country", "year", "issuer_raw", "winner_raw",
    "cpv", "bids", "value",
)

_REQUIRED_FIELDS = ("issuer", "winner", "year", "cpv", "bids")
_OPTIONAL_FIELDS = ("contract_id", "country", "value")


@dataclass(frozen=True, slots=True)
class CpvCode:
    """8-digit Common Procurement Vocabulary code."""

    full_code: str

    def __post_init__(self) -> None:
        if not CPV_RE.match(self.full_code):
            raise ValueError(f"malformed CPV code: {self.full_code!r}")

    @property
    def class2(self) -> str:
        """2-character sector class (the code's first two digits)."""
        return self.full_code[:2]


@lru_cache(maxsize=None)
def cpv_code(full_code: str) -> CpvCode:
    """Cached CpvCode constructor; tables share instances per distinct code."""
    return CpvCode(full_code)


@dataclass(frozen=True, slots=True)
class ContractRecord:
    """One awarded contract.

    ``single_bid`` is True iff exactly one bid competed. Records with an
    unknown bid count carry ``n_bids=None`` and ``single_bid=False``; they
    are excluded from risk statistics and, by default, from parsing.
    """

    contract_id: str
    country: str
    year: int
    issuer_id: str
    winner_id: str
    cpv: CpvCode
    n_bids: int | None
    single_bid: bool
    value: float | None = None


@dataclass(frozen=True, slots=True)
class Provenance:
    source: str
    n_rows: int = 0
    n_rejected: int = 0
    n_missing_bids_dropped: int = 0
    rejected: tuple[tuple[int, str], ...] = ()


@dataclass(frozen=True)
class ContractTable:
    """Immutable, ordered collection of contract records.

    Equality compares records only; provenance is bookkeeping.
    """

    records: tuple[ContractRecord, ...]
    provenance: Provenance = field(compare=False, default=Provenance(source="<memory>"))

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[ContractRecord]:
        return iter(self.records)


@dataclass(frozen=True, slots=True)
class FormatConfig:
    """Delimiter and logical-to-actual column mapping for input files."""

    delimiter: str = ","
    columns: Mapping[str, str] = field(default_factory=lambda: dict(DEFAULT_COLUMNS))
    allow_missing_bids: bool = False


DEFAULT_COLUMNS: Mapping[str, str] = {
    "contract_id": "contract_id",
    "country": "country",
    "year": "year",
    "issuer": "issuer_raw",
    "winner": "winner_raw",
    "cpv": "cpv",
    "bids": "bids",
    "value": "value",
}


def read_format_config(path: Path | str) -> FormatConfig:
    """Load a FormatConfig from a plain-text key-value file.

    Recognized keys: ``delimiter``, ``allow_missing_bids`` and
    ``column.<logical>`` remappings, e.g. ``column.bids = NUMBER_OFFERS``.
    """
    raw = read_kv_config(path)
    columns = dict(DEFAULT_COLUMNS)
    delimiter = ","
    allow_missing = False
    for key, value in raw.items():
        if key == "delimiter":
            delimiter = {"TAB": "\t", "tab": "\t"}.get(value, value)
        elif key == "allow_missing_bids":
            allow_missing = value.lower() in ("1", "true", "yes")
        elif key.startswith("column."):
            logical = key[len("column."):]
            if logical not in DEFAULT_COLUMNS:
                raise DataError(f"unknown column mapping key {key!r}")
            columns[logical] = value
        else:
            raise DataError(f"unknown format config key {key!r}")
    return FormatConfig(delimiter=delimiter, columns=columns, allow_missing_bids=allow_missing)


def parse_contracts(path: Path | str, config: FormatConfig | None = None) -> ContractTable:
    """Parse contract awards from a delimited file.

    Rows with malformed fields are rejected individually with a reason and
    row number; if more than half of all data rows are rejected the file is
    considered mis-mapped and parsing fails. Rows without a bid count are
    dropped (counted separately) unless ``config.allow_missing_bids``.
    """
    config = config or FormatConfig()
    cols = config.columns
    try:
        fh = open(path, "r", encoding="utf-8", newline="")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    with fh:
        reader = csv.DictReader(fh, delimiter=config.delimiter)
        header = reader.fieldnames or []
        missing = [cols[f] for f in _REQUIRED_FIELDS if cols[f] not in header]
        if missing:
            raise DataError(f"{path}: header is missing mapped columns {missing}")
        has = {f: cols[f] in header for f in _OPTIONAL_FIELDS}

        records: list[ContractRecord] = []
        rejected: list[tuple[int, str]] = []
        seen_ids: set[str] = set()
        n_rows = 0
        n_missing_bids = 0

        for row in reader:
            n_rows += 1
            lineno = reader.line_num
            try:
                record = _parse_row(row, cols, has, n_rows, config.allow_missing_bids)
            except _RowRejected as exc:
                rejected.append((lineno, str(exc)))
                continue
            if record is None:
                n_missing_bids += 1
                continue
            if record.contract_id in seen_ids:
                rejected.append((lineno, f"duplicate contract_id {record.contract_id!r}"))
                continue
            seen_ids.add(record.contract_id)
            records.append(record)

    if n_rows and len(rejected) > 0.5 * n_rows:
        raise DataError(
            f"{path}: {len(rejected)} of {n_rows} rows rejected (>50%); "
            "the column mapping is probably wrong"
        )
    provenance = Provenance(
        source=str(path),
        n_rows=n_rows,
        n_rejected=len(rejected),
        n_missing_bids_dropped=n_missing_bids,
        rejected=tuple(rejected),
    )
    return ContractTable(records=tuple(records), provenance=provenance)


class _RowRejected(Exception):
    pass


def _parse_row(row, cols, has, row_index, allow_missing_bids) -> ContractRecord | None:
    def get(logical: str) -> str:
        value = row.get(cols[logical])
        return (value or "").strip()

    cpv_text = get("cpv")
    if not CPV_RE.match(cpv_text):
        raise _RowRejected("malformed CPV")
    year_text = get("year")
    try:
        year = int(year_text)
    except ValueError:
        raise _RowRejected(f"malformed year {year_text!r}") from None
    issuer = get("issuer")
    winner = get("winner")
    if not issuer or not winner:
        raise _RowRejected("missing issuer or winner")

    bids_text = get("bids")
    if bids_text == "":
        n_bids = None
    else:
        try:
            n_bids = int(bids_text)
        except ValueError:
            raise _RowRejected(f"malformed bid count {bids_text!r}") from None
        if n_bids <= 0:
            raise _RowRejected(f"non-positive bid count {n_bids}")
    if n_bids is None and not allow_missing_bids:
        return None

    value_text = get("value") if has["value"] else ""
    if value_text == "":
        value = None
    else:
        try:
            value = float(value_text)
        except ValueError:
            raise _RowRejected(f"malformed value {value_text!r}") from None
        if value < 0:
            raise _RowRejected(f"negative value {value}")

    contract_id = get("contract_id") if has["contract_id"] else ""
    if not contract_id:
        contract_id = f"row{row_index:07d}"
    country = get("country").upper() if has["country"] else ""

    return ContractRecord(
        contract_id=contract_id,
        country=country,
        year=year,
        issuer_id=issuer,
        winner_id=winner,
        cpv=cpv_code(cpv_text),
        n_bids=n_bids,
        single_bid=n_bids == 1,
        value=value,
    )


def normalize_entity_name(raw: str, suffixes: frozenset[str] = DEFAULT_LEGAL_SUFFIXES) -> str:
    """Reduce an entity name to its canonical normal form.

    Lowercases, folds accents to ASCII, deletes dot/apostrophe characters
    (collapsing dotted abbreviations), maps remaining punctuation to spaces,
    collapses whitespace and strips trailing legal-form tokens.

    Raises DataError if nothing is left.
    """
    s = unicodedata.normalize("NFKD", raw)
    s = s.encode("ascii", "ignore").decode("ascii").lower()
    s = s.translate(_DROP_CHARS)
    s = _NON_ALNUM_RE.sub(" ", s)
    tokens = s.split()
    while tokens and tokens[-1] in suffixes:
        tokens.pop()
    if not tokens:
        raise DataError(f"name reduces to empty: {raw!r}")
    return " ".join(tokens)


@dataclass(frozen=True, slots=True)
class EntityMapping:
    raw_name: str
    role: str
    country: str
    canonical_id: str


@dataclass(frozen=True)
class DedupResult:
    table: ContractTable
    mapping: tuple[EntityMapping, ...]
    n_issuers_before: int
    n_issuers_after: int
    n_winners_before: int
    n_winners_after: int


def canonical_entity_id(raw: str, role: str, country: str,
                        suffixes: frozenset[str] = DEFAULT_LEGAL_SUFFIXES) -> str:
    """Canonical id for an entity name; already-canonical ids pass through."""
    if _CANONICAL_ID_RE.match(raw):
        return raw
    return f"{role}|{country}|{normalize_entity_name(raw, suffixes)}"


def deduplicate_entities(table: ContractTable,
                         suffixes: frozenset[str] = DEFAULT_LEGAL_SUFFIXES) -> DedupResult:
    """Replace issuer/winner names with canonical ids.

    Entities merge iff their normal forms coincide within the same role and
    country; merging never crosses roles or countries. Records whose names
    normalize to nothing are dropped and counted as rejected. Idempotent:
    canonical ids map to themselves.
    """
    records: list[ContractRecord] = []
    rejected: list[tuple[int, str]] = []
    mapping: dict[tuple[str, str, str], str] = {}
    issuers_before: set[str] = set()
    winners_before: set[str] = set()

    for idx, rec in enumerate(table.records):
        issuers_before.add(rec.issuer_id)
        winners_before.add(rec.winner_id)
        try:
            issuer = canonical_entity_id(rec.issuer_id, "issuer", rec.country, suffixes)
            winner = canonical_entity_id(rec.winner_id, "winner", rec.country, suffixes)
        except DataError as exc:
            rejected.append((idx, str(exc)))
            continue
        mapping.setdefault((rec.issuer_id, "issuer", rec.country), issuer)
        mapping.setdefault((rec.winner_id, "winner", rec.country), winner)
        if issuer == rec.issuer_id and winner == rec.winner_id:
            records.append(rec)
        else:
            records.append(_replace_ids(rec, issuer, winner))

    mapping_rows = tuple(
        EntityMapping(raw_name=raw, role=role, country=country, canonical_id=canonical)
        for (raw, role, country), canonical in sorted(mapping.items())
    )
    prov = table.provenance
    provenance = Provenance(
        source=prov.source,
        n_rows=prov.n_rows,
        n_rejected=prov.n_rejected + len(rejected),
        n_missing_bids_dropped=prov.n_missing_bids_dropped,
        rejected=prov.rejected + tuple(rejected),
    )
    out = ContractTable(records=tuple(records), provenance=provenance)
    return DedupResult(
        table=out,
        mapping=mapping_rows,
        n_issuers_before=len(issuers_before),
        n_issuers_after=len({r.issuer_id for r in records}),
        n_winners_before=len(winners_before),
        n_winners_after=len({r.winner_id for r in records}),
    )


def _replace_ids(rec: ContractRecord, issuer: str, winner: str) -> ContractRecord:
    return ContractRecord(
        contract_id=rec.contract_id,
        country=rec.country,
        year=rec.year,
        issuer_id=issuer,
        winner_id=winner,
        cpv=rec.cpv,
        n_bids=rec.n_bids,
        single_bid=rec.single_bid,
        value=rec.value,
    )


def filter_contracts(table: ContractTable,
                     country: str | None = None,
                     years: tuple[int, int] | None = None,
                     require_bids: bool = False) -> ContractTable:
    """Keep records matching every supplied predicate, preserving order."""
    records = table.records
    if country is not None:
        want = country.upper()
        records = tuple(r for r in records if r.country == want)
    if years is not None:
        lo, hi = years
        records = tuple(r for r in records if lo <= r.year <= hi)
    if require_bids:
        records = tuple(r for r in records if r.n_bids is not None)
    if not records:
        logger.warning(
            "filter produced an empty table (country=%s, years=%s, require_bids=%s)",
            country, years, require_bids,
        )
    return ContractTable(records=records, provenance=table.provenance)


def write_contracts(table: ContractTable, path: Path | str) -> None:
    """Write the canonical contract CSV (round-trips through parse_contracts)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CANONICAL_COLUMNS)
        for r in table.records:
            writer.writerow([
                r.contract_id,
                r.country,
                r.year,
                r.issuer_id,
                r.winner_id,
                r.cpv.full_code,
                "" if r.n_bids is None else r.n_bids,
                "" if r.value is None else repr(r.value),
            ])


def write_entity_mapping(mapping: Sequence[EntityMapping], path: Path | str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("raw_name", "role", "country", "canonical_id"))
        for m in mapping:
            writer.writerow((m.raw_name, m.role, m.country, m.canonical_id))
