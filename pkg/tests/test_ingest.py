import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import make_record, make_table

from procnet.errors import DataError
from procnet.ingest import (
    CpvCode,
    FormatConfig,
    canonical_entity_id,
    deduplicate_entities,
    filter_contracts,
    normalize_entity_name,
    parse_contracts,
    read_format_config,
    write_contracts,
)


CSV_HEADER = "contract_id,country,year,issuer_raw,winner_raw,cpv,bids,value\n"


def write_csv(path, rows, header=CSV_HEADER):
    path.write_text(header + "".join(r + "\n" for r in rows), encoding="utf-8")
    return path


class TestCpvCode:
    def test_class2_is_prefix(self):
        code = CpvCode("45233120")
        assert code.class2 == "45"

    @pytest.mark.parametrize("bad", ["45X00000", "4500000", "450000000", "", "45.00000"])
    def test_malformed_rejected(self, bad):
        with pytest.raises(ValueError):
            CpvCode(bad)


class TestParse:
    def test_single_bid_derivation(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", [
            "c1,HU,2014,A,B,45000000,1,",
            "c2,HU,2014,A,B,45000000,3,100.5",
        ])
        table = parse_contracts(path)
        assert [r.single_bid for r in table.records] == [True, False]
        assert table.records[1].value == 100.5

    def test_malformed_cpv_rejected_with_reason(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", [
            "c1,HU,2014,A,B,45X00000,1,",
            "c2,HU,2014,A,B,45000000,2,",
        ])
        table = parse_contracts(path)
        assert len(table) == 1
        assert table.provenance.n_rejected == 1
        (lineno, reason), = table.provenance.rejected
        assert reason == "malformed CPV"
        assert lineno == 2

    def test_malformed_bids_rejected(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", [
            "c1,HU,2014,A,B,45000000,two,",
            "c2,HU,2014,A,B,45000000,0,",
            "c3,HU,2014,A,B,45000000,2,",
            "c4,HU,2014,A,B,45000000,3,",
            "c5,HU,2014,A,B,45000000,4,",
        ])
        table = parse_contracts(path)
        assert len(table) == 3
        reasons = [r for _, r in table.provenance.rejected]
        assert any("malformed bid count" in r for r in reasons)
        assert any("non-positive bid count" in r for r in reasons)

    def test_missing_bids_dropped_by_default(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", [
            "c1,HU,2014,A,B,45000000,,",
            "c2,HU,2014,A,B,45000000,2,",
        ])
        table = parse_contracts(path)
        assert len(table) == 1
        assert table.provenance.n_missing_bids_dropped == 1
        assert table.provenance.n_rejected == 0

    def test_missing_bids_kept_when_allowed(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", ["c1,HU,2014,A,B,45000000,,"])
        table = parse_contracts(path, FormatConfig(allow_missing_bids=True))
        assert len(table) == 1
        assert table.records[0].n_bids is None
        assert table.records[0].single_bid is False

    def test_duplicate_contract_id_rejected(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", [
            "c1,HU,2014,A,B,45000000,1,",
            "c1,HU,2014,A,C,45000000,2,",
        ])
        table = parse_contracts(path)
        assert len(table) == 1
        assert "duplicate contract_id" in table.provenance.rejected[0][1]

    def test_mostly_rejected_is_fatal(self, tmp_path):
        path = write_csv(tmp_path / "m.csv", [
            "c1,HU,2014,A,B,bogus,1,",
            "c2,HU,2014,A,B,bogus,1,",
            "c3,HU,2014,A,B,45000000,1,",
        ])
        with pytest.raises(DataError, match="50%"):
            parse_contracts(path)

    def test_unreadable_file_is_fatal(self, tmp_path):
        with pytest.raises(DataError, match="cannot read"):
            parse_contracts(tmp_path / "absent.csv")

    def test_missing_required_column_is_fatal(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("contract_id,issuer_raw,winner_raw,cpv,bids\n", encoding="utf-8")
        with pytest.raises(DataError, match="missing mapped columns"):
            parse_contracts(path)

    def test_column_remapping(self, tmp_path):
        config_path = tmp_path / "fmt.cfg"
        config_path.write_text(
            "delimiter = ;\ncolumn.bids = NUMBER_OFFERS\ncolumn.issuer = BUYER\n",
            encoding="utf-8",
        )
        config = read_format_config(config_path)
        path = tmp_path / "m.csv"
        path.write_text(
            "contract_id;country;year;BUYER;winner_raw;cpv;NUMBER_OFFERS;value\n"
            "c1;HU;2014;A;B;45000000;1;\n",
            encoding="utf-8",
        )
        table = parse_contracts(path, config)
        assert table.records[0].issuer_id == "A"
        assert table.records[0].single_bid

    def test_synthesized_contract_ids_when_column_absent(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(
            "country,year,issuer_raw,winner_raw,cpv,bids\n"
            "HU,2014,A,B,45000000,1\nHU,2014,A,C,45000000,2\n",
            encoding="utf-8",
        )
        table = parse_contracts(path)
        assert len({r.contract_id for r in table.records}) == 2


class TestNormalize:
    def test_strips_legal_suffix(self):
        assert normalize_entity_name("ACME   Kft.") == "acme"

    def test_folds_accents_and_punctuation(self):
        assert normalize_entity_name("Señor-Builders S.R.L") == "senor builders"

    def test_empty_after_normalization_errors(self):
        with pytest.raises(DataError, match="reduces to empty"):
            normalize_entity_name("§§§")

    def test_suffix_only_name_errors(self):
        with pytest.raises(DataError):
            normalize_entity_name("Kft.")

    def test_strips_stacked_suffixes(self):
        assert normalize_entity_name("Acme Ltd SA") == "acme"

    @given(st.text(alphabet="abcdefghijklmnopqrstuvwxyz -", min_size=1).filter(
        lambda s: any(c.isalpha() for c in s)))
    @settings(max_examples=100)
    def test_idempotent(self, raw):
        try:
            once = normalize_entity_name(raw)
        except DataError:
            return
        assert normalize_entity_name(once) == once


class TestDedup:
    def test_identical_normal_forms_merge(self):
        table = make_table([
            make_record("c1", "X", "ACME Kft.", country="HU"),
            make_record("c2", "X", "Acme KFT", country="HU"),
        ])
        result = deduplicate_entities(table)
        winners = {r.winner_id for r in result.table.records}
        assert len(winners) == 1
        assert result.n_winners_before == 2
        assert result.n_winners_after == 1

    def test_roles_never_merge(self):
        table = make_table([make_record("c1", "ACME", "ACME W", country="HU"),
                            make_record("c2", "Other", "ACME", country="HU")])
        result = deduplicate_entities(table)
        rec1, rec2 = result.table.records
        assert rec1.issuer_id != rec2.winner_id
        assert rec1.issuer_id.startswith("issuer|")
        assert rec2.winner_id.startswith("winner|")

    def test_countries_never_merge(self):
        table = make_table([make_record("c1", "ACME", "B", country="HU"),
                            make_record("c2", "ACME", "B", country="PL")])
        result = deduplicate_entities(table)
        assert result.table.records[0].issuer_id != result.table.records[1].issuer_id

    def test_derived_merge_example(self):
        # by the normalization rules: {ACME, ACME Ltd} -> acme; AKME stays apart
        table = make_table([
            make_record("c1", "X", "ACME"),
            make_record("c2", "X", "ACME Ltd"),
            make_record("c3", "X", "AKME"),
        ])
        result = deduplicate_entities(table)
        winners = {r.winner_id for r in result.table.records}
        assert len(winners) == 2

    def test_idempotent(self):
        table = make_table([
            make_record("c1", "Issuer Kft", "ACME Kft.", country="HU"),
            make_record("c2", "Issuer KFT.", "Acme KFT", country="HU"),
        ])
        once = deduplicate_entities(table).table
        twice = deduplicate_entities(once).table
        assert once == twice

    def test_mapping_artifact_rows(self):
        table = make_table([make_record("c1", "Foo Zrt", "Bar Bt", country="HU")])
        result = deduplicate_entities(table)
        raw_names = {(m.raw_name, m.role) for m in result.mapping}
        assert raw_names == {("Foo Zrt", "issuer"), ("Bar Bt", "winner")}
        for m in result.mapping:
            assert m.canonical_id == canonical_entity_id(m.raw_name, m.role, m.country)

    def test_unnormalizable_records_rejected_and_counted(self):
        table = make_table([make_record("c1", "§§§", "B"),
                            make_record("c2", "A", "B")])
        result = deduplicate_entities(table)
        assert len(result.table) == 1
        assert result.table.provenance.n_rejected == 1


class TestFilter:
    def test_country_filter(self):
        table = make_table([
            make_record("c1", "A", "B", country="HU", year=2014),
            make_record("c2", "A", "B", country="HU", year=2015),
            make_record("c3", "A", "B", country="PL", year=2014),
        ])
        assert len(filter_contracts(table, country="HU")) == 2

    def test_year_range_identity(self):
        table = make_table([make_record("c1", "A", "B", year=2010),
                            make_record("c2", "A", "B", year=2016)])
        assert filter_contracts(table, years=(2008, 2016)) == table

    def test_require_bids_drops_exactly_missing(self):
        from procnet.ingest import ContractRecord, cpv_code
        missing = ContractRecord("c1", "HU", 2014, "A", "B",
                                 cpv_code("45000000"), None, False, None)
        table = make_table([missing, make_record("c2", "A", "B")])
        filtered = filter_contracts(table, require_bids=True)
        assert [r.contract_id for r in filtered.records] == ["c2"]

    def test_empty_result_warns_not_errors(self, caplog):
        table = make_table([make_record("c1", "A", "B", country="HU")])
        with caplog.at_level("WARNING"):
            out = filter_contracts(table, country="SE")
        assert len(out) == 0
        assert any("empty" in m for m in caplog.messages)


class TestRoundTrip:
    def test_write_then_parse_is_identity(self, tmp_path):
        table = make_table([
            make_record("c1", "A", "B", sb=True, value=12.25),
            make_record("c2", "A", "C", cls="33", bids=4),
        ])
        path = tmp_path / "out.csv"
        write_contracts(table, path)
        assert parse_contracts(path) == table

    def test_round_trip_with_missing_bids(self, tmp_path):
        from procnet.ingest import ContractRecord, cpv_code
        table = make_table([
            ContractRecord("c1", "HU", 2014, "A", "B", cpv_code("45000000"), None, False, None),
            make_record("c2", "A", "B"),
        ])
        path = tmp_path / "out.csv"
        write_contracts(table, path)
        assert parse_contracts(path, FormatConfig(allow_missing_bids=True)) == table

    @given(st.lists(
        st.tuples(st.sampled_from(["alpha", "beta", "gamma co"]),
                  st.sampled_from(["x", "y ltd", "zeta"]),
                  st.integers(min_value=1, max_value=9),
                  st.sampled_from(["45000000", "33100000"])),
        min_size=1, max_size=8))
    @settings(max_examples=25)
    def test_round_trip_property(self, tmp_path_factory, rows):
        table = make_table([
            make_record(f"c{k}", issuer, winner, bids=bids, cls=cpv[:2])
            for k, (issuer, winner, bids, cpv) in enumerate(rows)
        ])
        path = tmp_path_factory.mktemp("rt") / "t.csv"
        write_contracts(table, path)
        assert parse_contracts(path) == table
