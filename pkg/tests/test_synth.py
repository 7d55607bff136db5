import numpy as np
import pytest
from scipy import stats as scipy_stats

from procnet.errors import DataError
from procnet.ingest import write_contracts, parse_contracts
from procnet.synth import (
    RiskRegime,
    SynthConfig,
    WeightLaw,
    generate_market,
    read_synth_config,
)


BASE = SynthConfig(
    n_issuers=40, n_winners=40, n_blocks=4, p_intra=0.3, p_inter=0.02,
    weight_law=WeightLaw(kind="constant", constant=3), n_cpv_classes=5,
    risk_regime=RiskRegime(kind="uniform", p_base=0.2),
)


class TestDeterminism:
    def test_same_seed_identical_table(self):
        assert generate_market(BASE, seed=5) == generate_market(BASE, seed=5)

    def test_different_seed_differs(self):
        assert generate_market(BASE, seed=5) != generate_market(BASE, seed=6)

    def test_seed_required(self):
        with pytest.raises(ValueError, match="seed"):
            generate_market(BASE)


class TestStructure:
    def test_realized_uniform_rate_concentrates(self):
        config = SynthConfig(
            n_issuers=60, n_winners=60, n_blocks=1, p_intra=0.3, p_inter=0.3,
            weight_law=WeightLaw(kind="constant", constant=10), n_cpv_classes=5,
            risk_regime=RiskRegime(kind="uniform", p_base=0.2),
        )
        for seed in range(5):
            table = generate_market(config, seed=seed)
            assert len(table) >= 9000
            rate = sum(r.single_bid for r in table.records) / len(table)
            assert abs(rate - 0.2) < 0.02

    def test_intra_block_density_matches_p(self):
        config = SynthConfig(
            n_issuers=120, n_winners=120, n_blocks=2, p_intra=0.25, p_inter=0.05,
            weight_law=WeightLaw(kind="constant", constant=1), n_cpv_classes=3,
            risk_regime=RiskRegime(kind="uniform", p_base=0.1),
        )
        table = generate_market(config, seed=3)
        def block(node):
            return (int(node[1:]) * config.n_blocks) // 120
        intra_pairs = sum(
            1 for i in range(120) for w in range(120)
            if (i * 2) // 120 == (w * 2) // 120
        )
        intra_edges = len({
            (r.issuer_id, r.winner_id) for r in table.records
            if block(r.issuer_id) == block(r.winner_id)
        })
        p_hat = intra_edges / intra_pairs
        se = (0.25 * 0.75 / intra_pairs) ** 0.5
        assert abs(p_hat - 0.25) <= 3 * se

    def test_hub_multiplier_inflates_weights(self):
        config = SynthConfig(
            n_issuers=50, n_winners=50, n_blocks=1, p_intra=0.2, p_inter=0.2,
            weight_law=WeightLaw(kind="constant", constant=1),
            hub_fraction=0.2, hub_weight_multiplier=10, n_cpv_classes=3,
            risk_regime=RiskRegime(kind="uniform", p_base=0.1),
        )
        table = generate_market(config, seed=9)
        weights = {}
        for r in table.records:
            weights[(r.issuer_id, r.winner_id)] = weights.get((r.issuer_id, r.winner_id), 0) + 1
        values = set(weights.values())
        assert {1, 10, 100} <= values  # base, one hub endpoint, two hub endpoints

    def test_powerlaw_weights_respect_max(self):
        config = SynthConfig(
            n_issuers=50, n_winners=50, n_blocks=1, p_intra=0.2, p_inter=0.2,
            weight_law=WeightLaw(kind="powerlaw", exponent=2.0, max_weight=7),
            n_cpv_classes=3, risk_regime=RiskRegime(kind="uniform", p_base=0.1),
        )
        table = generate_market(config, seed=2)
        weights = {}
        for r in table.records:
            weights[(r.issuer_id, r.winner_id)] = weights.get((r.issuer_id, r.winner_id), 0) + 1
        assert max(weights.values()) <= 7
        assert min(weights.values()) >= 1

    def test_no_edges_errors(self):
        config = SynthConfig(
            n_issuers=3, n_winners=3, n_blocks=1, p_intra=0.0, p_inter=0.0,
            risk_regime=RiskRegime(kind="uniform", p_base=0.1),
        )
        with pytest.raises(DataError, match="no edges"):
            generate_market(config, seed=1)


class TestRiskRegimes:
    def test_blocks_hot_plants_risk_in_hot_blocks(self):
        config = SynthConfig(
            n_issuers=80, n_winners=80, n_blocks=4, p_intra=0.4, p_inter=0.0,
            weight_law=WeightLaw(kind="constant", constant=5), n_cpv_classes=5,
            risk_regime=RiskRegime(kind="blocks_hot", p_base=0.1, p_hot=0.6,
                                   hot_blocks=(0,)),
        )
        table = generate_market(config, seed=4)
        def block(node):
            return (int(node[1:]) * 4) // 80
        hot = [r for r in table.records if block(r.issuer_id) == 0]
        cold = [r for r in table.records if block(r.issuer_id) != 0]
        hot_rate = sum(r.single_bid for r in hot) / len(hot)
        cold_rate = sum(r.single_bid for r in cold) / len(cold)
        assert hot_rate > 0.5
        assert cold_rate < 0.2

    def test_blocks_hot_with_equal_probabilities_is_uniform(self):
        config = SynthConfig(
            n_issuers=60, n_winners=60, n_blocks=4, p_intra=0.3, p_inter=0.05,
            weight_law=WeightLaw(kind="constant", constant=3), n_cpv_classes=5,
            risk_regime=RiskRegime(kind="blocks_hot", p_base=0.15, p_hot=0.15,
                                   hot_blocks=(0, 1)),
        )
        table = generate_market(config, seed=8)
        rate = sum(r.single_bid for r in table.records) / len(table)
        assert abs(rate - 0.15) < 0.03

    def test_base_labels_pass_chi_square(self):
        # flags outside hot blocks should look Bernoulli(p_base)
        config = SynthConfig(
            n_issuers=40, n_winners=40, n_blocks=4, p_intra=0.3, p_inter=0.05,
            weight_law=WeightLaw(kind="constant", constant=4), n_cpv_classes=5,
            risk_regime=RiskRegime(kind="blocks_hot", p_base=0.2, p_hot=0.7,
                                   hot_blocks=(0,)),
        )
        def block(node):
            return (int(node[1:]) * 4) // 40
        passes = 0
        for seed in range(50):
            table = generate_market(config, seed=seed)
            cold = [r.single_bid for r in table.records
                    if not (block(r.issuer_id) == block(r.winner_id) == 0)]
            k = sum(cold)
            n = len(cold)
            _, p_value = scipy_stats.chisquare(
                [k, n - k], [n * 0.2, n * 0.8])
            passes += p_value > 0.01
        assert passes >= 45

    def test_invalid_hot_block_rejected(self):
        with pytest.raises(ValueError, match="hot blocks"):
            SynthConfig(n_blocks=2,
                        risk_regime=RiskRegime(kind="blocks_hot", p_base=0.1,
                                               p_hot=0.2, hot_blocks=(5,)))


class TestConfigFile:
    def test_round_trip_through_config_file(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text(
            "n_issuers = 30\nn_winners = 20\nn_blocks = 2\n"
            "p_intra = 0.4\np_inter = 0.1\n"
            "weight_law = powerlaw:2.5:30\n"
            "hub_fraction = 0.1\nhub_weight_multiplier = 5\n"
            "n_cpv_classes = 7\nrisk_regime = core_hot:0.1:0.4\nseed = 11\n",
            encoding="utf-8",
        )
        config = read_synth_config(path)
        assert config.n_issuers == 30
        assert config.weight_law == WeightLaw(kind="powerlaw", exponent=2.5, max_weight=30)
        assert config.risk_regime == RiskRegime(kind="core_hot", p_base=0.1, p_hot=0.4)
        assert config.seed == 11
        table = generate_market(config)
        assert len(table) > 0

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text("bogus = 1\n", encoding="utf-8")
        with pytest.raises(DataError, match="unknown synth config key"):
            read_synth_config(path)

    def test_blocks_hot_spec(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text("n_blocks = 4\nrisk_regime = blocks_hot:0.1:0.5:0,1\n",
                        encoding="utf-8")
        config = read_synth_config(path)
        assert config.risk_regime.hot_blocks == (0, 1)


def test_emits_canonical_csv(tmp_path):
    table = generate_market(BASE, seed=1)
    path = tmp_path / "synth.csv"
    write_contracts(table, path)
    assert parse_contracts(path) == table
