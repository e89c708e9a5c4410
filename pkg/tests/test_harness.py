import json
import math

import numpy as np
import pytest

from otafl import harness
from otafl.bounds import bound_final_model, validate_dominance
from otafl.channel import NoiselessOrthogonal
from otafl.data import partition
from otafl.harness import (
    MetricsRow,
    MetricsTable,
    analyze_comparison,
    compare_schemes,
    export_table,
    load_config,
    load_table,
    parse_config,
    run_experiment,
    sigma_from_snr,
    simulate_trials,
)
from otafl.objectives import solve_optimum
from otafl.rng import stream_generator
from otafl.trainer import run_training


def tiny_config(**overrides):
    doc = {
        "seed": 11,
        "trials": 3,
        "users": 4,
        "dataset": {"kind": "synthetic", "dim": 5, "total_samples": 120, "noise_std": 1.0},
        "partition": {"mode": "iid"},
        "trainer": {
            "scheme": "cotaf",
            "local_steps": 3,
            "rounds": 6,
            "schedule": {"kind": "final_model", "shift": "auto"},
        },
        "channel": {"kind": "awgn_mac", "snr_db": -6.0},
        "alpha": {"source": "mc_pilot", "fraction": 0.5, "pilot_trials": 2},
    }
    doc.update(overrides)
    return parse_config(doc)


class TestConfigParsing:
    def test_unknown_top_level_key(self):
        with pytest.raises(ValueError, match="unknown config keys"):
            parse_config({"seed": 1, "bogus": 2})

    def test_unknown_nested_key(self):
        doc = {
            "seed": 1, "trials": 1, "users": 2,
            "dataset": {"kind": "synthetic", "dim": 2, "total_samples": 10, "extra": 1},
            "trainer": {"scheme": "cotaf", "local_steps": 1, "rounds": 1},
            "channel": {"kind": "awgn_mac", "snr_db": 0.0},
        }
        with pytest.raises(ValueError, match="dataset"):
            parse_config(doc)

    def test_missing_required_key(self):
        with pytest.raises(ValueError, match="missing config key"):
            parse_config({"seed": 1})

    def test_defaults_applied(self):
        config = tiny_config()
        assert config.partition_mode == "iid"
        assert config.alpha.source == "mc_pilot"
        assert config.trainer.ridge_lambda == 0.5

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "c.json"
        doc = {
            "seed": 3, "trials": 1, "users": 2,
            "dataset": {"kind": "synthetic", "dim": 2, "total_samples": 20},
            "trainer": {"scheme": "noise_free_local_sgd", "local_steps": 2, "rounds": 2},
            "channel": {"kind": "noiseless_orthogonal"},
        }
        path.write_text(json.dumps(doc))
        config = load_config(path)
        assert config.seed == 3 and config.users == 2

    def test_invalid_scheme_rejected(self):
        with pytest.raises(ValueError):
            tiny_config(trainer={"scheme": "nope", "local_steps": 1, "rounds": 1})


class TestSnrBookkeeping:
    def test_sigma_matches_snr(self):
        sigma = sigma_from_snr(-6.0)
        assert 10 * math.log10(1.0 / sigma) == pytest.approx(-6.0, abs=1e-9)
        assert sigma == pytest.approx(10 ** 0.6)

    def test_noiseless(self):
        assert sigma_from_snr(None) == 0.0


class TestRunExperiment:
    def test_determinism(self):
        config = tiny_config()
        assert run_experiment(config) == run_experiment(config)

    def test_single_trial_matches_hand_run(self):
        config = tiny_config(trials=1, trainer={
            "scheme": "noise_free_local_sgd", "local_steps": 3, "rounds": 4,
            "schedule": {"kind": "final_model", "shift": "auto"},
        }, channel={"kind": "noiseless_orthogonal"})
        table = run_experiment(config)
        rows = table.for_scheme("noise_free_local_sgd")
        assert len(rows) == 4
        assert all(row.stderr == 0.0 for row in rows)

        # hand-rebuild trial 0 with the documented streams and compare
        resolved = harness.resolve(config, ["noise_free_local_sgd"])
        shards = partition(
            resolved.dataset, config.partition_spec, stream_generator(config.seed, "trial0/partition")
        )
        _, f_star = solve_optimum(shards, config.trainer.ridge_lambda)
        traces = run_training(
            shards,
            harness._trainer_config(resolved, "noise_free_local_sgd"),
            None,
            NoiselessOrthogonal(),
            harness.trial_streams(config, 0, "noise_free_local_sgd"),
            f_star,
        )
        for row, trace in zip(rows, traces):
            assert row.mean_gap == trace.gap

    def test_paired_initial_models_across_schemes(self):
        config = tiny_config(trials=2)
        result = simulate_trials(config, ["cotaf", "noise_free_local_sgd"])
        # pairing: with a noiseless channel the gap arrays would match; here we
        # check stream sharing via the recorded initial distances
        assert result.theta0_dist2.shape == (2,)
        r1 = simulate_trials(config, ["noise_free_local_sgd"])
        np.testing.assert_array_equal(result.theta0_dist2, r1.theta0_dist2)
        np.testing.assert_array_equal(
            result.schemes["noise_free_local_sgd"].gaps, r1.schemes["noise_free_local_sgd"].gaps
        )

    def test_noiseless_schemes_collapse(self):
        config = tiny_config(channel={"kind": "awgn_mac", "snr_db": None})
        result = simulate_trials(
            config, ["noise_free_local_sgd", "cotaf", "non_precoded_ota"]
        )
        base = result.schemes["noise_free_local_sgd"].gaps
        for scheme in ("cotaf", "non_precoded_ota"):
            assert np.max(np.abs(result.schemes[scheme].gaps - base)) < 1e-10

    def test_stderr_shrinks_with_trials(self):
        trainer = {
            "scheme": "cotaf", "local_steps": 3, "rounds": 10,
            "schedule": {"kind": "final_model", "shift": "auto"},
        }
        se_small = np.array(
            [r.stderr for r in run_experiment(tiny_config(trials=16, trainer=trainer)).for_scheme("cotaf")]
        )
        se_large = np.array(
            [r.stderr for r in run_experiment(tiny_config(trials=64, trainer=trainer)).for_scheme("cotaf")]
        )
        ratio = np.mean(se_large / se_small)
        assert 0.5 * 0.7 <= ratio <= 0.5 * 1.3

    def test_scheme_channel_mismatch_rejected(self):
        config = tiny_config(channel={"kind": "fading_mac", "snr_db": -6.0})
        with pytest.raises(ValueError, match="awgn_mac"):
            simulate_trials(config, ["cotaf"])

    def test_failures_name_trial_and_round(self, monkeypatch):
        import otafl.trainer as trainer_mod

        monkeypatch.setattr(trainer_mod, "MAX_WAIT_REDRAWS", 50)
        config = tiny_config(
            trials=1,
            channel={"kind": "fading_mac", "snr_db": -6.0, "participants": 4, "h_min": 50.0},
            trainer={
                "scheme": "cotaf_fading", "local_steps": 3, "rounds": 2,
                "schedule": {"kind": "final_model", "shift": "auto"},
            },
        )
        with pytest.raises(RuntimeError, match=r"trial 0, scheme cotaf_fading: round 1"):
            simulate_trials(config, ["cotaf_fading"])

    def test_gap_never_meaningfully_negative(self):
        config = tiny_config(trials=4)
        result = simulate_trials(
            config, ["noise_free_local_sgd", "cotaf", "non_precoded_ota"]
        )
        for run in result.schemes.values():
            assert np.all(run.gaps >= -1e-9)

    def test_rows_cover_rounds_and_schemes(self):
        config = tiny_config()
        table = run_experiment(config, ["cotaf", "noise_free_local_sgd"])
        assert len(table.rows) == 2 * config.trainer.rounds
        for scheme in ("cotaf", "noise_free_local_sgd"):
            rounds = [r.round for r in table.for_scheme(scheme)]
            assert rounds == list(range(1, config.trainer.rounds + 1))


class TestExport:
    def _table(self):
        return MetricsTable(
            rows=(
                MetricsRow("cotaf", 1, 3, 0.1 + 1e-17, 0.01, 0.9, 4.0, 0.0),
                MetricsRow("cotaf", 2, 6, 1 / 3, 0.005, 0.8, 4.0, 0.0),
            )
        )

    def test_csv_round_trip(self, tmp_path):
        table = self._table()
        path = tmp_path / "meas.csv"
        export_table(table, path)
        assert load_table(path) == table
        header = path.read_text().splitlines()[0]
        assert header == "scheme,round,t,mean_gap,stderr,mean_power,participants_mean,wait_count"

    def test_json_round_trip(self, tmp_path):
        table = self._table()
        path = tmp_path / "meas.json"
        export_table(table, path)
        assert load_table(path) == table

    def test_empty_table_header_only(self, tmp_path):
        path = tmp_path / "empty.csv"
        export_table(MetricsTable(), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 1 and lines[0].startswith("scheme,")
        assert load_table(path) == MetricsTable()

    def test_real_experiment_round_trip(self, tmp_path):
        table = run_experiment(tiny_config())
        for name in ("t.csv", "t.json"):
            path = tmp_path / name
            export_table(table, path)
            assert load_table(path) == table


class TestCompare:
    def test_ordering_and_floor_flags(self):
        config = tiny_config(trials=4, trainer={
            "scheme": "cotaf", "local_steps": 3, "rounds": 12,
            "schedule": {"kind": "final_model", "shift": "auto"},
        })
        report = compare_schemes(
            config, ["noise_free_local_sgd", "cotaf", "non_precoded_ota"]
        )
        assert report.ordering_ok()
        assert report.final_mean_gaps["non_precoded_ota"] > report.final_mean_gaps["cotaf"]
        assert report.error_floor["non_precoded_ota"]
        payload = report.to_dict()
        assert payload["ordering_ok"] is True

    def test_noiseless_collapse_statistically_indistinguishable(self):
        config = tiny_config(trials=3, channel={"kind": "awgn_mac", "snr_db": None})
        result = simulate_trials(config, ["noise_free_local_sgd", "cotaf", "non_precoded_ota"])
        report = analyze_comparison(result, ["noise_free_local_sgd", "cotaf", "non_precoded_ota"])
        for pair in report.pairs:
            assert abs(pair.mean_diff) < 1e-10

    def test_needs_two_schemes(self):
        config = tiny_config()
        with pytest.raises(ValueError):
            compare_schemes(config, ["cotaf"])


class TestBoundInputs:
    def test_dominance_on_tiny_run(self):
        config = tiny_config(trials=4)
        result = simulate_trials(config, ["cotaf"])
        inputs = harness.estimate_bound_inputs(config, kind="final_model")
        gaps = result.schemes["cotaf"].gaps.mean(axis=0)
        report = validate_dominance(
            list(zip(result.t_grid, gaps)), bound_final_model, inputs
        )
        assert report.passed

    def test_delta0_at_least_analytic(self):
        config = tiny_config()
        inputs = harness.estimate_bound_inputs(config)
        resolved = harness.resolve(config, ["cotaf"])
        shard = harness._full_dataset_shard(resolved.dataset)
        theta_star, _ = solve_optimum([shard], config.trainer.ridge_lambda)
        analytic = config.trainer.theta0_std ** 2 * 5 + float(theta_star @ theta_star)
        assert inputs.delta0 >= analytic - 1e-12


class TestFadingExperiment:
    def test_fading_run_and_eligibility_calibration(self):
        config = tiny_config(
            trials=2,
            channel={"kind": "fading_mac", "snr_db": -6.0, "participants": 3, "eligibility": 0.8},
            trainer={
                "scheme": "cotaf_fading", "local_steps": 3, "rounds": 5,
                "schedule": {"kind": "final_model", "shift": "auto"},
            },
        )
        resolved = harness.resolve(config, ["cotaf_fading"])
        # h_min calibrated so that P(h > h_min) = eligibility under Rayleigh
        h_min = resolved.fading_policy.h_min
        scale = config.channel.rayleigh_scale
        assert math.exp(-h_min**2 / (2 * scale**2)) == pytest.approx(0.8, rel=1e-12)

        result = simulate_trials(config, ["cotaf_fading"])
        run = result.schemes["cotaf_fading"]
        assert np.all(run.participants == 3)
        assert np.all(run.gaps[:, -1] >= -1e-9)
