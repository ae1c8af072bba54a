# tests/test_harness.py
import io
import json

import pytest

from cardauth import channel as channel_module
from cardauth.channel import ClockMode
from cardauth.entities import (
    CidPolicy, ConfigError, CorruptTrial, VerifyDecision, VerifyReason,
)
from cardauth.harness import (
    AttackKind, ClockSettings, ScenarioConfig, config_from_dict, load_config,
    run_scenario, run_trial, trial_rng,
)
from cardauth.report import emit_report, summarize


def config(attack, trials, mode=ClockMode.ABSTRACT, **kwargs):
    return ScenarioConfig(seed=kwargs.pop("seed", 7), attack=attack, trials=trials,
                          clock=ClockSettings(mode=mode), **kwargs)


def report_text(cfg):
    sink = io.StringIO()
    emit_report(run_scenario(cfg), sink, include_timings=False)
    return sink.getvalue()


class TestScenarios:
    def test_untouched_replay_is_accepted(self):
        summary = summarize(run_scenario(config(AttackKind.NONE, 100)))["none"]
        assert summary.full_verify_pass == 100

    def test_euclid_always_passes(self):
        summary = summarize(run_scenario(config(AttackKind.EUCLID, 200)))["euclid"]
        assert summary.feasible == summary.equation_pass == summary.full_verify_pass == 200

    def test_euclid_inside_realistic_window(self):
        records = run_scenario(config(AttackKind.EUCLID, 50, mode=ClockMode.REALISTIC))
        assert all(r.full_verify is VerifyReason.OK for r in records)

    def test_time_factor_realistic_clock_marks_stale(self):
        records = run_scenario(config(AttackKind.TIME_FACTOR, 200, mode=ClockMode.REALISTIC))
        feasible = [r for r in records if r.feasible]
        assert feasible
        assert all(r.equation_check for r in feasible)
        assert all(r.full_verify is VerifyReason.STALE_TIMESTAMP for r in feasible)

    def test_time_factor_abstract_clock_passes(self):
        records = run_scenario(config(AttackKind.TIME_FACTOR, 200))
        feasible = [r for r in records if r.feasible]
        assert feasible
        assert all(r.full_verify is VerifyReason.OK for r in feasible)
        assert all(r.infeasible_reason for r in records if not r.feasible)

    def test_inverse_id_mirror_policy(self):
        records = run_scenario(config(AttackKind.INVERSE_ID, 100, cid_policy=CidPolicy.MIRROR))
        summary = summarize(records)["inverse-id"]
        assert summary.full_verify_pass == 100
        assert summary.cid_collisions == 100
        assert all(r.details["recovered_s_matches"] for r in records)

    def test_inverse_id_random_policy(self):
        records = run_scenario(config(AttackKind.INVERSE_ID, 100, cid_policy=CidPolicy.RANDOM))
        summary = summarize(records)["inverse-id"]
        assert summary.cid_collisions == 0
        assert summary.equation_pass == 0

    def test_inverse_ts_literal_prediction_agrees(self):
        records = run_scenario(config(AttackKind.INVERSE_TS_LITERAL, 500, prime_bits=16))
        summary = summarize(records)["inverse-ts-literal"]
        assert summary.predictions == summary.feasible
        assert summary.prediction_agreement == summary.predictions

    def test_inverse_ts_whitebox_passes_when_feasible(self):
        records = run_scenario(config(AttackKind.INVERSE_TS_WHITEBOX, 100))
        feasible = [r for r in records if r.feasible]
        assert feasible
        assert all(r.predicted_success and r.full_verify is VerifyReason.OK for r in feasible)

    def test_tamper_is_rejected(self):
        summary = summarize(run_scenario(config(AttackKind.TAMPER, 1000)))["tamper"]
        assert summary.trials - summary.full_verify_pass >= 990

    def test_corrupt_trial(self, monkeypatch):
        monkeypatch.setattr(channel_module, "verify_login",
                            lambda *a, **kw: VerifyDecision.reject(VerifyReason.EQUATION_FAILED))
        with pytest.raises(CorruptTrial):
            run_trial(config(AttackKind.NONE, 1), 0)


class TestDeterminism:
    def test_same_seed_same_report(self):
        cfg = config(AttackKind.EUCLID, 20, seed=99)
        assert report_text(cfg) == report_text(cfg)

    def test_workers_do_not_change_output(self):
        single = config(AttackKind.INVERSE_ID, 20, cid_policy=CidPolicy.MIRROR)
        pooled = config(AttackKind.INVERSE_ID, 20, cid_policy=CidPolicy.MIRROR, workers=4)
        assert report_text(single) == report_text(pooled)

    def test_trial_streams_are_independent(self):
        assert trial_rng(1, 0).random() == trial_rng(1, 0).random()
        assert trial_rng(1, 0).random() != trial_rng(1, 1).random()

    def test_records_in_trial_order(self):
        records = run_scenario(config(AttackKind.NONE, 10, workers=3))
        assert [r.trial for r in records] == list(range(10))


class TestConfig:
    def test_from_dict(self):
        cfg = config_from_dict({
            "name": "mirror-run", "seed": 3, "prime_bits": 16, "cid_policy": "mirror",
            "attack": "inverse-ts-literal", "trials": 4,
            "clock": {"mode": "realistic", "delta_t": 30},
        })
        assert cfg.attack is AttackKind.INVERSE_TS_LITERAL
        assert cfg.cid_policy is CidPolicy.MIRROR
        assert cfg.clock.mode is ClockMode.REALISTIC and cfg.clock.delta_t == 30
        assert cfg.scenario_id == "mirror-run"

    def test_default_scenario_id(self):
        assert config(AttackKind.EUCLID, 1, seed=5).scenario_id == "euclid-abstract-5"

    @pytest.mark.parametrize("raw", [
        {"attack": "euclid"},
        {"seed": 1, "colour": "red"},
        {"seed": 1, "attack": "rainbow"},
        {"seed": 1, "trials": 0},
        {"seed": "1"},
        {"seed": 1, "clock": {"tick": 5}},
        {"seed": 1, "prime_bits": 2},
    ])
    def test_invalid(self, raw):
        with pytest.raises(ConfigError):
            config_from_dict(raw)

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps({"seed": 1, "attack": "time_factor"}))
        assert load_config(path).attack is AttackKind.TIME_FACTOR

    def test_load_invalid_json(self, tmp_path):
        path = tmp_path / "scenario.json"
        path.write_text("{seed: 1")
        with pytest.raises(ConfigError):
            load_config(path)
