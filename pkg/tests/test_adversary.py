"""Tests for the attack harness."""

import json

import pytest

from trusted_preprocessing import adversary
from trusted_preprocessing.adversary import (
    Scenario,
    TamperKind,
    TamperStrategy,
    flip_bit,
    run_attack,
    run_campaign,
    tamper_batch,
)
from trusted_preprocessing.errors import VacuousStrategyError
from trusted_preprocessing.models import BackendId, DetectionStage, RejectReason
from trusted_preprocessing.primitives import hash_message

CS = BackendId.CONSTRAINT_SYSTEM
TEE = BackendId.ENCLAVE


@pytest.mark.parametrize("kind, mutation", [
    (TamperKind.AUXILIARY, {"threshold_delta": 0}),
    (TamperKind.INPUT, {"measurement_index": 0, "field": 0, "value_delta": 0}),
    (TamperKind.EVIDENCE, {"byte_index": 3, "bit": 8}),
    (TamperKind.PROGRAM, {"predicate": "gt"}),
    (TamperKind.REPLAY, {"mode": "resend-later"}),
])
def test_vacuous_strategies_are_refused(kind, mutation):
    with pytest.raises(VacuousStrategyError):
        TamperStrategy(kind, mutation)


@pytest.mark.parametrize("kind", list(TamperKind))
def test_seeded_strategies_are_deterministic(kind):
    assert TamperStrategy.from_seed(kind, 7) == TamperStrategy.from_seed(kind, 7)
    assert TamperStrategy.from_seed(kind.value, 7).kind is kind


def test_scenario_is_deterministic():
    a, b = Scenario.build(3), Scenario.build(3)
    assert a.batches == b.batches
    assert a.sensor_key.public_key == b.sensor_key.public_key
    assert [s.batch.meta.sequence_no for s in a.batches] == [0, 1]


def test_tamper_batch_changes_exactly_one_value():
    honest = Scenario.build(5).batches[0]
    tampered = tamper_batch(honest, {"measurement_index": 0, "field": 2, "value_delta": 3,
                                     "keep_digest": True})
    diffs = [(a, b) for a, b in zip(honest.batch.values(), tampered.batch.values()) if a != b]
    assert diffs == [(honest.batch.values()[2], honest.batch.values()[2] + 3)]
    assert tampered.batch_digest == honest.batch_digest
    assert tampered.signature == honest.signature

    rehashed = tamper_batch(honest, {"measurement_index": 0, "field": 2, "value_delta": 3})
    assert rehashed.batch_digest == hash_message(rehashed.batch.encode())


def test_flip_bit():
    assert flip_bit(b"\x00\x00", 1, 7) == b"\x00\x80"
    assert flip_bit(b"\x01", 5, 0) == b"\x00"


class TestDetectionStages:

    def test_program_on_enclave_caught_at_attestation(self):
        for via in ("reinstantiate", "bypass-seal"):
            strategy = TamperStrategy(TamperKind.PROGRAM, {"predicate": "ge", "via": via})
            outcome = run_attack(strategy, TEE, 1)
            assert outcome.detected
            assert outcome.stage is DetectionStage.ATTESTATION_REFERENCE
            assert outcome.reason is RejectReason.MEASUREMENT_MISMATCH

    def test_program_on_cs_caught_by_verifier(self):
        outcome = run_attack(TamperStrategy(TamperKind.PROGRAM, {"predicate": "ge"}), CS, 1)
        assert outcome.reason is RejectReason.PROGRAM_MISMATCH
        assert outcome.stage is DetectionStage.CONSTRAINT_CHECK

    def test_auxiliary_on_cs_caught_at_public_inputs(self):
        outcome = run_attack(TamperStrategy(TamperKind.AUXILIARY, {"threshold_delta": 5}), CS, 2)
        assert outcome.stage is DetectionStage.PUBLIC_INPUT_MATCH

    def test_auxiliary_on_enclave_caught_at_attestation(self):
        outcome = run_attack(TamperStrategy(TamperKind.AUXILIARY, {"threshold_delta": -5}), TEE, 2)
        assert outcome.stage is DetectionStage.ATTESTATION_REFERENCE

    def test_input_on_enclave_caught_at_sensor_signature(self):
        strategy = TamperStrategy(TamperKind.INPUT, {"measurement_index": 0, "field": 1,
                                                     "value_delta": 9, "keep_digest": True})
        outcome = run_attack(strategy, TEE, 3)
        assert outcome.stage is DetectionStage.SENSOR_SIGNATURE

    def test_input_on_cs_caught_by_constraints(self):
        strategy = TamperStrategy(TamperKind.INPUT, {"measurement_index": 0, "field": 1,
                                                     "value_delta": 9})
        outcome = run_attack(strategy, CS, 3)
        assert outcome.detected
        assert outcome.reason is RejectReason.CONSTRAINT_VIOLATION

    @pytest.mark.parametrize("backend", [CS, TEE])
    @pytest.mark.parametrize("mode", ["duplicate", "reorder"])
    def test_replay_caught_by_replay_guard(self, backend, mode):
        outcome = run_attack(TamperStrategy(TamperKind.REPLAY, {"mode": mode}), backend, 4)
        assert outcome.stage is DetectionStage.REPLAY_GUARD

    @pytest.mark.parametrize("backend", [CS, TEE])
    def test_evidence_bit_flip(self, backend):
        strategy = TamperStrategy(TamperKind.EVIDENCE, {"byte_index": 40, "bit": 3})
        assert run_attack(strategy, backend, 5).detected


def test_outcome_record_is_json():
    outcome = run_attack(TamperStrategy.from_seed(TamperKind.REPLAY, 0), CS, 0)
    record = json.loads(json.dumps(outcome.to_dict()))
    assert record["strategy"] == "replay"
    assert record["backend"] == "cs"
    assert record["detected"] is True
    assert record["stage"] == "replay guard"



class TestWithoutSealBypass:

    @pytest.fixture(autouse=True)
    def no_bypass(self, monkeypatch):
        monkeypatch.setattr(adversary, "_seal_bypass", None)

    def test_package_ships_no_bypass(self):
        public = [n for n in dir(adversary) if "bypass" in n and not n.startswith("_")]
        assert public == ["install_seal_bypass"]

    def test_seeded_program_attacks_reattest_fresh(self):
        vias = {TamperStrategy.from_seed(TamperKind.PROGRAM, s).mutation["via"] for s in range(50)}
        assert vias == {"reinstantiate"}
        assert run_attack(TamperStrategy.from_seed(TamperKind.PROGRAM, 3), TEE, 3).detected

    def test_explicit_bypass_refused(self):
        strategy = TamperStrategy(TamperKind.PROGRAM, {"predicate": "ge", "via": "bypass-seal"})
        with pytest.raises(RuntimeError, match="no seal bypass"):
            run_attack(strategy, TEE, 1)

def test_campaign_order():
    outcomes = run_campaign([TamperKind.EVIDENCE, TamperKind.REPLAY], [CS, TEE], [0, 1], max_workers=2)
    assert [(o.strategy.kind, o.backend_id, o.seed) for o in outcomes] == [
        (k, b, s) for k in (TamperKind.EVIDENCE, TamperKind.REPLAY) for b in (CS, TEE) for s in (0, 1)
    ]
    assert all(o.detected for o in outcomes)


@pytest.mark.slow
def test_full_campaign_detects_everything():
    outcomes = run_campaign(list(TamperKind), [CS, TEE], range(100), max_workers=4)
    assert len(outcomes) == 5 * 2 * 100
    missed = [o.to_dict() for o in outcomes if not o.detected]
    assert missed == []
