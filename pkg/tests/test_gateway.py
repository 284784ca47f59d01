"""Tests for the gateway program: filter, reduce, map, input verification."""

import random
import unittest

import pytest

from trusted_preprocessing.errors import (
    DigestMismatchError,
    EncodingError,
    ProgramError,
    SignatureMismatchError,
    StaleSequenceError,
)
from trusted_preprocessing.gateway import (
    Gateway,
    PreprocessProgram,
    ReplayGuard,
    Stage,
    StageKind,
    evaluate,
    filter_violations,
    map_scale,
    reduce_count,
    threshold_violation_program,
)
from trusted_preprocessing.models import AuxiliaryData, Measurement, MeasurementBatch, MetaData
from trusted_preprocessing.primitives import KeyRole, generate_keypair, hash_message
from trusted_preprocessing.sensor import SignedBatch, sign_batch

KEY = generate_keypair(KeyRole.SENSOR, b"\x21" * 32)
META = MetaData("sensor-0", 1_600_000_000, 0)
AUX = AuxiliaryData(threshold=50, scale_divisor=10)


def batch_of(values, meta=META):
    rows = [tuple(values[i:i + 4]) for i in range(0, len(values), 4)]
    return MeasurementBatch(meta, tuple(Measurement(r) for r in rows))


def counting_oracle(values, threshold):
    count = 0
    for v in values:
        if v > threshold:
            count += 1
    return count


class TestStages(unittest.TestCase):

    def test_filter_example(self):
        self.assertEqual(filter_violations(batch_of([3, 7, 50, 51]), AUX), [51])

    def test_filter_boundary_is_strict(self):
        self.assertEqual(filter_violations(batch_of([50, 50, 50, 50]), AUX), [])
        self.assertEqual(
            filter_violations(batch_of([50, 50, 50, 50]), AUX, predicate="ge"), [50] * 4
        )

    def test_filter_preserves_order(self):
        self.assertEqual(filter_violations(batch_of([90, 10, 60, 70]), AUX), [90, 60, 70])

    def test_reduce(self):
        self.assertEqual(reduce_count([]), 0)
        self.assertEqual(reduce_count([51]), 1)

    def test_all_values_above_threshold(self):
        batch = batch_of([100] * 64)
        self.assertEqual(reduce_count(filter_violations(batch, AUX)), 64)

    def test_map_floor_semantics(self):
        self.assertEqual(map_scale([-7], AuxiliaryData(0, 2)), [-4])
        self.assertEqual(map_scale([51, 99], AUX), [5, 9])

    def test_invalid_divisor(self):
        with self.assertRaises(EncodingError):
            AuxiliaryData(0, 0)

    def test_threshold_below_all_values(self):
        rng = random.Random(5)
        for size in (1, 3, 16):
            values = [rng.randint(-100, 100) for _ in range(4 * size)]
            output = evaluate(threshold_violation_program(), batch_of(values), AuxiliaryData(-101, 1))
            self.assertEqual(output.violation_count, 4 * size)


class TestProgram(unittest.TestCase):

    def test_program_id_is_stable(self):
        self.assertEqual(
            threshold_violation_program().program_id, threshold_violation_program().program_id
        )

    def test_variant_has_different_id(self):
        self.assertNotEqual(
            threshold_violation_program("gt").program_id,
            threshold_violation_program("ge").program_id,
        )

    def test_unsupported_definitions(self):
        with self.assertRaises(ProgramError):
            threshold_violation_program("lt")
        with self.assertRaises(ProgramError):
            PreprocessProgram((Stage(StageKind.REDUCE, "", "count"),))

    def test_dict_round_trip(self):
        program = threshold_violation_program("ge")
        self.assertEqual(PreprocessProgram.from_dict(program.to_dict()), program)


class TestInputVerification(unittest.TestCase):

    def setUp(self):
        self.signed = sign_batch(batch_of([1, 60, 3, 70]), KEY)

    def test_honest_batch(self):
        self.assertEqual(Gateway().verify_input(self.signed, KEY.public_key), self.signed.batch)

    def test_flipped_value_rejected(self):
        tampered = SignedBatch(batch_of([1, 61, 3, 70]), self.signed.batch_digest, self.signed.signature)
        with self.assertRaises(DigestMismatchError):
            Gateway().verify_input(tampered, KEY.public_key)

    def test_recomputed_digest_still_needs_signature(self):
        tampered_batch = batch_of([1, 61, 3, 70])
        tampered = SignedBatch(tampered_batch, hash_message(tampered_batch.encode()), self.signed.signature)
        with self.assertRaises(SignatureMismatchError):
            Gateway().verify_input(tampered, KEY.public_key)

    def test_wrong_key(self):
        other = generate_keypair(KeyRole.SENSOR, b"\x22" * 32)
        with self.assertRaises(SignatureMismatchError):
            Gateway().verify_input(self.signed, other.public_key)

    def test_replayed_sequence(self):
        gateway = Gateway()
        gateway.verify_input(self.signed, KEY.public_key)
        with self.assertRaises(StaleSequenceError):
            gateway.verify_input(self.signed, KEY.public_key)

    def test_run_program(self):
        output = Gateway().run_program(threshold_violation_program(), self.signed, AUX, KEY.public_key)
        self.assertEqual(output.violation_count, 2)
        self.assertEqual(output.scaled_values, (6, 7))


class TestReplayGuard:

    def test_per_sensor_state(self):
        guard = ReplayGuard()
        guard.check_and_advance("a", 0)
        guard.check_and_advance("b", 0)
        guard.check_and_advance("a", 5)
        with pytest.raises(StaleSequenceError):
            guard.check_and_advance("a", 5)
        assert guard.snapshot() == {"a": 5, "b": 0}

    def test_restored_state(self):
        guard = ReplayGuard({"a": 3})
        with pytest.raises(StaleSequenceError):
            guard.check_and_advance("a", 2)

    def test_rollback_only_undoes_the_latest_advance(self):
        guard = ReplayGuard({"a": 3})
        guard.check_and_advance("a", 4)
        guard.check_and_advance("a", 6)
        guard.rollback("a", 4, 3)
        assert guard.last("a") == 6
        guard.rollback("a", 6, 4)
        guard.rollback("a", 4, 3)
        assert guard.last("a") == 3
        guard.check_and_advance("b", 0)
        guard.rollback("b", 0, None)
        assert guard.snapshot() == {"a": 3}


def test_count_matches_oracle_on_10000_batches():
    rng = random.Random(2024)
    program = threshold_violation_program()
    gateway = Gateway()
    mismatches = 0
    for case in range(10_000):
        size = rng.randint(1, 16)
        values = [rng.randint(-100, 100) for _ in range(4 * size)]
        threshold = rng.randint(-100, 100)
        batch = MeasurementBatch(
            MetaData("sensor-0", 1_600_000_000, case),
            tuple(Measurement(tuple(values[i:i + 4])) for i in range(0, len(values), 4)),
        )
        aux = AuxiliaryData(threshold, rng.randint(1, 20))
        if case % 50 == 0:
            output = gateway.run_program(program, sign_batch(batch, KEY), aux, KEY.public_key)
        else:
            output = evaluate(program, batch, aux)
        mismatches += output.violation_count != counting_oracle(values, threshold)
    assert mismatches == 0
