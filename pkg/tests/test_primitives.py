"""Tests for hashing, key generation, signatures and key files."""

import random
import unittest

import pytest
from hypothesis import given, settings, strategies as st

from tests.sha256_oracle import sha256
from trusted_preprocessing.errors import KeyGenerationError, KeyRoleError
from trusted_preprocessing.models import Measurement, MeasurementBatch, MetaData
from trusted_preprocessing.primitives import (
    KeyRole,
    generate_keypair,
    hash_message,
    keypair_from_private,
    load_keypair,
    save_keypair,
    sign,
    verify,
)

EMPTY_DIGEST = "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


class TestHash(unittest.TestCase):

    def test_empty_string_digest(self):
        self.assertEqual(hash_message(b"").hex(), EMPTY_DIGEST)

    def test_deterministic_and_32_bytes(self):
        self.assertEqual(hash_message(b"abc"), hash_message(b"abc"))
        self.assertEqual(len(hash_message(b"abc")), 32)

    def test_matches_independent_oracle_on_1000_inputs(self):
        rng = random.Random(1234)
        for _ in range(1000):
            message = rng.randbytes(rng.randrange(0, 300))
            self.assertEqual(hash_message(message), sha256(message))

    def test_batch_encoding_matches_oracle(self):
        batch = MeasurementBatch(
            MetaData("sensor-0", 1_600_000_000, 7),
            (Measurement((1, -2, 3, 2 ** 40)), Measurement((0, 0, 0, -(2 ** 63)))),
        )
        encoding = batch.encode()
        self.assertEqual(hash_message(encoding), sha256(encoding))


class TestKeyGeneration(unittest.TestCase):

    def test_seeded_generation_is_deterministic(self):
        seed = bytes(range(32))
        self.assertEqual(
            generate_keypair(KeyRole.SENSOR, seed), generate_keypair(KeyRole.SENSOR, seed)
        )

    def test_distinct_seeds_give_distinct_keys(self):
        a = generate_keypair(KeyRole.SENSOR, b"\x01" * 32)
        b = generate_keypair(KeyRole.SENSOR, b"\x02" * 32)
        self.assertNotEqual(a.public_key, b.public_key)

    def test_same_seed_different_roles_differ(self):
        seed = b"\x07" * 32
        sensor = generate_keypair(KeyRole.SENSOR, seed)
        evidence = generate_keypair(KeyRole.EVIDENCE, seed)
        self.assertNotEqual(sensor.public_key, evidence.public_key)

    def test_unseeded_keys_are_fresh(self):
        self.assertNotEqual(
            generate_keypair(KeyRole.SENSOR).public_key, generate_keypair(KeyRole.SENSOR).public_key
        )

    def test_malformed_seed_length(self):
        for bad in (b"", b"\x00" * 31, b"\x00" * 33):
            with self.assertRaises(KeyGenerationError):
                generate_keypair(KeyRole.SENSOR, bad)

    def test_require_role(self):
        key = generate_keypair(KeyRole.SENSOR, b"\x03" * 32)
        self.assertIs(key.require_role(KeyRole.SENSOR), key)
        with self.assertRaises(KeyRoleError):
            key.require_role(KeyRole.EVIDENCE)

    def test_repr_hides_private_key(self):
        key = generate_keypair(KeyRole.SENSOR, b"\x03" * 32)
        self.assertNotIn(key.private_key.hex(), repr(key))

    def test_rebuild_from_private(self):
        key = generate_keypair(KeyRole.EVIDENCE, b"\x04" * 32)
        self.assertEqual(keypair_from_private(KeyRole.EVIDENCE, key.private_key), key)
        with self.assertRaises(KeyGenerationError):
            keypair_from_private(KeyRole.EVIDENCE, b"short")


class TestSignatures(unittest.TestCase):

    def setUp(self):
        self.key = generate_keypair(KeyRole.SENSOR, b"\x05" * 32)
        self.message = b"m"

    def test_round_trip(self):
        signature = sign(self.key.private_key, self.message)
        self.assertEqual(len(signature), 64)
        self.assertTrue(verify(self.key.public_key, self.message, signature))
        self.assertTrue(self.key.verify(self.message, self.key.sign(self.message)))

    def test_every_single_bit_flip_of_message_fails(self):
        message = b"short message"
        signature = sign(self.key.private_key, message)
        for i in range(len(message) * 8):
            flipped = bytearray(message)
            flipped[i // 8] ^= 1 << (i % 8)
            self.assertFalse(verify(self.key.public_key, bytes(flipped), signature))

    def test_every_single_bit_flip_of_signature_fails(self):
        signature = sign(self.key.private_key, self.message)
        for i in range(len(signature) * 8):
            flipped = bytearray(signature)
            flipped[i // 8] ^= 1 << (i % 8)
            self.assertFalse(verify(self.key.public_key, self.message, bytes(flipped)))

    def test_cross_key_fails(self):
        other = generate_keypair(KeyRole.SENSOR, b"\x06" * 32)
        signature = sign(self.key.private_key, self.message)
        self.assertFalse(verify(other.public_key, self.message, signature))

    def test_malformed_inputs_are_failures_not_crashes(self):
        signature = sign(self.key.private_key, self.message)
        self.assertFalse(verify(b"", self.message, signature))
        self.assertFalse(verify(b"\x00" * 31, self.message, signature))
        self.assertFalse(verify(self.key.public_key, self.message, b""))
        self.assertFalse(verify(self.key.public_key, self.message, signature + b"\x00"))


@settings(max_examples=200)
@given(st.binary(max_size=256), st.binary(max_size=256))
def test_signature_binds_message(message, other):
    key = generate_keypair(KeyRole.SENSOR, b"\x08" * 32)
    signature = key.sign(message)
    assert key.verify(message, signature)
    if other != message:
        assert not key.verify(other, signature)


@given(st.binary(min_size=32, max_size=32))
def test_seeded_pairs_sign_and_verify(seed):
    key = generate_keypair(KeyRole.DEVICE_IDENTITY, seed)
    assert verify(key.public_key, b"m", sign(key.private_key, b"m"))


class TestKeyFiles:

    def test_save_and_load(self, tmp_path):
        key = generate_keypair(KeyRole.PKI_ROOT, b"\x09" * 32)
        path = save_keypair(tmp_path / "root.json", key)
        assert load_keypair(path) == key
        assert load_keypair(path, KeyRole.PKI_ROOT) == key

    def test_load_enforces_role(self, tmp_path):
        path = save_keypair(tmp_path / "k.json", generate_keypair(KeyRole.SENSOR, b"\x0a" * 32))
        with pytest.raises(KeyRoleError):
            load_keypair(path, KeyRole.EVIDENCE)

    def test_key_file_is_lowercase_hex(self, tmp_path):
        path = save_keypair(tmp_path / "k.json", generate_keypair(KeyRole.SENSOR, b"\x0b" * 32))
        text = path.read_text()
        assert text == text.lower()
        assert text.endswith("\n")
