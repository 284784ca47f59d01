"""Tests for the enclave backend: PKI, attestation, execution, evidence, sealing."""

import random
import unittest
from dataclasses import replace

import pytest

from tests.enclave_hooks import bypass_seal
from trusted_preprocessing.backends import enclave as tee_backend
from trusted_preprocessing.backends.enclave import (
    AttestationReport,
    Device,
    EnclaveMeasurement,
    Pki,
    TeeEvidence,
    attest,
    enclave_execute,
    evidence_package,
    instantiate_enclave,
    pki_issue,
    seal_enclave,
    unseal_enclave,
    verify_attestation,
    verify_tee_evidence,
)
from trusted_preprocessing.errors import (
    DuplicateDeviceError,
    InputVerificationError,
    SealedEnclaveError,
    SealingError,
    UnknownDeviceError,
)
from trusted_preprocessing.gateway import threshold_violation_program
from trusted_preprocessing.metering import CostMeter
from trusted_preprocessing.models import (
    AuxiliaryData,
    Measurement,
    MeasurementBatch,
    MetaData,
    Output,
    RejectReason,
)
from trusted_preprocessing.primitives import KeyRole, generate_keypair, hash_message
from trusted_preprocessing.sensor import SignedBatch, generate_batch, sign_batch

SENSOR = generate_keypair(KeyRole.SENSOR, b"\x41" * 32)
PROGRAM = threshold_violation_program()
AUX = AuxiliaryData(50, 10)
ROOT = generate_keypair(KeyRole.PKI_ROOT, b"\x42" * 32)
DEVICE_KEY = generate_keypair(KeyRole.DEVICE_IDENTITY, b"\x43" * 32)


def signed_batch(seq=0, size=3, seed=0):
    meta = MetaData("sensor-0", 1_600_000_000 + seq, seq)
    return sign_batch(generate_batch(size, (-100, 100), seed, meta), SENSOR)


def provisioned():
    pki = Pki(ROOT)
    pki.issue("gw", DEVICE_KEY)
    return pki


def reference():
    return EnclaveMeasurement.compute(PROGRAM.program_id, AUX, SENSOR.public_key).digest


class TestPki(unittest.TestCase):

    def test_issue_and_verify(self):
        pki = Pki(ROOT)
        cert = pki_issue(pki, "gw")
        self.assertTrue(cert.verify(pki.root_public_key))
        self.assertIs(pki.device("gw").certificate, cert)

    def test_cross_root_fails(self):
        cert = provisioned().device("gw").certificate
        other_root = generate_keypair(KeyRole.PKI_ROOT, b"\x44" * 32)
        self.assertFalse(cert.verify(other_root.public_key))

    def test_duplicate_device(self):
        pki = provisioned()
        with self.assertRaises(DuplicateDeviceError):
            pki.issue("gw")

    def test_unknown_device(self):
        with self.assertRaises(UnknownDeviceError):
            instantiate_enclave(provisioned(), "nope", PROGRAM, AUX, SENSOR.public_key)

    def test_register_requires_same_root(self):
        device = provisioned().device("gw")
        Pki(ROOT).register(device)
        with self.assertRaises(UnknownDeviceError):
            Pki(generate_keypair(KeyRole.PKI_ROOT, b"\x45" * 32)).register(device)

    def test_device_round_trip(self):
        device = provisioned().device("gw")
        self.assertEqual(Device.from_dict(device.to_dict()), device)


class TestAttestation(unittest.TestCase):

    def setUp(self):
        self.pki = provisioned()
        self.enclave = instantiate_enclave(self.pki, "gw", PROGRAM, AUX, SENSOR.public_key)

    def test_honest_attestation(self):
        report = attest(self.enclave)
        self.assertTrue(verify_attestation(report, self.pki.root_public_key, reference()))
        self.assertEqual(report.evidence_public_key, self.enclave.evidence_public_key)

    def test_substituted_root_flips_acceptance(self):
        report = attest(self.enclave)
        other = generate_keypair(KeyRole.PKI_ROOT, b"\x46" * 32)
        verdict = verify_attestation(report, other.public_key, reference())
        self.assertEqual(verdict.reason, RejectReason.CERTIFICATE_INVALID)

    def test_report_signed_by_non_pki_key(self):
        report = attest(self.enclave)
        rogue = generate_keypair(KeyRole.DEVICE_IDENTITY, b"\x47" * 32)
        forged = replace(report, device_signature=rogue.sign(report.measurement.digest + report.evidence_public_key))
        verdict = verify_attestation(forged, self.pki.root_public_key, reference())
        self.assertEqual(verdict.reason, RejectReason.DEVICE_SIGNATURE_INVALID)

    def test_swapped_evidence_key(self):
        report = attest(self.enclave)
        forged = replace(report, evidence_public_key=generate_keypair(KeyRole.EVIDENCE).public_key)
        self.assertFalse(verify_attestation(forged, self.pki.root_public_key, reference()))

    def test_report_dict_round_trip(self):
        report = attest(self.enclave)
        self.assertEqual(AttestationReport.from_dict(report.to_dict()), report)

    def test_binding_over_100_perturbations(self):
        rng = random.Random(11)
        ref = reference()
        for trial in range(100):
            choice = trial % 3
            program, aux, sensor_pk = PROGRAM, AUX, SENSOR.public_key
            if choice == 0:
                program = threshold_violation_program("ge")
            elif choice == 1:
                aux = AuxiliaryData(50 + rng.choice([-1, 1]) * rng.randint(1, 1000), rng.randint(1, 20))
            else:
                sensor_pk = generate_keypair(KeyRole.SENSOR, rng.randbytes(32)).public_key
            digest = EnclaveMeasurement.compute(program.program_id, aux, sensor_pk).digest
            self.assertNotEqual(digest, ref)
            enclave = instantiate_enclave(self.pki, "gw", program, aux, sensor_pk)
            self.assertEqual(
                verify_attestation(attest(enclave), self.pki.root_public_key, ref).reason,
                RejectReason.MEASUREMENT_MISMATCH,
            )


class TestSealedInstance(unittest.TestCase):

    def setUp(self):
        self.enclave = instantiate_enclave(provisioned(), "gw", PROGRAM, AUX, SENSOR.public_key)

    def test_mutation_raises(self):
        self.assertTrue(self.enclave.sealed)
        for name, value in (("aux", AuxiliaryData(0, 1)), ("program", PROGRAM), ("_evidence_key", None)):
            with self.assertRaises(SealedEnclaveError):
                setattr(self.enclave, name, value)
        with self.assertRaises(SealedEnclaveError):
            del self.enclave.aux

    def test_no_private_key_accessor(self):
        public_names = [n for n in dir(self.enclave) if not n.startswith("_")]
        self.assertFalse([n for n in public_names if "private" in n or n == "evidence_key"])
        self.assertNotIn("private", repr(self.enclave))

    def test_bypass_hook_changes_measurement(self):
        before = self.enclave.measurement
        bypass_seal(self.enclave, aux=AuxiliaryData(49, 10))
        self.assertNotEqual(self.enclave.measurement, before)


class TestExecution(unittest.TestCase):

    def setUp(self):
        self.enclave = instantiate_enclave(provisioned(), "gw", PROGRAM, AUX, SENSOR.public_key)
        self.evidence_pk = attest(self.enclave).evidence_public_key

    def test_honest_evidence_verifies(self):
        output, evidence = enclave_execute(self.enclave, signed_batch())
        package = evidence_package(output, evidence, PROGRAM.program_id)
        verdict = verify_tee_evidence(package.evidence_body, package.public_args,
                                      PROGRAM.program_id, self.evidence_pk)
        self.assertTrue(verdict, verdict.reason)
        self.assertEqual(len(package.evidence_body), tee_backend.EVIDENCE_SIZE)

    def test_counter_increases(self):
        counters = [enclave_execute(self.enclave, signed_batch(seq))[1].counter for seq in range(5)]
        self.assertEqual(counters, [1, 2, 3, 4, 5])
        self.assertEqual(self.enclave.monotonic_counter, 5)

    def test_tampered_batch_emits_no_evidence(self):
        signed = signed_batch()
        rows = [list(m.values) for m in signed.batch.measurements]
        rows[0][0] += 1
        tampered = SignedBatch(
            MeasurementBatch(signed.batch.meta, tuple(Measurement(tuple(r)) for r in rows)),
            signed.batch_digest, signed.signature,
        )
        with self.assertRaises(InputVerificationError):
            enclave_execute(self.enclave, tampered)
        self.assertEqual(self.enclave.monotonic_counter, 0)

    def test_replayed_sequence_rejected_inside(self):
        enclave_execute(self.enclave, signed_batch(0))
        with self.assertRaises(InputVerificationError):
            enclave_execute(self.enclave, signed_batch(0))

    def test_host_tampers_output(self):
        output, evidence = enclave_execute(self.enclave, signed_batch(seed=4))
        package = evidence_package(Output(output.violation_count + 1), evidence, PROGRAM.program_id)
        verdict = verify_tee_evidence(package.evidence_body, package.public_args,
                                      PROGRAM.program_id, self.evidence_pk)
        self.assertEqual(verdict.reason, RejectReason.EVIDENCE_INVALID)

    def test_wrong_program_id(self):
        output, evidence = enclave_execute(self.enclave, signed_batch())
        package = evidence_package(output, evidence, PROGRAM.program_id)
        verdict = verify_tee_evidence(package.evidence_body, package.public_args,
                                      threshold_violation_program("ge").program_id, self.evidence_pk)
        self.assertFalse(verdict)

    def test_malformed_evidence(self):
        output, evidence = enclave_execute(self.enclave, signed_batch())
        package = evidence_package(output, evidence, PROGRAM.program_id)
        verdict = verify_tee_evidence(package.evidence_body[:-1], package.public_args,
                                      PROGRAM.program_id, self.evidence_pk)
        self.assertEqual(verdict.reason, RejectReason.MALFORMED_EVIDENCE)

    def test_metering(self):
        output, evidence = enclave_execute(self.enclave, signed_batch())
        package = evidence_package(output, evidence, PROGRAM.program_id)
        meter = CostMeter()
        verify_tee_evidence(package.evidence_body, package.public_args, PROGRAM.program_id,
                            self.evidence_pk, meter)
        self.assertEqual(meter.get_stats()["signature_verify"], 1)

    def test_evidence_codecs(self):
        _, evidence = enclave_execute(self.enclave, signed_batch())
        self.assertEqual(TeeEvidence.decode(evidence.encode()), evidence)
        self.assertEqual(TeeEvidence.from_dict(evidence.to_dict()), evidence)


def test_forgery_attempts_without_evidence_key_fail():
    """Key substitution, signature splicing and random signatures over 1000 attempts."""
    rng = random.Random(31)
    enclave = instantiate_enclave(provisioned(), "gw", PROGRAM, AUX, SENSOR.public_key)
    evidence_pk = enclave.evidence_public_key
    honest = [enclave_execute(enclave, signed_batch(seq, seed=seq)) for seq in range(8)]
    rogue = generate_keypair(KeyRole.EVIDENCE, b"\x48" * 32)
    accepted = 0
    for trial in range(1000):
        output, evidence = honest[trial % len(honest)]
        claimed = Output((output.violation_count + rng.randint(1, 5)) % 13)
        output_digest = hash_message(claimed.encode())
        kind = trial % 4
        if kind == 0:
            message = TeeEvidence.signed_message(output_digest, evidence.batch_digest,
                                                 evidence.counter, PROGRAM.program_id)
            signature = rogue.sign(message)
        elif kind == 1:
            signature = honest[(trial + 1) % len(honest)][1].signature
        elif kind == 2:
            signature = evidence.signature
        else:
            signature = rng.randbytes(64)
        forged = TeeEvidence(output_digest, evidence.batch_digest, evidence.counter, signature)
        package = evidence_package(claimed, forged, PROGRAM.program_id)
        accepted += bool(verify_tee_evidence(package.evidence_body, package.public_args,
                                             PROGRAM.program_id, evidence_pk))
    assert accepted == 0


class TestSealing:

    def setup_method(self):
        self.pki = provisioned()
        self.enclave = instantiate_enclave(self.pki, "gw", PROGRAM, AUX, SENSOR.public_key)

    def test_seal_and_unseal_preserve_state(self):
        enclave_execute(self.enclave, signed_batch(0))
        blob = seal_enclave(self.enclave)
        restored = unseal_enclave(blob, self.pki.device("gw"), PROGRAM, AUX, SENSOR.public_key)
        assert restored.evidence_public_key == self.enclave.evidence_public_key
        assert restored.monotonic_counter == 1
        with pytest.raises(InputVerificationError):
            restored.execute(signed_batch(0))
        _, evidence = restored.execute(signed_batch(1))
        assert evidence.counter == 2

    def test_other_measurement_cannot_unseal(self):
        blob = seal_enclave(self.enclave)
        with pytest.raises(SealingError):
            unseal_enclave(blob, self.pki.device("gw"), PROGRAM, AuxiliaryData(51, 10), SENSOR.public_key)

    def test_other_device_cannot_unseal(self):
        blob = seal_enclave(self.enclave)
        self.pki.issue("gw-2")
        with pytest.raises(SealingError):
            unseal_enclave(blob, self.pki.device("gw-2"), PROGRAM, AUX, SENSOR.public_key)

    def test_corrupted_blob(self):
        blob = bytearray(seal_enclave(self.enclave))
        blob[-1] ^= 1
        with pytest.raises(SealingError):
            unseal_enclave(bytes(blob), self.pki.device("gw"), PROGRAM, AUX, SENSOR.public_key)
