"""Enclave-simulation evidence backend.

Models the SGX workflow: a local PKI stands in for the vendor attestation
service, an enclave is instantiated with a sealed program/aux/sensor key,
attested once against a reference measurement, and afterwards signs every
output with an evidence key generated inside it.

The enclave is a module boundary, not hardware. Sealing is enforced by
``EnclaveInstance.__setattr__`` and the evidence private key has no accessor.
"""

import json
import logging
import os
import threading
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from trusted_preprocessing.errors import (
    DuplicateDeviceError,
    EncodingError,
    SealedEnclaveError,
    SealingError,
    UnknownDeviceError,
)
from trusted_preprocessing.gateway import Gateway, PreprocessProgram, ReplayGuard
from trusted_preprocessing.metering import CostMeter
from trusted_preprocessing.models import (
    AuxiliaryData,
    BackendId,
    EvidencePackage,
    Output,
    RejectReason,
    Verdict,
    encode_u64,
    encode_var_bytes,
)
from trusted_preprocessing.primitives import (
    DIGEST_SIZE,
    SIGNATURE_SIZE,
    KeyFile,
    KeyPair,
    KeyRole,
    generate_keypair,
    hash_message,
    keypair_from_private,
    verify,
)
from trusted_preprocessing.sensor import SignedBatch

logger = logging.getLogger(__name__)

EVIDENCE_SIZE = 2 * DIGEST_SIZE + 8 + SIGNATURE_SIZE
PUBLIC_ARGS_SIZE = DIGEST_SIZE + 8
NONCE_SIZE = 12


# =====================================================
# PKI
# =====================================================

@dataclass(frozen=True)
class Certificate:
    """Binds a device id to its identity public key under the PKI root."""

    device_id: str
    device_public_key: bytes
    root_signature: bytes

    @staticmethod
    def signed_message(device_id: str, device_public_key: bytes) -> bytes:
        return b"device-cert/" + encode_var_bytes(device_id.encode("utf-8")) + device_public_key

    def verify(self, root_public_key: bytes) -> bool:
        message = self.signed_message(self.device_id, self.device_public_key)
        return verify(root_public_key, message, self.root_signature)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "device_id": self.device_id,
            "device_public_key": self.device_public_key.hex(),
            "root_signature": self.root_signature.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Certificate":
        return cls(
            device_id=data["device_id"],
            device_public_key=bytes.fromhex(data["device_public_key"]),
            root_signature=bytes.fromhex(data["root_signature"]),
        )


@dataclass(frozen=True)
class Device:
    """A provisioned device: identity key embedded at manufacturing plus its certificate."""

    device_id: str
    identity_key: KeyPair = field(repr=False)
    certificate: Certificate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "device_id": self.device_id,
            "identity_key": KeyFile.from_keypair(self.identity_key).model_dump(mode="json"),
            "certificate": self.certificate.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Device":
        key = KeyFile.model_validate(data["identity_key"]).to_keypair()
        return cls(
            device_id=data["device_id"],
            identity_key=key.require_role(KeyRole.DEVICE_IDENTITY),
            certificate=Certificate.from_dict(data["certificate"]),
        )


class Pki:
    """Local certificate authority replacing the vendor-managed PKI."""

    def __init__(self, root_key: Optional[KeyPair] = None):
        self.root_key = (root_key or generate_keypair(KeyRole.PKI_ROOT)).require_role(KeyRole.PKI_ROOT)
        self.issued_certs: Dict[str, Certificate] = {}
        self._devices: Dict[str, Device] = {}
        self._lock = threading.Lock()
        logger.warning("⚠️  Simulated PKI root in use; attestation trusts a local key, not a vendor")

    @property
    def root_public_key(self) -> bytes:
        return self.root_key.public_key

    def issue(self, device_id: str, identity_key: Optional[KeyPair] = None) -> Certificate:
        """Provision ``device_id`` and certify its identity key.

        Raises:
            DuplicateDeviceError: if the device already holds a certificate
        """
        with self._lock:
            if device_id in self.issued_certs:
                raise DuplicateDeviceError(f"device {device_id!r} already has a certificate")
            key = (identity_key or generate_keypair(KeyRole.DEVICE_IDENTITY)).require_role(
                KeyRole.DEVICE_IDENTITY
            )
            cert = Certificate(
                device_id=device_id,
                device_public_key=key.public_key,
                root_signature=self.root_key.sign(Certificate.signed_message(device_id, key.public_key)),
            )
            self.issued_certs[device_id] = cert
            self._devices[device_id] = Device(device_id, key, cert)
        logger.info(f"📜 Issued device certificate for {device_id}")
        return cert

    def register(self, device: Device) -> None:
        """Re-admit a previously provisioned device (e.g. loaded from disk)."""
        if not device.certificate.verify(self.root_public_key):
            raise UnknownDeviceError(f"certificate of {device.device_id!r} is not from this root")
        with self._lock:
            self.issued_certs[device.device_id] = device.certificate
            self._devices[device.device_id] = device

    def device(self, device_id: str) -> Device:
        try:
            return self._devices[device_id]
        except KeyError:
            raise UnknownDeviceError(f"device {device_id!r} has no certificate") from None


def pki_issue(pki: Pki, device_id: str) -> Certificate:
    return pki.issue(device_id)


# =====================================================
# ENCLAVE
# =====================================================

@dataclass(frozen=True)
class EnclaveMeasurement:
    """Digest over (program_id, aux, sensor_public_key)."""

    digest: bytes

    @classmethod
    def compute(
        cls, program_id: bytes, aux: AuxiliaryData, sensor_public_key: bytes
    ) -> "EnclaveMeasurement":
        return cls(hash_message(
            encode_var_bytes(program_id) + aux.encode() + encode_var_bytes(sensor_public_key)
        ))


@dataclass
class _RuntimeState:
    counter: int = 0


class EnclaveInstance:
    """A sealed enclave. Configuration is immutable once constructed."""

    def __init__(
        self,
        device: Device,
        program: PreprocessProgram,
        aux: AuxiliaryData,
        sensor_public_key: bytes,
        evidence_key: Optional[KeyPair] = None,
        counter: int = 0,
        replay_state: Optional[Dict[str, int]] = None,
    ):
        self.device = device
        self.program = program
        self.aux = aux
        self.sensor_public_key = bytes(sensor_public_key)
        self._evidence_key = (evidence_key or generate_keypair(KeyRole.EVIDENCE)).require_role(
            KeyRole.EVIDENCE
        )
        self._state = _RuntimeState(counter)
        self._gateway = Gateway(ReplayGuard(replay_state))
        self._lock = threading.Lock()
        self._sealed = True

    def __setattr__(self, name: str, value: Any) -> None:
        if getattr(self, "_sealed", False):
            raise SealedEnclaveError(f"enclave is sealed; cannot set {name}")
        super().__setattr__(name, value)

    def __delattr__(self, name: str) -> None:
        raise SealedEnclaveError(f"enclave is sealed; cannot delete {name}")

    def __repr__(self) -> str:
        return (
            f"EnclaveInstance(device_id={self.device_id!r}, "
            f"measurement={self.measurement.digest.hex()[:16]}..., counter={self.monotonic_counter})"
        )

    @property
    def sealed(self) -> bool:
        return self._sealed

    @property
    def device_id(self) -> str:
        return self.device.device_id

    @property
    def evidence_public_key(self) -> bytes:
        return self._evidence_key.public_key

    @property
    def monotonic_counter(self) -> int:
        return self._state.counter

    @property
    def measurement(self) -> EnclaveMeasurement:
        """Recomputed from the current sealed state."""
        return EnclaveMeasurement.compute(self.program.program_id, self.aux, self.sensor_public_key)

    def execute(self, signed: SignedBatch) -> Tuple[Output, "TeeEvidence"]:
        """Verify the input, run the sealed program and sign the result.

        Raises:
            InputVerificationError: bad digest, bad signature or replayed sequence_no;
                no evidence is produced
        """
        with self._lock:
            output = self._gateway.run_program(self.program, signed, self.aux, self.sensor_public_key)
            self._state.counter += 1
            output_digest = hash_message(output.encode())
            counter = self._state.counter
            signature = self._evidence_key.sign(
                TeeEvidence.signed_message(output_digest, signed.batch_digest, counter,
                                           self.program.program_id)
            )
        return output, TeeEvidence(output_digest, signed.batch_digest, counter, signature)


def instantiate_enclave(
    pki: Pki,
    device_id: str,
    program: PreprocessProgram,
    aux: AuxiliaryData,
    sensor_public_key: bytes,
) -> EnclaveInstance:
    """Load and seal an enclave on a certified device.

    Raises:
        UnknownDeviceError: if the device has no PKI certificate
    """
    enclave = EnclaveInstance(pki.device(device_id), program, aux, sensor_public_key)
    logger.info(f"🔒 Enclave instantiated on {device_id}: {enclave.measurement.digest.hex()[:16]}...")
    return enclave


def enclave_execute(enclave: EnclaveInstance, signed: SignedBatch) -> Tuple[Output, "TeeEvidence"]:
    return enclave.execute(signed)


# =====================================================
# ATTESTATION
# =====================================================

@dataclass(frozen=True)
class AttestationReport:
    """Signed measurement plus the enclave's evidence public key."""

    measurement: EnclaveMeasurement
    evidence_public_key: bytes
    device_signature: bytes
    device_cert: Certificate

    def to_dict(self) -> Dict[str, Any]:
        return {
            "measurement": self.measurement.digest.hex(),
            "evidence_public_key": self.evidence_public_key.hex(),
            "device_signature": self.device_signature.hex(),
            "device_cert": self.device_cert.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AttestationReport":
        return cls(
            measurement=EnclaveMeasurement(bytes.fromhex(data["measurement"])),
            evidence_public_key=bytes.fromhex(data["evidence_public_key"]),
            device_signature=bytes.fromhex(data["device_signature"]),
            device_cert=Certificate.from_dict(data["device_cert"]),
        )


def attest(enclave: EnclaveInstance) -> AttestationReport:
    measurement = enclave.measurement
    device = enclave.device
    signature = device.identity_key.sign(measurement.digest + enclave.evidence_public_key)
    return AttestationReport(measurement, enclave.evidence_public_key, signature, device.certificate)


def verify_attestation(
    report: AttestationReport,
    pki_root_public: bytes,
    reference_measurement: bytes,
) -> Verdict:
    """Certificate chain, device signature and reference measurement, in that order."""
    if not report.device_cert.verify(pki_root_public):
        return Verdict.reject(RejectReason.CERTIFICATE_INVALID)
    signed = report.measurement.digest + report.evidence_public_key
    if not verify(report.device_cert.device_public_key, signed, report.device_signature):
        return Verdict.reject(RejectReason.DEVICE_SIGNATURE_INVALID)
    if report.measurement.digest != reference_measurement:
        return Verdict.reject(RejectReason.MEASUREMENT_MISMATCH)
    return Verdict.ok()


# =====================================================
# EVIDENCE
# =====================================================

@dataclass(frozen=True)
class TeeEvidence:
    output_digest: bytes
    batch_digest: bytes
    counter: int
    signature: bytes

    @staticmethod
    def signed_message(output_digest: bytes, batch_digest: bytes, counter: int,
                       program_id: bytes) -> bytes:
        return output_digest + batch_digest + encode_u64(counter) + program_id

    def encode(self) -> bytes:
        """output_digest ‖ batch_digest ‖ u64 counter ‖ signature (136 bytes)."""
        return self.output_digest + self.batch_digest + encode_u64(self.counter) + self.signature

    @classmethod
    def decode(cls, data: bytes) -> "TeeEvidence":
        if len(data) != EVIDENCE_SIZE:
            raise EncodingError(f"evidence must be {EVIDENCE_SIZE} bytes, got {len(data)}")
        return cls(
            output_digest=data[:DIGEST_SIZE],
            batch_digest=data[DIGEST_SIZE:2 * DIGEST_SIZE],
            counter=int.from_bytes(data[2 * DIGEST_SIZE:2 * DIGEST_SIZE + 8], "big"),
            signature=data[2 * DIGEST_SIZE + 8:],
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "output_digest": self.output_digest.hex(),
            "batch_digest": self.batch_digest.hex(),
            "counter": self.counter,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TeeEvidence":
        return cls(
            output_digest=bytes.fromhex(data["output_digest"]),
            batch_digest=bytes.fromhex(data["batch_digest"]),
            counter=int(data["counter"]),
            signature=bytes.fromhex(data["signature"]),
        )


def encode_public_args(batch_digest: bytes, violation_count: int) -> bytes:
    return batch_digest + encode_u64(violation_count)


def decode_public_args(public_args: bytes) -> Tuple[bytes, int]:
    if len(public_args) != PUBLIC_ARGS_SIZE:
        raise EncodingError(f"public arguments must be {PUBLIC_ARGS_SIZE} bytes")
    return public_args[:DIGEST_SIZE], int.from_bytes(public_args[DIGEST_SIZE:], "big")


def evidence_package(output: Output, evidence: TeeEvidence, program_id: bytes) -> EvidencePackage:
    return EvidencePackage(
        backend_id=BackendId.ENCLAVE,
        public_args=encode_public_args(evidence.batch_digest, output.violation_count),
        evidence_body=evidence.encode(),
        program_id=program_id,
    )


def verify_tee_evidence(
    evidence_body: bytes,
    public_args: bytes,
    program_id: bytes,
    evidence_public_key: bytes,
    meter: Optional[CostMeter] = None,
) -> Verdict:
    """Check evidence against the claimed output and the attested evidence key."""
    try:
        evidence = TeeEvidence.decode(evidence_body)
        batch_digest, violation_count = decode_public_args(public_args)
    except EncodingError as e:
        return Verdict.reject(RejectReason.MALFORMED_EVIDENCE, str(e))

    output_encoding = Output(violation_count).encode()
    if meter is not None:
        meter.charge_hash(len(output_encoding))
    if hash_message(output_encoding) != evidence.output_digest:
        return Verdict.reject(RejectReason.EVIDENCE_INVALID, "output digest")
    if batch_digest != evidence.batch_digest:
        return Verdict.reject(RejectReason.EVIDENCE_INVALID, "batch digest")

    message = TeeEvidence.signed_message(
        evidence.output_digest, evidence.batch_digest, evidence.counter, program_id
    )
    if meter is not None:
        meter.charge_signature_verify()
    if not verify(evidence_public_key, message, evidence.signature):
        return Verdict.reject(RejectReason.EVIDENCE_INVALID, "signature")
    return Verdict.ok()


# =====================================================
# SEALED STORAGE
# =====================================================

def _sealing_key(device: Device, measurement: bytes) -> bytes:
    return hash_message(b"seal/" + device.identity_key.private_key + measurement)


def seal_enclave(enclave: EnclaveInstance) -> bytes:
    """Encrypt the enclave's evidence key, counter and replay state.

    Only an enclave with the same measurement on the same device can unseal.
    Layout: measurement(32) ‖ nonce(12) ‖ AES-GCM ciphertext.
    """
    measurement = enclave.measurement.digest
    with enclave._lock:
        payload = json.dumps({
            "evidence_private_key": enclave._evidence_key.private_key.hex(),
            "counter": enclave._state.counter,
            "replay_state": enclave._gateway.replay_guard.snapshot(),
        }, sort_keys=True).encode()
    nonce = os.urandom(NONCE_SIZE)
    ciphertext = AESGCM(_sealing_key(enclave.device, measurement)).encrypt(nonce, payload, measurement)
    return measurement + nonce + ciphertext


def unseal_enclave(
    blob: bytes,
    device: Device,
    program: PreprocessProgram,
    aux: AuxiliaryData,
    sensor_public_key: bytes,
) -> EnclaveInstance:
    """Restore a sealed enclave.

    Raises:
        SealingError: wrong measurement, wrong device or corrupted blob
    """
    measurement = EnclaveMeasurement.compute(program.program_id, aux, sensor_public_key).digest
    if blob[:DIGEST_SIZE] != measurement:
        raise SealingError("sealed state belongs to a different enclave measurement")
    nonce = blob[DIGEST_SIZE:DIGEST_SIZE + NONCE_SIZE]
    try:
        payload = AESGCM(_sealing_key(device, measurement)).decrypt(
            nonce, blob[DIGEST_SIZE + NONCE_SIZE:], measurement
        )
    except (InvalidTag, ValueError) as e:
        raise SealingError("sealed state cannot be decrypted on this device") from e

    state = json.loads(payload)
    evidence_key = keypair_from_private(KeyRole.EVIDENCE, bytes.fromhex(state["evidence_private_key"]))
    return EnclaveInstance(
        device, program, aux, sensor_public_key,
        evidence_key=evidence_key,
        counter=int(state["counter"]),
        replay_state={k: int(v) for k, v in state["replay_state"].items()},
    )
