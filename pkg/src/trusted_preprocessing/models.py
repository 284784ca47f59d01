"""Domain value objects and their canonical encodings.

Canonical encoding: length-prefixed big-endian fields, meta-data first, then
measurements row-major. Every hashed object exposes ``encode()``.
"""

import struct
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Iterable, Sequence, Tuple

from trusted_preprocessing.errors import BatchFormatError, EncodingError

INT64_MIN = -(2 ** 63)
INT64_MAX = 2 ** 63 - 1
UINT64_MAX = 2 ** 64 - 1
MEASUREMENT_ARITY = 4
MAX_SENSOR_ID_BYTES = 31  # fits one field element in the constraint system


# =====================================================
# ENCODING HELPERS
# =====================================================

def encode_i64(value: int) -> bytes:
    if not INT64_MIN <= value <= INT64_MAX:
        raise EncodingError(f"{value} does not fit a signed 64-bit integer")
    return struct.pack(">q", value)


def encode_u64(value: int) -> bytes:
    if not 0 <= value <= UINT64_MAX:
        raise EncodingError(f"{value} does not fit an unsigned 64-bit integer")
    return struct.pack(">Q", value)


def encode_u32(value: int) -> bytes:
    return struct.pack(">I", value)


def encode_var_bytes(data: bytes) -> bytes:
    """u32 length prefix followed by the raw bytes."""
    return encode_u32(len(data)) + data


def encode_batch_fields(
    sensor_id: bytes,
    timestamp: int,
    sequence_no: int,
    rows: Iterable[Sequence[int]],
) -> bytes:
    """Canonical batch encoding from its raw fields.

    Shared by ``MeasurementBatch.encode`` and the constraint-system digest
    gadget, which rebuilds the same bytes from field-packed slots.
    """
    rows = [tuple(row) for row in rows]
    parts = [
        encode_var_bytes(sensor_id),
        encode_i64(timestamp),
        encode_u64(sequence_no),
        encode_u32(len(rows)),
    ]
    for row in rows:
        if len(row) != MEASUREMENT_ARITY:
            raise EncodingError(f"measurement arity {len(row)} != {MEASUREMENT_ARITY}")
        parts.extend(encode_i64(v) for v in row)
    return b"".join(parts)


# =====================================================
# SENSOR DATA
# =====================================================

@dataclass(frozen=True)
class Measurement:
    """Exactly four signed 64-bit sensor readings."""

    values: Tuple[int, int, int, int]

    def __post_init__(self):
        values = tuple(self.values)
        if len(values) != MEASUREMENT_ARITY:
            raise BatchFormatError(
                f"a measurement has exactly {MEASUREMENT_ARITY} values, got {len(values)}"
            )
        for v in values:
            if isinstance(v, bool) or not isinstance(v, int):
                raise BatchFormatError(f"measurement values must be integers, got {v!r}")
            if not INT64_MIN <= v <= INT64_MAX:
                raise BatchFormatError(f"{v} does not fit a signed 64-bit integer")
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class MetaData:
    """Descriptive information attached to a batch by the sensor."""

    sensor_id: str
    timestamp: int
    sequence_no: int

    def __post_init__(self):
        raw = self.sensor_id.encode("utf-8")
        if not raw or len(raw) > MAX_SENSOR_ID_BYTES:
            raise BatchFormatError(
                f"sensor_id must be 1..{MAX_SENSOR_ID_BYTES} UTF-8 bytes, got {len(raw)}"
            )
        if not INT64_MIN <= self.timestamp <= INT64_MAX:
            raise BatchFormatError(f"timestamp {self.timestamp} out of range")
        if not 0 <= self.sequence_no <= UINT64_MAX:
            raise BatchFormatError(f"sequence_no {self.sequence_no} out of range")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sensor_id": self.sensor_id,
            "timestamp": self.timestamp,
            "sequence_no": self.sequence_no,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "MetaData":
        return cls(
            sensor_id=str(data["sensor_id"]),
            timestamp=int(data["timestamp"]),
            sequence_no=int(data["sequence_no"]),
        )


@dataclass(frozen=True)
class MeasurementBatch:
    """The sensory input D: meta-data plus an ordered list of measurements."""

    meta: MetaData
    measurements: Tuple[Measurement, ...]

    def __post_init__(self):
        object.__setattr__(self, "measurements", tuple(self.measurements))

    @property
    def size(self) -> int:
        return len(self.measurements)

    def values(self) -> list:
        """All values flattened row-major."""
        return [v for m in self.measurements for v in m.values]

    def encode(self) -> bytes:
        return encode_batch_fields(
            self.meta.sensor_id.encode("utf-8"),
            self.meta.timestamp,
            self.meta.sequence_no,
            (m.values for m in self.measurements),
        )


@dataclass(frozen=True)
class AuxiliaryData:
    """Gateway-side auxiliary data A."""

    threshold: int
    scale_divisor: int
    rule_id: str = "threshold-violation"

    def __post_init__(self):
        if not INT64_MIN <= self.threshold <= INT64_MAX:
            raise EncodingError(f"threshold {self.threshold} does not fit 64 bits")
        if self.scale_divisor < 1:
            raise EncodingError(f"scale_divisor must be >= 1, got {self.scale_divisor}")

    def encode(self) -> bytes:
        return (
            encode_i64(self.threshold)
            + encode_u64(self.scale_divisor)
            + encode_var_bytes(self.rule_id.encode("utf-8"))
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "threshold": self.threshold,
            "scale_divisor": self.scale_divisor,
            "rule_id": self.rule_id,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AuxiliaryData":
        return cls(int(data["threshold"]), int(data["scale_divisor"]), str(data["rule_id"]))


@dataclass(frozen=True)
class Output:
    """Program output O. Only ``violation_count`` is published on-chain."""

    violation_count: int
    scaled_values: Tuple[int, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.violation_count < 0:
            raise EncodingError("violation_count must be non-negative")
        object.__setattr__(self, "scaled_values", tuple(self.scaled_values))

    def encode(self) -> bytes:
        """Canonical on-chain encoding (the violation count only)."""
        return encode_u64(self.violation_count)


# =====================================================
# EVIDENCE
# =====================================================

class BackendId(str, Enum):
    """Evidence backends. ``cs``/``tee`` are accepted as short aliases."""
    CONSTRAINT_SYSTEM = "constraint_system"
    ENCLAVE = "enclave"

    @classmethod
    def parse(cls, value: str) -> "BackendId":
        aliases = {"cs": cls.CONSTRAINT_SYSTEM, "tee": cls.ENCLAVE}
        if value in aliases:
            return aliases[value]
        return cls(value)

    @property
    def short(self) -> str:
        return "cs" if self is BackendId.CONSTRAINT_SYSTEM else "tee"


@dataclass(frozen=True)
class EvidencePackage:
    """Output plus evidence plus public arguments, the unit submitted on-chain."""

    backend_id: BackendId
    public_args: bytes
    evidence_body: bytes
    program_id: bytes

    @property
    def calldata_size(self) -> int:
        return len(self.public_args) + len(self.evidence_body) + len(self.program_id)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "backend_id": self.backend_id.value,
            "public_args": self.public_args.hex(),
            "evidence_body": self.evidence_body.hex(),
            "program_id": self.program_id.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EvidencePackage":
        return cls(
            backend_id=BackendId(data["backend_id"]),
            public_args=bytes.fromhex(data["public_args"]),
            evidence_body=bytes.fromhex(data["evidence_body"]),
            program_id=bytes.fromhex(data["program_id"]),
        )


# =====================================================
# VERDICTS
# =====================================================

class RejectReason(str, Enum):
    """Reason codes returned by every verification routine."""
    OK = "ok"
    # constraint-system evidence
    PROGRAM_MISMATCH = "program-mismatch"
    COMMITMENT_MISMATCH = "commitment-mismatch"
    CONSTRAINT_VIOLATION = "constraint-violation"
    PUBLIC_INPUT_MISMATCH = "public-input-mismatch"
    MALFORMED_EVIDENCE = "malformed-evidence"
    # enclave attestation / evidence
    CERTIFICATE_INVALID = "certificate-invalid"
    DEVICE_SIGNATURE_INVALID = "device-signature-invalid"
    MEASUREMENT_MISMATCH = "measurement-mismatch"
    EVIDENCE_INVALID = "evidence-invalid"
    # gateway input
    SENSOR_SIGNATURE_INVALID = "sensor-signature-invalid"
    # chain
    REPLAY = "replay"
    BACKEND_MISMATCH = "backend-mismatch"
    OUT_OF_GAS = "out-of-gas"


class DetectionStage(str, Enum):
    """Where in the workflow a manipulation was caught."""
    SENSOR_SIGNATURE = "sensor signature"
    ATTESTATION_REFERENCE = "attestation reference"
    CONSTRAINT_CHECK = "constraint check"
    PUBLIC_INPUT_MATCH = "public-input match"
    EVIDENCE_SIGNATURE = "evidence signature"
    REPLAY_GUARD = "replay guard"


_STAGE_BY_REASON = {
    RejectReason.PROGRAM_MISMATCH: DetectionStage.CONSTRAINT_CHECK,
    RejectReason.COMMITMENT_MISMATCH: DetectionStage.CONSTRAINT_CHECK,
    RejectReason.CONSTRAINT_VIOLATION: DetectionStage.CONSTRAINT_CHECK,
    RejectReason.MALFORMED_EVIDENCE: DetectionStage.CONSTRAINT_CHECK,
    RejectReason.PUBLIC_INPUT_MISMATCH: DetectionStage.PUBLIC_INPUT_MATCH,
    RejectReason.CERTIFICATE_INVALID: DetectionStage.ATTESTATION_REFERENCE,
    RejectReason.DEVICE_SIGNATURE_INVALID: DetectionStage.ATTESTATION_REFERENCE,
    RejectReason.MEASUREMENT_MISMATCH: DetectionStage.ATTESTATION_REFERENCE,
    RejectReason.EVIDENCE_INVALID: DetectionStage.EVIDENCE_SIGNATURE,
    RejectReason.SENSOR_SIGNATURE_INVALID: DetectionStage.SENSOR_SIGNATURE,
    RejectReason.REPLAY: DetectionStage.REPLAY_GUARD,
}


def stage_for_reason(reason: RejectReason, backend_id: BackendId) -> DetectionStage:
    """Map a reject reason to the detection stage that produced it."""
    if reason is RejectReason.MALFORMED_EVIDENCE and backend_id is BackendId.ENCLAVE:
        return DetectionStage.EVIDENCE_SIGNATURE
    if reason not in _STAGE_BY_REASON:
        raise KeyError(f"no detection stage for reason {reason.value}")
    return _STAGE_BY_REASON[reason]


@dataclass(frozen=True)
class Verdict:
    """Boolean verification outcome with a reason code."""

    accepted: bool
    reason: RejectReason = RejectReason.OK
    detail: str = ""

    def __bool__(self) -> bool:
        return self.accepted

    @classmethod
    def ok(cls) -> "Verdict":
        return cls(True, RejectReason.OK)

    @classmethod
    def reject(cls, reason: RejectReason, detail: str = "") -> "Verdict":
        return cls(False, reason, detail)
