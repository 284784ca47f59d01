"""Constraint-system evidence backend.

Models the compile → setup → compute-witness → generate-proof → verify
workflow of a zkSNARK toolchain over a plain rank-1 constraint system.

The proof is NOT succinct and NOT zero-knowledge: it opens the full witness
and the verifier re-checks every constraint. What it preserves is the
integrity property: a proof verifies only for the right program (constraint
system and setup) on the right public inputs.

Layout of a compiled system for batch size n:

    slot 0                 constant 1
    public inputs          batch digest (2 slots), threshold, violation count,
                           sensor key digest (2 slots), in ``public_layout`` order
    private sensor data    sensor id (length, packed), timestamp, sequence_no,
                           4n values, sensor public key (2), signature (4)
    intermediates          range bits, comparison bits, count sum

Comparisons use binary decomposition: every value and the threshold are
range-checked to ``value_bits`` signed bits, and ``v - t + offset`` is split
into ``value_bits + 2`` bits whose top bit is the comparison result.
Two native gadgets bind the private data to the public digest and verify the
sensor signature in place of in-circuit SHA-256 / EdDSA gadgets.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple

from trusted_preprocessing.config import settings
from trusted_preprocessing.errors import (
    ConstraintSystemError,
    EncodingError,
    SizeMismatchError,
    UnsatisfiedWitnessError,
    ValueOutOfRangeError,
)
from trusted_preprocessing.gateway import PreprocessProgram
from trusted_preprocessing.metering import CostMeter
from trusted_preprocessing.models import (
    MAX_SENSOR_ID_BYTES,
    MEASUREMENT_ARITY,
    UINT64_MAX,
    AuxiliaryData,
    BackendId,
    EvidencePackage,
    MeasurementBatch,
    RejectReason,
    Verdict,
    encode_batch_fields,
    encode_u32,
)
from trusted_preprocessing.primitives import DIGEST_SIZE, hash_message, verify
from trusted_preprocessing.sensor import SignedBatch

logger = logging.getLogger(__name__)

# Prime of the curve25519 base field (255 bits).
FIELD_MODULUS = 2 ** 255 - 19
FIELD_NAME = "p25519"
ELEMENT_SIZE = 32
PACK_BYTES = 16  # bytes packed per field element for digests/keys/signatures

PUBLIC_INPUTS = ("batch_digest", "threshold", "violation_count", "sensor_key_digest")
DEFAULT_PUBLIC_LAYOUT = PUBLIC_INPUTS
_INPUT_WIDTH = {"batch_digest": 2, "threshold": 1, "violation_count": 1, "sensor_key_digest": 2}

LinearCombination = Tuple[Tuple[int, int], ...]


# =====================================================
# FIELD HELPERS
# =====================================================

def to_field(value: int) -> int:
    return value % FIELD_MODULUS


def from_field_signed(element: int) -> int:
    """Inverse of ``to_field`` for small signed integers."""
    return element if element <= FIELD_MODULUS // 2 else element - FIELD_MODULUS


def pack_bytes(data: bytes) -> List[int]:
    """Split into big-endian 16-byte field elements."""
    return [int.from_bytes(data[i:i + PACK_BYTES], "big") for i in range(0, len(data), PACK_BYTES)]


def unpack_bytes(elements: Sequence[int], size: int) -> bytes:
    out = b""
    for i, element in enumerate(elements):
        width = min(PACK_BYTES, size - i * PACK_BYTES)
        try:
            out += int(element).to_bytes(width, "big")
        except OverflowError:
            raise EncodingError(f"element {i} does not fit {width} bytes") from None
    return out


def encode_elements(values: Sequence[int]) -> bytes:
    return b"".join(int(v).to_bytes(ELEMENT_SIZE, "big") for v in values)


def decode_elements(data: bytes) -> List[int]:
    """Strict inverse of ``encode_elements``: canonical elements only."""
    if len(data) % ELEMENT_SIZE:
        raise EncodingError(f"{len(data)} bytes is not a whole number of field elements")
    values = [
        int.from_bytes(data[i:i + ELEMENT_SIZE], "big") for i in range(0, len(data), ELEMENT_SIZE)
    ]
    if any(v >= FIELD_MODULUS for v in values):
        raise EncodingError("non-canonical field element")
    return values


def _lc(terms: Dict[int, int]) -> LinearCombination:
    return tuple(sorted((i, to_field(c)) for i, c in terms.items() if to_field(c)))


def _dot(lc: LinearCombination, assignment: Sequence[int]) -> int:
    return sum(coeff * assignment[i] for i, coeff in lc) % FIELD_MODULUS


# =====================================================
# CONSTRAINTS AND GADGETS
# =====================================================

@dataclass(frozen=True)
class R1csConstraint:
    """(A·w) × (B·w) = (C·w) with sparse coefficient rows."""

    a: LinearCombination
    b: LinearCombination
    c: LinearCombination

    def is_satisfied(self, assignment: Sequence[int]) -> bool:
        return (_dot(self.a, assignment) * _dot(self.b, assignment)
                - _dot(self.c, assignment)) % FIELD_MODULUS == 0

    def slots(self):
        for lc in (self.a, self.b, self.c):
            for i, _ in lc:
                yield i

    def to_list(self) -> list:
        return [[[i, str(c)] for i, c in lc] for lc in (self.a, self.b, self.c)]

    @classmethod
    def from_list(cls, data: list) -> "R1csConstraint":
        a, b, c = (tuple((int(i), int(coeff)) for i, coeff in lc) for lc in data)
        return cls(a, b, c)


@dataclass(frozen=True)
class DigestLink:
    """hash(batch rebuilt from private slots) == public batch-digest slots."""

    sensor_id_slots: Tuple[int, int]  # (byte length, packed bytes)
    timestamp_slot: int
    sequence_slot: int
    value_slots: Tuple[int, ...]
    digest_slots: Tuple[int, int]

    def rebuild_encoding(self, w: Sequence[int]) -> bytes:
        length, packed = (w[i] for i in self.sensor_id_slots)
        if not 1 <= length <= MAX_SENSOR_ID_BYTES or packed >= 256 ** length:
            raise EncodingError("sensor id does not fit its length")
        sensor_id = int(packed).to_bytes(length, "big")
        sequence_no = w[self.sequence_slot]
        if sequence_no > UINT64_MAX:
            raise EncodingError("sequence_no out of range")
        values = [from_field_signed(w[i]) for i in self.value_slots]
        rows = [values[i:i + MEASUREMENT_ARITY] for i in range(0, len(values), MEASUREMENT_ARITY)]
        return encode_batch_fields(
            sensor_id, from_field_signed(w[self.timestamp_slot]), sequence_no, rows
        )

    def check(self, w: Sequence[int], meter: Optional[CostMeter] = None) -> bool:
        try:
            encoding = self.rebuild_encoding(w)
            digest = unpack_bytes([w[i] for i in self.digest_slots], DIGEST_SIZE)
        except (EncodingError, OverflowError):
            return False
        if meter is not None:
            meter.charge_hash(len(encoding))
        return hash_message(encoding) == digest

    def slots(self):
        yield from self.sensor_id_slots
        yield self.timestamp_slot
        yield self.sequence_slot
        yield from self.value_slots
        yield from self.digest_slots

    def to_dict(self) -> Dict[str, Any]:
        return {
            "sensor_id_slots": list(self.sensor_id_slots),
            "timestamp_slot": self.timestamp_slot,
            "sequence_slot": self.sequence_slot,
            "value_slots": list(self.value_slots),
            "digest_slots": list(self.digest_slots),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DigestLink":
        return cls(
            tuple(data["sensor_id_slots"]), data["timestamp_slot"], data["sequence_slot"],
            tuple(data["value_slots"]), tuple(data["digest_slots"]),
        )


@dataclass(frozen=True)
class SignatureCheck:
    """The private sensor key hashes to the public key digest and signed the batch digest."""

    public_key_slots: Tuple[int, int]
    signature_slots: Tuple[int, int, int, int]
    digest_slots: Tuple[int, int]
    key_digest_slots: Tuple[int, int]

    def check(self, w: Sequence[int], meter: Optional[CostMeter] = None) -> bool:
        try:
            public_key = unpack_bytes([w[i] for i in self.public_key_slots], 32)
            signature = unpack_bytes([w[i] for i in self.signature_slots], 64)
            digest = unpack_bytes([w[i] for i in self.digest_slots], DIGEST_SIZE)
            key_digest = unpack_bytes([w[i] for i in self.key_digest_slots], DIGEST_SIZE)
        except EncodingError:
            return False
        if meter is not None:
            meter.charge_hash(len(public_key))
            meter.charge_signature_verify()
        return hash_message(public_key) == key_digest and verify(public_key, digest, signature)

    def slots(self):
        for group in (self.public_key_slots, self.signature_slots,
                      self.digest_slots, self.key_digest_slots):
            yield from group

    def to_dict(self) -> Dict[str, Any]:
        return {
            "public_key_slots": list(self.public_key_slots),
            "signature_slots": list(self.signature_slots),
            "digest_slots": list(self.digest_slots),
            "key_digest_slots": list(self.key_digest_slots),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SignatureCheck":
        return cls(
            tuple(data["public_key_slots"]), tuple(data["signature_slots"]),
            tuple(data["digest_slots"]), tuple(data["key_digest_slots"]),
        )


@dataclass(frozen=True)
class ConstraintSystem:
    """A compiled, size-specialized program."""

    batch_size: int
    program_id: bytes
    predicate: str
    value_bits: int
    num_variables: int
    public_layout: Tuple[str, ...]
    public_slots: Tuple[int, ...]
    private_slots: Tuple[int, ...]
    layout: Dict[str, Tuple[int, ...]]
    constraints: Tuple[R1csConstraint, ...]
    digest_link: DigestLink
    signature_check: SignatureCheck

    def validate(self) -> None:
        """Structural invariants; raises ``ConstraintSystemError``."""
        if set(self.public_slots) & set(self.private_slots):
            raise ConstraintSystemError("public and private slots overlap")
        referenced = [i for c in self.constraints for i in c.slots()]
        referenced += list(self.digest_link.slots()) + list(self.signature_check.slots())
        referenced += list(self.public_slots) + list(self.private_slots)
        if any(not 0 <= i < self.num_variables for i in referenced):
            raise ConstraintSystemError("constraint references a missing slot")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "batch_size": self.batch_size,
            "program_id": self.program_id.hex(),
            "predicate": self.predicate,
            "value_bits": self.value_bits,
            "field": FIELD_NAME,
            "field_modulus": str(FIELD_MODULUS),
            "num_variables": self.num_variables,
            "public_layout": list(self.public_layout),
            "public_slots": list(self.public_slots),
            "private_slots": list(self.private_slots),
            "layout": {name: list(slots) for name, slots in self.layout.items()},
            "constraints": [c.to_list() for c in self.constraints],
            "digest_link": self.digest_link.to_dict(),
            "signature_check": self.signature_check.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ConstraintSystem":
        if int(data["field_modulus"]) != FIELD_MODULUS:
            raise ConstraintSystemError("constraint system was compiled for another field")
        cs = cls(
            batch_size=int(data["batch_size"]),
            program_id=bytes.fromhex(data["program_id"]),
            predicate=data["predicate"],
            value_bits=int(data["value_bits"]),
            num_variables=int(data["num_variables"]),
            public_layout=tuple(data["public_layout"]),
            public_slots=tuple(data["public_slots"]),
            private_slots=tuple(data["private_slots"]),
            layout={name: tuple(slots) for name, slots in data["layout"].items()},
            constraints=tuple(R1csConstraint.from_list(c) for c in data["constraints"]),
            digest_link=DigestLink.from_dict(data["digest_link"]),
            signature_check=SignatureCheck.from_dict(data["signature_check"]),
        )
        cs.validate()
        return cs

    @cached_property
    def digest(self) -> bytes:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hash_message(canonical.encode())


def constraint_system_digest(cs: ConstraintSystem) -> bytes:
    return cs.digest


# =====================================================
# COMPILER
# =====================================================

class _Builder:
    def __init__(self):
        self.num_variables = 1  # slot 0 = constant one
        self.layout: Dict[str, Tuple[int, ...]] = {}
        self.constraints: List[R1csConstraint] = []

    def alloc(self, name: str, count: int) -> Tuple[int, ...]:
        slots = tuple(range(self.num_variables, self.num_variables + count))
        self.num_variables += count
        self.layout[name] = self.layout.get(name, ()) + slots
        return slots

    def constrain(self, a: Dict[int, int], b: Dict[int, int], c: Dict[int, int]) -> None:
        self.constraints.append(R1csConstraint(_lc(a), _lc(b), _lc(c)))

    def boolean(self, slot: int) -> None:
        self.constrain({slot: 1}, {slot: 1}, {slot: 1})

    def decompose(self, bits: Sequence[int], target: Dict[int, int]) -> None:
        """Σ 2^i · bit_i = target, with every bit boolean."""
        for bit in bits:
            self.boolean(bit)
        self.constrain({bit: 2 ** i for i, bit in enumerate(bits)}, {0: 1}, target)


def compile(
    program: PreprocessProgram,
    batch_size: int,
    public_layout: Sequence[str] = DEFAULT_PUBLIC_LAYOUT,
    value_bits: Optional[int] = None,
) -> ConstraintSystem:
    """Compile the threshold program into a CS specialized for ``batch_size``.

    ``public_layout`` declares which inputs are public and in which order;
    inputs left out become private intermediates.
    """
    if batch_size < 1:
        raise SizeMismatchError(f"batch_size must be >= 1, got {batch_size}")
    public_layout = tuple(public_layout)
    if len(set(public_layout)) != len(public_layout) or not set(public_layout) <= set(PUBLIC_INPUTS):
        raise ConstraintSystemError(f"invalid public layout {public_layout}")
    if "violation_count" not in public_layout:
        raise ConstraintSystemError("violation_count must be public")
    bits = value_bits or settings.cs_value_bits
    offset = 2 ** (bits - 1)
    cmp_width = bits + 2
    cmp_offset = 2 ** (bits + 1) - (1 if program.predicate == "gt" else 0)

    builder = _Builder()
    inputs = {}
    public_slots: List[int] = []
    for name in public_layout + tuple(n for n in PUBLIC_INPUTS if n not in public_layout):
        inputs[name] = builder.alloc(name, _INPUT_WIDTH[name])
        if name in public_layout:
            public_slots.extend(inputs[name])

    n_values = batch_size * MEASUREMENT_ARITY
    sensor_id = builder.alloc("sensor_id", 2)
    timestamp = builder.alloc("timestamp", 1)
    sequence = builder.alloc("sequence_no", 1)
    values = builder.alloc("values", n_values)
    public_key = builder.alloc("sensor_public_key", 2)
    signature = builder.alloc("signature", 4)
    private_slots = sensor_id + timestamp + sequence + values + public_key + signature

    (threshold,) = inputs["threshold"]
    threshold_bits = builder.alloc("threshold_bits", bits)
    builder.decompose(threshold_bits, {threshold: 1, 0: offset})

    top_bits = []
    for v in values:
        range_bits = builder.alloc("value_bits", bits)
        builder.decompose(range_bits, {v: 1, 0: offset})
        cmp_bits = builder.alloc("cmp_bits", cmp_width)
        builder.decompose(cmp_bits, {v: 1, threshold: -1, 0: cmp_offset})
        top_bits.append(cmp_bits[-1])

    (count_sum,) = builder.alloc("count_sum", 1)
    (violation_count,) = inputs["violation_count"]
    builder.constrain({b: 1 for b in top_bits}, {0: 1}, {count_sum: 1})
    builder.constrain({count_sum: 1}, {0: 1}, {violation_count: 1})

    cs = ConstraintSystem(
        batch_size=batch_size,
        program_id=program.program_id,
        predicate=program.predicate,
        value_bits=bits,
        num_variables=builder.num_variables,
        public_layout=public_layout,
        public_slots=tuple(public_slots),
        private_slots=private_slots,
        layout=builder.layout,
        constraints=tuple(builder.constraints),
        digest_link=DigestLink(
            sensor_id_slots=sensor_id, timestamp_slot=timestamp[0], sequence_slot=sequence[0],
            value_slots=values, digest_slots=inputs["batch_digest"],
        ),
        signature_check=SignatureCheck(
            public_key_slots=public_key, signature_slots=signature,
            digest_slots=inputs["batch_digest"], key_digest_slots=inputs["sensor_key_digest"],
        ),
    )
    cs.validate()
    logger.info(
        f"🔧 Compiled CS for batch size {batch_size}: {cs.num_variables} variables, "
        f"{len(cs.constraints)} constraints"
    )
    return cs


# =====================================================
# WITNESS
# =====================================================

@dataclass(frozen=True)
class Witness:
    """Full assignment, one field element per variable slot."""

    assignment: Tuple[int, ...]

    def encode(self) -> bytes:
        return encode_elements(self.assignment)

    def commitment(self) -> bytes:
        return hash_message(self.encode())


def first_violation(cs: ConstraintSystem, assignment: Sequence[int],
                    meter: Optional[CostMeter] = None) -> Optional[str]:
    """Name of the first unsatisfied check, or None."""
    if len(assignment) != cs.num_variables:
        return "assignment length"
    if assignment[0] != 1:
        return "constant slot"
    if meter is not None:
        meter.charge_constraints(len(cs.constraints))
    for index, constraint in enumerate(cs.constraints):
        if not constraint.is_satisfied(assignment):
            return f"constraint {index}"
    if not cs.digest_link.check(assignment, meter):
        return "digest link"
    if not cs.signature_check.check(assignment, meter):
        return "signature check"
    return None


def is_satisfied(cs: ConstraintSystem, assignment: Sequence[int]) -> bool:
    return first_violation(cs, assignment) is None


def _bits(value: int, width: int) -> List[int]:
    return [(value >> i) & 1 for i in range(width)]


def assign_witness(
    cs: ConstraintSystem,
    batch: MeasurementBatch,
    batch_digest: bytes,
    signature: bytes,
    threshold: int,
    sensor_public_key: bytes,
) -> Tuple[int, ...]:
    """Interpret the CS on concrete inputs. Performs no satisfaction check."""
    if batch.size != cs.batch_size:
        raise SizeMismatchError(f"CS compiled for batch size {cs.batch_size}, got {batch.size}")
    bound = 2 ** (cs.value_bits - 1)
    values = batch.values()
    for v in values + [threshold]:
        if not -bound <= v < bound:
            raise ValueOutOfRangeError(f"{v} outside the {cs.value_bits}-bit signed range")

    w = [0] * cs.num_variables
    w[0] = 1

    def put(name: str, elements: Sequence[int]) -> None:
        for slot, element in zip(cs.layout[name], elements):
            w[slot] = to_field(element)

    raw_id = batch.meta.sensor_id.encode("utf-8")
    put("batch_digest", pack_bytes(batch_digest))
    put("threshold", [threshold])
    put("sensor_key_digest", pack_bytes(hash_message(sensor_public_key)))
    put("sensor_id", [len(raw_id), int.from_bytes(raw_id, "big")])
    put("timestamp", [batch.meta.timestamp])
    put("sequence_no", [batch.meta.sequence_no])
    put("values", values)
    put("sensor_public_key", pack_bytes(sensor_public_key))
    put("signature", pack_bytes(signature))
    put("threshold_bits", _bits(threshold + bound, cs.value_bits))

    cmp_width = cs.value_bits + 2
    cmp_offset = 2 ** (cs.value_bits + 1) - (1 if cs.predicate == "gt" else 0)
    range_bits, cmp_bits, count = [], [], 0
    for v in values:
        range_bits += _bits(v + bound, cs.value_bits)
        x = _bits(v - threshold + cmp_offset, cmp_width)
        cmp_bits += x
        count += x[-1]
    put("value_bits", range_bits)
    put("cmp_bits", cmp_bits)
    put("count_sum", [count])
    put("violation_count", [count])
    return tuple(w)


def compute_witness(
    cs: ConstraintSystem,
    signed: SignedBatch,
    aux: AuxiliaryData,
    sensor_public_key: bytes,
) -> Witness:
    """Execute the CS on a signed batch; the result satisfies every constraint.

    Raises:
        SizeMismatchError: batch size differs from the CS specialization
        ValueOutOfRangeError: a value or the threshold exceeds ``value_bits``
        UnsatisfiedWitnessError: inputs do not satisfy the CS (e.g. bad signature)
    """
    assignment = assign_witness(
        cs, signed.batch, signed.batch_digest, signed.signature, aux.threshold, sensor_public_key
    )
    failure = first_violation(cs, assignment)
    if failure is not None:
        raise UnsatisfiedWitnessError(f"witness violates {failure}")
    return Witness(assignment)


# =====================================================
# SETUP
# =====================================================

@dataclass(frozen=True)
class CsProvingKey:
    cs: ConstraintSystem
    setup_id: bytes

    def to_dict(self) -> Dict[str, Any]:
        return {"setup_id": self.setup_id.hex(), "cs": self.cs.to_dict()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CsProvingKey":
        return cls(ConstraintSystem.from_dict(data["cs"]), bytes.fromhex(data["setup_id"]))


@dataclass(frozen=True)
class CsVerificationKey:
    """Digest and public layout of the CS plus the setup id.

    The full CS travels with the key because verification re-checks it.
    """

    cs_digest: bytes
    public_layout: Tuple[str, ...]
    public_slots: Tuple[int, ...]
    setup_id: bytes
    cs: ConstraintSystem = field(repr=False)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "cs_digest": self.cs_digest.hex(),
            "public_layout": list(self.public_layout),
            "public_slots": list(self.public_slots),
            "setup_id": self.setup_id.hex(),
            "cs": self.cs.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CsVerificationKey":
        cs = ConstraintSystem.from_dict(data["cs"])
        vk = cls(
            cs_digest=bytes.fromhex(data["cs_digest"]),
            public_layout=tuple(data["public_layout"]),
            public_slots=tuple(data["public_slots"]),
            setup_id=bytes.fromhex(data["setup_id"]),
            cs=cs,
        )
        if cs.digest != vk.cs_digest:
            raise ConstraintSystemError("verification key does not match its constraint system")
        return vk

    @property
    def key_digest(self) -> bytes:
        return hash_message(self.cs_digest + self.setup_id)


@dataclass(frozen=True)
class CsKeyPair:
    proving_key: CsProvingKey
    verification_key: CsVerificationKey


def setup(cs: ConstraintSystem, crs_seed: bytes) -> CsKeyPair:
    """One-time key generation bound to ``cs``; the seed is not retained."""
    if len(crs_seed) != 32:
        raise ConstraintSystemError(f"crs_seed must be 32 bytes, got {len(crs_seed)}")
    setup_id = hash_message(crs_seed + cs.digest)
    logger.info(f"🔑 CS setup {setup_id.hex()[:16]}... (CRS seed disposed)")
    return CsKeyPair(
        proving_key=CsProvingKey(cs=cs, setup_id=setup_id),
        verification_key=CsVerificationKey(
            cs_digest=cs.digest,
            public_layout=cs.public_layout,
            public_slots=cs.public_slots,
            setup_id=setup_id,
            cs=cs,
        ),
    )


# =====================================================
# PUBLIC INPUTS
# =====================================================

@dataclass(frozen=True)
class PublicInputs:
    """Named public inputs; fields left out of a layout stay ``None``."""

    batch_digest: Optional[bytes] = None
    threshold: Optional[int] = None
    violation_count: Optional[int] = None
    sensor_key_digest: Optional[bytes] = None

    def values(self, layout: Sequence[str]) -> List[int]:
        """Field elements in ``layout`` order."""
        elements: List[int] = []
        for name in layout:
            value = getattr(self, name)
            if value is None:
                raise EncodingError(f"public input {name} is required by the layout")
            if isinstance(value, bytes):
                elements.extend(pack_bytes(value))
            else:
                elements.append(to_field(value))
        return elements

    def encode(self, layout: Sequence[str]) -> bytes:
        return encode_elements(self.values(layout))

    @classmethod
    def decode(cls, layout: Sequence[str], public_args: bytes) -> "PublicInputs":
        """Raises ``EncodingError`` on wrong length or non-canonical elements."""
        values = decode_elements(public_args)
        if len(values) != sum(_INPUT_WIDTH[name] for name in layout):
            raise EncodingError("public arguments do not match the public layout")
        named: Dict[str, Any] = {}
        cursor = 0
        for name in layout:
            chunk = values[cursor:cursor + _INPUT_WIDTH[name]]
            cursor += len(chunk)
            if name in ("batch_digest", "sensor_key_digest"):
                named[name] = unpack_bytes(chunk, DIGEST_SIZE)
            elif name == "threshold":
                named[name] = from_field_signed(chunk[0])
            else:
                named[name] = chunk[0]
        return cls(**named)


# =====================================================
# PROOF
# =====================================================

@dataclass(frozen=True)
class CsProof:
    """Proof artifact: setup binding, public values and the opened witness."""

    setup_id: bytes
    public_values: Tuple[int, ...]
    witness_commitment: bytes
    opened_witness: Tuple[int, ...]

    def encode(self) -> bytes:
        """setup_id ‖ commitment ‖ u32 n ‖ public values ‖ u32 m ‖ witness."""
        return (
            self.setup_id
            + self.witness_commitment
            + encode_u32(len(self.public_values))
            + encode_elements(self.public_values)
            + encode_u32(len(self.opened_witness))
            + encode_elements(self.opened_witness)
        )

    @classmethod
    def decode(cls, data: bytes) -> "CsProof":
        """Strict decoding; raises ``EncodingError`` on any malformation."""
        def take(count: int) -> bytes:
            nonlocal cursor
            if cursor + count > len(data):
                raise EncodingError("truncated proof")
            chunk = data[cursor:cursor + count]
            cursor += count
            return chunk

        cursor = 0
        setup_id = take(DIGEST_SIZE)
        commitment = take(DIGEST_SIZE)
        public = decode_elements(take(int.from_bytes(take(4), "big") * ELEMENT_SIZE))
        witness = decode_elements(take(int.from_bytes(take(4), "big") * ELEMENT_SIZE))
        if cursor != len(data):
            raise EncodingError("trailing bytes after proof")
        return cls(setup_id, tuple(public), commitment, tuple(witness))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "setup_id": self.setup_id.hex(),
            "public_values": [str(v) for v in self.public_values],
            "witness_commitment": self.witness_commitment.hex(),
            "opened_witness": [str(v) for v in self.opened_witness],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CsProof":
        return cls(
            setup_id=bytes.fromhex(data["setup_id"]),
            public_values=tuple(int(v) for v in data["public_values"]),
            witness_commitment=bytes.fromhex(data["witness_commitment"]),
            opened_witness=tuple(int(v) for v in data["opened_witness"]),
        )


def generate_proof(witness: Witness, proving_key: CsProvingKey) -> CsProof:
    """Raises ``UnsatisfiedWitnessError`` unless the witness satisfies the key's CS."""
    cs = proving_key.cs
    failure = first_violation(cs, witness.assignment)
    if failure is not None:
        raise UnsatisfiedWitnessError(f"cannot prove: witness violates {failure}")
    return CsProof(
        setup_id=proving_key.setup_id,
        public_values=tuple(witness.assignment[i] for i in cs.public_slots),
        witness_commitment=witness.commitment(),
        opened_witness=witness.assignment,
    )


def verify_cs(
    proof: CsProof,
    verification_key: CsVerificationKey,
    claimed_public_args: bytes,
    meter: Optional[CostMeter] = None,
) -> Verdict:
    """True iff setup, commitment, every constraint and the public inputs check out.

    Takes no PKI or trusted-party argument: the verification key alone decides.
    """
    cs = verification_key.cs
    if proof.setup_id != verification_key.setup_id:
        return Verdict.reject(RejectReason.PROGRAM_MISMATCH, "setup id differs")
    if len(proof.opened_witness) != cs.num_variables:
        return Verdict.reject(RejectReason.PROGRAM_MISMATCH, "witness shape differs")

    witness = Witness(proof.opened_witness)
    encoded = witness.encode()
    if meter is not None:
        meter.charge_hash(len(encoded))
    if hash_message(encoded) != proof.witness_commitment:
        return Verdict.reject(RejectReason.COMMITMENT_MISMATCH)

    failure = first_violation(cs, witness.assignment, meter)
    if failure is not None:
        return Verdict.reject(RejectReason.CONSTRAINT_VIOLATION, failure)

    opened_public = tuple(witness.assignment[i] for i in verification_key.public_slots)
    if proof.public_values != opened_public:
        return Verdict.reject(RejectReason.PUBLIC_INPUT_MISMATCH, "proof public values")
    if encode_elements(proof.public_values) != claimed_public_args:
        return Verdict.reject(RejectReason.PUBLIC_INPUT_MISMATCH, "claimed public arguments")
    return Verdict.ok()


def evidence_package(proof: CsProof, program_id: bytes) -> EvidencePackage:
    """Public arguments are the proof's public values, encoded."""
    return EvidencePackage(
        backend_id=BackendId.CONSTRAINT_SYSTEM,
        public_args=encode_elements(proof.public_values),
        evidence_body=proof.encode(),
        program_id=program_id,
    )
