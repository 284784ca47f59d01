"""Gateway pre-processing program P.

Verifies the sensor signature of a batch and runs the threshold-violation
program: filter values exceeding the threshold, reduce them to a count, and
map them to scaled-down values. Only the count goes on-chain.
"""

import json
import logging
import threading
from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from trusted_preprocessing.errors import (
    DigestMismatchError,
    EncodingError,
    ProgramError,
    SignatureMismatchError,
    StaleSequenceError,
)
from trusted_preprocessing.models import AuxiliaryData, MeasurementBatch, Output
from trusted_preprocessing.primitives import hash_message, verify
from trusted_preprocessing.sensor import SignedBatch

logger = logging.getLogger(__name__)

PROGRAM_SCHEMA_VERSION = 1
PREDICATES = ("gt", "ge")


class StageKind(str, Enum):
    FILTER = "filter"
    REDUCE = "reduce"
    MAP = "map"


@dataclass(frozen=True)
class Stage:
    """One pipeline stage: kind, the auxiliary parameter it reads, its operation."""

    kind: StageKind
    parameter: str
    operation: str

    def to_dict(self) -> Dict[str, str]:
        return {"kind": self.kind.value, "parameter": self.parameter, "operation": self.operation}


_EXPECTED_STAGES = (
    (StageKind.FILTER, "threshold", PREDICATES),
    (StageKind.REDUCE, "", ("count",)),
    (StageKind.MAP, "scale_divisor", ("floor_div",)),
)


@dataclass(frozen=True)
class PreprocessProgram:
    """The filter → reduce → map composition with its parameter schema."""

    stages: Tuple[Stage, ...]

    def __post_init__(self):
        stages = tuple(self.stages)
        if len(stages) != len(_EXPECTED_STAGES):
            raise ProgramError(f"expected {len(_EXPECTED_STAGES)} stages, got {len(stages)}")
        for stage, (kind, parameter, operations) in zip(stages, _EXPECTED_STAGES):
            if stage.kind != kind or stage.parameter != parameter:
                raise ProgramError(f"unsupported stage {stage.to_dict()}")
            if stage.operation not in operations:
                raise ProgramError(f"unsupported {kind.value} operation {stage.operation!r}")
        object.__setattr__(self, "stages", stages)

    @property
    def predicate(self) -> str:
        return self.stages[0].operation

    def describe(self) -> Dict[str, Any]:
        """Logical description hashed into the program id."""
        return {
            "schema_version": PROGRAM_SCHEMA_VERSION,
            "parameters": {"threshold": "int64", "scale_divisor": "uint64>=1"},
            "stages": [s.to_dict() for s in self.stages],
        }

    @property
    def program_id(self) -> bytes:
        canonical = json.dumps(self.describe(), sort_keys=True, separators=(",", ":"))
        return hash_message(canonical.encode())

    def to_dict(self) -> Dict[str, Any]:
        return {"stages": [s.to_dict() for s in self.stages]}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "PreprocessProgram":
        return cls(tuple(
            Stage(StageKind(s["kind"]), s["parameter"], s["operation"]) for s in data["stages"]
        ))


def threshold_violation_program(predicate: str = "gt") -> PreprocessProgram:
    """The reference program; ``ge`` is the manipulated variant."""
    return PreprocessProgram((
        Stage(StageKind.FILTER, "threshold", predicate),
        Stage(StageKind.REDUCE, "", "count"),
        Stage(StageKind.MAP, "scale_divisor", "floor_div"),
    ))


# =====================================================
# STAGES
# =====================================================

def exceeds(value: int, threshold: int, predicate: str = "gt") -> bool:
    if predicate == "gt":
        return value > threshold
    if predicate == "ge":
        return value >= threshold
    raise ProgramError(f"unknown predicate {predicate!r}")


def filter_violations(
    batch: MeasurementBatch, aux: AuxiliaryData, predicate: str = "gt"
) -> List[int]:
    """Values exceeding ``aux.threshold`` over all four fields, order preserved."""
    return [v for v in batch.values() if exceeds(v, aux.threshold, predicate)]


def reduce_count(violations: List[int]) -> int:
    return len(violations)


def map_scale(violations: List[int], aux: AuxiliaryData) -> List[int]:
    """Floor division (toward negative infinity) by ``aux.scale_divisor``."""
    if aux.scale_divisor < 1:
        raise EncodingError("scale_divisor must be >= 1")
    return [v // aux.scale_divisor for v in violations]


def evaluate(program: PreprocessProgram, batch: MeasurementBatch, aux: AuxiliaryData) -> Output:
    """Run the stages on an already verified batch."""
    violations = filter_violations(batch, aux, program.predicate)
    return Output(
        violation_count=reduce_count(violations),
        scaled_values=tuple(map_scale(violations, aux)),
    )


# =====================================================
# INPUT VERIFICATION
# =====================================================

class ReplayGuard:
    """Last accepted sequence number per sensor; updates are exclusive."""

    def __init__(self, last_seen: Optional[Dict[str, int]] = None):
        self._last_seen: Dict[str, int] = dict(last_seen or {})
        self._lock = threading.Lock()

    def check_and_advance(self, sensor_id: str, sequence_no: int) -> None:
        with self._lock:
            last = self._last_seen.get(sensor_id)
            if last is not None and sequence_no <= last:
                raise StaleSequenceError(
                    f"{sensor_id}: sequence_no {sequence_no} <= last seen {last}"
                )
            self._last_seen[sensor_id] = sequence_no

    def last(self, sensor_id: str) -> Optional[int]:
        with self._lock:
            return self._last_seen.get(sensor_id)

    def rollback(self, sensor_id: str, sequence_no: int, previous: Optional[int]) -> None:
        """Undo an advance to ``sequence_no`` unless a later batch has moved past it."""
        with self._lock:
            if self._last_seen.get(sensor_id) != sequence_no:
                return
            if previous is None:
                del self._last_seen[sensor_id]
            else:
                self._last_seen[sensor_id] = previous

    def snapshot(self) -> Dict[str, int]:
        with self._lock:
            return dict(self._last_seen)


def check_signed_batch(signed: SignedBatch, sensor_public_key: bytes) -> None:
    """Digest and signature checks, without touching replay state."""
    if hash_message(signed.batch.encode()) != signed.batch_digest:
        raise DigestMismatchError("batch digest does not match the batch contents")
    if not verify(sensor_public_key, signed.batch_digest, signed.signature):
        raise SignatureMismatchError("sensor signature does not verify")


class Gateway:
    """Gateway node state: the per-sensor replay guard."""

    def __init__(self, replay_guard: Optional[ReplayGuard] = None):
        self.replay_guard = replay_guard or ReplayGuard()

    def verify_input(self, signed: SignedBatch, sensor_public_key: bytes) -> MeasurementBatch:
        """Return the verified batch.

        Raises:
            DigestMismatchError, SignatureMismatchError, StaleSequenceError
        """
        check_signed_batch(signed, sensor_public_key)
        meta = signed.batch.meta
        self.replay_guard.check_and_advance(meta.sensor_id, meta.sequence_no)
        return signed.batch

    def run_program(
        self,
        program: PreprocessProgram,
        signed: SignedBatch,
        aux: AuxiliaryData,
        sensor_public_key: bytes,
    ) -> Output:
        """P(D, A) → O."""
        batch = self.verify_input(signed, sensor_public_key)
        output = evaluate(program, batch, aux)
        logger.debug(
            f"batch {batch.meta.sensor_id}#{batch.meta.sequence_no}: "
            f"{output.violation_count} violation(s) in {batch.size} measurement(s)"
        )
        return output
