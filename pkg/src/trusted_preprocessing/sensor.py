"""Sensor node simulation.

Generates or loads measurement batches, attaches meta-data and signs the
canonical batch digest with the sensor key.

File formats:
    ``*.batch``      one measurement per line, four space-separated integers,
                     ``#`` comment lines and blank lines ignored
    ``*.meta.json``  sidecar ``{sensor_id, timestamp, sequence_no}``
    ``*.sig``        lowercase hex signature over the batch digest
"""

import json
import logging
import random
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

from trusted_preprocessing.errors import BatchFormatError, EncodingError
from trusted_preprocessing.models import (
    MEASUREMENT_ARITY,
    Measurement,
    MeasurementBatch,
    MetaData,
)
from trusted_preprocessing.primitives import (
    KeyPair,
    KeyRole,
    dump_json,
    hash_message,
    verify,
)

logger = logging.getLogger(__name__)

DEFAULT_TIMESTAMP = 1_600_000_000


@dataclass(frozen=True)
class SignedBatch:
    """A batch, the digest of its canonical encoding and the sensor signature."""

    batch: MeasurementBatch
    batch_digest: bytes
    signature: bytes

    def to_dict(self) -> Dict[str, Any]:
        return {
            "meta": self.batch.meta.to_dict(),
            "measurements": [list(m.values) for m in self.batch.measurements],
            "batch_digest": self.batch_digest.hex(),
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SignedBatch":
        batch = MeasurementBatch(
            meta=MetaData.from_dict(data["meta"]),
            measurements=tuple(Measurement(tuple(row)) for row in data["measurements"]),
        )
        return cls(batch, bytes.fromhex(data["batch_digest"]), bytes.fromhex(data["signature"]))


# =====================================================
# TEXT FORMAT
# =====================================================

def _sidecar_path(path: Path) -> Path:
    return Path(path).with_suffix(".meta.json")


def _signature_path(path: Path) -> Path:
    return Path(path).with_suffix(".sig")


def parse_measurements(text: str, source: str = "<string>") -> List[Measurement]:
    """Parse the line-wise batch text format.

    Raises:
        BatchFormatError: wrong arity, non-integer token, or no measurements
    """
    measurements = []
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tokens = line.split()
        if len(tokens) != MEASUREMENT_ARITY:
            raise BatchFormatError(
                f"{source}:{line_no}: expected {MEASUREMENT_ARITY} values, got {len(tokens)}"
            )
        try:
            values = tuple(int(tok) for tok in tokens)
        except ValueError:
            raise BatchFormatError(f"{source}:{line_no}: non-integer token in {line!r}") from None
        measurements.append(Measurement(values))

    if not measurements:
        raise BatchFormatError(f"{source}: batch file contains no measurements")
    return measurements


def load_batch(path: Path, meta: Optional[MetaData] = None) -> MeasurementBatch:
    """Load a batch file plus its ``.meta.json`` sidecar.

    ``meta`` is used when the sidecar is absent; without either the batch
    cannot be built.
    """
    path = Path(path)
    measurements = parse_measurements(path.read_text(encoding="utf-8"), source=str(path))

    sidecar = _sidecar_path(path)
    if sidecar.exists():
        try:
            meta = MetaData.from_dict(json.loads(sidecar.read_text()))
        except (KeyError, ValueError, TypeError) as e:
            raise BatchFormatError(f"{sidecar}: invalid meta-data sidecar: {e}") from e
    elif meta is None:
        raise BatchFormatError(f"{path}: no meta-data sidecar at {sidecar}")

    return MeasurementBatch(meta=meta, measurements=tuple(measurements))


def format_measurements(batch: MeasurementBatch) -> str:
    return "".join(" ".join(str(v) for v in m.values) + "\n" for m in batch.measurements)


def write_batch(batch: MeasurementBatch, path: Path) -> Path:
    """Write the batch text file and its meta-data sidecar."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(format_measurements(batch), encoding="utf-8")
    _sidecar_path(path).write_text(dump_json(batch.meta.to_dict()))
    return path


def save_signed_batch(signed: SignedBatch, path: Path) -> Path:
    """Write batch, sidecar and ``.sig`` file."""
    path = write_batch(signed.batch, path)
    _signature_path(path).write_text(signed.signature.hex() + "\n")
    return path


def load_signed_batch(path: Path) -> SignedBatch:
    """Load a batch with its sidecar and signature; the digest is recomputed."""
    batch = load_batch(path)
    sig_path = _signature_path(path)
    try:
        signature = bytes.fromhex(sig_path.read_text().strip())
    except ValueError as e:
        raise BatchFormatError(f"{sig_path}: signature is not hex") from e
    return SignedBatch(batch, hash_message(batch.encode()), signature)


def has_signature(path: Path) -> bool:
    return _signature_path(path).exists()


# =====================================================
# GENERATION AND SIGNING
# =====================================================

def generate_batch(
    size: int,
    value_range: Tuple[int, int] = (0, 100),
    rng_seed: int = 0,
    meta: Optional[MetaData] = None,
) -> MeasurementBatch:
    """Synthetic batch, deterministic under ``rng_seed``.

    Raises:
        BatchFormatError: if size is not positive or the range is empty
    """
    if size < 1:
        raise BatchFormatError(f"batch size must be >= 1, got {size}")
    low, high = value_range
    if low > high:
        raise BatchFormatError(f"empty value range [{low}, {high}]")

    rng = random.Random(rng_seed)
    measurements = tuple(
        Measurement(tuple(rng.randint(low, high) for _ in range(MEASUREMENT_ARITY)))
        for _ in range(size)
    )
    meta = meta or MetaData(sensor_id="sensor-0", timestamp=DEFAULT_TIMESTAMP, sequence_no=0)
    return MeasurementBatch(meta=meta, measurements=measurements)


def sign_batch(batch: MeasurementBatch, sensor_key: KeyPair) -> SignedBatch:
    """Hash the canonical encoding (meta-data included) and sign the digest.

    Raises:
        KeyRoleError: if ``sensor_key`` is not a sensor key
        BatchFormatError: if the batch is empty
    """
    sensor_key.require_role(KeyRole.SENSOR)
    if batch.size == 0:
        raise BatchFormatError("empty batches cannot be signed")
    digest = hash_message(batch.encode())
    return SignedBatch(batch=batch, batch_digest=digest, signature=sensor_key.sign(digest))


def verify_batch_signature(signed: SignedBatch, sensor_public_key: bytes) -> bool:
    """True iff the digest matches the batch and the signature verifies."""
    try:
        digest = hash_message(signed.batch.encode())
    except EncodingError:
        return False
    return digest == signed.batch_digest and verify(
        sensor_public_key, signed.batch_digest, signed.signature
    )


class SensorNode:
    """A sensor with its key and a strictly increasing sequence counter."""

    def __init__(self, sensor_id: str, key: KeyPair, next_sequence: int = 0):
        self.sensor_id = sensor_id
        self.key = key.require_role(KeyRole.SENSOR)
        self.next_sequence = next_sequence
        self._lock = threading.Lock()

    @property
    def public_key(self) -> bytes:
        return self.key.public_key

    def _next_meta(self, timestamp: Optional[int]) -> MetaData:
        with self._lock:
            seq = self.next_sequence
            self.next_sequence += 1
        ts = int(time.time()) if timestamp is None else timestamp
        return MetaData(sensor_id=self.sensor_id, timestamp=ts, sequence_no=seq)

    def sign_measurements(
        self, measurements: Sequence[Measurement], timestamp: Optional[int] = None
    ) -> SignedBatch:
        """Attach fresh meta-data to measurements and sign them."""
        batch = MeasurementBatch(meta=self._next_meta(timestamp), measurements=tuple(measurements))
        signed = sign_batch(batch, self.key)
        logger.debug(f"{self.sensor_id}: signed batch #{batch.meta.sequence_no} ({batch.size})")
        return signed

    def produce(
        self,
        size: int,
        value_range: Tuple[int, int] = (0, 100),
        rng_seed: int = 0,
        timestamp: Optional[int] = None,
    ) -> SignedBatch:
        """Generate a synthetic batch and sign it."""
        measurements = generate_batch(size, value_range, rng_seed).measurements
        return self.sign_measurements(measurements, timestamp)
