"""Benchmark harness for the recurring operations.

Two experiment modes:
    size   one batch per run, batch size varies
    count  size-one batches, the number of consecutive batches varies

Wall-clock time covers evidence generation plus on-chain verification;
one-time setup (compile, CRS, PKI, attestation, deployment) and sensor-side
signing are excluded.
"""

import csv
import io
import logging
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, TextIO, Union

import numpy as np

from trusted_preprocessing.backends import constraint_system as cs_backend
from trusted_preprocessing.backends import enclave as tee_backend
from trusted_preprocessing.chain import Chain, CsContractMaterial, TeeContractMaterial
from trusted_preprocessing.config import settings
from trusted_preprocessing.errors import WorkflowError
from trusted_preprocessing.gateway import Gateway, threshold_violation_program
from trusted_preprocessing.metering import CostWeights
from trusted_preprocessing.models import AuxiliaryData, BackendId, EvidencePackage, MetaData
from trusted_preprocessing.primitives import KeyRole, generate_keypair, hash_message
from trusted_preprocessing.sensor import DEFAULT_TIMESTAMP, SignedBatch, generate_batch, sign_batch

logger = logging.getLogger(__name__)

MODES = ("size", "count")
CSV_HEADER = ("backend", "mode", "param", "mean_seconds", "stddev", "cost_units")
WORKFLOW_ID = "bench"


@dataclass(frozen=True)
class BenchRow:
    backend: str
    mode: str
    param: int
    mean_seconds: float
    stddev: Optional[float]
    cost_units: int

    def as_row(self) -> List[str]:
        stddev = "" if self.stddev is None else f"{self.stddev:.6f}"
        return [self.backend, self.mode, str(self.param), f"{self.mean_seconds:.6f}",
                stddev, str(self.cost_units)]


class _Pipeline:
    """Set-up workflow for one bench point: evidence generation plus a chain."""

    def __init__(self, backend_id: BackendId, batch_size: int, seed: int,
                 weights: Optional[CostWeights] = None):
        self.backend_id = backend_id
        self.sensor_key = generate_keypair(KeyRole.SENSOR, seed=hash_message(f"bench/{seed}".encode()))
        self.program = threshold_violation_program()
        self.aux = AuxiliaryData(settings.default_threshold, settings.default_scale_divisor)
        self.chain = Chain(weights)
        sensor_pk = self.sensor_key.public_key

        if backend_id is BackendId.CONSTRAINT_SYSTEM:
            cs = cs_backend.compile(self.program, batch_size)
            self.keys = cs_backend.setup(cs, hash_message(f"bench-crs/{seed}".encode()))
            self.gateway = Gateway()
            material = CsContractMaterial(
                self.keys.verification_key, self.aux.threshold,
                hash_message(sensor_pk), self.program.program_id,
            )
        else:
            pki = tee_backend.Pki()
            pki.issue("bench-gateway")
            self.enclave = tee_backend.instantiate_enclave(
                pki, "bench-gateway", self.program, self.aux, sensor_pk
            )
            report = tee_backend.attest(self.enclave)
            material = TeeContractMaterial(
                report.evidence_public_key, report.measurement.digest, self.program.program_id
            )
        self.chain.deploy_contract(WORKFLOW_ID, backend_id, material)

    def signed_batches(self, count: int, size: int, first_sequence: int, seed: int) -> List[SignedBatch]:
        batches = []
        for i in range(count):
            seq = first_sequence + i
            meta = MetaData("bench-sensor", DEFAULT_TIMESTAMP + seq, seq)
            batches.append(sign_batch(generate_batch(size, (-100, 100), seed + seq, meta), self.sensor_key))
        return batches

    def evidence(self, signed: SignedBatch) -> EvidencePackage:
        if self.backend_id is BackendId.CONSTRAINT_SYSTEM:
            self.gateway.verify_input(signed, self.sensor_key.public_key)
            witness = cs_backend.compute_witness(
                self.keys.proving_key.cs, signed, self.aux, self.sensor_key.public_key
            )
            proof = cs_backend.generate_proof(witness, self.keys.proving_key)
            return cs_backend.evidence_package(proof, self.program.program_id)
        output, evidence = tee_backend.enclave_execute(self.enclave, signed)
        return tee_backend.evidence_package(output, evidence, self.program.program_id)


def run_benchmark(
    backend_id: BackendId,
    mode: str,
    params: Sequence[int],
    repetitions: Optional[int] = None,
    seed: int = 0,
    weights: Optional[CostWeights] = None,
) -> List[BenchRow]:
    """One row per parameter.

    ``cost_units`` is the on-chain cost of one repetition; ``stddev`` is only
    reported for more than one repetition.

    Raises:
        ValueError: unknown mode or a parameter < 1
    """
    backend_id = BackendId.parse(backend_id) if isinstance(backend_id, str) else backend_id
    repetitions = repetitions or settings.bench_repetitions
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    if repetitions < 1 or any(p < 1 for p in params):
        raise ValueError("parameters and repetitions must be >= 1")

    rows = []
    for param in params:
        size, count = (param, 1) if mode == "size" else (1, param)
        pipeline = _Pipeline(backend_id, size, seed, weights)
        times, cost_units = [], 0
        for rep in range(repetitions):
            batches = pipeline.signed_batches(count, size, rep * count, seed)
            cost_units = 0
            start = time.perf_counter()
            for signed in batches:
                receipt = pipeline.chain.submit(WORKFLOW_ID, pipeline.evidence(signed))
                if not receipt.accepted:
                    raise WorkflowError(f"honest bench package rejected: {receipt.reason.value}")
                cost_units += receipt.cost_units
            times.append(time.perf_counter() - start)

        samples = np.asarray(times)
        row = BenchRow(
            backend=backend_id.short,
            mode=mode,
            param=param,
            mean_seconds=float(np.mean(samples)),
            stddev=float(np.std(samples, ddof=1)) if repetitions > 1 else None,
            cost_units=cost_units,
        )
        logger.info(
            f"⏱️  {row.backend} {mode}={param}: {row.mean_seconds:.4f}s "
            f"({repetitions} rep), {cost_units} units"
        )
        rows.append(row)
    return rows


def write_csv(rows: Iterable[BenchRow], out: Union[Path, TextIO, None] = None) -> str:
    """Write rows under the fixed header; returns the CSV text."""
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for row in rows:
        writer.writerow(row.as_row())
    text = buffer.getvalue()
    if isinstance(out, (str, Path)):
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)
    elif out is not None:
        out.write(text)
    return text
