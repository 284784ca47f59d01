"""Workflow orchestration: one-time setup and recurring runs.

Setup (once per workflow):
    sensor key → backend artifacts (CS + keys, or PKI + attested enclave)
    → verification contract deployed on the chain simulator

Run (per batch):
    load / sign → gateway input verification → evidence → submit → receipt

State between invocations lives in the artifact directory: ``manifest.json``
(deployment manifest), ``session.json``, ``chain.json`` and the backend files.
"""

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from datetime import datetime
from functools import partial
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from trusted_preprocessing.backends import constraint_system as cs_backend
from trusted_preprocessing.backends import enclave as tee_backend
from trusted_preprocessing.chain import (
    Chain,
    CsContractMaterial,
    TeeContractMaterial,
    VerificationReceipt,
)
from trusted_preprocessing.config import settings
from trusted_preprocessing.errors import ManifestError, SetupExistsError, WorkflowError
from trusted_preprocessing.gateway import Gateway, ReplayGuard, threshold_violation_program
from trusted_preprocessing.models import (
    AuxiliaryData,
    BackendId,
    EvidencePackage,
    MetaData,
)
from trusted_preprocessing.primitives import (
    KeyPair,
    KeyRole,
    dump_json,
    generate_keypair,
    hash_message,
    load_keypair,
    save_keypair,
)
from trusted_preprocessing.recovery import (
    BatchFailure,
    cleanup_recovery_files,
    run_isolated,
    save_partial_results,
)
from trusted_preprocessing.sensor import (
    DEFAULT_TIMESTAMP,
    SensorNode,
    SignedBatch,
    generate_batch,
    has_signature,
    load_batch,
    load_signed_batch,
    save_signed_batch,
    sign_batch,
    write_batch,
)
from trusted_preprocessing.validators import validate_artifacts

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"
SESSION_FILE = "session.json"
CHAIN_FILE = "chain.json"


# =====================================================
# MANIFEST
# =====================================================

class WorkflowManifest(BaseModel):
    """Workflow definition; setup fills in the deployment fields."""

    model_config = ConfigDict(extra="forbid")

    workflow_id: str = Field(..., min_length=1, description="Identifier of the workflow and its contract")
    backend: BackendId = Field(..., description="Evidence backend: cs or tee")
    threshold: int = Field(default_factory=lambda: settings.default_threshold,
                           description="Violation threshold of the filter stage")
    scale_divisor: int = Field(default_factory=lambda: settings.default_scale_divisor, ge=1,
                               description="Divisor of the map stage")
    predicate: Literal["gt", "ge"] = Field("gt", description="Filter predicate")
    batch_size: int = Field(..., ge=1, description="Measurements per batch (cs is size-specialized)")
    sensor_id: str = Field("sensor-0", description="Sensor id used for unsigned fixture batches")
    device_id: str = Field("gateway-0", description="Gateway device id (tee)")
    artifacts_dir: Optional[str] = Field(
        None, description="Artifact directory, relative to the manifest; defaults to <workflow_id>/"
    )

    # Filled in by setup
    key_files: Dict[str, str] = Field(default_factory=dict, description="Key file names by role")
    reference_measurement: Optional[str] = Field(None, description="Enclave reference measurement (hex)")
    verification_key_digest: Optional[str] = Field(None, description="CS verification key digest (hex)")
    contract_address: Optional[str] = Field(None, description="Deployed contract address (hex)")

    @field_validator("backend", mode="before")
    @classmethod
    def _parse_backend(cls, value: Any) -> Any:
        return BackendId.parse(value) if isinstance(value, str) else value

    @classmethod
    def load(cls, path: Path) -> "WorkflowManifest":
        """Raises ``ManifestError`` on unreadable JSON or schema violations."""
        try:
            return cls.model_validate_json(Path(path).read_text())
        except ValidationError as e:
            raise ManifestError(f"{path}: {e}") from e

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_json(self.model_dump(mode="json")))
        return path

    def artifact_path(self, manifest_path: Path) -> Path:
        base = Path(manifest_path).resolve().parent
        return base / (self.artifacts_dir or self.workflow_id)

    def aux(self) -> AuxiliaryData:
        return AuxiliaryData(threshold=self.threshold, scale_divisor=self.scale_divisor)


# =====================================================
# SESSION
# =====================================================

@dataclass
class WorkflowSession:
    """Tracks the state of a workflow across CLI invocations."""

    workflow_id: str
    backend: str
    started_at: str
    next_sequence: int = 0
    replay_state: Dict[str, int] = field(default_factory=dict)
    accepted: int = 0
    rejected: int = 0
    failed: int = 0
    runs: int = 0
    last_run_at: Optional[str] = None

    def save(self, output_dir: Path) -> Path:
        """Save session state to JSON"""
        output_dir = Path(output_dir)
        output_dir.mkdir(parents=True, exist_ok=True)
        session_file = output_dir / SESSION_FILE
        session_file.write_text(dump_json(asdict(self)))
        return session_file

    @classmethod
    def load(cls, output_dir: Path) -> "WorkflowSession":
        session_file = Path(output_dir) / SESSION_FILE
        if not session_file.exists():
            raise WorkflowError(f"No session at {session_file}; run setup first")
        return cls(**json.loads(session_file.read_text()))


# =====================================================
# SETUP
# =====================================================

def setup_workflow(
    manifest_path: Path,
    crs_seed: Optional[bytes] = None,
    sensor_key: Optional[KeyPair] = None,
) -> Path:
    """One-time setup: create every artifact and deploy the contract.

    Returns:
        The artifact directory

    Raises:
        ManifestError: invalid manifest, or a cs threshold outside ``cs_value_bits``
        SetupExistsError: artifacts already exist (setup never overwrites)
        WorkflowError: the freshly instantiated enclave failed attestation
    """
    manifest = WorkflowManifest.load(manifest_path)
    artifact_dir = manifest.artifact_path(manifest_path)
    if manifest.backend is BackendId.CONSTRAINT_SYSTEM:
        bound = 2 ** (settings.cs_value_bits - 1)
        if not -bound <= manifest.threshold < bound:
            raise ManifestError(
                f"threshold {manifest.threshold} outside the {settings.cs_value_bits}-bit "
                f"signed range of the cs backend [{-bound}, {bound})"
            )
    existing = [n for n in (MANIFEST_FILE, SESSION_FILE, CHAIN_FILE) if (artifact_dir / n).exists()]
    if existing:
        raise SetupExistsError(f"{artifact_dir} already holds {', '.join(existing)}; refusing to overwrite")
    artifact_dir.mkdir(parents=True, exist_ok=True)
    logger.info(f"🚀 Setting up {manifest.backend.short} workflow {manifest.workflow_id} in {artifact_dir}")

    sensor_key = (sensor_key or generate_keypair(KeyRole.SENSOR)).require_role(KeyRole.SENSOR)
    save_keypair(artifact_dir / "sensor_key.json", sensor_key)
    key_files = {"sensor": "sensor_key.json"}

    program = threshold_violation_program(manifest.predicate)
    aux = manifest.aux()
    chain = Chain()
    deployed: Dict[str, Any] = {}

    if manifest.backend is BackendId.CONSTRAINT_SYSTEM:
        cs = cs_backend.compile(program, manifest.batch_size)
        keys = cs_backend.setup(cs, crs_seed or os.urandom(32))
        (artifact_dir / "cs.json").write_text(dump_json(cs.to_dict()))
        (artifact_dir / "proving_key.json").write_text(dump_json(keys.proving_key.to_dict()))
        (artifact_dir / "verification_key.json").write_text(dump_json(keys.verification_key.to_dict()))
        material = CsContractMaterial(
            verification_key=keys.verification_key,
            threshold=aux.threshold,
            sensor_key_digest=hash_message(sensor_key.public_key),
            program_id=program.program_id,
        )
        deployed["verification_key_digest"] = keys.verification_key.key_digest.hex()
    else:
        pki = tee_backend.Pki()
        pki.issue(manifest.device_id)
        device = pki.device(manifest.device_id)
        save_keypair(artifact_dir / "pki_root.json", pki.root_key)
        (artifact_dir / "device_identity.json").write_text(dump_json(device.to_dict()))
        key_files.update({"pki_root": "pki_root.json", "device_identity": "device_identity.json"})

        enclave = tee_backend.instantiate_enclave(
            pki, manifest.device_id, program, aux, sensor_key.public_key
        )
        report = tee_backend.attest(enclave)
        reference = tee_backend.EnclaveMeasurement.compute(
            program.program_id, aux, sensor_key.public_key
        ).digest
        verdict = tee_backend.verify_attestation(report, pki.root_public_key, reference)
        if not verdict:
            raise WorkflowError(f"enclave attestation failed: {verdict.reason.value}")
        logger.info("🔍 Attestation report verified against the reference measurement")
        (artifact_dir / "attestation.json").write_text(dump_json(report.to_dict()))
        (artifact_dir / "enclave.sealed").write_bytes(tee_backend.seal_enclave(enclave))
        material = TeeContractMaterial(
            evidence_public_key=report.evidence_public_key,
            reference_measurement=reference,
            program_id=program.program_id,
        )
        deployed["reference_measurement"] = reference.hex()

    address = chain.deploy_contract(manifest.workflow_id, manifest.backend, material)
    chain.save(artifact_dir / CHAIN_FILE)
    deployment_manifest = manifest.model_copy(
        update={**deployed, "key_files": key_files, "contract_address": address}
    )
    deployment_manifest.save(artifact_dir / MANIFEST_FILE)
    WorkflowSession(
        workflow_id=manifest.workflow_id,
        backend=manifest.backend.value,
        started_at=datetime.now().isoformat(),
    ).save(artifact_dir)

    validate_artifacts(artifact_dir, manifest.backend)
    logger.info(f"✅ Setup complete: contract 0x{address}")
    return artifact_dir


# =====================================================
# RUN
# =====================================================

@dataclass
class BatchResult:
    """Outcome of one batch in a run: a receipt, or the failure that aborted it."""

    batch_file: str
    receipt: Optional[VerificationReceipt] = None
    failure: Optional[BatchFailure] = None

    @property
    def accepted(self) -> bool:
        return self.receipt is not None and self.receipt.accepted

    def to_dict(self) -> Dict[str, Any]:
        return {
            "batch_file": self.batch_file,
            "receipt": self.receipt.to_dict() if self.receipt else None,
            "failure": self.failure.to_dict() if self.failure else None,
        }


@dataclass(frozen=True)
class PreparedBatch:
    """A verified input plus the sequence state it consumed."""

    signed: SignedBatch
    previous_seen: Optional[int]
    previous_next_sequence: int


class Deployment:
    """A set-up workflow loaded from its artifact directory."""

    def __init__(self, artifact_dir: Path):
        self.artifact_dir = Path(artifact_dir)
        self.manifest = WorkflowManifest.load(self.artifact_dir / MANIFEST_FILE)
        validate_artifacts(self.artifact_dir, self.manifest.backend)
        self.session = WorkflowSession.load(self.artifact_dir)
        self.chain = Chain.load(self.artifact_dir / CHAIN_FILE)
        self.sensor_key = load_keypair(
            self.artifact_dir / self.manifest.key_files["sensor"], KeyRole.SENSOR
        )
        self.program = threshold_violation_program(self.manifest.predicate)
        self.aux = self.manifest.aux()

        if self.backend is BackendId.CONSTRAINT_SYSTEM:
            self.proving_key = cs_backend.CsProvingKey.from_dict(
                json.loads((self.artifact_dir / "proving_key.json").read_text())
            )
            self.gateway = Gateway(ReplayGuard(self.session.replay_state))
        else:
            device = tee_backend.Device.from_dict(
                json.loads((self.artifact_dir / self.manifest.key_files["device_identity"]).read_text())
            )
            self.enclave = tee_backend.unseal_enclave(
                (self.artifact_dir / "enclave.sealed").read_bytes(),
                device, self.program, self.aux, self.sensor_key.public_key,
            )

    @classmethod
    def open(cls, manifest_path: Path) -> "Deployment":
        manifest = WorkflowManifest.load(manifest_path)
        return cls(manifest.artifact_path(manifest_path))

    @property
    def backend(self) -> BackendId:
        return self.manifest.backend

    @property
    def workflow_id(self) -> str:
        return self.manifest.workflow_id

    def prepare(self, path: Path) -> PreparedBatch:
        """Load a batch; unsigned fixtures are signed with the workflow's sensor key.

        For cs the gateway input checks run here, in submission order.
        """
        path = Path(path)
        if has_signature(path):
            signed = load_signed_batch(path)
        else:
            fallback = MetaData(self.manifest.sensor_id, int(time.time()), self.session.next_sequence)
            signed = sign_batch(load_batch(path, fallback), self.sensor_key)
            logger.debug(f"Signed fixture batch {path.name}")
        meta = signed.batch.meta
        previous_seen = None
        if self.backend is BackendId.CONSTRAINT_SYSTEM:
            previous_seen = self.gateway.replay_guard.last(meta.sensor_id)
            self.gateway.verify_input(signed, self.sensor_key.public_key)
        prepared = PreparedBatch(signed, previous_seen, self.session.next_sequence)
        self.session.next_sequence = max(self.session.next_sequence, meta.sequence_no + 1)
        return prepared

    def release(self, prepared: PreparedBatch) -> None:
        """Give back the sequence number of a batch that produced no evidence.

        Release in reverse preparation order.
        """
        meta = prepared.signed.batch.meta
        if self.backend is BackendId.CONSTRAINT_SYSTEM:
            self.gateway.replay_guard.rollback(meta.sensor_id, meta.sequence_no, prepared.previous_seen)
        if self.session.next_sequence == meta.sequence_no + 1:
            self.session.next_sequence = prepared.previous_next_sequence
        logger.debug(f"Released sequence {meta.sequence_no} of {meta.sensor_id}")

    def evidence(self, signed: SignedBatch) -> EvidencePackage:
        """Output plus evidence for a prepared batch."""
        if self.backend is BackendId.CONSTRAINT_SYSTEM:
            witness = cs_backend.compute_witness(
                self.proving_key.cs, signed, self.aux, self.sensor_key.public_key
            )
            proof = cs_backend.generate_proof(witness, self.proving_key)
            return cs_backend.evidence_package(proof, self.program.program_id)
        output, evidence = tee_backend.enclave_execute(self.enclave, signed)
        return tee_backend.evidence_package(output, evidence, self.program.program_id)

    def save(self) -> None:
        if self.backend is BackendId.CONSTRAINT_SYSTEM:
            self.session.replay_state = self.gateway.replay_guard.snapshot()
        else:
            (self.artifact_dir / "enclave.sealed").write_bytes(tee_backend.seal_enclave(self.enclave))
        self.chain.save(self.artifact_dir / CHAIN_FILE)
        self.session.save(self.artifact_dir)


def run_batches(
    manifest_path: Path,
    batch_files: Sequence[Path],
    parallel: bool = False,
    max_workers: Optional[int] = None,
) -> List[BatchResult]:
    """Process batches in order; a failing batch is recorded and the run continues.

    With ``parallel`` cs proofs are generated concurrently; submission order
    always equals the order of ``batch_files``. Enclave executions are
    serialized by the enclave itself and always run in order.
    """
    deployment = Deployment.open(manifest_path)
    cleanup_recovery_files(deployment.artifact_dir)
    results = [BatchResult(str(path)) for path in batch_files]

    prepared: List[Optional[PreparedBatch]] = []
    for result, path in zip(results, batch_files):
        batch, result.failure = run_isolated(partial(deployment.prepare, path), str(path))
        prepared.append(batch)

    def build(item: Tuple[BatchResult, Optional[PreparedBatch]]):
        result, batch = item
        if batch is None:
            return None, None
        return run_isolated(partial(deployment.evidence, batch.signed), result.batch_file)

    jobs = list(zip(results, prepared))
    if parallel and deployment.backend is BackendId.CONSTRAINT_SYSTEM:
        workers = max_workers or settings.max_parallel_batches
        logger.info(f"⚡ Generating {len(jobs)} proof(s) with {workers} worker(s)")
        with ThreadPoolExecutor(max_workers=workers) as pool:
            built = list(pool.map(build, jobs))
    else:
        built = [build(job) for job in jobs]

    for batch, (package, _) in reversed(list(zip(prepared, built))):
        if batch is not None and package is None:
            deployment.release(batch)

    for result, (package, failure) in zip(results, built):
        if failure is not None:
            result.failure = failure
        if package is None:
            deployment.session.failed += 1
            continue
        result.receipt = deployment.chain.submit(deployment.workflow_id, package)
        if result.receipt.accepted:
            deployment.session.accepted += 1
        else:
            deployment.session.rejected += 1

    deployment.session.runs += 1
    deployment.session.last_run_at = datetime.now().isoformat()
    deployment.save()

    if any(not r.accepted for r in results):
        save_partial_results(
            deployment.artifact_dir, deployment.workflow_id,
            {"results": [r.to_dict() for r in results]},
        )
    return results


def export_chain(manifest_path: Path, out: Path) -> Path:
    """Write the chain state of a workflow to ``out``."""
    manifest = WorkflowManifest.load(manifest_path)
    chain = Chain.load(manifest.artifact_path(manifest_path) / CHAIN_FILE)
    return chain.save(out)


# =====================================================
# FIXTURES
# =====================================================

def generate_batches(
    out_dir: Path,
    count: int,
    size: int,
    seed: int = 0,
    value_range: Tuple[int, int] = (0, 100),
    manifest_path: Optional[Path] = None,
    sensor_id: str = "sensor-0",
    signed: bool = True,
) -> List[Path]:
    """Write ``count`` seeded batches of ``size`` measurements to ``out_dir``.

    With a manifest the workflow's sensor key signs them and its session
    sequence counter advances; otherwise a seeded sensor key is created in
    ``out_dir``. ``signed=False`` writes unsigned fixtures for ``run`` to sign.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    session: Optional[WorkflowSession] = None
    artifact_dir: Optional[Path] = None

    if manifest_path is not None:
        manifest = WorkflowManifest.load(manifest_path)
        artifact_dir = manifest.artifact_path(manifest_path)
        session = WorkflowSession.load(artifact_dir)
        key = load_keypair(artifact_dir / manifest.key_files["sensor"], KeyRole.SENSOR)
        sensor_id = manifest.sensor_id
        next_sequence = session.next_sequence
    else:
        key = generate_keypair(KeyRole.SENSOR, seed=hash_message(f"generate/{seed}".encode()))
        save_keypair(out_dir / "sensor_key.json", key)
        next_sequence = 0

    node = SensorNode(sensor_id, key, next_sequence=next_sequence)
    paths = []
    for i in range(count):
        path = out_dir / f"batch_{i:04d}.batch"
        if signed:
            batch = node.produce(size, value_range, rng_seed=seed * 100_003 + i,
                                 timestamp=DEFAULT_TIMESTAMP + node.next_sequence)
            save_signed_batch(batch, path)
        else:
            meta = MetaData(sensor_id, DEFAULT_TIMESTAMP + next_sequence + i, next_sequence + i)
            write_batch(generate_batch(size, value_range, seed * 100_003 + i, meta), path)
        paths.append(path)

    if session is not None and artifact_dir is not None and signed:
        session.next_sequence = node.next_sequence
        session.save(artifact_dir)
    logger.info(f"📝 Wrote {count} {'signed' if signed else 'unsigned'} batch(es) to {out_dir}")
    return paths
