"""Attack harness: manipulated program, input, auxiliary data, evidence and replay.

Every strategy is applied to an honest, seeded scenario and the harness
reports where the manipulation was caught. A strategy that would not change
anything is refused, so a detection can never be vacuous.
"""

import logging
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence

from trusted_preprocessing.backends import constraint_system as cs_backend
from trusted_preprocessing.backends import enclave as tee_backend
from trusted_preprocessing.chain import (
    Chain,
    CsContractMaterial,
    TeeContractMaterial,
    VerificationReceipt,
)
from trusted_preprocessing.errors import InputVerificationError, VacuousStrategyError
from trusted_preprocessing.gateway import PreprocessProgram, threshold_violation_program
from trusted_preprocessing.models import (
    AuxiliaryData,
    BackendId,
    DetectionStage,
    EvidencePackage,
    Measurement,
    MeasurementBatch,
    MetaData,
    RejectReason,
    Verdict,
    stage_for_reason,
)
from trusted_preprocessing.primitives import KeyPair, KeyRole, generate_keypair, hash_message
from trusted_preprocessing.sensor import DEFAULT_TIMESTAMP, SignedBatch, generate_batch, sign_batch

logger = logging.getLogger(__name__)

SCENARIO_THRESHOLD = 50
SCENARIO_SCALE_DIVISOR = 10
SCENARIO_VALUE_RANGE = (-100, 100)
MAX_SCENARIO_BATCH_SIZE = 4
DEVICE_ID = "gateway-0"
WORKFLOW_ID = "attack"

# Compromised-host hook that rewrites sealed enclave state. Only the test suite
# installs one; without it program tampering is always re-attested fresh.
SealBypass = Callable[..., None]
_seal_bypass: Optional[SealBypass] = None


def install_seal_bypass(hook: Optional[SealBypass]) -> None:
    global _seal_bypass
    _seal_bypass = hook
    if hook is not None:
        logger.warning("⚠️  Enclave seal bypass installed")


class TamperKind(str, Enum):
    PROGRAM = "program"
    INPUT = "input"
    AUXILIARY = "auxiliary"
    EVIDENCE = "evidence"
    REPLAY = "replay"


@dataclass(frozen=True)
class TamperStrategy:
    """A kind of manipulation plus the seeded details of what to change."""

    kind: TamperKind
    mutation: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "kind", TamperKind(self.kind))
        m = self.mutation
        vacuous = {
            TamperKind.AUXILIARY: lambda: m.get("threshold_delta", 0) == 0,
            TamperKind.INPUT: lambda: m.get("value_delta", 0) == 0,
            TamperKind.EVIDENCE: lambda: m.get("bit") not in range(8),
            TamperKind.PROGRAM: lambda: m.get("predicate", "gt") == "gt",
            TamperKind.REPLAY: lambda: m.get("mode") not in ("duplicate", "reorder"),
        }[self.kind]()
        if vacuous:
            raise VacuousStrategyError(f"{self.kind.value} strategy {m} changes nothing")

    @classmethod
    def from_seed(cls, kind: TamperKind, seed: int) -> "TamperStrategy":
        kind = TamperKind(kind)
        rng = random.Random(f"{kind.value}/{seed}")
        if kind is TamperKind.AUXILIARY:
            mutation = {"threshold_delta": rng.choice([-1, 1]) * rng.randint(1, 10)}
        elif kind is TamperKind.INPUT:
            mutation = {
                "measurement_index": rng.randrange(MAX_SCENARIO_BATCH_SIZE),
                "field": rng.randrange(4),
                "value_delta": rng.choice([-1, 1]) * rng.randint(1, 50),
                "keep_digest": rng.random() < 0.5,
            }
        elif kind is TamperKind.EVIDENCE:
            mutation = {
                "target": "public_args" if rng.random() < 0.2 else "evidence_body",
                "byte_index": rng.randrange(2 ** 16),
                "bit": rng.randrange(8),
            }
        elif kind is TamperKind.PROGRAM:
            via = rng.choice(["reinstantiate", "bypass-seal"])
            if _seal_bypass is None:
                via = "reinstantiate"
            mutation = {"predicate": "ge", "via": via}
        else:
            mutation = {"mode": rng.choice(["duplicate", "reorder"])}
        return cls(kind, mutation)

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "mutation": dict(self.mutation)}


@dataclass(frozen=True)
class AttackOutcome:
    strategy: TamperStrategy
    backend_id: BackendId
    seed: int
    detected: bool
    stage: Optional[DetectionStage]
    reason: RejectReason

    def to_dict(self) -> Dict[str, Any]:
        """One JSON-lines record of an attack report."""
        return {
            "strategy": self.strategy.kind.value,
            "backend": self.backend_id.short,
            "seed": self.seed,
            "detected": self.detected,
            "stage": self.stage.value if self.stage else None,
            "reason": self.reason.value,
            "mutation": dict(self.strategy.mutation),
        }


# =====================================================
# SCENARIO
# =====================================================

def _seeded(label: str, seed: int) -> bytes:
    return hash_message(f"scenario/{label}/{seed}".encode())


@dataclass
class Scenario:
    """Honest inputs for one seed: a sensor key, two consecutive signed batches."""

    seed: int
    sensor_key: KeyPair
    program: PreprocessProgram
    aux: AuxiliaryData
    batches: List[SignedBatch]

    @classmethod
    def build(cls, seed: int) -> "Scenario":
        rng = random.Random(seed)
        size = rng.randint(1, MAX_SCENARIO_BATCH_SIZE)
        sensor_key = generate_keypair(KeyRole.SENSOR, seed=_seeded("sensor", seed))
        batches = []
        for sequence_no in range(2):
            meta = MetaData(f"sensor-{seed % 8}", DEFAULT_TIMESTAMP + sequence_no, sequence_no)
            batch = generate_batch(size, SCENARIO_VALUE_RANGE, rng.randrange(2 ** 32), meta)
            batches.append(sign_batch(batch, sensor_key))
        return cls(
            seed=seed,
            sensor_key=sensor_key,
            program=threshold_violation_program(),
            aux=AuxiliaryData(SCENARIO_THRESHOLD, SCENARIO_SCALE_DIVISOR),
            batches=batches,
        )

    @property
    def size(self) -> int:
        return self.batches[0].batch.size


def tamper_batch(signed: SignedBatch, mutation: Dict[str, Any]) -> SignedBatch:
    """D′: one value changed in transit; the sensor signature is kept."""
    batch = signed.batch
    index = mutation["measurement_index"] % batch.size
    rows = [list(m.values) for m in batch.measurements]
    rows[index][mutation["field"]] += mutation["value_delta"]
    tampered = MeasurementBatch(batch.meta, tuple(Measurement(tuple(r)) for r in rows))
    digest = signed.batch_digest if mutation.get("keep_digest") else hash_message(tampered.encode())
    return SignedBatch(tampered, digest, signed.signature)


def flip_bit(data: bytes, byte_index: int, bit: int) -> bytes:
    index = byte_index % len(data)
    out = bytearray(data)
    out[index] ^= 1 << bit
    return bytes(out)


def tamper_package(package: EvidencePackage, mutation: Dict[str, Any]) -> EvidencePackage:
    target = mutation.get("target", "evidence_body")
    flipped = flip_bit(getattr(package, target), mutation["byte_index"], mutation["bit"])
    return replace(package, **{target: flipped})


# =====================================================
# HARNESSES
# =====================================================

@lru_cache(maxsize=32)
def _compiled(program: PreprocessProgram, batch_size: int) -> cs_backend.ConstraintSystem:
    return cs_backend.compile(program, batch_size)


def _outcome(strategy: TamperStrategy, backend_id: BackendId, seed: int,
             verdict: Verdict) -> AttackOutcome:
    stage = None if verdict.accepted else stage_for_reason(verdict.reason, backend_id)
    return AttackOutcome(strategy, backend_id, seed, not verdict.accepted, stage, verdict.reason)


def _receipt_verdict(receipt: VerificationReceipt) -> Verdict:
    return Verdict(receipt.accepted, receipt.reason, receipt.detail)


class _CsHarness:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        self.cs = _compiled(scenario.program, scenario.size)
        self.keys = cs_backend.setup(self.cs, _seeded("crs", scenario.seed))
        self.chain = Chain()
        sensor_pk = scenario.sensor_key.public_key
        self.chain.deploy_contract(WORKFLOW_ID, BackendId.CONSTRAINT_SYSTEM, CsContractMaterial(
            verification_key=self.keys.verification_key,
            threshold=scenario.aux.threshold,
            sensor_key_digest=hash_message(sensor_pk),
            program_id=scenario.program.program_id,
        ))

    def package(self, signed: SignedBatch, aux: Optional[AuxiliaryData] = None,
                keys: Optional[cs_backend.CsKeyPair] = None) -> EvidencePackage:
        keys = keys or self.keys
        witness = cs_backend.compute_witness(
            keys.proving_key.cs, signed, aux or self.scenario.aux, self.scenario.sensor_key.public_key
        )
        proof = cs_backend.generate_proof(witness, keys.proving_key)
        return cs_backend.evidence_package(proof, self.scenario.program.program_id)

    def forged_package(self, signed: SignedBatch) -> EvidencePackage:
        """A proof over an unsatisfied witness, built without the prover's checks."""
        assignment = cs_backend.assign_witness(
            self.cs, signed.batch, signed.batch_digest, signed.signature,
            self.scenario.aux.threshold, self.scenario.sensor_key.public_key,
        )
        witness = cs_backend.Witness(assignment)
        proof = cs_backend.CsProof(
            setup_id=self.keys.proving_key.setup_id,
            public_values=tuple(assignment[i] for i in self.cs.public_slots),
            witness_commitment=witness.commitment(),
            opened_witness=assignment,
        )
        return cs_backend.evidence_package(proof, self.scenario.program.program_id)

    def submit(self, package: EvidencePackage) -> Verdict:
        return _receipt_verdict(self.chain.submit(WORKFLOW_ID, package))

    def attack(self, strategy: TamperStrategy) -> Verdict:
        scenario = self.scenario
        honest = scenario.batches[0]
        m = strategy.mutation
        if strategy.kind is TamperKind.AUXILIARY:
            tampered_aux = replace(scenario.aux, threshold=scenario.aux.threshold + m["threshold_delta"])
            return self.submit(self.package(honest, aux=tampered_aux))
        if strategy.kind is TamperKind.INPUT:
            return self.submit(self.forged_package(tamper_batch(honest, m)))
        if strategy.kind is TamperKind.PROGRAM:
            # P′ compiled and set up on its own; the package still claims P's id.
            variant = threshold_violation_program(m["predicate"])
            variant_cs = _compiled(variant, scenario.size)
            variant_keys = cs_backend.setup(variant_cs, _seeded("crs-variant", scenario.seed))
            return self.submit(self.package(honest, keys=variant_keys))
        if strategy.kind is TamperKind.EVIDENCE:
            return self.submit(tamper_package(self.package(honest), m))
        return _replay(self, m["mode"])


class _TeeHarness:
    def __init__(self, scenario: Scenario):
        self.scenario = scenario
        root_key = generate_keypair(KeyRole.PKI_ROOT, seed=_seeded("pki-root", scenario.seed))
        self.pki = tee_backend.Pki(root_key)
        self.pki.issue(DEVICE_ID, generate_keypair(
            KeyRole.DEVICE_IDENTITY, seed=_seeded("device", scenario.seed)
        ))
        sensor_pk = scenario.sensor_key.public_key
        self.reference = tee_backend.EnclaveMeasurement.compute(
            scenario.program.program_id, scenario.aux, sensor_pk
        ).digest
        self.enclave = tee_backend.instantiate_enclave(
            self.pki, DEVICE_ID, scenario.program, scenario.aux, sensor_pk
        )
        report = tee_backend.attest(self.enclave)
        verdict = tee_backend.verify_attestation(report, self.pki.root_public_key, self.reference)
        if not verdict:
            raise RuntimeError(f"honest enclave failed attestation: {verdict.reason.value}")
        self.chain = Chain()
        self.chain.deploy_contract(WORKFLOW_ID, BackendId.ENCLAVE, TeeContractMaterial(
            evidence_public_key=report.evidence_public_key,
            reference_measurement=self.reference,
            program_id=scenario.program.program_id,
        ))

    def package(self, signed: SignedBatch) -> EvidencePackage:
        output, evidence = tee_backend.enclave_execute(self.enclave, signed)
        return tee_backend.evidence_package(output, evidence, self.scenario.program.program_id)

    def submit(self, package: EvidencePackage) -> Verdict:
        return _receipt_verdict(self.chain.submit(WORKFLOW_ID, package))

    def reattest(self, m: Dict[str, Any], **changes: Any) -> Verdict:
        if m.get("via") == "bypass-seal":
            if _seal_bypass is None:
                raise RuntimeError("no seal bypass installed")
            enclave = self.enclave
            _seal_bypass(enclave, **changes)
        else:
            config = {"program": self.scenario.program, "aux": self.scenario.aux, **changes}
            enclave = tee_backend.instantiate_enclave(
                self.pki, DEVICE_ID, config["program"], config["aux"],
                self.scenario.sensor_key.public_key,
            )
        report = tee_backend.attest(enclave)
        return tee_backend.verify_attestation(report, self.pki.root_public_key, self.reference)

    def attack(self, strategy: TamperStrategy) -> Verdict:
        scenario = self.scenario
        honest = scenario.batches[0]
        m = strategy.mutation
        if strategy.kind is TamperKind.AUXILIARY:
            tampered_aux = replace(scenario.aux, threshold=scenario.aux.threshold + m["threshold_delta"])
            return self.reattest(m, aux=tampered_aux)
        if strategy.kind is TamperKind.PROGRAM:
            return self.reattest(m, program=threshold_violation_program(m["predicate"]))
        if strategy.kind is TamperKind.INPUT:
            try:
                self.package(tamper_batch(honest, m))
            except InputVerificationError as e:
                return Verdict.reject(RejectReason.SENSOR_SIGNATURE_INVALID, str(e))
            return Verdict.ok()
        if strategy.kind is TamperKind.EVIDENCE:
            return self.submit(tamper_package(self.package(honest), m))
        return _replay(self, m["mode"])


def _replay(harness, mode: str) -> Verdict:
    """Resubmit an accepted package (duplicate) or deliver packages out of order."""
    first, second = (harness.package(b) for b in harness.scenario.batches)
    if mode == "duplicate":
        if not harness.submit(first):
            raise RuntimeError("honest package was rejected")
        return harness.submit(first)
    # Out of order: the later package lands first.
    if not harness.submit(second):
        raise RuntimeError("honest package was rejected")
    if isinstance(harness, _TeeHarness):
        return harness.submit(first)
    harness.submit(first)
    return harness.submit(second)


# =====================================================
# ENTRY POINTS
# =====================================================

def run_attack(strategy: TamperStrategy, backend_id: BackendId, seed: int) -> AttackOutcome:
    """Apply ``strategy`` to the honest scenario for ``seed`` and report detection."""
    backend_id = BackendId.parse(backend_id) if isinstance(backend_id, str) else backend_id
    scenario = Scenario.build(seed)
    harness = _CsHarness(scenario) if backend_id is BackendId.CONSTRAINT_SYSTEM else _TeeHarness(scenario)
    outcome = _outcome(strategy, backend_id, seed, harness.attack(strategy))
    if outcome.detected:
        logger.info(
            f"🛡️  {strategy.kind.value} on {backend_id.short} (seed {seed}): "
            f"detected at {outcome.stage.value} ({outcome.reason.value})"
        )
    else:
        logger.error(f"🚨 {strategy.kind.value} on {backend_id.short} (seed {seed}): NOT detected")
    return outcome


def run_campaign(
    kinds: Iterable[TamperKind],
    backends: Iterable[BackendId],
    seeds: Sequence[int],
    max_workers: int = 1,
) -> List[AttackOutcome]:
    """Every kind × backend × seed; results in that order."""
    jobs = [
        (TamperStrategy.from_seed(kind, seed), backend, seed)
        for kind in kinds for backend in backends for seed in seeds
    ]
    if max_workers <= 1:
        return [run_attack(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(lambda job: run_attack(*job), jobs))
