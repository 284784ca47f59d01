"""Single-node chain simulator with per-workflow verification contracts.

Each workflow deploys one contract holding its verification material. A
submission is metered, verified by the backend named in the contract, checked
for replay and, if accepted, its violation count is appended to the
contract's output log. Finality is instant: every transaction is one block.
"""

import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Set, Union

from trusted_preprocessing.backends import constraint_system as cs_backend
from trusted_preprocessing.backends import enclave as tee_backend
from trusted_preprocessing.errors import (
    ChainError,
    DuplicateWorkflowError,
    EncodingError,
    OutOfGasError,
    UnknownWorkflowError,
)
from trusted_preprocessing.metering import CostMeter, CostWeights
from trusted_preprocessing.models import BackendId, EvidencePackage, RejectReason, Verdict
from trusted_preprocessing.primitives import dump_json, hash_message

logger = logging.getLogger(__name__)

ADDRESS_SIZE = 20


# =====================================================
# VERIFICATION MATERIAL
# =====================================================

@dataclass(frozen=True)
class CsContractMaterial:
    """Verification key plus the public inputs the contract pins itself."""

    verification_key: cs_backend.CsVerificationKey
    threshold: int
    sensor_key_digest: bytes
    program_id: bytes

    backend_id = BackendId.CONSTRAINT_SYSTEM

    def to_dict(self) -> Dict[str, Any]:
        return {
            "verification_key": self.verification_key.to_dict(),
            "threshold": self.threshold,
            "sensor_key_digest": self.sensor_key_digest.hex(),
            "program_id": self.program_id.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CsContractMaterial":
        return cls(
            verification_key=cs_backend.CsVerificationKey.from_dict(data["verification_key"]),
            threshold=int(data["threshold"]),
            sensor_key_digest=bytes.fromhex(data["sensor_key_digest"]),
            program_id=bytes.fromhex(data["program_id"]),
        )


@dataclass(frozen=True)
class TeeContractMaterial:
    """Attested evidence key and the reference measurement it was attested against."""

    evidence_public_key: bytes
    reference_measurement: bytes
    program_id: bytes

    backend_id = BackendId.ENCLAVE

    def to_dict(self) -> Dict[str, Any]:
        return {
            "evidence_public_key": self.evidence_public_key.hex(),
            "reference_measurement": self.reference_measurement.hex(),
            "program_id": self.program_id.hex(),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "TeeContractMaterial":
        return cls(
            evidence_public_key=bytes.fromhex(data["evidence_public_key"]),
            reference_measurement=bytes.fromhex(data["reference_measurement"]),
            program_id=bytes.fromhex(data["program_id"]),
        )


ContractMaterial = Union[CsContractMaterial, TeeContractMaterial]
_MATERIAL_TYPES = {
    BackendId.CONSTRAINT_SYSTEM: CsContractMaterial,
    BackendId.ENCLAVE: TeeContractMaterial,
}


# =====================================================
# CHAIN STATE
# =====================================================

@dataclass
class Contract:
    workflow_id: str
    address: str
    backend_id: BackendId
    material: ContractMaterial
    outputs: List[int] = field(default_factory=list)
    last_counter: int = 0
    seen_digests: Set[bytes] = field(default_factory=set)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "address": self.address,
            "backend_id": self.backend_id.value,
            "material": self.material.to_dict(),
            "outputs": list(self.outputs),
            "last_counter": self.last_counter,
            "seen_digests": sorted(d.hex() for d in self.seen_digests),
        }

    @classmethod
    def from_dict(cls, workflow_id: str, data: Dict[str, Any]) -> "Contract":
        backend_id = BackendId(data["backend_id"])
        return cls(
            workflow_id=workflow_id,
            address=data["address"],
            backend_id=backend_id,
            material=_MATERIAL_TYPES[backend_id].from_dict(data["material"]),
            outputs=[int(v) for v in data["outputs"]],
            last_counter=int(data["last_counter"]),
            seen_digests={bytes.fromhex(d) for d in data["seen_digests"]},
        )


@dataclass(frozen=True)
class VerificationReceipt:
    """Outcome of one submission."""

    workflow_id: str
    tx_index: int
    accepted: bool
    reason: RejectReason
    cost_units: int
    violation_count: Optional[int] = None
    detail: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return {
            "workflow_id": self.workflow_id,
            "tx_index": self.tx_index,
            "accepted": self.accepted,
            "reason": self.reason.value,
            "cost_units": self.cost_units,
            "violation_count": self.violation_count,
            "detail": self.detail,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "VerificationReceipt":
        return cls(
            workflow_id=data["workflow_id"],
            tx_index=int(data["tx_index"]),
            accepted=bool(data["accepted"]),
            reason=RejectReason(data["reason"]),
            cost_units=int(data["cost_units"]),
            violation_count=data.get("violation_count"),
            detail=data.get("detail", ""),
        )


@dataclass(frozen=True)
class _Decoded:
    """What a contract learns from a verified package."""

    verdict: Verdict
    violation_count: Optional[int] = None
    replay_key: Optional[bytes] = None
    counter: Optional[int] = None


class Chain:
    """In-memory chain: contracts, an append-only transaction log, a block height."""

    def __init__(self, weights: Optional[CostWeights] = None):
        self.weights = weights or CostWeights.from_settings()
        self.height = 0
        self.tx_log: List[Dict[str, Any]] = []
        self._contracts: Dict[str, Contract] = {}
        self._workflow_locks: Dict[str, threading.Lock] = {}
        self._lock = threading.Lock()

    # ---------------------------------------------------------------- deploy

    def deploy_contract(
        self, workflow_id: str, backend_id: BackendId, material: ContractMaterial
    ) -> str:
        """Deploy a verification contract and return its address.

        Raises:
            DuplicateWorkflowError: if ``workflow_id`` already has a contract
            ChainError: if ``material`` does not belong to ``backend_id``
        """
        backend_id = BackendId(backend_id)
        if not isinstance(material, _MATERIAL_TYPES[backend_id]):
            raise ChainError(f"{type(material).__name__} is not {backend_id.value} material")
        canonical = json.dumps(material.to_dict(), sort_keys=True, separators=(",", ":"))
        address = hash_message(
            b"contract/" + workflow_id.encode() + b"/" + canonical.encode()
        )[:ADDRESS_SIZE].hex()

        with self._lock:
            if workflow_id in self._contracts:
                raise DuplicateWorkflowError(f"workflow {workflow_id!r} already deployed")
            self._contracts[workflow_id] = Contract(workflow_id, address, backend_id, material)
            self._workflow_locks[workflow_id] = threading.Lock()
            self.height += 1
        logger.info(f"📦 Deployed {backend_id.short} contract for {workflow_id} at 0x{address}")
        return address

    def contract(self, workflow_id: str) -> Contract:
        try:
            return self._contracts[workflow_id]
        except KeyError:
            raise UnknownWorkflowError(f"no contract deployed for {workflow_id!r}") from None

    @property
    def workflows(self) -> List[str]:
        return sorted(self._contracts)

    # ---------------------------------------------------------------- submit

    def submit(self, workflow_id: str, package: EvidencePackage) -> VerificationReceipt:
        """Verify and, if accepted, store one evidence package.

        Cost is metered whether or not the package is accepted.

        Raises:
            UnknownWorkflowError: if no contract is deployed for ``workflow_id``
        """
        contract = self.contract(workflow_id)
        meter = CostMeter(self.weights)
        with self._workflow_locks[workflow_id]:
            try:
                meter.charge_calldata(package.calldata_size)
                decoded = self._verify(contract, package, meter)
            except OutOfGasError as e:
                decoded = _Decoded(Verdict.reject(RejectReason.OUT_OF_GAS, str(e)))
            if decoded.verdict:
                decoded = self._check_replay(contract, decoded)
            if decoded.verdict:
                contract.outputs.append(decoded.violation_count)
                if decoded.replay_key is not None:
                    contract.seen_digests.add(decoded.replay_key)
                if decoded.counter is not None:
                    contract.last_counter = decoded.counter

            with self._lock:
                tx_index = len(self.tx_log)
                self.height += 1
                self.tx_log.append({
                    "index": tx_index,
                    "height": self.height,
                    "workflow_id": workflow_id,
                    "package_digest": hash_message(
                        package.public_args + package.evidence_body + package.program_id
                    ).hex(),
                    "accepted": decoded.verdict.accepted,
                    "reason": decoded.verdict.reason.value,
                    "cost_units": meter.total,
                })

        receipt = VerificationReceipt(
            workflow_id=workflow_id,
            tx_index=tx_index,
            accepted=decoded.verdict.accepted,
            reason=decoded.verdict.reason,
            cost_units=meter.total,
            violation_count=decoded.violation_count if decoded.verdict else None,
            detail=decoded.verdict.detail,
        )
        if receipt.accepted:
            logger.info(f"✅ tx {tx_index} {workflow_id}: accepted ({meter.total} units)")
        else:
            logger.warning(
                f"❌ tx {tx_index} {workflow_id}: rejected, {receipt.reason.value} "
                f"({meter.total} units)"
            )
        meter.log_summary(f"tx {tx_index}")
        return receipt

    def _verify(self, contract: Contract, package: EvidencePackage, meter: CostMeter) -> _Decoded:
        if package.backend_id != contract.backend_id:
            return _Decoded(Verdict.reject(RejectReason.BACKEND_MISMATCH))
        if package.program_id != contract.material.program_id:
            return _Decoded(Verdict.reject(RejectReason.PROGRAM_MISMATCH, "program id"))
        if contract.backend_id is BackendId.CONSTRAINT_SYSTEM:
            return self._verify_cs(contract.material, package, meter)
        return self._verify_tee(contract.material, package, meter)

    @staticmethod
    def _verify_cs(
        material: CsContractMaterial, package: EvidencePackage, meter: CostMeter
    ) -> _Decoded:
        vk = material.verification_key
        try:
            proof = cs_backend.CsProof.decode(package.evidence_body)
            claimed = cs_backend.PublicInputs.decode(vk.public_layout, package.public_args)
        except EncodingError as e:
            return _Decoded(Verdict.reject(RejectReason.MALFORMED_EVIDENCE, str(e)))

        # The contract pins threshold and sensor key; digest and count come from the package.
        expected = cs_backend.PublicInputs(
            batch_digest=claimed.batch_digest,
            threshold=material.threshold,
            violation_count=claimed.violation_count,
            sensor_key_digest=material.sensor_key_digest,
        )
        expected_args = expected.encode(vk.public_layout)
        verdict = cs_backend.verify_cs(proof, vk, expected_args, meter)
        if verdict and package.public_args != expected_args:
            verdict = Verdict.reject(RejectReason.PUBLIC_INPUT_MISMATCH, "package public arguments")
        replay_key = claimed.batch_digest or hash_message(package.public_args)
        return _Decoded(verdict, claimed.violation_count, replay_key=replay_key)

    @staticmethod
    def _verify_tee(
        material: TeeContractMaterial, package: EvidencePackage, meter: CostMeter
    ) -> _Decoded:
        verdict = tee_backend.verify_tee_evidence(
            package.evidence_body,
            package.public_args,
            material.program_id,
            material.evidence_public_key,
            meter,
        )
        if not verdict:
            return _Decoded(verdict)
        evidence = tee_backend.TeeEvidence.decode(package.evidence_body)
        _, violation_count = tee_backend.decode_public_args(package.public_args)
        return _Decoded(verdict, violation_count, counter=evidence.counter)

    @staticmethod
    def _check_replay(contract: Contract, decoded: _Decoded) -> _Decoded:
        if decoded.counter is not None and decoded.counter <= contract.last_counter:
            return _Decoded(Verdict.reject(
                RejectReason.REPLAY, f"counter {decoded.counter} <= {contract.last_counter}"
            ))
        if decoded.replay_key is not None and decoded.replay_key in contract.seen_digests:
            return _Decoded(Verdict.reject(RejectReason.REPLAY, "batch digest already accepted"))
        return decoded

    # ---------------------------------------------------------------- read

    def read_outputs(self, workflow_id: str) -> List[int]:
        contract = self.contract(workflow_id)
        with self._workflow_locks[workflow_id]:
            return list(contract.outputs)

    # ---------------------------------------------------------------- export

    def export_state(self) -> Dict[str, Any]:
        """JSON-ready dump of contracts, transaction log and costs."""
        with self._lock:
            costs: Dict[str, int] = {}
            for tx in self.tx_log:
                costs[tx["workflow_id"]] = costs.get(tx["workflow_id"], 0) + tx["cost_units"]
            return {
                "height": self.height,
                "weights": self.weights.to_dict(),
                "contracts": {wid: c.to_dict() for wid, c in sorted(self._contracts.items())},
                "tx_log": [dict(tx) for tx in self.tx_log],
                "costs": {"total": sum(costs.values()), "per_workflow": costs},
            }

    @classmethod
    def from_export(cls, data: Dict[str, Any]) -> "Chain":
        chain = cls(CostWeights.from_dict(data["weights"]))
        chain.height = int(data["height"])
        chain.tx_log = [dict(tx) for tx in data["tx_log"]]
        for workflow_id, contract in data["contracts"].items():
            chain._contracts[workflow_id] = Contract.from_dict(workflow_id, contract)
            chain._workflow_locks[workflow_id] = threading.Lock()
        return chain

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_json(self.export_state()))
        return path

    @classmethod
    def load(cls, path: Path) -> "Chain":
        return cls.from_export(json.loads(Path(path).read_text()))
