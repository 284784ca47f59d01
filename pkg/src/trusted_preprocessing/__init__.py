"""Trusted pre-processing of sensor data for on-chain verification.

A sensor signs measurement batches; a gateway filters, counts and scales
them and produces evidence that the result is correct; a verification
contract on a simulated chain checks the evidence before storing the output.

Two evidence backends:
- constraint system (``cs``): proof over a compiled constraint system
- enclave (``tee``): simulated trusted execution with remote attestation

Usage:
    from trusted_preprocessing.workflow import setup_workflow, run_batches

    artifact_dir = setup_workflow("workflow.json")
    results = run_batches("workflow.json", ["batch_0000.batch"])

CLI Usage:
    $ trusted-preprocessing setup --manifest workflow.json
    $ trusted-preprocessing run --manifest workflow.json batches/*.batch
    $ trusted-preprocessing attack --strategy input --backend tee --seed 7
    $ trusted-preprocessing bench --backend cs --batch-size 1,4,16
"""

__version__ = "0.1.0"

from .config import settings

# Core types
from .models import (
    AuxiliaryData,
    BackendId,
    EvidencePackage,
    Measurement,
    MeasurementBatch,
    MetaData,
    Output,
    RejectReason,
    Verdict,
)
from .primitives import KeyPair, KeyRole, generate_keypair, hash_message, sign, verify

# Sensor, gateway, chain
from .sensor import SensorNode, SignedBatch, sign_batch
from .gateway import Gateway, PreprocessProgram, threshold_violation_program
from .chain import Chain, VerificationReceipt
from .metering import CostMeter, CostWeights

# Orchestration
from .workflow import WorkflowManifest, run_batches, setup_workflow
from .adversary import TamperKind, TamperStrategy, run_attack, run_campaign

__all__ = [
    "settings",
    # Core types
    "AuxiliaryData",
    "BackendId",
    "EvidencePackage",
    "Measurement",
    "MeasurementBatch",
    "MetaData",
    "Output",
    "RejectReason",
    "Verdict",
    "KeyPair",
    "KeyRole",
    "generate_keypair",
    "hash_message",
    "sign",
    "verify",
    # Sensor, gateway, chain
    "SensorNode",
    "SignedBatch",
    "sign_batch",
    "Gateway",
    "PreprocessProgram",
    "threshold_violation_program",
    "Chain",
    "VerificationReceipt",
    "CostMeter",
    "CostWeights",
    # Orchestration
    "WorkflowManifest",
    "run_batches",
    "setup_workflow",
    "TamperKind",
    "TamperStrategy",
    "run_attack",
    "run_campaign",
]
