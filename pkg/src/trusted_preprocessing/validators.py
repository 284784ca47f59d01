"""Validation utilities for CLI inputs and setup artifacts.

This module provides validation functions to ensure:
1. Manifests and batch files are usable before a workflow touches them
2. Setup produced every artifact a later ``run`` depends on
"""

import json
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

from pydantic import ValidationError

from trusted_preprocessing.errors import BatchFormatError, PreprocessingError
from trusted_preprocessing.models import BackendId
from trusted_preprocessing.sensor import parse_measurements

logger = logging.getLogger(__name__)

MAX_BATCH_FILE_BYTES = 50 * 1024 * 1024
BATCH_SUFFIXES = (".batch", ".txt")

COMMON_ARTIFACTS = ("manifest.json", "session.json", "chain.json", "sensor_key.json")
BACKEND_ARTIFACTS = {
    BackendId.CONSTRAINT_SYSTEM: ("cs.json", "proving_key.json", "verification_key.json"),
    BackendId.ENCLAVE: ("pki_root.json", "device_identity.json", "attestation.json", "enclave.sealed"),
}

# =====================================================
# INPUT VALIDATION
# =====================================================

class InputValidationError(PreprocessingError, ValueError):
    """Raised when input validation fails."""
    pass


def validate_batch_file(file_path: Path) -> Tuple[bool, Optional[str]]:
    """Validate a batch file before processing.

    Returns:
        Tuple of (is_valid, error_message)

    Checks:
        - File exists and is a regular file
        - File size is reasonable (< 50MB)
        - Suffix is ``.batch`` or ``.txt``
        - Contents parse as measurements
    """
    file_path = Path(file_path)
    if not file_path.exists():
        return False, f"File not found: {file_path}"
    if not file_path.is_file():
        return False, f"Not a file: {file_path}"

    try:
        if file_path.stat().st_size > MAX_BATCH_FILE_BYTES:
            return False, f"File too large: {file_path}"
        if file_path.suffix.lower() not in BATCH_SUFFIXES:
            return False, (
                f"Unsupported batch format: {file_path.suffix}. "
                f"Supported formats: {', '.join(BATCH_SUFFIXES)}"
            )
        parse_measurements(file_path.read_text(encoding="utf-8"), source=str(file_path))
        return True, None

    except BatchFormatError as e:
        return False, str(e)
    except (OSError, UnicodeDecodeError) as e:
        return False, f"Error reading file: {e}"


def validate_manifest_file(file_path: Path) -> Tuple[bool, Optional[str]]:
    """Validate a workflow manifest file (JSON, schema-checked)."""
    from trusted_preprocessing.workflow import WorkflowManifest

    file_path = Path(file_path)
    if not file_path.is_file():
        return False, f"Manifest not found: {file_path}"
    try:
        WorkflowManifest.load(file_path)
        return True, None
    except (ValidationError, ValueError) as e:
        return False, f"Invalid manifest {file_path}: {e}"
    except OSError as e:
        return False, f"Error reading manifest: {e}"


def validate_inputs(
    manifest_path: Optional[Path] = None, batch_files: Sequence[Path] = ()
) -> None:
    """Validate all inputs of a CLI command.

    Raises:
        InputValidationError: If validation fails
    """
    errors = []

    if manifest_path is not None:
        is_valid, error = validate_manifest_file(manifest_path)
        if not is_valid:
            errors.append(f"Manifest validation failed: {error}")

    for batch_file in batch_files:
        is_valid, error = validate_batch_file(batch_file)
        if not is_valid:
            errors.append(f"Batch validation failed: {error}")

    if errors:
        raise InputValidationError("\n".join(errors))


# =====================================================
# OUTPUT VALIDATION
# =====================================================

class OutputValidationError(PreprocessingError):
    """Raised when setup artifacts are missing or unreadable."""
    pass


def validate_setup_artifacts(artifact_dir: Path, backend_id: BackendId) -> Tuple[bool, List[str]]:
    """Validate the artifacts written by setup.

    Returns:
        Tuple of (is_valid, list_of_errors)
    """
    artifact_dir = Path(artifact_dir)
    errors = []
    for name in COMMON_ARTIFACTS + BACKEND_ARTIFACTS[BackendId(backend_id)]:
        path = artifact_dir / name
        if not path.is_file():
            errors.append(f"Missing artifact: {name}")
            continue
        if path.suffix == ".json":
            try:
                json.loads(path.read_text())
            except (OSError, ValueError) as e:
                errors.append(f"Unreadable artifact {name}: {e}")
        elif path.stat().st_size == 0:
            errors.append(f"Empty artifact: {name}")
    return len(errors) == 0, errors


def validate_artifacts(artifact_dir: Path, backend_id: BackendId) -> None:
    """Raises ``OutputValidationError`` listing every missing or broken artifact."""
    is_valid, errors = validate_setup_artifacts(artifact_dir, backend_id)
    if not is_valid:
        for error in errors:
            logger.error(f"   • {error}")
        raise OutputValidationError("\n".join(errors))
    logger.info(f"✅ All {BackendId(backend_id).short} artifacts present in {artifact_dir}")
