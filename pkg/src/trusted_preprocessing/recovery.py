"""Per-batch failure isolation for workflow runs.

This module provides:
1. Isolated execution of one batch, turning pipeline errors into failure records
2. Partial results saving under ``<artifacts>/.recovery/``
3. Cleanup of old recovery files
"""

import json
import logging
import time
from dataclasses import asdict, dataclass
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, Optional, Tuple, TypeVar

from trusted_preprocessing.errors import PreprocessingError

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True)
class BatchFailure:
    """Why one batch was aborted."""

    batch: str
    error_type: str
    message: str

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def run_isolated(func: Callable[[], T], batch: str) -> Tuple[Optional[T], Optional[BatchFailure]]:
    """Execute ``func`` for one batch; pipeline and I/O errors become a failure record.

    Args:
        func: Work for a single batch
        batch: Label used in logs and in the failure record

    Returns:
        ``(result, None)`` on success, ``(None, failure)`` otherwise
    """
    try:
        return func(), None
    except KeyboardInterrupt:
        logger.warning("⚠️ Run interrupted by user")
        raise
    except (PreprocessingError, OSError) as e:
        logger.error(f"❌ {batch}: {type(e).__name__}: {e}")
        return None, BatchFailure(batch, type(e).__name__, str(e))


def save_partial_results(
    output_dir: Path, run_name: str, partial_data: Dict[str, Any]
) -> Optional[Path]:
    """Save partial results after a run in which some batches failed.

    Args:
        output_dir: Artifact directory; files go to its ``.recovery`` folder
        run_name: Name of the run (e.g. the workflow id)
        partial_data: Dictionary of partial results to save

    Returns:
        Path of the recovery file, or None if it could not be written
    """
    try:
        recovery_dir = Path(output_dir) / ".recovery"
        recovery_dir.mkdir(exist_ok=True, parents=True)

        timestamp = datetime.now().strftime("%Y%m%d_%H%M%S_%f")
        recovery_file = recovery_dir / f"{run_name}_partial_{timestamp}.json"
        recovery_file.write_text(json.dumps({
            "timestamp": timestamp,
            "run": run_name,
            "partial_data": partial_data,
        }, indent=2, sort_keys=True))

        logger.info(f"💾 Partial results saved to: {recovery_file}")
        return recovery_file

    except OSError as e:
        logger.error(f"Failed to save partial results: {e}")
        return None


def cleanup_recovery_files(output_dir: Path, keep_days: int = 7) -> int:
    """Delete recovery files older than ``keep_days``; returns how many were removed."""
    recovery_dir = Path(output_dir) / ".recovery"
    if not recovery_dir.exists():
        return 0

    removed = 0
    cutoff_time = time.time() - keep_days * 24 * 60 * 60
    for recovery_file in recovery_dir.glob("*.json"):
        try:
            if recovery_file.stat().st_mtime < cutoff_time:
                recovery_file.unlink()
                removed += 1
                logger.debug(f"Deleted old recovery file: {recovery_file.name}")
        except OSError as e:
            logger.warning(f"Failed to cleanup {recovery_file.name}: {e}")
    return removed
