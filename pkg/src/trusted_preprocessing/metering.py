"""Gas-like cost metering for the verification contracts.

This module provides configurable unit costs for on-chain primitives:
- Per-primitive weights (hash, signature verification, constraint checks, calldata)
- A metering trace from which the total can always be recomputed
- An optional per-transaction budget (gas limit)
"""

import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from trusted_preprocessing.config import settings
from trusted_preprocessing.errors import OutOfGasError

logger = logging.getLogger(__name__)

HASH_CALL = "hash_call"
SIGNATURE_VERIFY = "signature_verify"
CONSTRAINT_CHECK = "constraint_check"
CALLDATA_BYTE = "calldata_byte"

WORD_SIZE = 32


@dataclass(frozen=True)
class CostWeights:
    """Unit cost of each metered primitive"""

    signature_verify: int = 5000
    hash_base: int = 60
    hash_word: int = 12      # per 32-byte word hashed
    constraint_check: int = 2  # per constraint
    calldata_byte: int = 16

    # Budget controls
    gas_limit: Optional[int] = None  # per transaction (None = unlimited)

    @classmethod
    def from_settings(cls) -> "CostWeights":
        return cls(
            signature_verify=settings.cost_signature_verify,
            hash_base=settings.cost_hash_base,
            hash_word=settings.cost_hash_word,
            constraint_check=settings.cost_constraint_check,
            calldata_byte=settings.cost_calldata_byte,
            gas_limit=settings.gas_limit,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "signature_verify": self.signature_verify,
            "hash_base": self.hash_base,
            "hash_word": self.hash_word,
            "constraint_check": self.constraint_check,
            "calldata_byte": self.calldata_byte,
            "gas_limit": self.gas_limit,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CostWeights":
        return cls(**data)


@dataclass
class CostMeter:
    """Accumulates cost units for one transaction"""

    weights: CostWeights = field(default_factory=CostWeights)
    total: int = 0
    counts: Counter = field(default_factory=Counter)
    trace: List[Tuple[str, int, int]] = field(default_factory=list)  # (primitive, count, units)

    def _charge(self, primitive: str, count: int, units: int) -> None:
        self.counts[primitive] += count
        self.trace.append((primitive, count, units))
        self.total += units
        if not self.check_budget():
            raise OutOfGasError(
                f"gas limit {self.weights.gas_limit} exceeded ({self.total} units) at {primitive}"
            )

    def check_budget(self) -> bool:
        """
        Check if the transaction is within its gas limit

        Returns:
            True if within budget, False if budget exhausted
        """
        if self.weights.gas_limit is None:
            return True
        return self.total <= self.weights.gas_limit

    def charge_hash(self, num_bytes: int) -> None:
        words = -(-num_bytes // WORD_SIZE)
        self._charge(HASH_CALL, 1, self.weights.hash_base + self.weights.hash_word * words)

    def charge_signature_verify(self, count: int = 1) -> None:
        self._charge(SIGNATURE_VERIFY, count, self.weights.signature_verify * count)

    def charge_constraints(self, count: int) -> None:
        self._charge(CONSTRAINT_CHECK, count, self.weights.constraint_check * count)

    def charge_calldata(self, num_bytes: int) -> None:
        self._charge(CALLDATA_BYTE, num_bytes, self.weights.calldata_byte * num_bytes)

    def recompute_total(self) -> int:
        """Total recomputed from the metering trace."""
        return sum(units for _, _, units in self.trace)

    def get_stats(self) -> Dict[str, Any]:
        """
        Get current statistics

        Returns:
            Dictionary of per-primitive counts and the total
        """
        return {
            "total": self.total,
            HASH_CALL: self.counts[HASH_CALL],
            SIGNATURE_VERIFY: self.counts[SIGNATURE_VERIFY],
            CONSTRAINT_CHECK: self.counts[CONSTRAINT_CHECK],
            CALLDATA_BYTE: self.counts[CALLDATA_BYTE],
        }

    def log_summary(self, label: str = "transaction"):
        """Log summary statistics"""
        stats = self.get_stats()
        logger.info(
            f"⛽ {label}: {stats['total']} units "
            f"(hash={stats[HASH_CALL]}, sigverify={stats[SIGNATURE_VERIFY]}, "
            f"constraints={stats[CONSTRAINT_CHECK]}, calldata={stats[CALLDATA_BYTE]}B)"
        )
