"""Evidence backends: constraint system and enclave simulation."""

from trusted_preprocessing.backends import constraint_system, enclave

__all__ = ["constraint_system", "enclave"]
