"""Exception hierarchy shared by every workflow component.

Errors that describe bad caller input also derive from ``ValueError`` so that
generic callers can catch them without importing this module.
"""


class PreprocessingError(Exception):
    """Base class for all errors raised by this package."""
    pass


# =====================================================
# CORE TYPES
# =====================================================

class EncodingError(PreprocessingError, ValueError):
    """Raised when a value cannot be canonically encoded or decoded."""
    pass


class KeyRoleError(PreprocessingError, ValueError):
    """Raised when a key pair is used outside of its role."""
    pass


class KeyGenerationError(PreprocessingError, ValueError):
    """Raised for malformed key generation input (e.g. seed length)."""
    pass


class BatchFormatError(PreprocessingError, ValueError):
    """Raised when a batch file or batch value violates the batch format."""
    pass


# =====================================================
# GATEWAY
# =====================================================

class InputVerificationError(PreprocessingError):
    """Raised when a signed batch fails gateway input verification."""
    pass


class SignatureMismatchError(InputVerificationError):
    """The sensor signature does not verify."""
    pass


class DigestMismatchError(InputVerificationError):
    """The carried batch digest does not match the batch contents."""
    pass


class StaleSequenceError(InputVerificationError):
    """The batch sequence number was already seen for this sensor."""
    pass


class ProgramError(PreprocessingError, ValueError):
    """Raised for unsupported pre-processing program definitions."""
    pass


# =====================================================
# CONSTRAINT SYSTEM BACKEND
# =====================================================

class ConstraintSystemError(PreprocessingError):
    """Base class for constraint-system backend failures."""
    pass


class SizeMismatchError(ConstraintSystemError, ValueError):
    """The batch size differs from the size the CS was compiled for."""
    pass


class ValueOutOfRangeError(ConstraintSystemError, ValueError):
    """A value does not fit the range supported by the comparison gadgets."""
    pass


class UnsatisfiedWitnessError(ConstraintSystemError):
    """A witness does not satisfy its constraint system."""
    pass


# =====================================================
# ENCLAVE BACKEND
# =====================================================

class EnclaveError(PreprocessingError):
    """Base class for enclave simulation failures."""
    pass


class SealedEnclaveError(EnclaveError):
    """Attempt to mutate sealed enclave state."""
    pass


class UnknownDeviceError(EnclaveError, ValueError):
    """The device has no certificate in the PKI."""
    pass


class DuplicateDeviceError(EnclaveError, ValueError):
    """The device already holds a certificate."""
    pass


class SealingError(EnclaveError):
    """Sealed enclave state could not be restored."""
    pass


# =====================================================
# CHAIN SIMULATOR
# =====================================================

class ChainError(PreprocessingError):
    """Base class for chain simulator failures."""
    pass


class DuplicateWorkflowError(ChainError, ValueError):
    """A contract is already deployed for the workflow id."""
    pass


class UnknownWorkflowError(ChainError, KeyError):
    """No contract is deployed for the workflow id."""
    pass


class OutOfGasError(ChainError):
    """A transaction exceeded the configured gas limit."""
    pass


# =====================================================
# ORCHESTRATION
# =====================================================

class WorkflowError(PreprocessingError):
    """Base class for orchestration failures."""
    pass


class ManifestError(WorkflowError, ValueError):
    """The workflow manifest is invalid."""
    pass


class SetupExistsError(WorkflowError):
    """Setup artifacts already exist and would be overwritten."""
    pass


class VacuousStrategyError(PreprocessingError, ValueError):
    """A tamper strategy would not change anything."""
    pass
