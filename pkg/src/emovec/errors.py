"""Exception and warning types shared across the package."""


class EmovecError(Exception):
    """Base class for all errors raised by this package."""


class CheckpointError(EmovecError):
    """Base class for checkpoint container format violations."""


class BadMagicError(CheckpointError):
    """File does not start with the expected magic bytes."""


class HeaderError(CheckpointError):
    """Header is truncated, malformed, or has unsupported fields."""


class PayloadError(CheckpointError):
    """Payload length does not match the header descriptors."""


class DescriptorError(CheckpointError):
    """Tensor descriptors are inconsistent (shape/nbytes/offset/order)."""


class DuplicateNameError(CheckpointError):
    """Two tensor descriptors share one name."""


class ValidationError(EmovecError):
    """A domain object violates one of its invariants."""


class CompatibilityError(EmovecError):
    """Two parameter sets do not share the same tensor name/shape layout.

    Carries the diagnostic report so callers can show what differs.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class TrainingDivergedError(EmovecError):
    """Training loss exceeded the divergence threshold."""


class EmovecWarning(UserWarning):
    """Non-fatal contract warnings (odd scaling factors, role mismatches)."""
