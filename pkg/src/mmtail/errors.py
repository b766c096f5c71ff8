"""Exception types; the CLI maps each family to an exit code."""


class MmtailError(Exception):
    """Base class for package errors."""


class InvalidModel(MmtailError, ValueError):
    """Model file does not parse or fails validation (exit 2)."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class AssumptionViolation(MmtailError):
    """The model violates a hypothesis the analysis needs (exit 3)."""


class NumericalFailure(MmtailError, RuntimeError):
    """Non-convergence, divergence or other runtime failure (exit 4)."""


class DivergenceSuspected(NumericalFailure):
    pass
