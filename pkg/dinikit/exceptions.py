"""Custom exceptions for the dinikit toolkit."""


class DiniKitError(Exception):
    """Base exception for all dinikit errors."""

    pass


class InvalidModulusError(DiniKitError):
    """Raised when a modulus is not a valid nondecreasing function vanishing at 0."""

    pass


class ParameterError(DiniKitError):
    """Raised when a parameter lies outside its documented range."""

    pass


class ResolutionError(DiniKitError):
    """Raised when a radius or ball is too small for the sampling grid."""

    pass


class NumericError(DiniKitError):
    """Raised when an iteration or a linear solve fails to converge."""

    pass


class PatchTooLargeError(DiniKitError):
    """Raised when a coordinate map degenerates on the requested patch."""

    pass


class SingularSystemError(DiniKitError):
    """Raised when a discrete system is singular and pinning is disabled."""

    pass


class ObliquenessError(DiniKitError):
    """Raised when a boundary vector field fails the obliqueness condition."""

    pass


class RejectedInputError(DiniKitError):
    """Raised when an input violates the hypotheses of a check."""

    pass


class ScenarioError(DiniKitError):
    """Raised when a scenario file cannot be parsed or validated."""

    pass


class FamilyError(DiniKitError):
    """Raised when a registered generator fails during execution."""

    pass


class InvalidFamilyArguments(DiniKitError):
    """Raised when invalid arguments are passed to a registered generator."""

    pass


class StageError(DiniKitError):
    """Raised when a scenario stage fails."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
