"""Exception types shared across the package."""


class SUCError(Exception):
    """Base class for all package errors."""


class DisconnectedNetwork(SUCError):
    pass


class InvalidRange(SUCError, ValueError):
    pass


class EmptySet(SUCError, ValueError):
    pass


class ShapeMismatch(SUCError, ValueError):
    pass


class InfeasibleCommitment(SUCError, ValueError):
    """A commitment matrix violates the first-stage logic (caller bug)."""


class BackendFailure(SUCError):
    """The LP/MILP backend returned a non-optimal status."""

    def __init__(self, message, status=None):
        super().__init__(message)
        self.status = status


class BatchFailure(SUCError):
    """One or more scenarios in a batch failed; ``failures`` maps index to error."""

    def __init__(self, failures):
        self.failures = dict(failures)
        idx = ", ".join(str(i) for i in sorted(self.failures))
        super().__init__(f"recourse evaluation failed for scenario(s) {idx}")


class CalibrationFailed(SUCError):
    pass


class AllMaterialized(SUCError):
    pass


class IterLimit(SUCError):
    """Iteration budget exhausted; ``solution`` carries the best result so far."""

    def __init__(self, message, solution=None):
        super().__init__(message)
        self.solution = solution


class StaleModel(SUCError):
    pass


class Diverged(SUCError):
    pass


class FormatVersionMismatch(SUCError):
    pass


class CorruptFile(SUCError):
    pass


class DivisionGuard(SUCError, ZeroDivisionError):
    pass
