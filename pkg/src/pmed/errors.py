"""Exception hierarchy.

Validation errors (bad input, violated hypotheses) map to CLI exit code 1,
runtime errors (solver failures, IO) map to exit code 2.
"""


class PmedError(Exception):
    """Base class for all package errors."""


class ValidationError(PmedError, ValueError):
    """Input or hypothesis violation."""


class CFLViolation(ValidationError):
    def __init__(self, dt, admissible):
        self.dt = dt
        self.admissible = admissible
        super().__init__(f"time step {dt:.6g} exceeds the admissible step {admissible:.6g}")


class SolverError(PmedError, RuntimeError):
    """Numerical failure during a run."""


class SupportOverflowError(SolverError):
    def __init__(self, time, detail=""):
        self.time = time
        msg = f"support reached the box boundary at t={time:.6g}"
        super().__init__(msg + (f" ({detail})" if detail else ""))


class MonotonicityError(SolverError):
    """A functional that must not increase did increase."""


class ConvergenceError(SolverError):
    """An iterative solver hit its iteration cap."""


class SnapshotError(PmedError, OSError):
    def __init__(self, message, offset=None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
