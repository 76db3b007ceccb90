"""
Custom exceptions for the CPCANet toolkit.

Every error carries a technical ``detail``, a plain ``message`` saying what went
wrong, a short list of ``suggestions`` and a stable ``error_code``. The command
line maps ``exit_code`` straight to the process exit status.
"""

from typing import Optional, List
from datetime import datetime, timezone


class CPCANetError(Exception):
    """
    Base exception class for the toolkit.

    All custom exceptions inherit from this class so the CLI can report them
    uniformly and pick the exit status from ``exit_code``.
    """

    error_code: str = "CPCANET_ERROR"
    exit_code: int = 1

    def __init__(
        self,
        detail: str,
        message: Optional[str] = None,
        suggestions: Optional[List[str]] = None,
        error_code: Optional[str] = None,
    ):
        self.detail = detail
        self.message = message or detail
        self.suggestions = suggestions or []
        if error_code is not None:
            self.error_code = error_code
        self.timestamp = datetime.now(timezone.utc).isoformat()
        super().__init__(detail)

    def to_dict(self) -> dict:
        return {
            "error": self.detail,
            "message": self.message,
            "suggestions": self.suggestions,
            "error_code": self.error_code,
            "timestamp": self.timestamp,
        }


# Value and shape exceptions

class InvariantViolation(CPCANetError):
    """A value type was constructed from data that breaks its invariant"""
    error_code = "INVARIANT_VIOLATION"

    def __init__(self, type_name: str, detail: str):
        self.type_name = type_name
        super().__init__(
            detail=f"{type_name}: {detail}",
            message=f"The data does not form a valid {type_name}.",
            suggestions=[
                "Symmetrize covariance input before saving it",
                "Check the matrix dimensions in the input file",
            ],
        )


class DegenerateBatch(CPCANetError):
    """A domain has fewer than two samples, so its covariance is undefined"""
    error_code = "DEGENERATE_BATCH"

    def __init__(self, n_samples: int, domain: Optional[int] = None):
        self.n_samples = n_samples
        self.domain = domain
        where = f" in domain {domain}" if domain is not None else ""
        super().__init__(
            detail=f"need at least 2 samples{where}, got {n_samples}",
            message="A covariance needs at least two samples per domain.",
            suggestions=[
                "Increase the batch size per domain",
                "Drop domains that have a single row",
            ],
        )


class DimensionTooSmall(CPCANetError):
    """Off-diagonal energy is undefined for d < 2"""
    error_code = "DIMENSION_TOO_SMALL"

    def __init__(self, dim: int):
        self.dim = dim
        super().__init__(
            detail=f"dimension must be at least 2, got {dim}",
            message="Off-diagonal energy needs at least a 2x2 matrix.",
        )


class ShapeMismatch(CPCANetError):
    """Operand shapes are inconsistent"""
    error_code = "SHAPE_MISMATCH"

    def __init__(self, detail: str):
        super().__init__(detail=detail, message="Matrix shapes do not line up.")


class UnboundInput(CPCANetError):
    """A graph input was not given a value"""
    error_code = "UNBOUND_INPUT"

    def __init__(self, name: str):
        self.name = name
        super().__init__(
            detail=f"input {name!r} is not bound",
            message="Every graph input needs a value before evaluation.",
        )


class NotEvaluated(CPCANetError):
    """backward was called before evaluate"""
    error_code = "NOT_EVALUATED"

    def __init__(self):
        super().__init__(
            detail="graph has not been evaluated",
            message="Run evaluate before backward.",
        )


class WrongDomainCount(CPCANetError):
    """The batch holds a different number of domains than the model was built for"""
    error_code = "WRONG_DOMAIN_COUNT"

    def __init__(self, expected: int, got: int):
        self.expected = expected
        self.got = got
        super().__init__(
            detail=f"expected {expected} domains, got {got}",
            message="The hypernetwork input size is fixed by the domain count.",
            suggestions=["Sample every training domain in each batch"],
        )


class StepSizeOutOfRange(CPCANetError):
    """An explicit step size lies outside (0, 0.5)"""
    error_code = "STEP_SIZE_OUT_OF_RANGE"

    def __init__(self, value: float):
        self.value = value
        super().__init__(
            detail=f"step size {value!r} is outside (0, 0.5)",
            message="Unfolded step sizes must lie strictly between 0 and 0.5.",
        )


# Solver exceptions

class NotConverged(CPCANetError):
    """The FG sweeps ran out before the rotation angles dropped below tol"""
    error_code = "NOT_CONVERGED"
    exit_code = 2

    def __init__(self, sweeps: int, max_rotation: float):
        self.sweeps = sweeps
        self.max_rotation = max_rotation
        super().__init__(
            detail=f"no convergence after {sweeps} sweeps (last max rotation {max_rotation:.3e} rad)",
            message="The pairwise-rotation solver did not reach its tolerance.",
            suggestions=["Raise max_sweeps", "Loosen tol"],
        )


class GradcheckFailed(CPCANetError):
    """Analytic and finite-difference gradients disagree"""
    error_code = "GRADCHECK_FAILED"
    exit_code = 3

    def __init__(self, scope: str, worst: float, threshold: float):
        self.scope = scope
        self.worst = worst
        self.threshold = threshold
        super().__init__(
            detail=f"{scope}: worst relative error {worst:.3e} exceeds {threshold:.0e}",
            message="An adjoint does not match its finite-difference estimate.",
        )


# Input exceptions

class SchemaMismatch(CPCANetError):
    """A data file does not match the expected layout"""
    error_code = "SCHEMA_MISMATCH"

    def __init__(self, detail: str, path: str = "", row: Optional[int] = None, column: Optional[int] = None):
        self.path = path
        self.row = row
        self.column = column
        where = []
        if path:
            where.append(path)
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(
            detail=f"{prefix}{detail}",
            message="The file does not have the expected layout.",
            suggestions=[
                "Use ',' as separator and '.' as decimal point",
                "Put the integer label in the last column",
            ],
        )


class ConfigError(CPCANetError):
    """Configuration is invalid"""
    error_code = "CONFIG_ERROR"

    def __init__(self, detail: str):
        super().__init__(
            detail=detail,
            message="The configuration could not be used.",
            suggestions=["Check key names against the documented config fields"],
        )


def create_error(
    detail: str,
    message: Optional[str] = None,
    suggestions: Optional[List[str]] = None,
    error_code: Optional[str] = None,
) -> CPCANetError:
    """
    Helper function to create ad-hoc toolkit errors.

    Args:
        detail: Technical error detail
        message: Plain description of what happened
        suggestions: List of next steps
        error_code: Optional stable code

    Returns:
        CPCANetError instance
    """
    return CPCANetError(
        detail=detail,
        message=message,
        suggestions=suggestions or [],
        error_code=error_code,
    )
