"""
Immutable matrix value types shared by every solver.

Arrays are stored as read-only float64 copies; constructors check the type's
invariant and raise InvariantViolation when it does not hold.
"""

from dataclasses import dataclass
from typing import Iterator, Sequence, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..exceptions import InvariantViolation

Matrix = NDArray[np.float64]

SYMMETRY_ATOL = 1e-12
PSD_ATOL = 1e-10
SKEW_ATOL = 1e-12
ORTHO_ATOL = 1e-10
DET_ATOL = 1e-8


def as_matrix(values: ArrayLike, type_name: str = "Matrix") -> Matrix:
    """Return a read-only 2-D float64 copy, rejecting empty or non-finite input."""
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvariantViolation(type_name, f"expected a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvariantViolation(type_name, "entries must be finite")
    arr.setflags(write=False)
    return arr


def _square(arr: Matrix, type_name: str) -> None:
    if arr.shape[0] != arr.shape[1]:
        raise InvariantViolation(type_name, f"expected a square matrix, got {arr.shape}")


@dataclass(frozen=True)
class CovarianceMatrix:
    """Symmetric positive-semidefinite d x d matrix (up to roundoff)."""

    values: Matrix

    def __init__(self, values: ArrayLike):
        arr = as_matrix(values, "CovarianceMatrix")
        _square(arr, "CovarianceMatrix")
        asym = float(np.max(np.abs(arr - arr.T)))
        if asym > SYMMETRY_ATOL:
            raise InvariantViolation("CovarianceMatrix", f"asymmetry {asym:.3e} exceeds {SYMMETRY_ATOL}")
        sym = (arr + arr.T) / 2.0
        lowest = float(np.linalg.eigvalsh(sym)[0])
        if lowest < -PSD_ATOL:
            raise InvariantViolation("CovarianceMatrix", f"smallest eigenvalue {lowest:.3e} is negative")
        sym.setflags(write=False)
        object.__setattr__(self, "values", sym)

    @classmethod
    def unchecked(cls, values: Matrix) -> "CovarianceMatrix":
        obj = object.__new__(cls)
        arr = np.array(values, dtype=np.float64, copy=True)
        arr.setflags(write=False)
        object.__setattr__(obj, "values", arr)
        return obj

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class CovarianceSet:
    """K covariance matrices of a common dimension with positive sample weights n_k."""

    matrices: Tuple[CovarianceMatrix, ...]
    weights: Tuple[float, ...]

    def __init__(self, matrices: Sequence[CovarianceMatrix], weights: Sequence[float]):
        matrices = tuple(matrices)
        weights = tuple(float(w) for w in weights)
        if len(matrices) < 1:
            raise InvariantViolation("CovarianceSet", "needs at least one domain")
        if len(matrices) != len(weights):
            raise InvariantViolation("CovarianceSet", f"{len(matrices)} matrices but {len(weights)} weights")
        dims = {m.dim for m in matrices}
        if len(dims) != 1:
            raise InvariantViolation("CovarianceSet", f"mixed dimensions {sorted(dims)}")
        if any(not np.isfinite(w) or w <= 0 for w in weights):
            raise InvariantViolation("CovarianceSet", "every weight n_k must be positive")
        object.__setattr__(self, "matrices", matrices)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def from_arrays(cls, arrays: Sequence[ArrayLike], weights: Sequence[float]) -> "CovarianceSet":
        return cls([CovarianceMatrix(a) for a in arrays], weights)

    @property
    def dim(self) -> int:
        return self.matrices[0].dim

    @property
    def n_domains(self) -> int:
        return len(self.matrices)

    def arrays(self) -> list[Matrix]:
        return [m.values for m in self.matrices]

    def __iter__(self) -> Iterator[Tuple[Matrix, float]]:
        for m, w in zip(self.matrices, self.weights):
            yield m.values, w

    def __len__(self) -> int:
        return len(self.matrices)


@dataclass(frozen=True)
class SkewMatrix:
    """Element of the Lie algebra so(d): M = -M^T."""

    values: Matrix

    def __init__(self, values: ArrayLike):
        arr = as_matrix(values, "SkewMatrix")
        _square(arr, "SkewMatrix")
        err = float(np.max(np.abs(arr + arr.T)))
        if err > SKEW_ATOL:
            raise InvariantViolation("SkewMatrix", f"|M + M^T| = {err:.3e} exceeds {SKEW_ATOL}")
        object.__setattr__(self, "values", arr)

    @classmethod
    def zeros(cls, dim: int) -> "SkewMatrix":
        return cls(np.zeros((dim, dim)))

    @property
    def dim(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class OrthogonalBasis:
    """Rotation matrix: beta^T beta = I and det beta = +1."""

    values: Matrix

    def __init__(self, values: ArrayLike):
        arr = as_matrix(values, "OrthogonalBasis")
        _square(arr, "OrthogonalBasis")
        err = float(np.linalg.norm(arr.T @ arr - np.eye(arr.shape[0])))
        if err > ORTHO_ATOL:
            raise InvariantViolation("OrthogonalBasis", f"||b^T b - I||_F = {err:.3e} exceeds {ORTHO_ATOL}")
        det = float(np.linalg.det(arr))
        if abs(det - 1.0) > DET_ATOL:
            raise InvariantViolation("OrthogonalBasis", f"det = {det:.12f}, expected +1")
        object.__setattr__(self, "values", arr)

    @classmethod
    def identity(cls, dim: int) -> "OrthogonalBasis":
        return cls(np.eye(dim))

    @property
    def dim(self) -> int:
        return self.values.shape[0]

    def column(self, index: int) -> Matrix:
        return self.values[:, index]
