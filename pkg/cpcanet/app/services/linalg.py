"""
Dense linear-algebra kernel: covariance estimation, Cayley retraction, norms
and off-diagonal energy.

Every function is pure; inputs are never modified.
"""

from typing import List, Tuple

import numpy as np
import scipy.linalg
from numpy.typing import ArrayLike

from ..exceptions import DegenerateBatch, DimensionTooSmall, ShapeMismatch
from ..models.matrices import (
    CovarianceMatrix,
    Matrix,
    OrthogonalBasis,
    SkewMatrix,
    as_matrix,
)


def symmetrize(m: Matrix) -> Matrix:
    return (m + m.T) / 2.0


def covariance(samples: ArrayLike) -> CovarianceMatrix:
    """Unbiased sample covariance of the rows of an N x d matrix.

    Rows are put in lexicographic order before summation, so any permutation of
    the same samples produces bit-identical output.
    """
    x = as_matrix(samples, "Matrix")
    n = x.shape[0]
    if n < 2:
        raise DegenerateBatch(n)
    order = np.lexsort(x.T[::-1])
    x = x[order]
    mean = x.sum(axis=0) / n
    centered = x - mean
    cov = symmetrize(centered.T @ centered / (n - 1))
    return CovarianceMatrix.unchecked(cov)


def cayley(a: SkewMatrix) -> OrthogonalBasis:
    """Cayley retraction (I - A/2)(I + A/2)^{-1}.

    The two factors commute, so the product is obtained from one LU solve of
    (I + A/2) X = (I - A/2); no inverse is formed.
    """
    values = a.values
    eye = np.eye(values.shape[0])
    lu = scipy.linalg.lu_factor(eye + values / 2.0)
    return OrthogonalBasis(scipy.linalg.lu_solve(lu, eye - values / 2.0))


def frobenius_norm(m: ArrayLike) -> float:
    arr = as_matrix(m)
    return float(np.sqrt(np.sum(arr * arr)))


def offdiag_energy(m: ArrayLike) -> float:
    """(||M||_F^2 - ||diag M||_F^2) / (d(d-1))."""
    arr = as_matrix(m)
    if arr.shape[0] != arr.shape[1]:
        raise ShapeMismatch(f"offdiag_energy needs a square matrix, got {arr.shape}")
    d = arr.shape[0]
    if d < 2:
        raise DimensionTooSmall(d)
    diag = np.diag(arr)
    return float((np.sum(arr * arr) - np.sum(diag * diag)) / (d * (d - 1)))


def transform(s: Matrix, basis: OrthogonalBasis) -> Matrix:
    """Covariance expressed in the basis: beta^T S beta (symmetrized)."""
    b = basis.values
    return symmetrize(b.T @ s @ b)


def project_samples(samples: ArrayLike, basis: OrthogonalBasis) -> Matrix:
    """Sample common principal components U = X beta."""
    x = as_matrix(samples)
    if x.shape[1] != basis.dim:
        raise ShapeMismatch(f"samples have {x.shape[1]} columns, basis has dimension {basis.dim}")
    return x @ basis.values


def diag_residual(basis: OrthogonalBasis, s: Matrix) -> float:
    """Largest absolute off-diagonal entry of beta^T S beta."""
    t = transform(s, basis)
    return float(np.max(np.abs(t - np.diag(np.diag(t)))))


def random_rotation(dim: int, rng: np.random.Generator) -> OrthogonalBasis:
    """Haar-distributed rotation: QR of a Gaussian matrix, sign-corrected, det forced to +1."""
    q, r = np.linalg.qr(rng.standard_normal((dim, dim)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return OrthogonalBasis(q)


def signed_permutation_match(estimate: OrthogonalBasis, truth: OrthogonalBasis) -> List[Tuple[int, int, float]]:
    """Pair each truth column with an estimate column up to sign.

    Greedy on |cosine|, largest first. Returns (truth_col, estimate_col, angle)
    triples, the angle in radians.
    """
    if estimate.dim != truth.dim:
        raise ShapeMismatch(f"dimensions differ: {estimate.dim} vs {truth.dim}")
    cos = np.abs(truth.values.T @ estimate.values)
    d = truth.dim
    free_truth = set(range(d))
    free_est = set(range(d))
    matches = []
    for flat in np.argsort(-cos, axis=None, kind="stable"):
        i, j = divmod(int(flat), d)
        if i in free_truth and j in free_est:
            angle = float(np.arccos(np.clip(cos[i, j], 0.0, 1.0)))
            matches.append((i, j, angle))
            free_truth.discard(i)
            free_est.discard(j)
    return sorted(matches)


def max_column_angle(estimate: OrthogonalBasis, truth: OrthogonalBasis) -> float:
    return max(angle for _, _, angle in signed_permutation_match(estimate, truth))
