"""
Classical common-principal-component estimator.

Pairwise-rotation sweeps in the manner of Flury and Gautschi: every column
pair (l, m) is rotated by the closest-to-identity 2x2 rotation that
diagonalizes the ML weighting matrix restricted to that pair, with the
transformed variances recomputed per pair. Also hosts the ML stationarity
residual and the negative log-likelihood objective.
"""

from typing import Optional

import numpy as np
import structlog

from ..exceptions import NotConverged
from ..models.matrices import CovarianceSet, Matrix, OrthogonalBasis
from ..models.results import FgResult
from ..schemas.solver import FgConfig

logger = structlog.get_logger(__name__)


def lambdas(basis: OrthogonalBasis, covs: CovarianceSet) -> Matrix:
    """K x d matrix of transformed variances diag(beta^T S_k beta)."""
    b = basis.values
    return np.array([np.sum(b * (s @ b), axis=0) for s in covs.arrays()])


def weighted_torque(basis: OrthogonalBasis, covs: CovarianceSet, lambda_floor: float) -> Matrix:
    """Sum_k n_k (beta^T S_k beta) * Omega_k with the floored denominator."""
    b = basis.values
    d = b.shape[0]
    total = np.zeros((d, d))
    for s, n in covs:
        st = b.T @ s @ b
        st = (st + st.T) / 2.0
        lam = np.diag(st)
        omega = (lam[:, None] - lam[None, :]) / (lam[:, None] * lam[None, :] + lambda_floor)
        total += n * st * omega
    return total


def ml_residual(basis: OrthogonalBasis, covs: CovarianceSet, lambda_floor: float = 1e-10) -> float:
    """Largest violation of the ML stationarity equations over pairs l != m."""
    torque = weighted_torque(basis, covs, lambda_floor)
    np.fill_diagonal(torque, 0.0)
    return float(np.max(np.abs(torque)))


def negloglik(basis: OrthogonalBasis, covs: CovarianceSet, lambda_floor: float = 1e-10) -> float:
    """J(beta) = sum_k n_k sum_l log lambda_kl, with lambda clamped at lambda_floor."""
    lam = np.maximum(lambdas(basis, covs), lambda_floor)
    weights = np.asarray(covs.weights)
    return float(np.sum(weights * np.sum(np.log(lam), axis=1)))


def rotation_angle(h: Matrix) -> float:
    """Angle in (-pi/4, pi/4] of the rotation [[c, -s], [s, c]] diagonalizing symmetric 2x2 h."""
    h11, h12, h22 = h[0, 0], (h[0, 1] + h[1, 0]) / 2.0, h[1, 1]
    if h12 == 0.0:
        return 0.0
    denom = h11 - h22
    if denom == 0.0:
        return np.pi / 4.0
    return 0.5 * float(np.arctan(2.0 * h12 / denom))


def _canonicalize(b: Matrix, covs: CovarianceSet) -> Matrix:
    """Order columns by descending weighted variance, make each column's
    largest-magnitude entry positive, then restore det +1 on the last column."""
    weights = np.asarray(covs.weights)
    lam = np.array([np.sum(b * (s @ b), axis=0) for s in covs.arrays()])
    order = np.argsort(-(weights @ lam), kind="stable")
    b = b[:, order].copy()
    for j in range(b.shape[1]):
        lead = int(np.argmax(np.abs(b[:, j])))
        if b[lead, j] < 0:
            b[:, j] = -b[:, j]
    if np.linalg.det(b) < 0:
        b[:, -1] = -b[:, -1]
    return b


def fg_fit(covs: CovarianceSet, config: Optional[FgConfig] = None, strict: bool = False) -> FgResult:
    """Estimate the common basis of a covariance set.

    A non-converged run still returns its result, flagged through
    ``converged=False``; with ``strict=True`` NotConverged is raised instead.
    """
    config = config or FgConfig()
    d = covs.dim
    mats = covs.arrays()
    weights = covs.weights
    floor = config.lambda_floor
    b = np.eye(d)

    sweeps = 0
    max_rotation = np.inf
    for sweeps in range(1, config.max_sweeps + 1):
        max_rotation = 0.0
        for l in range(d - 1):
            for m in range(l + 1, d):
                cols = b[:, [l, m]]
                h = np.zeros((2, 2))
                for s, n in zip(mats, weights):
                    pair = cols.T @ s @ cols
                    lam_l, lam_m = pair[0, 0], pair[1, 1]
                    h += n * (lam_l - lam_m) / (lam_l * lam_m + floor) * pair
                theta = rotation_angle(h)
                if theta == 0.0:
                    continue
                c, sn = np.cos(theta), np.sin(theta)
                b[:, l], b[:, m] = c * cols[:, 0] + sn * cols[:, 1], -sn * cols[:, 0] + c * cols[:, 1]
                max_rotation = max(max_rotation, abs(theta))
        if max_rotation < config.tol:
            break

    converged = max_rotation < config.tol
    basis = OrthogonalBasis(_canonicalize(b, covs))
    lam = np.maximum(lambdas(basis, covs), 0.0)
    residual = ml_residual(basis, covs, floor)

    if converged:
        logger.info("fg_fit.converged", sweeps=sweeps, max_rotation=max_rotation, residual=residual)
    else:
        logger.warning("fg_fit.not_converged", sweeps=sweeps, max_rotation=max_rotation, residual=residual)
        if strict:
            raise NotConverged(sweeps, max_rotation)

    return FgResult(
        basis=basis,
        lambdas=lam,
        sweeps_used=sweeps,
        final_max_rotation=float(max_rotation),
        converged=converged,
        residual=residual,
    )
