"""
Deep-unfolded CPCA solver.

T stages of normalized Riemannian gradient descent on the rotation group,
parameterized in the Lie algebra from A_0 = 0 and retracted with the Cayley
transform at every stage. The whole solve is a tape graph, so gradients reach
both the covariances and the step sizes.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np
import structlog

from ..exceptions import DimensionTooSmall, ShapeMismatch, StepSizeOutOfRange
from ..models.matrices import CovarianceSet, Matrix, OrthogonalBasis, SkewMatrix
from ..models.results import StageRecord, UnfoldTrace
from ..schemas.solver import UnfoldConfig
from . import fg, linalg
from .tape import Graph, Node

logger = structlog.get_logger(__name__)


# ----------------------------------------------------------------------
# numeric forms

def riemannian_gradient(basis: OrthogonalBasis, covs: CovarianceSet, eps: float = 1e-8) -> SkewMatrix:
    """G_A = sum_k n_k (beta^T S_k beta) * Omega_k, Omega_k[l, m] = (l_kl - l_km) / (l_kl l_km + eps).

    The factor 2 of the Euclidean gradient is left out.
    """
    return SkewMatrix(fg.weighted_torque(basis, covs, eps))


def cpca_loss(basis: OrthogonalBasis, covs: CovarianceSet) -> float:
    """Mean normalized off-diagonal energy of beta^T S_k beta over domains."""
    if covs.dim < 2:
        raise DimensionTooSmall(covs.dim)
    return float(np.mean([linalg.offdiag_energy(linalg.transform(s, basis)) for s in covs.arrays()]))


# ----------------------------------------------------------------------
# tape builders

def build_transform(g: Graph, beta: Node, s: Node) -> Node:
    t = g.matmul(g.transpose(beta), g.matmul(s, beta))
    return g.scale(g.add(t, g.transpose(t)), 0.5)


def build_cayley(g: Graph, a: Node) -> Node:
    """(I + A/2)^{-1} (I - A/2), which equals (I - A/2)(I + A/2)^{-1}."""
    eye = g.constant(np.eye(a.shape[0]))
    half = g.scale(a, 0.5)
    return g.linear_solve(g.add(eye, half), g.sub(eye, half))


def build_riemannian_gradient(
    g: Graph, beta: Node, covs: Sequence[Node], weights: Sequence[float], eps: float
) -> Node:
    d = beta.shape[0]
    ones_row = g.ones(1, d)
    total: Optional[Node] = None
    for s, n in zip(covs, weights):
        st = build_transform(g, beta, s)
        lam_rows = g.matmul(g.diag_extract(st), ones_row)  # [l, m] -> lambda_l
        lam_cols = g.transpose(lam_rows)  # [l, m] -> lambda_m
        omega = g.hadamard(
            g.sub(lam_rows, lam_cols),
            g.reciprocal(g.add_const(g.hadamard(lam_rows, lam_cols), eps)),
        )
        term = g.scale(g.hadamard(st, omega), n)
        total = term if total is None else g.add(total, term)
    return total


def build_offdiag_energy(g: Graph, m: Node) -> Node:
    d = m.shape[0]
    if d < 2:
        raise DimensionTooSmall(d)
    diag = g.diag_extract(m)
    energy = g.sub(g.sum(g.hadamard(m, m)), g.sum(g.hadamard(diag, diag)))
    return g.scale(energy, 1.0 / (d * (d - 1)))


def build_cpca_loss(g: Graph, beta: Node, covs: Sequence[Node]) -> Node:
    total: Optional[Node] = None
    for s in covs:
        e = build_offdiag_energy(g, build_transform(g, beta, s))
        total = e if total is None else g.add(total, e)
    return g.scale(total, 1.0 / len(covs))


@dataclass
class UnfoldNodes:
    """Handles into an unfolded graph: A_0..A_T and beta_0..beta_T."""

    a: List[Node]
    betas: List[Node]

    @property
    def beta_final(self) -> Node:
        return self.betas[-1]


def build_unfold(
    g: Graph,
    covs: Sequence[Node],
    weights: Sequence[float],
    eta: Node,
    config: UnfoldConfig,
) -> UnfoldNodes:
    """Unroll ``config.stages`` stages; ``eta`` is a 1 x T row of step sizes."""
    stages = config.stages
    if eta.shape != (1, stages):
        raise ShapeMismatch(f"eta must be 1 x {stages}, got {eta.shape}")
    d = covs[0].shape[0]
    a = g.constant(np.zeros((d, d)))
    nodes = UnfoldNodes(a=[a], betas=[])
    for t in range(stages):
        beta = build_cayley(g, a)
        nodes.betas.append(beta)
        grad = build_riemannian_gradient(g, beta, covs, weights, config.eps)
        inv_norm = g.reciprocal(g.add_const(g.frobenius_norm(grad), config.eps_norm))
        unit = g.hadamard(grad, g.broadcast_scalar(inv_norm, (d, d)))
        selector = np.zeros((stages, 1))
        selector[t, 0] = 1.0
        eta_t = g.matmul(eta, g.constant(selector))
        # cayley(A) = I - A + O(A^2): a descent step in the chart adds the body-frame gradient
        a = g.add(a, g.hadamard(unit, g.broadcast_scalar(eta_t, (d, d))))
        nodes.a.append(a)
    nodes.betas.append(build_cayley(g, a))
    return nodes


# ----------------------------------------------------------------------
# solver

def check_step_sizes(etas: Sequence[float], stages: int) -> Matrix:
    values = np.asarray(etas, dtype=np.float64).reshape(-1)
    if values.size != stages:
        raise ShapeMismatch(f"expected {stages} step sizes, got {values.size}")
    for eta in values:
        if not 0.0 < eta < 0.5:
            raise StepSizeOutOfRange(float(eta))
    return values.reshape(1, -1)


def _record(a: Matrix, beta: Matrix, eta: Optional[float], covs: CovarianceSet, config: UnfoldConfig) -> StageRecord:
    basis = OrthogonalBasis(beta)
    return StageRecord(
        a=SkewMatrix(a),
        beta=basis,
        eta=eta,
        objective=fg.negloglik(basis, covs, config.lambda_floor),
        offdiag=cpca_loss(basis, covs),
        grad_norm=linalg.frobenius_norm(riemannian_gradient(basis, covs, config.eps).values),
    )


def unfold_solve(
    covs: CovarianceSet, etas: Sequence[float], config: Optional[UnfoldConfig] = None
) -> tuple[OrthogonalBasis, UnfoldTrace]:
    """Run the unfolded solver with fixed step sizes and return beta_T with its trace."""
    config = config or UnfoldConfig(stages=len(etas), proj_dim=covs.dim)
    eta_row = check_step_sizes(etas, config.stages)
    d = covs.dim

    g = Graph()
    cov_nodes = [g.input(f"S{k}", (d, d)) for k in range(covs.n_domains)]
    eta = g.input("eta", (1, config.stages))
    nodes = build_unfold(g, cov_nodes, covs.weights, eta, config)
    g.set_output(build_cpca_loss(g, nodes.beta_final, cov_nodes))

    bindings = {f"S{k}": s for k, s in enumerate(covs.arrays())}
    bindings["eta"] = eta_row
    g.evaluate(bindings)

    initial = _record(g.value(nodes.a[0]), g.value(nodes.betas[0]), None, covs, config)
    stages = tuple(
        _record(g.value(nodes.a[t]), g.value(nodes.betas[t]), float(eta_row[0, t - 1]), covs, config)
        for t in range(1, config.stages + 1)
    )
    trace = UnfoldTrace(initial=initial, stages=stages)
    logger.info(
        "unfold_solve.done",
        stages=config.stages,
        initial_offdiag=initial.offdiag,
        final_offdiag=trace.final.offdiag,
        final_objective=trace.final.objective,
    )
    return trace.final.beta, trace
