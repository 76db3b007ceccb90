"""
Solver and forward-pass result records.
"""

from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .matrices import CovarianceSet, Matrix, OrthogonalBasis, SkewMatrix


@dataclass(frozen=True)
class FgResult:
    """Output of the pairwise-rotation solver."""

    basis: OrthogonalBasis
    lambdas: Matrix  # K x d, diag(beta^T S_k beta)
    sweeps_used: int
    final_max_rotation: float
    converged: bool
    residual: float

    def to_dict(self) -> dict:
        return {
            "beta": self.basis.values.tolist(),
            "lambdas": self.lambdas.tolist(),
            "sweeps": self.sweeps_used,
            "residual": self.residual,
            "final_max_rotation": self.final_max_rotation,
            "converged": self.converged,
        }


@dataclass(frozen=True)
class StageRecord:
    a: SkewMatrix
    beta: OrthogonalBasis
    eta: Optional[float]
    objective: float
    offdiag: float
    grad_norm: float


@dataclass(frozen=True)
class UnfoldTrace:
    """Per-stage record of an unfolded solve; ``initial`` is the A_0 = 0 state."""

    initial: StageRecord
    stages: Tuple[StageRecord, ...]

    @property
    def final(self) -> StageRecord:
        return self.stages[-1]

    def objectives(self) -> list[float]:
        return [self.initial.objective] + [s.objective for s in self.stages]

    def to_dict(self) -> dict:
        rows = [
            {
                "stage": 0,
                "eta": None,
                "objective": self.initial.objective,
                "offdiag": self.initial.offdiag,
                "grad_norm": self.initial.grad_norm,
            }
        ]
        for t, s in enumerate(self.stages, start=1):
            rows.append(
                {
                    "stage": t,
                    "eta": s.eta,
                    "objective": s.objective,
                    "offdiag": s.offdiag,
                    "grad_norm": s.grad_norm,
                }
            )
        return {"stages": rows, "beta": self.final.beta.values.tolist()}


@dataclass(frozen=True)
class ForwardOutput:
    logits: Matrix
    beta: OrthogonalBasis
    covariances: CovarianceSet
    l_task: float
    l_cpca: float
    l_total: float
    eta: Matrix  # length-T vector

    @property
    def predictions(self) -> np.ndarray:
        return np.argmax(self.logits, axis=1)
