"""
Solver configuration schemas.

These hold the parameters of the classical pairwise-rotation solver and of
the unfolded Riemannian solver.
"""

from pydantic import BaseModel, ConfigDict, Field


class FgConfig(BaseModel):
    """Parameters of the Flury-Gautschi pairwise-rotation sweeps"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    tol: float = Field(1e-10, gt=0, description="Stop when the largest rotation in a sweep is below this (radians)")
    max_sweeps: int = Field(100, ge=1, alias="max-sweeps", description="Upper bound on full sweeps")
    lambda_floor: float = Field(1e-10, gt=0, alias="lambda-floor", description="Lower clamp for transformed variances")


class UnfoldConfig(BaseModel):
    """Parameters of the deep-unfolded solver"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    stages: int = Field(3, ge=1, alias="T", description="Number of unfolded stages")
    eps: float = Field(1e-8, gt=0, description="Stabilizer in the Omega denominators")
    eps_norm: float = Field(1e-12, gt=0, alias="eps-norm", description="Stabilizer in the gradient normalization")
    proj_dim: int = Field(256, ge=2, alias="d", description="Projection dimension")
    lambda_floor: float = Field(1e-10, gt=0, alias="lambda-floor", description="Clamp used by the recorded objective")