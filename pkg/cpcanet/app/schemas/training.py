"""
Training, dataset and sweep configuration schemas.

Keys accept the short names used in config files (``p``, ``D``, ``d``, ``T``,
``K``, ``C``, ``batch-per-domain``, ...) as aliases of the Python field names.
"""

from enum import Enum
from typing import Any, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .solver import FgConfig, UnfoldConfig


class ModelKind(str, Enum):
    """Which pipeline the trainer optimizes"""
    CPCANET = "cpcanet"
    ERM = "erm"


class TrainerConfig(BaseModel):
    """Model dimensions and optimization settings of the toy trainer"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    # Dimensions
    input_dim: int = Field(20, ge=1, alias="p", description="Raw input dimension")
    feature_dim: int = Field(32, ge=1, alias="D", description="Backbone feature dimension")
    proj_dim: int = Field(8, ge=2, alias="d", description="Bottleneck / projection dimension")
    stages: int = Field(3, ge=1, alias="T", description="Unfolded solver stages")
    n_domains: int = Field(3, ge=1, alias="K", description="Training domains per batch")
    n_classes: int = Field(4, ge=2, alias="C", description="Number of classes")
    backbone_hidden: int = Field(64, ge=1, alias="backbone-hidden", description="Hidden width of the toy backbone")
    hyper_hidden: int = Field(64, ge=1, alias="hyper-hidden", description="Hidden width of the step-size hypernetwork")

    # Optimization
    batch_per_domain: int = Field(32, ge=2, alias="batch-per-domain", description="Rows drawn per training domain")
    steps: int = Field(2000, ge=1, description="Optimizer steps")
    lr_backbone: float = Field(1e-3, gt=0, alias="lr-backbone", description="Learning rate of backbone and classifier")
    lr_cpcanet: float = Field(1e-2, gt=0, alias="lr-cpcanet", description="Learning rate of the CPCANet heads")
    weight_decay: float = Field(0.0, ge=0, alias="weight-decay", description="Decoupled weight decay (AdamW when > 0)")
    lambda_cpca: float = Field(1e5, ge=0, alias="lambda-cpca", description="Weight of the alignment loss")
    smoothing: float = Field(0.1, ge=0, lt=1, description="Label smoothing of the task loss")
    dropout: float = Field(0.5, ge=0, lt=1, description="Dropout on hypernetwork and modulation hidden layers")
    seed: int = Field(0, description="Seed of parameter init, batch sampling and dropout")
    eval_interval: int = Field(100, ge=1, alias="eval-interval", description="Steps between held-out evaluations")
    freeze_modulation: bool = Field(False, alias="freeze-modulation", description="Keep modulation output layers at zero")
    model: ModelKind = Field(ModelKind.CPCANET, description="cpcanet or erm")

    # Solver numerics
    eps: float = Field(1e-8, gt=0, description="Stabilizer in the Omega denominators")
    eps_norm: float = Field(1e-12, gt=0, alias="eps-norm", description="Stabilizer in the gradient normalization")

    @field_validator("seed")
    @classmethod
    def validate_seed(cls, v):
        """Seeds must fit in 64 bits"""
        if not 0 <= v < 2**64:
            raise ValueError("seed must be a non-negative 64-bit integer")
        return v

    def unfold_config(self) -> UnfoldConfig:
        return UnfoldConfig(stages=self.stages, proj_dim=self.proj_dim, eps=self.eps, eps_norm=self.eps_norm)


class EnsembleConfig(BaseModel):
    """Parameters of a planted common-basis covariance ensemble"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    dim: int = Field(8, ge=2, alias="d")
    n_domains: int = Field(3, ge=1, alias="K")
    spectra_low: float = Field(0.5, gt=0, alias="spectra-low")
    spectra_high: float = Field(5.0, gt=0, alias="spectra-high")
    noise: float = Field(0.0, ge=0)
    n_samples: float = Field(100.0, gt=0, alias="n", description="Weight n_k attached to every domain")
    seed: int = 0

    @model_validator(mode="after")
    def check_range(self):
        if self.spectra_high <= self.spectra_low:
            raise ValueError("spectra-high must exceed spectra-low")
        return self


class DatasetConfig(BaseModel):
    """Parameters of the toy domain-generalization generator"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    input_dim: int = Field(20, ge=2, alias="p")
    n_domains: int = Field(4, ge=3, alias="K", description="All domains, the held-out one included")
    n_classes: int = Field(4, ge=2, alias="C")
    n_per_domain: int = Field(400, ge=2, alias="n-per-domain")
    spurious_strength: float = Field(1.0, ge=0, alias="spurious-strength")
    signal: float = Field(1.0, gt=0)
    heldout: Optional[int] = Field(None, ge=0, description="Held-out domain index, default K - 1")
    seed: int = 0

    @model_validator(mode="after")
    def check_dims(self):
        if self.input_dim < 2 * self.n_classes:
            raise ValueError("p must be at least 2C to fit the invariant and spurious directions")
        if self.heldout is not None and self.heldout >= self.n_domains:
            raise ValueError("heldout must index one of the K domains")
        return self


class SweepConfig(BaseModel):
    """Grid over projection dimension and unfolded stages"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    dims: List[int] = Field(default_factory=lambda: [4, 8, 16])
    stages: List[int] = Field(default_factory=lambda: [1, 3, 5])
    n_seeds: int = Field(3, ge=1, alias="n-seeds")
    workers: Optional[int] = Field(None, ge=1, description="Process-pool size, default from settings")

    @field_validator("dims")
    @classmethod
    def validate_dims(cls, v):
        if not v or any(d < 2 for d in v):
            raise ValueError("dims must be a non-empty list of integers >= 2")
        return v

    @field_validator("stages")
    @classmethod
    def validate_stages(cls, v):
        if not v or any(t < 1 for t in v):
            raise ValueError("stages must be a non-empty list of positive integers")
        return v


class RunConfig(BaseModel):
    """Everything a command can read from a config file"""
    model_config = ConfigDict(frozen=True, populate_by_name=True, extra="forbid")

    seed: Optional[int] = None
    out: Optional[str] = None
    fg: FgConfig = Field(default_factory=FgConfig)
    unfold: UnfoldConfig = Field(default_factory=UnfoldConfig)
    trainer: TrainerConfig = Field(default_factory=TrainerConfig)
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    ensemble: EnsembleConfig = Field(default_factory=EnsembleConfig)
    sweep: SweepConfig = Field(default_factory=SweepConfig)

    @model_validator(mode="before")
    @classmethod
    def fold_flat_trainer_keys(cls, data: Any) -> Any:
        """Top-level keys that name no section belong to ``trainer``.

        This lets a file hold the trainer settings (``d``, ``T``, ``lr-backbone``,
        ...) at the top level. A key given both flat and under ``[trainer]`` is
        an error.
        """
        if not isinstance(data, dict):
            return data
        flat = {k: v for k, v in data.items() if k not in cls.model_fields}
        if not flat:
            return data
        section = data.get("trainer") or {}
        if not isinstance(section, dict):
            return data
        clash = sorted(set(flat) & set(section))
        if clash:
            raise ValueError(f"trainer keys given twice: {', '.join(clash)}")
        folded = {k: v for k, v in data.items() if k in cls.model_fields}
        folded["trainer"] = {**section, **flat}
        return folded
