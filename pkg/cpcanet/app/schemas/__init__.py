from .solver import FgConfig, UnfoldConfig
from .training import ModelKind, TrainerConfig, EnsembleConfig, DatasetConfig, SweepConfig, RunConfig
from .files import DomainCovariance, CovarianceSetFile, DatasetManifest, CheckpointEntry, CheckpointManifest

__all__ = [
    "FgConfig",
    "UnfoldConfig",
    "ModelKind",
    "TrainerConfig",
    "EnsembleConfig",
    "DatasetConfig",
    "SweepConfig",
    "RunConfig",
    "DomainCovariance",
    "CovarianceSetFile",
    "DatasetManifest",
    "CheckpointEntry",
    "CheckpointManifest",
]
