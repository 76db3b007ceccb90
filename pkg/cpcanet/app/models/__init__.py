"""
Value types for the toolkit.

Matrices with invariants checked at construction, domain batches and
synthetic datasets, solver results and the network parameter store.
"""

from .matrices import CovarianceMatrix, CovarianceSet, SkewMatrix, OrthogonalBasis, Matrix, as_matrix
from .batch import DomainBatch, CommonBasisEnsemble, ToyDGDataset
from .results import FgResult, StageRecord, UnfoldTrace, ForwardOutput
from .params import ModelParams, LayerSpec, layer_specs, BACKBONE, CPCANET, MODULATION_OUTPUTS

__all__ = [
    # Matrices
    "Matrix",
    "as_matrix",
    "CovarianceMatrix",
    "CovarianceSet",
    "SkewMatrix",
    "OrthogonalBasis",

    # Data
    "DomainBatch",
    "CommonBasisEnsemble",
    "ToyDGDataset",

    # Results
    "FgResult",
    "StageRecord",
    "UnfoldTrace",
    "ForwardOutput",

    # Parameters
    "ModelParams",
    "LayerSpec",
    "layer_specs",
    "BACKBONE",
    "CPCANET",
    "MODULATION_OUTPUTS",
]
