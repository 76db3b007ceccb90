"""
Multi-domain batches and synthetic datasets with known ground truth.
"""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from numpy.typing import ArrayLike, NDArray

from ..exceptions import DegenerateBatch, InvariantViolation, ShapeMismatch
from .matrices import CovarianceSet, Matrix, OrthogonalBasis


@dataclass(frozen=True, init=False)
class DomainBatch:
    """Rows X with 0-based labels and domain ids; every domain appears at least twice."""

    inputs: Matrix
    labels: NDArray[np.int64]
    domains: NDArray[np.int64]
    n_domains: int

    def __init__(
        self,
        inputs: ArrayLike,
        labels: ArrayLike,
        domains: ArrayLike,
        n_domains: Optional[int] = None,
        n_classes: Optional[int] = None,
    ):
        x = np.asarray(inputs, dtype=np.float64)
        y = np.asarray(labels, dtype=np.int64).reshape(-1)
        dom = np.asarray(domains, dtype=np.int64).reshape(-1)
        if x.ndim != 2:
            raise ShapeMismatch(f"inputs must be N x p, got shape {x.shape}")
        if not (x.shape[0] == y.size == dom.size):
            raise ShapeMismatch(f"{x.shape[0]} rows, {y.size} labels, {dom.size} domain ids")
        if y.size and (y.min() < 0 or (n_classes is not None and y.max() >= n_classes)):
            raise InvariantViolation("DomainBatch", "labels out of range")
        if dom.size and dom.min() < 0:
            raise InvariantViolation("DomainBatch", "negative domain id")
        k = int(n_domains if n_domains is not None else (dom.max() + 1 if dom.size else 0))
        if dom.size and dom.max() >= k:
            raise InvariantViolation("DomainBatch", f"domain id {int(dom.max())} outside 0..{k - 1}")
        counts = np.bincount(dom, minlength=k)
        for domain, count in enumerate(counts):
            if count < 2:
                raise DegenerateBatch(int(count), domain=domain)
        for name, arr in (("inputs", x), ("labels", y), ("domains", dom)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "n_domains", k)

    @property
    def size(self) -> int:
        return int(self.inputs.shape[0])

    def rows(self, domain: int) -> NDArray[np.int64]:
        return np.flatnonzero(self.domains == domain)


@dataclass(frozen=True)
class CommonBasisEnsemble:
    truth: OrthogonalBasis
    spectra: Matrix  # K x d
    noise: float
    covariances: CovarianceSet


@dataclass(frozen=True)
class ToyDGDataset:
    """K labelled domains sharing class means in an invariant subspace.

    ``rotation`` holds the planted directions: columns 0..C-1 carry the class
    means, columns C..2C-1 the spurious per-domain directions, the rest nuisance.
    """

    domains: Tuple[Tuple[Matrix, NDArray[np.int64]], ...]
    heldout: int
    rotation: OrthogonalBasis
    spurious_correlation: Tuple[float, ...]
    n_classes: int

    @property
    def n_domains(self) -> int:
        return len(self.domains)

    @property
    def input_dim(self) -> int:
        return int(self.domains[0][0].shape[1])

    def training_domains(self) -> List[Tuple[Matrix, NDArray[np.int64]]]:
        return [dom for k, dom in enumerate(self.domains) if k != self.heldout]

    def heldout_domain(self) -> Tuple[Matrix, NDArray[np.int64]]:
        return self.domains[self.heldout]
