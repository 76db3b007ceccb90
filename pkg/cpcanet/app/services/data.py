"""
Synthetic data with known ground truth, plus per-domain CSV ingestion.
"""

from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..exceptions import DegenerateBatch, SchemaMismatch
from ..models.batch import CommonBasisEnsemble, DomainBatch, ToyDGDataset
from ..models.matrices import CovarianceMatrix, CovarianceSet, Matrix
from ..schemas.files import DatasetManifest
from ..utils import serialization
from . import linalg

logger = structlog.get_logger(__name__)

SPECTRA_GAP = 0.05


def gapped_spectrum(dim: int, low: float, high: float, rng: np.random.Generator) -> np.ndarray:
    """``dim`` values in [low, high] whose sorted gaps are all at least 5% of the range.

    When ``dim`` values cannot fit at that spacing the gap shrinks to range / dim.
    Returned in random order.
    """
    span = high - low
    gap = min(SPECTRA_GAP * span, span / dim)
    slack = span - (dim - 1) * gap
    base = np.sort(rng.uniform(0.0, slack, size=dim))
    values = low + base + gap * np.arange(dim)
    return rng.permutation(values)


def _unit_symmetric_noise(dim: int, rng: np.random.Generator) -> Matrix:
    g = rng.standard_normal((dim, dim))
    e = (g + g.T) / 2.0
    return e / np.linalg.norm(e)


def _psd_floor(s: Matrix) -> Matrix:
    w, v = np.linalg.eigh(s)
    if w.min() >= 0.0:
        return s
    return linalg.symmetrize((v * np.maximum(w, 0.0)) @ v.T)


def gen_common_ensemble(
    dim: int,
    n_domains: int,
    spectra_range: Tuple[float, float] = (0.5, 5.0),
    noise: float = 0.0,
    seed: int = 0,
    n_samples: float = 100.0,
) -> CommonBasisEnsemble:
    """K covariances sharing the planted basis Q, exactly commuting at noise 0."""
    low, high = spectra_range
    rng = np.random.default_rng(seed)
    q = linalg.random_rotation(dim, rng)
    spectra = np.array([gapped_spectrum(dim, low, high, rng) for _ in range(n_domains)])
    mats = []
    for lam in spectra:
        s = (q.values * lam) @ q.values.T
        if noise > 0.0:
            s = _psd_floor(linalg.symmetrize(s + noise * _unit_symmetric_noise(dim, rng)))
        mats.append(CovarianceMatrix(linalg.symmetrize(s)))
    covs = CovarianceSet(mats, [n_samples] * n_domains)
    logger.debug("data.common_ensemble", dim=dim, n_domains=n_domains, noise=noise, seed=seed)
    return CommonBasisEnsemble(truth=q, spectra=spectra, noise=float(noise), covariances=covs)


def gen_toy_dg(
    input_dim: int,
    n_domains: int,
    n_classes: int,
    n_per_domain: int,
    spurious_strength: float,
    seed: int = 0,
    signal: float = 1.0,
    heldout: Optional[int] = None,
) -> ToyDGDataset:
    """Domains share class means along planted directions; spurious directions drift and flip.

    In the rotated coordinates of a random rotation R: class c adds ``signal`` on
    axis c in every domain and ``strength * rho_k`` on axis C + c, with rho going
    from 1.0 to 0.5 over the training domains and -1.0 on the held-out one.
    Remaining axes get variance 1 + strength * u_k with u_k uniform on [0, 1).
    """
    if input_dim < 2 * n_classes:
        raise SchemaMismatch(f"p = {input_dim} cannot hold 2C = {2 * n_classes} planted directions")
    heldout = n_domains - 1 if heldout is None else heldout
    rng = np.random.default_rng(seed)
    rotation = linalg.random_rotation(input_dim, rng)
    train_rho = iter(np.linspace(1.0, 0.5, n_domains - 1))
    rho = tuple(-1.0 if k == heldout else float(next(train_rho)) for k in range(n_domains))
    nuisance_scale = np.sqrt(1.0 + spurious_strength * rng.uniform(0.0, 1.0, size=n_domains))

    domains = []
    rows = np.arange(n_per_domain)
    for k in range(n_domains):
        labels = rng.integers(0, n_classes, size=n_per_domain)
        coords = rng.standard_normal((n_per_domain, input_dim))
        coords[:, 2 * n_classes :] *= nuisance_scale[k]
        coords[rows, labels] += signal
        coords[rows, n_classes + labels] += spurious_strength * rho[k]
        domains.append((coords @ rotation.values.T, labels.astype(np.int64)))
    logger.debug("data.toy_dg", p=input_dim, n_domains=n_domains, strength=spurious_strength, seed=seed)
    return ToyDGDataset(
        domains=tuple(domains),
        heldout=heldout,
        rotation=rotation,
        spurious_correlation=rho,
        n_classes=n_classes,
    )


class DomainStream:
    """Endless iterator of DomainBatch with ``batch_per_domain`` rows from every domain.

    Rows are drawn without replacement, or with replacement when a domain has
    fewer rows than the batch needs. Single consumer.
    """

    def __init__(
        self,
        domains: Sequence[Tuple[Matrix, np.ndarray]],
        batch_per_domain: int,
        rng: np.random.Generator,
        n_classes: Optional[int] = None,
    ):
        for k, (x, _) in enumerate(domains):
            if x.shape[0] < 2:
                raise DegenerateBatch(int(x.shape[0]), domain=k)
        self.domains = [(np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.int64)) for x, y in domains]
        self.batch_per_domain = batch_per_domain
        self.rng = rng
        self.n_classes = n_classes

    def __iter__(self) -> Iterator[DomainBatch]:
        return self

    def __next__(self) -> DomainBatch:
        xs, ys, ds = [], [], []
        for k, (x, y) in enumerate(self.domains):
            n = x.shape[0]
            idx = self.rng.choice(n, size=self.batch_per_domain, replace=n < self.batch_per_domain)
            xs.append(x[idx])
            ys.append(y[idx])
            ds.append(np.full(self.batch_per_domain, k))
        return DomainBatch(
            np.vstack(xs),
            np.concatenate(ys),
            np.concatenate(ds),
            n_domains=len(self.domains),
            n_classes=self.n_classes,
        )


def load_domain_csv(
    paths: Sequence[str | Path],
    batch_per_domain: int = 32,
    seed: int = 0,
    n_classes: Optional[int] = None,
    header: bool = True,
) -> DomainStream:
    """Read one CSV per domain (p features + integer label) into a batch stream."""
    domains: List[Tuple[Matrix, np.ndarray]] = []
    width = None
    for k, path in enumerate(paths):
        x, y = serialization.read_domain_csv(path, header)
        if x.shape[0] < 2:
            raise DegenerateBatch(int(x.shape[0]), domain=k)
        if width is not None and x.shape[1] != width:
            raise SchemaMismatch(f"{x.shape[1]} feature columns, expected {width}", path=str(path))
        width = x.shape[1]
        domains.append((x, y))
    logger.info("data.loaded", domains=len(domains), p=width)
    return DomainStream(domains, batch_per_domain, np.random.default_rng(seed), n_classes)


def write_toy_dataset(directory: str | Path, dataset: ToyDGDataset) -> Path:
    """One CSV per domain plus ``manifest.json``; returns the manifest path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    names = []
    for k, (x, y) in enumerate(dataset.domains):
        name = f"domain_{k}.csv"
        serialization.write_domain_csv(directory / name, x, y)
        names.append(name)
    manifest = DatasetManifest(domains=names, heldout=dataset.heldout, p=dataset.input_dim, C=dataset.n_classes)
    path = directory / "manifest.json"
    serialization.write_json(path, manifest.model_dump())
    return path


def load_manifest_dataset(path: str | Path) -> Tuple[DatasetManifest, List[Tuple[Matrix, np.ndarray]]]:
    """Manifest plus every domain's (X, y), the held-out one included."""
    manifest = serialization.read_manifest(path)
    domains = []
    for k, domain_path in enumerate(serialization.resolve_domain_paths(path, manifest)):
        x, y = serialization.read_domain_csv(domain_path, manifest.header)
        if x.shape[0] < 2:
            raise DegenerateBatch(int(x.shape[0]), domain=k)
        if x.shape[1] != manifest.p:
            raise SchemaMismatch(f"{x.shape[1]} feature columns, manifest p = {manifest.p}", path=str(domain_path))
        if y.size and y.max() >= manifest.C:
            raise SchemaMismatch(f"label {int(y.max())} outside 0..{manifest.C - 1}", path=str(domain_path))
        domains.append((x, y))
    return manifest, domains
