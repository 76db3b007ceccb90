"""
File formats: matrix and domain CSVs, covariance-set / result JSON, metrics
logs and flat float64 checkpoints.

CSV numbers are written with 17 significant digits; JSON floats use Python's
shortest round-trip repr. Both reload to the identical float64.
"""

import csv
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import ValidationError

from ..exceptions import SchemaMismatch
from ..models.matrices import CovarianceSet, Matrix
from ..models.params import ModelParams
from ..schemas.files import CheckpointEntry, CheckpointManifest, CovarianceSetFile, DatasetManifest
from ..schemas.training import TrainerConfig

logger = structlog.get_logger(__name__)

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.17g"


def format_float(value: float) -> str:
    return FLOAT_FORMAT % value


def _parse_cell(cell: str, path: PathLike, row: int, column: int) -> float:
    try:
        value = float(cell)
    except ValueError:
        raise SchemaMismatch(f"non-numeric cell {cell!r}", path=str(path), row=row, column=column) from None
    if not np.isfinite(value):
        raise SchemaMismatch(f"non-finite cell {cell!r}", path=str(path), row=row, column=column)
    return value


def read_rows(path: PathLike, header: bool = False) -> List[Tuple[int, List[str]]]:
    """(1-based file row, cells) pairs; ``header`` drops the first non-blank row."""
    with open(path, newline="") as fh:
        rows = [(i, r) for i, r in enumerate(csv.reader(fh), start=1) if r and any(c.strip() for c in r)]
    return rows[1:] if header else rows


def read_matrix_csv(path: PathLike, header: bool = False) -> Matrix:
    rows = read_rows(path, header)
    if not rows:
        raise SchemaMismatch("empty matrix file", path=str(path))
    width = len(rows[0][1])
    values = []
    for lineno, cells in rows:
        if len(cells) != width:
            raise SchemaMismatch(f"expected {width} columns, got {len(cells)}", path=str(path), row=lineno)
        values.append([_parse_cell(c, path, lineno, j + 1) for j, c in enumerate(cells)])
    return np.array(values, dtype=np.float64)


def write_matrix_csv(path: PathLike, matrix: Matrix, header: Optional[Sequence[str]] = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if header:
            writer.writerow(header)
        for row in np.atleast_2d(matrix):
            writer.writerow([format_float(v) for v in row])


def read_domain_csv(path: PathLike, header: bool = True) -> Tuple[Matrix, np.ndarray]:
    """p feature columns followed by one non-negative integer label column."""
    rows = read_rows(path, header)
    if not rows:
        return np.zeros((0, 0)), np.zeros(0, dtype=np.int64)
    width = len(rows[0][1])
    if width < 2:
        raise SchemaMismatch("need at least one feature column and a label column", path=str(path), row=rows[0][0])
    features, labels = [], []
    for lineno, cells in rows:
        if len(cells) != width:
            raise SchemaMismatch(f"expected {width} columns, got {len(cells)}", path=str(path), row=lineno)
        features.append([_parse_cell(c, path, lineno, j + 1) for j, c in enumerate(cells[:-1])])
        label = _parse_cell(cells[-1], path, lineno, width)
        if label != int(label) or label < 0:
            raise SchemaMismatch(f"label {cells[-1]!r} is not a class id", path=str(path), row=lineno, column=width)
        labels.append(int(label))
    return np.array(features, dtype=np.float64), np.array(labels, dtype=np.int64)


def write_domain_csv(path: PathLike, inputs: Matrix, labels: np.ndarray) -> None:
    p = inputs.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(p)] + ["label"])
        for row, label in zip(inputs, labels):
            writer.writerow([format_float(v) for v in row] + [int(label)])


# ----------------------------------------------------------------------
# JSON

def write_json(path: PathLike, payload: Any) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_json(path: PathLike) -> Any:
    with open(path) as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise SchemaMismatch(f"invalid JSON: {e.msg}", path=str(path), row=e.lineno, column=e.colno) from None


def read_covariance_set(path: PathLike) -> CovarianceSet:
    try:
        doc = CovarianceSetFile.model_validate(read_json(path))
    except ValidationError as e:
        raise SchemaMismatch(str(e), path=str(path)) from None
    return CovarianceSet.from_arrays([np.array(dom.S) for dom in doc.domains], [dom.n for dom in doc.domains])


def write_covariance_set(path: PathLike, covs: CovarianceSet) -> None:
    write_json(path, covariance_set_dict(covs))


def covariance_set_dict(covs: CovarianceSet) -> Dict[str, Any]:
    return {"d": covs.dim, "domains": [{"n": n, "S": s.tolist()} for s, n in covs]}


def read_manifest(path: PathLike) -> DatasetManifest:
    try:
        return DatasetManifest.model_validate(read_json(path))
    except ValidationError as e:
        raise SchemaMismatch(str(e), path=str(path)) from None


def resolve_domain_paths(manifest_path: PathLike, manifest: DatasetManifest) -> List[Path]:
    """Domain paths are taken relative to the manifest's directory."""
    base = Path(manifest_path).parent
    return [base / p for p in manifest.domains]


# ----------------------------------------------------------------------
# metrics and checkpoints

METRICS_COLUMNS = ("step", "l_task", "l_cpca", "l_total", "eta_mean", "heldout_acc")


def write_metrics_csv(path: PathLike, rows: Iterable[Any]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(
                [
                    row.step,
                    format_float(row.l_task),
                    format_float(row.l_cpca),
                    format_float(row.l_total),
                    format_float(row.eta_mean),
                    "" if row.heldout_acc is None else format_float(row.heldout_acc),
                ]
            )


def write_table_csv(path: PathLike, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_float(v) if isinstance(v, float) else v for v in row])


def save_checkpoint(directory: PathLike, params: ModelParams) -> Path:
    """Write ``params.bin`` (little-endian float64) and ``params.json`` (layout)."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries, offset = [], 0
    for name in params:
        arr = params[name]
        entries.append(CheckpointEntry(name=name, shape=list(arr.shape), offset=offset))
        offset += arr.size
    flat = np.concatenate([params[n].ravel() for n in params]).astype("<f8")
    flat.tofile(directory / "params.bin")
    write_json(directory / "params.json", CheckpointManifest(entries=entries).model_dump())
    logger.info("checkpoint.saved", path=str(directory), values=int(offset))
    return directory / "params.bin"


def load_checkpoint(directory: PathLike, config: TrainerConfig) -> ModelParams:
    directory = Path(directory)
    try:
        manifest = CheckpointManifest.model_validate(read_json(directory / "params.json"))
    except ValidationError as e:
        raise SchemaMismatch(str(e), path=str(directory / "params.json")) from None
    flat = np.fromfile(directory / "params.bin", dtype="<f8")
    arrays = {}
    for entry in manifest.entries:
        size = entry.shape[0] * entry.shape[1]
        if entry.offset + size > flat.size:
            raise SchemaMismatch(f"{entry.name} runs past the end of params.bin", path=str(directory))
        arrays[entry.name] = flat[entry.offset : entry.offset + size].reshape(entry.shape).astype(np.float64)
    return ModelParams.from_arrays(arrays, config)
