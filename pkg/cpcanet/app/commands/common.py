"""
Helpers shared by the command modules.
"""

import json
import sys
from pathlib import Path
from typing import Any, Optional

from ..config import Settings
from ..models.matrices import OrthogonalBasis
from ..schemas.training import RunConfig
from ..services import linalg
from ..utils.serialization import read_matrix_csv


def output_dir(args: Any, run: RunConfig, settings: Settings) -> Path:
    """--out, then the config file's ``out``, then the settings default; created if missing."""
    out = Path(args.out or run.out or settings.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def resolve_seed(args: Any, run: RunConfig, settings: Settings) -> int:
    if args.seed is not None:
        return args.seed
    if run.seed is not None:
        return run.seed
    return settings.default_seed


def explicit_seed(args: Any, run: RunConfig) -> Optional[int]:
    """The seed given on the command line or at the top of the config file, if any."""
    return args.seed if args.seed is not None else run.seed


def emit(payload: Any) -> None:
    """Primary machine-readable summary on stdout."""
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")


def add_truth_arguments(parser: Any) -> None:
    parser.add_argument("--truth", metavar="CSV", help="Planted basis to compare the fitted basis against")
    parser.add_argument("--header", action="store_true", help="The truth CSV starts with a column-name row")


def truth_angle(args: Any, estimate: OrthogonalBasis) -> Optional[float]:
    """Largest column angle (radians) to ``--truth`` up to signed permutation, or None."""
    if not args.truth:
        return None
    truth = OrthogonalBasis(read_matrix_csv(args.truth, args.header))
    return linalg.max_column_angle(estimate, truth)
