"""
``cpcanet fg``: classical common-basis fit of a covariance set.
"""

import structlog

from ..config import Settings
from ..exceptions import NotConverged
from ..services.fg import fg_fit
from ..utils.config_files import load_run_config, override
from ..utils.serialization import read_covariance_set, write_json
from .common import add_truth_arguments, emit, output_dir, truth_angle

logger = structlog.get_logger(__name__)


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("fg", parents=parents, help="Fit the common basis with pairwise-rotation sweeps")
    p.add_argument("covariances", help="CovarianceSet JSON file")
    p.add_argument("--tol", type=float, help="Stop when every rotation in a sweep is below this angle")
    p.add_argument("--max-sweeps", type=int, dest="max_sweeps", help="Upper bound on full sweeps")
    add_truth_arguments(p)
    p.set_defaults(func=run)


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    config = override(run_config.fg, tol=args.tol, max_sweeps=args.max_sweeps)
    covs = read_covariance_set(args.covariances)
    result = fg_fit(covs, config)

    path = output_dir(args, run_config, settings) / "fg_result.json"
    write_json(path, result.to_dict())
    emit(
        {
            "result": str(path),
            "converged": result.converged,
            "sweeps": result.sweeps_used,
            "residual": result.residual,
            "max_column_angle": truth_angle(args, result.basis),
        }
    )
    return 0 if result.converged else NotConverged.exit_code
