"""
``cpcanet unfold``: run the unfolded solver with given step sizes and dump its trace.
"""

from typing import List

import structlog

from ..config import Settings
from ..exceptions import ConfigError, ShapeMismatch
from ..services.unfold import unfold_solve
from ..utils.config_files import load_run_config, override
from ..utils.serialization import read_covariance_set, write_json
from .common import add_truth_arguments, emit, output_dir, truth_angle

logger = structlog.get_logger(__name__)

# sigmoid(0) / 2, the step size of a hypernetwork with all-zero weights
ZERO_HYPER_ETA = 0.25


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("unfold", parents=parents, help="Run the unfolded Riemannian solver")
    p.add_argument("covariances", help="CovarianceSet JSON file")
    p.add_argument("--eta", type=float, action="append", help="Step size; repeat per stage or give once for all")
    p.add_argument("--hyper", choices=["zeros"], help="Use the step sizes of an all-zero hypernetwork")
    p.add_argument("-T", "--stages", type=int, help="Number of stages")
    p.add_argument("--eps", type=float, help="Stabilizer in the Omega denominators")
    add_truth_arguments(p)
    p.set_defaults(func=run)


def step_sizes(args, default_stages: int) -> List[float]:
    if args.hyper == "zeros":
        return [ZERO_HYPER_ETA] * (args.stages or default_stages)
    if not args.eta:
        raise ConfigError("pass --eta or --hyper zeros")
    if len(args.eta) == 1:
        return args.eta * (args.stages or default_stages)
    if args.stages is not None and args.stages != len(args.eta):
        raise ShapeMismatch(f"{len(args.eta)} step sizes given for {args.stages} stages")
    return list(args.eta)


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    covs = read_covariance_set(args.covariances)
    etas = step_sizes(args, run_config.unfold.stages)
    config = override(run_config.unfold, stages=len(etas), proj_dim=covs.dim, eps=args.eps)
    beta, trace = unfold_solve(covs, etas, config)

    path = output_dir(args, run_config, settings) / "unfold_trace.json"
    write_json(path, trace.to_dict())
    emit(
        {
            "trace": str(path),
            "stages": config.stages,
            "initial_offdiag": trace.initial.offdiag,
            "final_offdiag": trace.final.offdiag,
            "max_column_angle": truth_angle(args, beta),
        }
    )
    return 0
