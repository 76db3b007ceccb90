"""
``cpcanet gradcheck``: central-difference oracles for the tape.
"""

import structlog

from ..config import Settings
from ..exceptions import GradcheckFailed
from ..services.gradcheck import Scope, run_scope
from ..utils.config_files import load_run_config
from ..utils.serialization import write_json
from .common import emit, output_dir, resolve_seed

logger = structlog.get_logger(__name__)


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("gradcheck", parents=parents, help="Check reverse-mode gradients numerically")
    p.add_argument("--scope", choices=[s.value for s in Scope], default=Scope.PRIMITIVE.value)
    p.add_argument("-d", "--dim", type=int, help="Projection dimension (unfold and full scopes)")
    p.add_argument("-T", "--stages", type=int, default=3)
    p.add_argument("-K", "--domains", type=int, default=3)
    p.set_defaults(func=run)


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    report = run_scope(
        Scope(args.scope),
        dim=args.dim,
        stages=args.stages,
        n_domains=args.domains,
        seed=resolve_seed(args, run_config, settings),
        adjoint_fault=settings.corrupt_adjoint,
    )
    write_json(output_dir(args, run_config, settings) / f"gradcheck_{report.scope.value}.json", report.to_dict())
    emit(report.to_dict())
    if not report.passed:
        raise GradcheckFailed(report.scope.value, report.worst, report.threshold)
    return 0
