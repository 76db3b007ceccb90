"""
Gradient oracles: central-difference checks of the tape at three scopes.

``primitive`` checks every tape primitive on its own, ``unfold`` the unrolled
solver from covariances and step sizes to L_CPCA, and ``full`` the complete
CPCANet loss with respect to every parameter group.

Central differences at h = 1e-6 carry about 1e-10 |f| of absolute roundoff, so
each scope sets an absolute floor on the relative-error denominator sized to
its threshold.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
import structlog

from ..exceptions import ConfigError
from ..models.batch import DomainBatch
from ..models.params import MODULATION_OUTPUTS, ModelParams
from ..schemas.solver import UnfoldConfig
from ..schemas.training import TrainerConfig
from . import net
from .tape import Graph, OpKind, gradcheck_report
from .unfold import build_cpca_loss, build_unfold

logger = structlog.get_logger(__name__)

STEP = 1e-6


class Scope(str, Enum):
    PRIMITIVE = "primitive"
    UNFOLD = "unfold"
    FULL = "full"


THRESHOLDS = {Scope.PRIMITIVE: 1e-5, Scope.UNFOLD: 1e-5, Scope.FULL: 1e-4}
FLOORS = {Scope.PRIMITIVE: 1e-4, Scope.UNFOLD: 1e-3, Scope.FULL: 1e-3}


@dataclass
class GradcheckReport:
    scope: Scope
    threshold: float
    errors: Dict[str, float] = field(default_factory=dict)

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst < self.threshold

    def to_dict(self) -> dict:
        return {
            "scope": self.scope.value,
            "threshold": self.threshold,
            "worst": self.worst,
            "passed": self.passed,
            "errors": self.errors,
        }


# ----------------------------------------------------------------------
# primitive scope

def _signed(rng: np.random.Generator, shape: Tuple[int, int], low: float = 0.2, high: float = 1.0) -> np.ndarray:
    """Entries bounded away from zero, so relu never sits on its kink."""
    return rng.choice([-1.0, 1.0], size=shape) * rng.uniform(low, high, size=shape)


def _positive(rng: np.random.Generator, shape: Tuple[int, int]) -> np.ndarray:
    return rng.uniform(0.5, 1.5, size=shape)


def _primitive_cases(rng: np.random.Generator) -> List[Tuple[OpKind, Dict[str, np.ndarray], Callable]]:
    targets = rng.dirichlet(np.ones(3), size=4)
    return [
        (OpKind.ADD, {"a": _signed(rng, (3, 3)), "b": _signed(rng, (3, 3))}, lambda g, x: g.add(x["a"], x["b"])),
        (OpKind.SUB, {"a": _signed(rng, (3, 3)), "b": _signed(rng, (3, 3))}, lambda g, x: g.sub(x["a"], x["b"])),
        (OpKind.MATMUL, {"a": _signed(rng, (3, 4)), "b": _signed(rng, (4, 2))}, lambda g, x: g.matmul(x["a"], x["b"])),
        (OpKind.HADAMARD, {"a": _signed(rng, (3, 3)), "b": _signed(rng, (3, 3))}, lambda g, x: g.hadamard(x["a"], x["b"])),
        (OpKind.TRANSPOSE, {"a": _signed(rng, (3, 2))}, lambda g, x: g.transpose(x["a"])),
        (OpKind.DIAG_EXTRACT, {"a": _signed(rng, (4, 4))}, lambda g, x: g.diag_extract(x["a"])),
        (OpKind.DIAG_EMBED, {"a": _signed(rng, (4, 1))}, lambda g, x: g.diag_embed(x["a"])),
        (OpKind.RECIPROCAL, {"a": _positive(rng, (3, 3))}, lambda g, x: g.reciprocal(x["a"])),
        (OpKind.LOG, {"a": _positive(rng, (3, 3))}, lambda g, x: g.log(x["a"])),
        (OpKind.SIGMOID, {"a": _signed(rng, (3, 3))}, lambda g, x: g.sigmoid(x["a"])),
        (OpKind.RELU, {"a": _signed(rng, (3, 3))}, lambda g, x: g.relu(x["a"])),
        (OpKind.SCALE, {"a": _signed(rng, (3, 3))}, lambda g, x: g.scale(x["a"], 1.7)),
        (OpKind.SUM, {"a": _signed(rng, (3, 3))}, lambda g, x: g.sum(x["a"])),
        (OpKind.FROBENIUS_NORM, {"a": _signed(rng, (3, 3))}, lambda g, x: g.frobenius_norm(x["a"])),
        (
            OpKind.LINEAR_SOLVE,
            {"m": 3.0 * np.eye(3) + 0.3 * _signed(rng, (3, 3)), "b": _signed(rng, (3, 2))},
            lambda g, x: g.linear_solve(x["m"], x["b"]),
        ),
        (
            OpKind.SOFTMAX_CROSS_ENTROPY,
            {"logits": _signed(rng, (4, 3)), "q": targets},
            lambda g, x: g.softmax_cross_entropy(x["logits"], x["q"]),
        ),
        (OpKind.RESHAPE, {"a": _signed(rng, (2, 3))}, lambda g, x: g.reshape(x["a"], (3, 2))),
        (
            OpKind.HSTACK,
            {"a": _signed(rng, (3, 2)), "b": _signed(rng, (3, 1))},
            lambda g, x: g.hstack([x["a"], x["b"]]),
        ),
    ]


def primitive_graph(
    kind_case: Tuple[OpKind, Dict[str, np.ndarray], Callable],
    rng: np.random.Generator,
    adjoint_fault: Optional[str] = None,
) -> Tuple[Graph, Dict[str, np.ndarray]]:
    """Scalar graph sum(op(inputs) * W) for one primitive with a fixed random W."""
    _, bindings, build = kind_case
    g = Graph(adjoint_fault=adjoint_fault)
    nodes = {name: g.input(name, value.shape) for name, value in bindings.items()}
    out = build(g, nodes)
    weight = g.constant(_signed(rng, out.shape, 0.5, 1.5))
    g.set_output(g.sum(g.hadamard(out, weight)))
    return g, bindings


def check_primitives(seed: int = 0, adjoint_fault: Optional[str] = None) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    report = GradcheckReport(Scope.PRIMITIVE, THRESHOLDS[Scope.PRIMITIVE])
    for case in _primitive_cases(rng):
        g, bindings = primitive_graph(case, rng, adjoint_fault)
        errors = gradcheck_report(g, bindings, STEP, floor=FLOORS[Scope.PRIMITIVE])
        report.errors[case[0].value] = max(errors.values())
    return report


# ----------------------------------------------------------------------
# unfold scope

def random_covariances(dim: int, n_domains: int, rng: np.random.Generator) -> List[np.ndarray]:
    mats = []
    for _ in range(n_domains):
        a = rng.standard_normal((dim, dim))
        mats.append(a @ a.T / dim + 0.1 * np.eye(dim))
    return mats


def unfold_graph(
    dim: int, stages: int, n_domains: int, rng: np.random.Generator, adjoint_fault: Optional[str] = None
) -> Tuple[Graph, Dict[str, np.ndarray]]:
    """L_CPCA(beta_T) as a function of the covariances and the step sizes."""
    g = Graph(adjoint_fault=adjoint_fault)
    covs = [g.input(f"S{k}", (dim, dim)) for k in range(n_domains)]
    eta = g.input("eta", (1, stages))
    config = UnfoldConfig(stages=stages, proj_dim=dim)
    nodes = build_unfold(g, covs, [30.0 + 10.0 * k for k in range(n_domains)], eta, config)
    g.set_output(build_cpca_loss(g, nodes.beta_final, covs))
    bindings = {f"S{k}": s for k, s in enumerate(random_covariances(dim, n_domains, rng))}
    bindings["eta"] = rng.uniform(0.05, 0.45, size=(1, stages))
    return g, bindings


def check_unfold(
    dim: int = 6, stages: int = 3, n_domains: int = 3, seed: int = 0, adjoint_fault: Optional[str] = None
) -> GradcheckReport:
    rng = np.random.default_rng(seed)
    g, bindings = unfold_graph(dim, stages, n_domains, rng, adjoint_fault)
    errors = gradcheck_report(g, bindings, STEP, floor=FLOORS[Scope.UNFOLD])
    report = GradcheckReport(Scope.UNFOLD, THRESHOLDS[Scope.UNFOLD])
    report.errors["covariances"] = max(v for k, v in errors.items() if k.startswith("S"))
    report.errors["eta"] = errors["eta"]
    return report


# ----------------------------------------------------------------------
# full scope

def full_instance(
    dim: int, stages: int, n_domains: int, rng: np.random.Generator
) -> Tuple[DomainBatch, ModelParams, TrainerConfig]:
    """Toy CPCANet instance with the modulation output layers switched on."""
    config = TrainerConfig(
        input_dim=20, feature_dim=32, proj_dim=dim, stages=stages, n_domains=n_domains,
        n_classes=4, dropout=0.0, lambda_cpca=1.0,
    )
    rows = 20
    batch = DomainBatch(
        rng.standard_normal((rows * n_domains, config.input_dim)),
        rng.integers(0, config.n_classes, size=rows * n_domains),
        np.repeat(np.arange(n_domains), rows),
        n_domains=n_domains,
    )
    params = ModelParams.init(config, rng)
    for name in MODULATION_OUTPUTS:
        params.arrays[name] = 0.1 * rng.standard_normal(params[name].shape)
    return batch, params, config


def check_full(
    dim: int = 8,
    stages: int = 3,
    n_domains: int = 3,
    seed: int = 0,
    adjoint_fault: Optional[str] = None,
    coords_per_input: int = 4,
) -> GradcheckReport:
    if dim > 16:
        raise ConfigError(f"full-scope gradcheck needs d <= 16, got {dim}")
    rng = np.random.default_rng(seed)
    batch, params, config = full_instance(dim, stages, n_domains, rng)
    fwd = net.build_cpcanet_graph(batch, params, config, adjoint_fault=adjoint_fault)
    errors = gradcheck_report(
        fwd.graph,
        dict(params.arrays),
        STEP,
        coords_per_input=coords_per_input,
        seed=seed,
        floor=FLOORS[Scope.FULL],
    )
    report = GradcheckReport(Scope.FULL, THRESHOLDS[Scope.FULL])
    for group in sorted(set(params.groups.values())):
        report.errors[group] = max(errors[n] for n in params.names(group))
    return report


def run_scope(
    scope: Scope,
    dim: Optional[int] = None,
    stages: int = 3,
    n_domains: int = 3,
    seed: int = 0,
    adjoint_fault: Optional[str] = None,
) -> GradcheckReport:
    if scope is Scope.PRIMITIVE:
        report = check_primitives(seed, adjoint_fault)
    elif scope is Scope.UNFOLD:
        report = check_unfold(dim or 6, stages, n_domains, seed, adjoint_fault)
    else:
        report = check_full(dim or 8, stages, n_domains, seed, adjoint_fault)
    log = logger.info if report.passed else logger.warning
    log("gradcheck.done", scope=scope.value, worst=report.worst, threshold=report.threshold, fault=adjoint_fault)
    return report
