"""
CPCANet heads and loss assembly on the tape.

Forward pass per batch: features F = h(X), bottleneck Z = F W + b, per-domain
covariances of Z, step sizes from the hypernetwork, the unfolded solver for
beta_T, projections U = Z beta_T, channel-wise modulation of F driven by U, and
a linear readout. The ERM pipeline is the same graph without everything
between F and the readout.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np
import scipy.special
import structlog

from ..exceptions import ShapeMismatch, WrongDomainCount
from ..models.batch import DomainBatch
from ..models.matrices import CovarianceMatrix, CovarianceSet, Matrix, OrthogonalBasis
from ..models.params import BACKBONE, ModelParams
from ..models.results import ForwardOutput
from ..schemas.training import TrainerConfig
from . import linalg
from .tape import Graph, Node
from .unfold import build_cpca_loss, build_unfold, check_step_sizes

logger = structlog.get_logger(__name__)

Masks = Mapping[str, Matrix]

# eta stays this far (times 1/2) inside (0, 1/2) when the sigmoid saturates in float64
ETA_MARGIN = 2.0**-20


# ----------------------------------------------------------------------
# graph builders

def bind_params(g: Graph, params: ModelParams, names: Optional[Sequence[str]] = None) -> Dict[str, Node]:
    """Declare one named graph input per parameter array."""
    names = list(params) if names is None else names
    return {name: g.input(name, params[name].shape) for name in names}


def build_backbone(g: Graph, p: Mapping[str, Node], x: Node) -> Node:
    hidden = g.relu(g.linear(x, p["h.W1"], p["h.b1"]))
    return g.linear(hidden, p["h.W2"], p["h.b2"])


def build_mlp(g: Graph, p: Mapping[str, Node], prefix: str, x: Node, mask: Optional[Matrix] = None) -> Node:
    """Two layers with a rectified hidden layer; ``mask`` is an inverted-dropout mask."""
    hidden = g.relu(g.linear(x, p[f"{prefix}.W1"], p[f"{prefix}.b1"]))
    if mask is not None:
        hidden = g.hadamard(hidden, g.constant(mask))
    return g.linear(hidden, p[f"{prefix}.W2"], p[f"{prefix}.b2"])


def build_hypernet(g: Graph, p: Mapping[str, Node], covs: Sequence[Node], mask: Optional[Matrix] = None) -> Node:
    """eta = sigmoid(H(vec S_1, ..., vec S_K)) / 2 as a 1 x T row.

    The sigmoid is squeezed into [ETA_MARGIN, 1 - ETA_MARGIN] first, so a
    saturated output still gives a step size strictly inside (0, 1/2). A zero
    output still maps to exactly 1/4.
    """
    flat = [g.reshape(s, (1, s.shape[0] * s.shape[1])) for s in covs]
    out = build_mlp(g, p, "hyper", g.hstack(flat), mask)
    squeezed = g.scale(g.sigmoid(out), 0.5 * (1.0 - 2.0 * ETA_MARGIN))
    return g.add(squeezed, g.constant(np.full(out.shape, 0.5 * ETA_MARGIN)))


def build_modulation(g: Graph, p: Mapping[str, Node], f: Node, u: Node, masks: Optional[Masks] = None) -> Node:
    """f * gamma + delta_f with gamma = 2 sigmoid(MLP_gamma(u)), delta_f = MLP_shift(u), row-wise."""
    masks = masks or {}
    gamma = g.scale(g.sigmoid(build_mlp(g, p, "gamma", u, masks.get("gamma"))), 2.0)
    shift = build_mlp(g, p, "shift", u, masks.get("shift"))
    return g.add(g.hadamard(f, gamma), shift)


def build_domain_covariances(g: Graph, z: Node, batch: DomainBatch) -> tuple[List[Node], List[float]]:
    """Unbiased per-domain covariances of the rows of ``z``, with weights n_k = N_k - 1."""
    covs, weights = [], []
    for k in range(batch.n_domains):
        rows = batch.rows(k)
        n = rows.size
        select = np.zeros((n, batch.size))
        select[np.arange(n), rows] = 1.0
        centring = np.eye(n) - 1.0 / n
        zc = g.matmul(g.constant(centring @ select), z)
        covs.append(g.scale(g.matmul(g.transpose(zc), zc), 1.0 / (n - 1)))
        weights.append(float(n - 1))
    return covs, weights


def smoothed_targets(labels: np.ndarray, n_classes: int, smoothing: float) -> Matrix:
    onehot = np.zeros((labels.size, n_classes))
    onehot[np.arange(labels.size), labels] = 1.0
    return (1.0 - smoothing) * onehot + smoothing / n_classes


@dataclass
class ForwardGraph:
    graph: Graph
    logits: Node
    l_task: Node
    l_total: Node
    l_cpca: Optional[Node] = None
    beta: Optional[Node] = None
    eta: Optional[Node] = None
    covs: List[Node] = field(default_factory=list)
    weights: List[float] = field(default_factory=list)


def _check_batch(batch: DomainBatch, config: TrainerConfig) -> None:
    if batch.n_domains != config.n_domains:
        raise WrongDomainCount(config.n_domains, batch.n_domains)
    if batch.inputs.shape[1] != config.input_dim:
        raise ShapeMismatch(f"inputs have {batch.inputs.shape[1]} columns, config p = {config.input_dim}")


def build_cpcanet_graph(
    batch: DomainBatch,
    params: ModelParams,
    config: TrainerConfig,
    masks: Optional[Masks] = None,
    adjoint_fault: Optional[str] = None,
) -> ForwardGraph:
    _check_batch(batch, config)
    masks = masks or {}
    g = Graph(adjoint_fault=adjoint_fault)
    p = bind_params(g, params)
    feats = build_backbone(g, p, g.constant(batch.inputs))
    z = g.linear(feats, p["bn.W"], p["bn.b"])
    covs, weights = build_domain_covariances(g, z, batch)
    eta = build_hypernet(g, p, covs, masks.get("hyper"))
    beta = build_unfold(g, covs, weights, eta, config.unfold_config()).beta_final
    modulated = build_modulation(g, p, feats, g.matmul(z, beta), masks)
    logits = g.linear(modulated, p["cls.W"], p["cls.b"])
    targets = g.constant(smoothed_targets(batch.labels, config.n_classes, config.smoothing))
    l_task = g.softmax_cross_entropy(logits, targets)
    l_cpca = build_cpca_loss(g, beta, covs)
    l_total = g.set_output(g.add(l_task, g.scale(l_cpca, config.lambda_cpca)))
    return ForwardGraph(g, logits, l_task, l_total, l_cpca, beta, eta, covs, weights)


def build_erm_graph(batch: DomainBatch, params: ModelParams, config: TrainerConfig) -> ForwardGraph:
    _check_batch(batch, config)
    g = Graph()
    p = bind_params(g, params, params.names(BACKBONE))
    logits = g.linear(build_backbone(g, p, g.constant(batch.inputs)), p["cls.W"], p["cls.b"])
    targets = g.constant(smoothed_targets(batch.labels, config.n_classes, config.smoothing))
    l_task = g.set_output(g.softmax_cross_entropy(logits, targets))
    return ForwardGraph(g, logits, l_task, l_task)


def draw_masks(config: TrainerConfig, rng: np.random.Generator, n_rows: int) -> Dict[str, Matrix]:
    """Inverted-dropout masks for the hypernetwork and both modulation MLPs."""
    if config.dropout == 0.0:
        return {}
    keep = 1.0 - config.dropout
    shapes = {
        "hyper": (1, config.hyper_hidden),
        "gamma": (n_rows, config.feature_dim),
        "shift": (n_rows, config.feature_dim),
    }
    return {name: (rng.random(shape) < keep) / keep for name, shape in shapes.items()}


# ----------------------------------------------------------------------
# numeric entry points

def _bindings(params: ModelParams, names: Optional[Sequence[str]] = None) -> Dict[str, Matrix]:
    return {n: params[n] for n in (names if names is not None else params)}


def _forward_output(fwd: ForwardGraph) -> ForwardOutput:
    g = fwd.graph
    eta = check_step_sizes(g.value(fwd.eta), fwd.eta.shape[1]).reshape(-1).copy()
    covs = CovarianceSet(
        [CovarianceMatrix.unchecked(linalg.symmetrize(g.value(s))) for s in fwd.covs],
        fwd.weights,
    )
    return ForwardOutput(
        logits=g.value(fwd.logits).copy(),
        beta=OrthogonalBasis(g.value(fwd.beta)),
        covariances=covs,
        l_task=float(g.value(fwd.l_task)[0, 0]),
        l_cpca=float(g.value(fwd.l_cpca)[0, 0]),
        l_total=float(g.value(fwd.l_total)[0, 0]),
        eta=eta,
    )


def cpcanet_forward(
    batch: DomainBatch,
    params: ModelParams,
    config: TrainerConfig,
    masks: Optional[Masks] = None,
) -> ForwardOutput:
    """Evaluate the full CPCANet forward pass on a batch."""
    fwd = build_cpcanet_graph(batch, params, config, masks)
    fwd.graph.evaluate(_bindings(params))
    return _forward_output(fwd)


def cpcanet_loss_and_grads(
    batch: DomainBatch,
    params: ModelParams,
    config: TrainerConfig,
    masks: Optional[Masks] = None,
) -> tuple[ForwardOutput, Dict[str, Matrix]]:
    fwd = build_cpcanet_graph(batch, params, config, masks)
    fwd.graph.evaluate(_bindings(params))
    out = _forward_output(fwd)
    return out, fwd.graph.backward()


def erm_forward(batch: DomainBatch, params: ModelParams, config: TrainerConfig) -> Matrix:
    """Logits of the plain backbone + classifier pipeline."""
    fwd = build_erm_graph(batch, params, config)
    fwd.graph.evaluate(_bindings(params, params.names(BACKBONE)))
    return fwd.graph.value(fwd.logits).copy()


def erm_loss_and_grads(
    batch: DomainBatch, params: ModelParams, config: TrainerConfig
) -> tuple[float, Dict[str, Matrix]]:
    fwd = build_erm_graph(batch, params, config)
    loss = fwd.graph.evaluate(_bindings(params, params.names(BACKBONE)))
    return loss, fwd.graph.backward()


def hypernet_step_sizes(
    covs: CovarianceSet, params: ModelParams, config: TrainerConfig, mask: Optional[Matrix] = None
) -> np.ndarray:
    """Length-T step sizes in (0, 0.5) conditioned on the domain covariances."""
    if covs.n_domains != config.n_domains:
        raise WrongDomainCount(config.n_domains, covs.n_domains)
    if covs.dim != config.proj_dim:
        raise ShapeMismatch(f"covariances are {covs.dim} x {covs.dim}, config d = {config.proj_dim}")
    g = Graph()
    names = [n for n in params if n.startswith("hyper.")]
    p = bind_params(g, params, names)
    cov_nodes = [g.input(f"S{k}", (covs.dim, covs.dim)) for k in range(covs.n_domains)]
    eta = build_hypernet(g, p, cov_nodes, mask)
    g.set_output(g.sum(eta))
    bindings = _bindings(params, names)
    bindings.update({f"S{k}": s for k, s in enumerate(covs.arrays())})
    g.evaluate(bindings)
    etas = g.value(eta).reshape(-1).copy()
    check_step_sizes(etas, config.stages)
    return etas


def modulate(f: Matrix, u: Matrix, params: ModelParams, masks: Optional[Masks] = None) -> Matrix:
    """Row-wise manifold-guided modulation of features ``f`` by projections ``u``."""
    f = np.asarray(f, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    if f.shape[0] != u.shape[0]:
        raise ShapeMismatch(f"f has {f.shape[0]} rows, u has {u.shape[0]}")
    g = Graph()
    names = [n for n in params if n.startswith(("gamma.", "shift."))]
    p = bind_params(g, params, names)
    out = build_modulation(g, p, g.input("f", f.shape), g.input("u", u.shape), masks)
    g.set_output(g.sum(out))
    bindings = _bindings(params, names)
    bindings.update({"f": f, "u": u})
    g.evaluate(bindings)
    return g.value(out).copy()


def task_loss(logits: Matrix, labels: np.ndarray, smoothing: float) -> float:
    """Label-smoothed softmax cross-entropy averaged over rows."""
    logits = np.asarray(logits, dtype=np.float64)
    q = smoothed_targets(np.asarray(labels, dtype=np.int64), logits.shape[1], smoothing)
    log_p = scipy.special.log_softmax(logits, axis=1)
    return float(-np.sum(q * log_p) / logits.shape[0])


def total_loss(out: ForwardOutput, labels: np.ndarray, lambda_cpca: float, smoothing: float) -> float:
    """L_task + lambda_cpca * L_CPCA."""
    return task_loss(out.logits, labels, smoothing) + lambda_cpca * out.l_cpca


def predict(params: ModelParams, inputs: Matrix, basis: Optional[OrthogonalBasis]) -> Matrix:
    """Inference logits; with ``basis`` None this is the ERM pipeline."""
    g = Graph()
    names = list(params) if basis is not None else params.names(BACKBONE)
    p = bind_params(g, params, names)
    feats = build_backbone(g, p, g.constant(inputs))
    if basis is not None:
        z = g.linear(feats, p["bn.W"], p["bn.b"])
        feats = build_modulation(g, p, feats, g.matmul(z, g.constant(basis.values)))
    logits = g.linear(feats, p["cls.W"], p["cls.b"])
    g.set_output(g.sum(logits))
    g.evaluate(_bindings(params, names))
    return g.value(logits).copy()


def accuracy(logits: Matrix, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == np.asarray(labels)))


# ----------------------------------------------------------------------
# naive readout diagnostic

@dataclass(frozen=True)
class NaiveClassifier:
    """Softmax readout fitted directly on common-principal-component scores."""

    weight: Matrix
    bias: Matrix

    def logits(self, u: Matrix) -> Matrix:
        return np.asarray(u) @ self.weight + self.bias


def fit_naive_classifier(
    u: Matrix, labels: np.ndarray, n_classes: int, steps: int = 500, lr: float = 0.5
) -> NaiveClassifier:
    """Full-batch gradient descent on a d x C readout from zero init."""
    u = np.asarray(u, dtype=np.float64)
    g = Graph()
    w = g.input("W", (u.shape[1], n_classes))
    b = g.input("b", (1, n_classes))
    logits = g.linear(g.constant(u), w, b)
    g.set_output(g.softmax_cross_entropy(logits, g.constant(smoothed_targets(labels, n_classes, 0.0))))
    values = {"W": np.zeros((u.shape[1], n_classes)), "b": np.zeros((1, n_classes))}
    for _ in range(steps):
        g.evaluate(values)
        grads = g.backward()
        values = {name: values[name] - lr * grads[name] for name in values}
    loss = g.evaluate(values)
    logger.debug("net.naive_classifier", steps=steps, loss=loss)
    return NaiveClassifier(weight=values["W"], bias=values["b"])


def project(params: ModelParams, inputs: Matrix, basis: OrthogonalBasis) -> Matrix:
    """Common-principal-component scores U = Z beta of raw inputs."""
    g = Graph()
    names = params.names(BACKBONE) + ["bn.W", "bn.b"]
    p = bind_params(g, params, names)
    z = g.linear(build_backbone(g, p, g.constant(inputs)), p["bn.W"], p["bn.b"])
    u = g.matmul(z, g.constant(basis.values))
    g.set_output(g.sum(u))
    g.evaluate(_bindings(params, names))
    return g.value(u).copy()
