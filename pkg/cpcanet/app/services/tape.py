"""
Reverse-mode differentiation over a fixed set of matrix primitives.

Every value on the tape is a 2-D float64 array; scalars are (1, 1). Nodes are
appended in construction order, which is also a topological order, so
evaluation is a forward walk and backpropagation a reverse walk.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.special
import structlog

from ..exceptions import NotEvaluated, ShapeMismatch, UnboundInput, create_error
from ..models.matrices import Matrix

logger = structlog.get_logger(__name__)

Shape = Tuple[int, int]


class OpKind(str, Enum):
    INPUT = "input"
    ADD = "add"
    SUB = "sub"
    MATMUL = "matmul"
    HADAMARD = "hadamard"
    TRANSPOSE = "transpose"
    DIAG_EXTRACT = "diag-extract"
    DIAG_EMBED = "diag-embed"
    RECIPROCAL = "reciprocal"
    LOG = "log"
    SIGMOID = "sigmoid"
    RELU = "relu"
    SCALE = "scale"
    SUM = "sum"
    FROBENIUS_NORM = "frobenius-norm"
    LINEAR_SOLVE = "linear-solve"
    SOFTMAX_CROSS_ENTROPY = "softmax-cross-entropy"
    RESHAPE = "reshape"
    HSTACK = "hstack"


@dataclass(eq=False)
class Node:
    id: int
    kind: OpKind
    parents: Tuple[int, ...]
    shape: Shape
    name: Optional[str] = None
    attrs: Dict[str, Any] = field(default_factory=dict)
    value: Optional[Matrix] = None
    constant: bool = False

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "kind": self.kind.value,
            "parents": list(self.parents),
            "shape": list(self.shape),
            "name": self.name,
            "constant": self.constant,
        }


def _as_2d(value: Any) -> Matrix:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise ShapeMismatch(f"tape values must be 2-D, got shape {arr.shape}")
    return arr


class Graph:
    """Computation graph with one designated scalar output.

    A Graph is single-owner while evaluating or backpropagating, since both
    write cached values onto its nodes.
    """

    def __init__(self, adjoint_fault: Optional[str] = None):
        self.nodes: List[Node] = []
        self.inputs: Dict[str, int] = {}
        self.output: Optional[int] = None
        self.adjoint_fault = OpKind(adjoint_fault) if adjoint_fault else None
        self._evaluated = False

    # ------------------------------------------------------------------
    # construction

    def _push(self, kind: OpKind, parents: Sequence[Node], shape: Shape, **attrs: Any) -> Node:
        node = Node(id=len(self.nodes), kind=kind, parents=tuple(p.id for p in parents), shape=shape, attrs=attrs)
        self.nodes.append(node)
        self._evaluated = False
        return node

    def input(self, name: str, shape: Shape) -> Node:
        if name in self.inputs:
            raise create_error(f"input {name!r} declared twice", error_code="DUPLICATE_INPUT")
        node = self._push(OpKind.INPUT, (), (int(shape[0]), int(shape[1])))
        node.name = name
        self.inputs[name] = node.id
        return node

    def constant(self, value: Any) -> Node:
        arr = _as_2d(value).copy()
        arr.setflags(write=False)
        node = self._push(OpKind.INPUT, (), arr.shape)
        node.constant = True
        node.value = arr
        return node

    def add(self, a: Node, b: Node) -> Node:
        self._same_shape("add", a, b)
        return self._push(OpKind.ADD, (a, b), a.shape)

    def sub(self, a: Node, b: Node) -> Node:
        self._same_shape("sub", a, b)
        return self._push(OpKind.SUB, (a, b), a.shape)

    def matmul(self, a: Node, b: Node) -> Node:
        if a.shape[1] != b.shape[0]:
            raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
        return self._push(OpKind.MATMUL, (a, b), (a.shape[0], b.shape[1]))

    def hadamard(self, a: Node, b: Node) -> Node:
        self._same_shape("hadamard", a, b)
        return self._push(OpKind.HADAMARD, (a, b), a.shape)

    def transpose(self, a: Node) -> Node:
        return self._push(OpKind.TRANSPOSE, (a,), (a.shape[1], a.shape[0]))

    def diag_extract(self, a: Node) -> Node:
        self._square("diag-extract", a)
        return self._push(OpKind.DIAG_EXTRACT, (a,), (a.shape[0], 1))

    def diag_embed(self, a: Node) -> Node:
        if a.shape[1] != 1:
            raise ShapeMismatch(f"diag-embed needs a column vector, got {a.shape}")
        return self._push(OpKind.DIAG_EMBED, (a,), (a.shape[0], a.shape[0]))

    def reciprocal(self, a: Node) -> Node:
        return self._push(OpKind.RECIPROCAL, (a,), a.shape)

    def log(self, a: Node) -> Node:
        return self._push(OpKind.LOG, (a,), a.shape)

    def sigmoid(self, a: Node) -> Node:
        return self._push(OpKind.SIGMOID, (a,), a.shape)

    def relu(self, a: Node) -> Node:
        return self._push(OpKind.RELU, (a,), a.shape)

    def scale(self, a: Node, factor: float) -> Node:
        return self._push(OpKind.SCALE, (a,), a.shape, factor=float(factor))

    def sum(self, a: Node) -> Node:
        return self._push(OpKind.SUM, (a,), (1, 1))

    def frobenius_norm(self, a: Node) -> Node:
        return self._push(OpKind.FROBENIUS_NORM, (a,), (1, 1))

    def linear_solve(self, m: Node, b: Node) -> Node:
        """X with M X = B."""
        self._square("linear-solve", m)
        if m.shape[0] != b.shape[0]:
            raise ShapeMismatch(f"linear-solve: M {m.shape} against B {b.shape}")
        return self._push(OpKind.LINEAR_SOLVE, (m, b), b.shape)

    def softmax_cross_entropy(self, logits: Node, targets: Node) -> Node:
        """Mean over rows of -sum(q * log_softmax(logits))."""
        self._same_shape("softmax-cross-entropy", logits, targets)
        return self._push(OpKind.SOFTMAX_CROSS_ENTROPY, (logits, targets), (1, 1))

    def reshape(self, a: Node, shape: Shape) -> Node:
        shape = (int(shape[0]), int(shape[1]))
        if shape[0] * shape[1] != a.shape[0] * a.shape[1]:
            raise ShapeMismatch(f"reshape: {a.shape} -> {shape}")
        return self._push(OpKind.RESHAPE, (a,), shape)

    def hstack(self, parts: Sequence[Node]) -> Node:
        if not parts:
            raise ShapeMismatch("hstack needs at least one operand")
        rows = {p.shape[0] for p in parts}
        if len(rows) != 1:
            raise ShapeMismatch(f"hstack: row counts differ {sorted(rows)}")
        width = sum(p.shape[1] for p in parts)
        return self._push(OpKind.HSTACK, parts, (parts[0].shape[0], width))

    def set_output(self, node: Node) -> Node:
        if node.shape != (1, 1):
            raise ShapeMismatch(f"output must be scalar, got {node.shape}")
        self.output = node.id
        return node

    # ------------------------------------------------------------------
    # helpers for common compositions

    def ones(self, rows: int, cols: int) -> Node:
        return self.constant(np.ones((rows, cols)))

    def broadcast_scalar(self, s: Node, shape: Shape) -> Node:
        """Fill a matrix of the given shape with a (1, 1) node."""
        if s.shape != (1, 1):
            raise ShapeMismatch(f"broadcast_scalar needs a scalar, got {s.shape}")
        return self.matmul(self.matmul(self.ones(shape[0], 1), s), self.ones(1, shape[1]))

    def add_const(self, a: Node, value: float) -> Node:
        return self.add(a, self.constant(np.full(a.shape, float(value))))

    def linear(self, x: Node, weight: Node, bias: Node) -> Node:
        """x W + 1 b for a row-vector bias."""
        return self.add(self.matmul(x, weight), self.matmul(self.ones(x.shape[0], 1), bias))

    @staticmethod
    def _same_shape(op: str, a: Node, b: Node) -> None:
        if a.shape != b.shape:
            raise ShapeMismatch(f"{op}: {a.shape} vs {b.shape}")

    @staticmethod
    def _square(op: str, a: Node) -> None:
        if a.shape[0] != a.shape[1]:
            raise ShapeMismatch(f"{op} needs a square matrix, got {a.shape}")

    @property
    def input_names(self) -> List[str]:
        return list(self.inputs)

    def value(self, node: Node) -> Matrix:
        if node.value is None:
            raise NotEvaluated()
        return node.value

    def to_json(self) -> dict:
        return {"output": self.output, "nodes": [n.to_dict() for n in self.nodes]}

    # ------------------------------------------------------------------
    # forward

    def evaluate(self, bindings: Mapping[str, Any]) -> float:
        if self.output is None:
            raise create_error("graph has no output node", error_code="NO_OUTPUT")
        for name, idx in self.inputs.items():
            if name not in bindings:
                raise UnboundInput(name)
            arr = _as_2d(bindings[name])
            if arr.shape != self.nodes[idx].shape:
                raise ShapeMismatch(f"input {name!r}: expected {self.nodes[idx].shape}, got {arr.shape}")
            self.nodes[idx].value = arr
        for node in self.nodes:
            if node.kind is not OpKind.INPUT:
                node.value = self._forward(node)
        self._evaluated = True
        return float(self.nodes[self.output].value[0, 0])

    def _forward(self, node: Node) -> Matrix:
        vals = [self.nodes[p].value for p in node.parents]
        kind = node.kind
        if kind is OpKind.ADD:
            return vals[0] + vals[1]
        if kind is OpKind.SUB:
            return vals[0] - vals[1]
        if kind is OpKind.MATMUL:
            return vals[0] @ vals[1]
        if kind is OpKind.HADAMARD:
            return vals[0] * vals[1]
        if kind is OpKind.TRANSPOSE:
            return vals[0].T.copy()
        if kind is OpKind.DIAG_EXTRACT:
            return np.diag(vals[0]).reshape(-1, 1).copy()
        if kind is OpKind.DIAG_EMBED:
            return np.diagflat(vals[0])
        if kind is OpKind.RECIPROCAL:
            return 1.0 / vals[0]
        if kind is OpKind.LOG:
            return np.log(vals[0])
        if kind is OpKind.SIGMOID:
            return scipy.special.expit(vals[0])
        if kind is OpKind.RELU:
            return np.maximum(vals[0], 0.0)
        if kind is OpKind.SCALE:
            return node.attrs["factor"] * vals[0]
        if kind is OpKind.SUM:
            return np.array([[np.sum(vals[0])]])
        if kind is OpKind.FROBENIUS_NORM:
            return np.array([[np.sqrt(np.sum(vals[0] * vals[0]))]])
        if kind is OpKind.LINEAR_SOLVE:
            lu = scipy.linalg.lu_factor(vals[0])
            node.attrs["lu"] = lu
            return scipy.linalg.lu_solve(lu, vals[1])
        if kind is OpKind.SOFTMAX_CROSS_ENTROPY:
            log_p = scipy.special.log_softmax(vals[0], axis=1)
            node.attrs["log_p"] = log_p
            return np.array([[-np.sum(vals[1] * log_p) / vals[0].shape[0]]])
        if kind is OpKind.RESHAPE:
            return vals[0].reshape(node.shape).copy()
        if kind is OpKind.HSTACK:
            return np.hstack(vals)
        raise create_error(f"unknown op kind {kind}", error_code="UNKNOWN_OP")

    # ------------------------------------------------------------------
    # backward

    def backward(self) -> Dict[str, Matrix]:
        """d(output)/d(input) for every named input."""
        if not self._evaluated:
            raise NotEvaluated()
        grads: List[Optional[Matrix]] = [None] * len(self.nodes)
        grads[self.output] = np.ones((1, 1))
        for node in reversed(self.nodes[: self.output + 1]):
            g = grads[node.id]
            if g is None or node.kind is OpKind.INPUT:
                continue
            contributions = self._adjoint(node, g)
            if self.adjoint_fault is node.kind:
                contributions = [1.5 * c for c in contributions]
            for parent, c in zip(node.parents, contributions):
                grads[parent] = c if grads[parent] is None else grads[parent] + c
        result = {}
        for name, idx in self.inputs.items():
            g = grads[idx]
            result[name] = np.zeros(self.nodes[idx].shape) if g is None else g
        return result

    def _adjoint(self, node: Node, g: Matrix) -> List[Matrix]:
        vals = [self.nodes[p].value for p in node.parents]
        out = node.value
        kind = node.kind
        if kind is OpKind.ADD:
            return [g, g]
        if kind is OpKind.SUB:
            return [g, -g]
        if kind is OpKind.MATMUL:
            return [g @ vals[1].T, vals[0].T @ g]
        if kind is OpKind.HADAMARD:
            return [g * vals[1], g * vals[0]]
        if kind is OpKind.TRANSPOSE:
            return [g.T]
        if kind is OpKind.DIAG_EXTRACT:
            return [np.diagflat(g)]
        if kind is OpKind.DIAG_EMBED:
            return [np.diag(g).reshape(-1, 1).copy()]
        if kind is OpKind.RECIPROCAL:
            return [-g * out * out]
        if kind is OpKind.LOG:
            return [g / vals[0]]
        if kind is OpKind.SIGMOID:
            return [g * out * (1.0 - out)]
        if kind is OpKind.RELU:
            return [g * (vals[0] > 0.0)]
        if kind is OpKind.SCALE:
            return [node.attrs["factor"] * g]
        if kind is OpKind.SUM:
            return [np.full(vals[0].shape, g[0, 0])]
        if kind is OpKind.FROBENIUS_NORM:
            norm = out[0, 0]
            if norm == 0.0:
                return [np.zeros(vals[0].shape)]
            return [(g[0, 0] / norm) * vals[0]]
        if kind is OpKind.LINEAR_SOLVE:
            # X = M^{-1} B:  dB = M^{-T} Xbar,  dM = -dB X^T
            d_b = scipy.linalg.lu_solve(node.attrs["lu"], g, trans=1)
            return [-d_b @ out.T, d_b]
        if kind is OpKind.SOFTMAX_CROSS_ENTROPY:
            logits, targets = vals
            log_p = node.attrs["log_p"]
            n = logits.shape[0]
            scale = g[0, 0] / n
            row_mass = targets.sum(axis=1, keepdims=True)
            return [scale * (row_mass * np.exp(log_p) - targets), -scale * log_p]
        if kind is OpKind.RESHAPE:
            return [g.reshape(vals[0].shape)]
        if kind is OpKind.HSTACK:
            splits = np.cumsum([v.shape[1] for v in vals])[:-1]
            return [part.copy() for part in np.hsplit(g, splits)]
        raise create_error(f"unknown op kind {kind}", error_code="UNKNOWN_OP")


def evaluate(graph: Graph, bindings: Mapping[str, Any]) -> float:
    return graph.evaluate(bindings)


def backward(graph: Graph) -> Dict[str, Matrix]:
    return graph.backward()


def gradcheck_report(
    graph: Graph,
    bindings: Mapping[str, Any],
    h: float = 1e-6,
    *,
    wrt: Optional[Sequence[str]] = None,
    coords_per_input: Optional[int] = None,
    seed: int = 0,
    floor: float = 1e-12,
) -> Dict[str, float]:
    """Worst relative error per input of backward against central differences.

    The relative error of one coordinate is |a - n| / max(|a|, |n|, floor).
    With ``coords_per_input`` a seeded subset of coordinates is checked.
    """
    if h <= 0:
        raise create_error(f"step h must be positive, got {h}", error_code="BAD_STEP")
    bindings = {k: _as_2d(v) for k, v in bindings.items()}
    graph.evaluate(bindings)
    analytic = graph.backward()
    rng = np.random.default_rng(seed)
    report: Dict[str, float] = {}
    for name in (wrt if wrt is not None else graph.input_names):
        base = bindings[name]
        coords = np.arange(base.size)
        if coords_per_input is not None and coords_per_input < base.size:
            coords = np.sort(rng.choice(base.size, size=coords_per_input, replace=False))
        worst = 0.0
        for idx in coords:
            shifted = dict(bindings)
            plus = base.copy()
            plus.flat[idx] += h
            shifted[name] = plus
            f_plus = graph.evaluate(shifted)
            minus = base.copy()
            minus.flat[idx] -= h
            shifted[name] = minus
            f_minus = graph.evaluate(shifted)
            numeric = (f_plus - f_minus) / (2.0 * h)
            exact = float(analytic[name].flat[idx])
            err = abs(exact - numeric) / max(abs(exact), abs(numeric), floor)
            worst = max(worst, err)
        report[name] = worst
    graph.evaluate(bindings)
    logger.debug("tape.gradcheck", worst=max(report.values(), default=0.0), inputs=len(report))
    return report


def gradcheck(
    graph: Graph,
    bindings: Mapping[str, Any],
    h: float = 1e-6,
    **kwargs: Any,
) -> float:
    """Worst relative error over every checked input coordinate."""
    return max(gradcheck_report(graph, bindings, h, **kwargs).values(), default=0.0)
