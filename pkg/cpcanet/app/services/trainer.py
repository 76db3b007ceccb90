"""
End-to-end toy trainer for CPCANet and the ERM baseline.

Adam moments with two learning-rate groups (backbone and cpcanet heads) and
optional decoupled weight decay. Batches, parameter init and dropout masks each
draw from their own seeded stream, so the two pipelines see identical batches
under the same seed.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
import structlog

from ..exceptions import create_error
from ..models.batch import DomainBatch
from ..models.matrices import Matrix, OrthogonalBasis
from ..models.params import BACKBONE, CPCANET, MODULATION_OUTPUTS, ModelParams
from ..schemas.training import ModelKind, TrainerConfig
from . import net
from .data import DomainStream

logger = structlog.get_logger(__name__)


def seed_streams(seed: int) -> Tuple[np.random.Generator, np.random.Generator, np.random.Generator]:
    """Independent generators for parameter init, batch sampling and dropout."""
    init, batches, dropout = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(batches), np.random.default_rng(dropout)


class AdamOptimizer:
    """Adam with per-group learning rates; weight decay > 0 makes it AdamW."""

    def __init__(
        self,
        params: ModelParams,
        lrs: Dict[str, float],
        weight_decay: float = 0.0,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        frozen: Tuple[str, ...] = (),
    ):
        self.lrs = lrs
        self.weight_decay = weight_decay
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.frozen = set(frozen)
        self.t = 0
        self.m = {n: np.zeros_like(v) for n, v in params.arrays.items()}
        self.v = {n: np.zeros_like(v) for n, v in params.arrays.items()}

    def step(self, params: ModelParams, grads: Dict[str, Matrix]) -> None:
        """Update ``params`` in place; names missing from ``grads`` are left alone."""
        self.t += 1
        c1 = 1.0 - self.beta1**self.t
        c2 = 1.0 - self.beta2**self.t
        for name, grad in grads.items():
            if name in self.frozen:
                continue
            lr = self.lrs[params.groups[name]]
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
            value = params.arrays[name]
            if self.weight_decay > 0.0:
                value = value - lr * self.weight_decay * value
            m_hat = self.m[name] / c1
            v_hat = self.v[name] / c2
            params.arrays[name] = value - lr * m_hat / (np.sqrt(v_hat) + self.eps)


@dataclass(frozen=True)
class MetricsRow:
    step: int
    l_task: float
    l_cpca: float
    l_total: float
    eta_mean: float
    heldout_acc: Optional[float] = None


@dataclass
class TrainResult:
    params: ModelParams
    metrics: List[MetricsRow] = field(default_factory=list)
    basis: Optional[OrthogonalBasis] = None  # inference basis; None for ERM
    etas: List[np.ndarray] = field(default_factory=list)

    @property
    def final_heldout_acc(self) -> Optional[float]:
        for row in reversed(self.metrics):
            if row.heldout_acc is not None:
                return row.heldout_acc
        return None


def train(
    batches: Iterator[DomainBatch],
    params: ModelParams,
    config: TrainerConfig,
    heldout: Optional[Tuple[Matrix, np.ndarray]] = None,
    dropout_rng: Optional[np.random.Generator] = None,
) -> TrainResult:
    """Run ``config.steps`` optimizer steps of the configured pipeline.

    Every step evaluates the CPCANet forward pass for the logged L_CPCA and eta,
    so both pipelines write the same metric columns. The ERM pipeline takes its
    loss and gradients from the backbone-only graph and never touches the
    cpcanet group.
    """
    params = params.copy()
    dropout_rng = dropout_rng or np.random.default_rng(config.seed)
    frozen = MODULATION_OUTPUTS if config.freeze_modulation else ()
    optimizer = AdamOptimizer(
        params,
        {BACKBONE: config.lr_backbone, CPCANET: config.lr_cpcanet},
        weight_decay=config.weight_decay,
        frozen=frozen,
    )
    result = TrainResult(params=params)
    log = logger.bind(model=config.model.value, steps=config.steps)

    for step in range(config.steps):
        batch = next(batches)
        masks = net.draw_masks(config, dropout_rng, batch.size)
        if config.model is ModelKind.CPCANET:
            out, grads = net.cpcanet_loss_and_grads(batch, params, config, masks)
            l_task, l_total = out.l_task, out.l_total
        else:
            out = net.cpcanet_forward(batch, params, config, masks)
            l_task, grads = net.erm_loss_and_grads(batch, params, config)
            l_total = l_task + config.lambda_cpca * out.l_cpca
        if not np.isfinite(l_total):
            raise create_error(f"non-finite loss at step {step}", error_code="NON_FINITE_LOSS")
        result.etas.append(out.eta)

        acc = None
        if heldout is not None and (step % config.eval_interval == 0 or step == config.steps - 1):
            basis = out.beta if config.model is ModelKind.CPCANET else None
            acc = net.accuracy(net.predict(params, heldout[0], basis), heldout[1])

        result.metrics.append(
            MetricsRow(
                step=step,
                l_task=l_task,
                l_cpca=out.l_cpca,
                l_total=l_total,
                eta_mean=float(np.mean(out.eta)),
                heldout_acc=acc,
            )
        )
        if step % config.eval_interval == 0:
            log.info("trainer.step", step=step, l_task=l_task, l_cpca=out.l_cpca, heldout_acc=acc)
        optimizer.step(params, grads)

    if config.model is ModelKind.CPCANET:
        result.basis = net.cpcanet_forward(next(batches), params, config).beta
    log.info("trainer.done", final_heldout_acc=result.final_heldout_acc)
    return result


def fit_on_domains(
    domains: List[Tuple[Matrix, np.ndarray]],
    heldout: Optional[Tuple[Matrix, np.ndarray]],
    config: TrainerConfig,
    init_params: Optional[ModelParams] = None,
) -> TrainResult:
    """Init params, build the batch stream and train, all from ``config.seed``.

    ``init_params`` (a loaded checkpoint) replaces the random init; the batch
    and dropout streams are still drawn from the seed.
    """
    init_rng, batch_rng, dropout_rng = seed_streams(config.seed)
    params = ModelParams.init(config, init_rng) if init_params is None else init_params
    stream = DomainStream(domains, config.batch_per_domain, batch_rng, config.n_classes)
    return train(stream, params, config, heldout=heldout, dropout_rng=dropout_rng)
