"""
Sweep cell jobs over (projection dimension, unfolded stages).

Each cell regenerates the dataset from its config and trains every repetition
from a seed derived from (seed, d, T, rep), so cells are independent and can run
in any worker process.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Dict, List

import numpy as np
import structlog

from ..schemas.training import DatasetConfig, SweepConfig, TrainerConfig
from ..services import data, trainer

logger = structlog.get_logger(__name__)

SWEEP_COLUMNS = (
    "d",
    "T",
    "n_seeds",
    "heldout_acc_mean",
    "heldout_acc_std",
    "l_cpca_mean",
    "l_cpca_std",
    "l_task_mean",
    "l_task_std",
)


@dataclass(frozen=True)
class SweepCell:
    proj_dim: int
    stages: int
    n_seeds: int
    seed: int
    trainer: TrainerConfig
    dataset: DatasetConfig


def cell_seed(seed: int, proj_dim: int, stages: int, rep: int) -> int:
    return int(np.random.SeedSequence([seed, proj_dim, stages, rep]).generate_state(1, dtype=np.uint64)[0])


def _std(values: List[float]) -> float:
    return float(np.std(values, ddof=1)) if len(values) > 1 else 0.0


def run_cell(cell: SweepCell) -> Dict[str, float]:
    """Train ``n_seeds`` CPCANet runs for one grid cell and summarize them."""
    ds = cell.dataset
    dataset = data.gen_toy_dg(
        ds.input_dim, ds.n_domains, ds.n_classes, ds.n_per_domain, ds.spurious_strength,
        seed=ds.seed, signal=ds.signal, heldout=ds.heldout,
    )
    accs, cpca, task = [], [], []
    for rep in range(cell.n_seeds):
        config = cell.trainer.model_copy(
            update={
                "proj_dim": cell.proj_dim,
                "stages": cell.stages,
                "seed": cell_seed(cell.seed, cell.proj_dim, cell.stages, rep),
                "n_domains": dataset.n_domains - 1,
            }
        )
        result = trainer.fit_on_domains(dataset.training_domains(), dataset.heldout_domain(), config)
        last = result.metrics[-1]
        if not (np.isfinite(last.l_task) and np.isfinite(last.l_cpca)):
            logger.error("sweep.non_finite", d=cell.proj_dim, T=cell.stages, rep=rep)
        accs.append(result.final_heldout_acc)
        cpca.append(last.l_cpca)
        task.append(last.l_task)
    row = {
        "d": cell.proj_dim,
        "T": cell.stages,
        "n_seeds": cell.n_seeds,
        "heldout_acc_mean": float(np.mean(accs)),
        "heldout_acc_std": _std(accs),
        "l_cpca_mean": float(np.mean(cpca)),
        "l_cpca_std": _std(cpca),
        "l_task_mean": float(np.mean(task)),
        "l_task_std": _std(task),
    }
    logger.info("sweep.cell_done", d=cell.proj_dim, T=cell.stages, heldout_acc=row["heldout_acc_mean"])
    return row


def build_cells(sweep: SweepConfig, trainer_config: TrainerConfig, dataset: DatasetConfig, seed: int) -> List[SweepCell]:
    return [
        SweepCell(d, t, sweep.n_seeds, seed, trainer_config, dataset)
        for d in sweep.dims
        for t in sweep.stages
    ]


def run_sweep(cells: List[SweepCell], workers: int = 1) -> List[Dict[str, float]]:
    """Rows in grid order; cells run in a process pool when ``workers > 1``."""
    if workers <= 1:
        return [run_cell(c) for c in cells]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run_cell, cells))
