"""
``cpcanet sweep``: grid over projection dimension and unfolded stages.
"""

import structlog

from ..config import Settings
from ..tasks.sweep_tasks import SWEEP_COLUMNS, build_cells, run_sweep
from ..utils.config_files import load_run_config, override
from ..utils.serialization import write_table_csv
from .common import emit, output_dir, resolve_seed

logger = structlog.get_logger(__name__)


def _int_list(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("sweep", parents=parents, help="Mean and std over seeds per (d, T) cell")
    p.add_argument("--dims", type=_int_list, help="Comma-separated projection dimensions")
    p.add_argument("--stages", type=_int_list, help="Comma-separated stage counts")
    p.add_argument("--n-seeds", type=int, dest="n_seeds")
    p.add_argument("--workers", type=int)
    p.add_argument("--steps", type=int, help="Training steps per run")
    p.set_defaults(func=run)


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    sweep = override(run_config.sweep, dims=args.dims, stages=args.stages, n_seeds=args.n_seeds, workers=args.workers)
    trainer_config = override(run_config.trainer, steps=args.steps)
    cells = build_cells(sweep, trainer_config, run_config.dataset, resolve_seed(args, run_config, settings))
    workers = sweep.workers or settings.sweep_workers
    logger.info("sweep.start", cells=len(cells), workers=workers)
    rows = run_sweep(cells, workers)

    path = output_dir(args, run_config, settings) / "sweep.csv"
    write_table_csv(path, SWEEP_COLUMNS, [[row[c] for c in SWEEP_COLUMNS] for row in rows])
    emit({"table": str(path), "cells": len(rows)})
    return 0
