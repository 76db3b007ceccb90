"""
``cpcanet bench``: pairwise-rotation fit against the unfolded solver on planted ensembles.

``bench.csv`` holds only seed-determined values; wall-clock times go to
``bench_timing.csv`` next to it.
"""

import time

import numpy as np
import structlog

from ..config import Settings
from ..schemas.training import ModelKind
from ..services import data, fg, linalg, net, trainer
from ..services.unfold import unfold_solve
from ..utils.config_files import load_run_config, override
from ..utils.serialization import write_table_csv
from .common import emit, output_dir, resolve_seed
from .unfold import ZERO_HYPER_ETA

logger = structlog.get_logger(__name__)

BENCH_COLUMNS = (
    "trial",
    "fg_residual",
    "fg_sweeps",
    "fg_angle",
    "unfold_residual",
    "unfold_offdiag",
    "unfold_angle",
)
TIMING_COLUMNS = ("trial", "fg_seconds", "unfold_seconds")


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("bench", parents=parents, help="Compare the two solvers and the naive readout")
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("-d", "--dim", type=int, help="Ensemble dimension")
    p.add_argument("-K", "--domains", type=int, help="Domains per ensemble")
    p.add_argument("--noise", type=float)
    p.add_argument("-T", "--stages", type=int, help="Unfolded stages")
    p.add_argument("--eta", type=float, default=ZERO_HYPER_ETA, help="Step size for every stage")
    p.add_argument("--steps", type=int, help="Training steps for the readout comparison; 0 skips it")
    p.set_defaults(func=run)


def solver_trial(trial: int, covs, truth, fg_config, unfold_config, eta: float):
    """One row of bench.csv and one of bench_timing.csv."""
    start = time.perf_counter()
    fit = fg.fg_fit(covs, fg_config)
    fg_seconds = time.perf_counter() - start

    start = time.perf_counter()
    beta, trace = unfold_solve(covs, [eta] * unfold_config.stages, unfold_config)
    unfold_seconds = time.perf_counter() - start

    row = [
        trial,
        fit.residual,
        fit.sweeps_used,
        linalg.max_column_angle(fit.basis, truth),
        fg.ml_residual(beta, covs),
        trace.final.offdiag,
        linalg.max_column_angle(beta, truth),
    ]
    return row, [trial, fg_seconds, unfold_seconds]


def readout_comparison(run_config, steps: int, seed: int) -> dict:
    """Held-out accuracy of a softmax fitted on U = Z beta versus the trained model."""
    ds = run_config.dataset
    dataset = data.gen_toy_dg(
        ds.input_dim, ds.n_domains, ds.n_classes, ds.n_per_domain, ds.spurious_strength,
        seed=ds.seed, signal=ds.signal, heldout=ds.heldout,
    )
    config = override(
        run_config.trainer,
        input_dim=dataset.input_dim,
        n_classes=dataset.n_classes,
        n_domains=dataset.n_domains - 1,
        steps=steps,
        seed=seed,
        model=ModelKind.CPCANET,
    )
    result = trainer.fit_on_domains(dataset.training_domains(), dataset.heldout_domain(), config)
    x = np.vstack([x for x, _ in dataset.training_domains()])
    y = np.concatenate([y for _, y in dataset.training_domains()])
    readout = net.fit_naive_classifier(net.project(result.params, x, result.basis), y, dataset.n_classes)
    hx, hy = dataset.heldout_domain()
    return {
        "naive_heldout_acc": net.accuracy(readout.logits(net.project(result.params, hx, result.basis)), hy),
        "model_heldout_acc": result.final_heldout_acc,
    }


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    seed = resolve_seed(args, run_config, settings)
    ens = override(run_config.ensemble, dim=args.dim, n_domains=args.domains, noise=args.noise)
    unfold_config = override(run_config.unfold, stages=args.stages, proj_dim=ens.dim)

    rows, timings = [], []
    for trial in range(args.trials):
        ensemble = data.gen_common_ensemble(
            ens.dim, ens.n_domains, (ens.spectra_low, ens.spectra_high), ens.noise,
            seed=seed + trial, n_samples=ens.n_samples,
        )
        row, timing = solver_trial(
            trial, ensemble.covariances, ensemble.truth, run_config.fg, unfold_config, args.eta
        )
        rows.append(row)
        timings.append(timing)
        logger.debug("bench.trial", trial=trial, fg_residual=row[1], unfold_residual=row[4])

    out = output_dir(args, run_config, settings)
    write_table_csv(out / "bench.csv", BENCH_COLUMNS, rows)
    write_table_csv(out / "bench_timing.csv", TIMING_COLUMNS, timings)
    summary = {
        "table": str(out / "bench.csv"),
        "trials": args.trials,
        "fg_residual_max": max((r[1] for r in rows), default=0.0),
        "unfold_offdiag_mean": float(np.mean([r[5] for r in rows])) if rows else 0.0,
    }
    steps = run_config.trainer.steps if args.steps is None else args.steps
    if steps > 0:
        summary.update(readout_comparison(run_config, steps, seed))
    emit(summary)
    return 0
