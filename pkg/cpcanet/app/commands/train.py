"""
``cpcanet train``: end-to-end training on a dataset manifest or a generated toy set.
"""

import structlog

from ..config import Settings
from ..schemas.training import ModelKind
from ..services import data, trainer
from ..utils.config_files import load_run_config, override
from ..utils.serialization import load_checkpoint, save_checkpoint, write_matrix_csv, write_metrics_csv
from .common import emit, explicit_seed, output_dir

logger = structlog.get_logger(__name__)


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("train", parents=parents, help="Train CPCANet or the ERM baseline")
    p.add_argument("--manifest", help="Dataset manifest JSON; a toy set is generated when omitted")
    p.add_argument("--model", choices=[m.value for m in ModelKind])
    p.add_argument("--steps", type=int)
    p.add_argument("--lambda-cpca", type=float, dest="lambda_cpca")
    p.add_argument("--freeze-modulation", action="store_true", default=None, dest="freeze_modulation")
    p.add_argument("--resume", metavar="CHECKPOINT_DIR", help="Start from a saved checkpoint instead of a random init")
    p.set_defaults(func=run)


def load_domains(args, run_config):
    """(training domains, held-out domain, p, C) from a manifest or the toy generator."""
    if args.manifest:
        manifest, domains = data.load_manifest_dataset(args.manifest)
        train = [d for k, d in enumerate(domains) if k != manifest.heldout]
        return train, domains[manifest.heldout], manifest.p, manifest.C
    cfg = run_config.dataset
    dataset = data.gen_toy_dg(
        cfg.input_dim, cfg.n_domains, cfg.n_classes, cfg.n_per_domain, cfg.spurious_strength,
        seed=cfg.seed, signal=cfg.signal, heldout=cfg.heldout,
    )
    return dataset.training_domains(), dataset.heldout_domain(), dataset.input_dim, dataset.n_classes


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    train_domains, heldout, p, n_classes = load_domains(args, run_config)
    config = override(
        run_config.trainer,
        input_dim=p,
        n_classes=n_classes,
        n_domains=len(train_domains),
        model=args.model,
        steps=args.steps,
        lambda_cpca=args.lambda_cpca,
        freeze_modulation=args.freeze_modulation,
        seed=explicit_seed(args, run_config),
    )
    init_params = None
    if args.resume:
        init_params = load_checkpoint(args.resume, config)
        logger.info("train.resume", checkpoint=args.resume, values=init_params.n_values())
    result = trainer.fit_on_domains(train_domains, heldout, config, init_params=init_params)

    out = output_dir(args, run_config, settings)
    write_metrics_csv(out / "metrics.csv", result.metrics)
    save_checkpoint(out / "checkpoint", result.params)
    if result.basis is not None:
        write_matrix_csv(out / "basis.csv", result.basis.values)
    emit(
        {
            "metrics": str(out / "metrics.csv"),
            "checkpoint": str(out / "checkpoint"),
            "model": config.model.value,
            "steps": config.steps,
            "final_heldout_acc": result.final_heldout_acc,
            "resumed_from": args.resume,
        }
    )
    return 0
