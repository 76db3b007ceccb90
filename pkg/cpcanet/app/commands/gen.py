"""
``cpcanet gen``: write synthetic covariance ensembles and toy datasets.
"""

import structlog

from ..config import Settings
from ..services import data
from ..utils.config_files import load_run_config, override
from ..utils.serialization import write_covariance_set, write_matrix_csv
from .common import emit, explicit_seed, output_dir

logger = structlog.get_logger(__name__)


def register(subparsers, parents) -> None:
    p = subparsers.add_parser("gen", parents=parents, help="Generate synthetic data with known ground truth")
    p.add_argument("kind", choices=["ensemble", "toy"])
    p.add_argument("-d", "--dim", type=int, help="Ensemble dimension")
    p.add_argument("-p", "--input-dim", type=int, dest="input_dim", help="Toy input dimension")
    p.add_argument("-K", "--domains", type=int, help="Number of domains (toy: held-out included)")
    p.add_argument("-C", "--classes", type=int, help="Toy classes")
    p.add_argument("--n-per-domain", type=int, dest="n_per_domain")
    p.add_argument("--strength", type=float, help="Toy spurious strength")
    p.add_argument("--noise", type=float, help="Ensemble noise level")
    p.set_defaults(func=run)


def run(args, settings: Settings) -> int:
    run_config = load_run_config(args.config)
    out = output_dir(args, run_config, settings)
    seed = explicit_seed(args, run_config)

    if args.kind == "ensemble":
        cfg = override(run_config.ensemble, dim=args.dim, n_domains=args.domains, noise=args.noise, seed=seed)
        ensemble = data.gen_common_ensemble(
            cfg.dim, cfg.n_domains, (cfg.spectra_low, cfg.spectra_high), cfg.noise, cfg.seed, cfg.n_samples
        )
        write_covariance_set(out / "ensemble.json", ensemble.covariances)
        write_matrix_csv(out / "truth.csv", ensemble.truth.values)
        write_matrix_csv(out / "spectra.csv", ensemble.spectra)
        emit({"covariances": str(out / "ensemble.json"), "truth": str(out / "truth.csv"), "d": cfg.dim})
        return 0

    cfg = override(
        run_config.dataset,
        input_dim=args.input_dim,
        n_domains=args.domains,
        n_classes=args.classes,
        n_per_domain=args.n_per_domain,
        spurious_strength=args.strength,
        seed=seed,
    )
    dataset = data.gen_toy_dg(
        cfg.input_dim, cfg.n_domains, cfg.n_classes, cfg.n_per_domain, cfg.spurious_strength,
        seed=cfg.seed, signal=cfg.signal, heldout=cfg.heldout,
    )
    manifest = data.write_toy_dataset(out / "toy", dataset)
    emit({"manifest": str(manifest), "heldout": dataset.heldout, "domains": dataset.n_domains})
    return 0
