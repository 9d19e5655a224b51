"""`experiment` subcommand: run a multi-trial recipe."""

import logging
from argparse import Namespace, _SubParsersAction
from pathlib import Path

from ..config.settings import settings
from ..models.experiment import ExperimentRecipe
from ..services.errors import ConfigurationError
from ..services.experiment_service import run_experiment
from .common import emit, load_config, out_path

logger = logging.getLogger(__name__)


def register(subparsers: _SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "experiment",
        help="Run every trial of an experiment recipe (--config experiment.json)",
        description=(
            "Trains F, the fair reference and A for every (seed, epochs) pair, audits them "
            "and writes per-trial reports plus summary.json. Data paths in the recipe are "
            "resolved relative to the recipe file."
        ),
    )
    parser.add_argument("--workers", type=int, default=settings.workers)
    parser.set_defaults(handler=run_experiment_command)


def run_experiment_command(args: Namespace) -> int:
    if args.config is None:
        raise ConfigurationError("experiment needs a recipe: --config experiment.json")
    recipe = load_config(args.config, ExperimentRecipe)
    if args.seed is not None:
        recipe = recipe.model_copy(update={"seeds": [args.seed]})
    if args.workers < 1:
        raise ConfigurationError("--workers must be >= 1")
    out_dir = out_path(args, "experiment")
    summary = run_experiment(
        recipe, out_dir, workers=args.workers, base_dir=Path(args.config).resolve().parent
    )
    emit(
        {
            "summary": str(out_dir / "summary.json"),
            "groups": [
                {
                    "epochs": g.epochs,
                    "test_set": g.test_set,
                    "auc_mean": g.auc_mean,
                    "auc_std": g.auc_std,
                    "n_trials": g.n_trials,
                }
                for g in summary.groups
            ],
        },
        args.quiet,
    )
    return 0
