"""`train` subcommand: fit one network on a CSV and save it as a model file."""

import logging
from argparse import Namespace, _SubParsersAction

from ..config.settings import settings
from ..models.network import NetworkSpec, TrainConfig
from ..services.dataset_service import (
    TabularEncoder,
    counterfactual_augment,
    derive_seed,
    load_csv_split,
    read_schema,
    read_table,
    save_dataset,
)
from ..services.network_service import (
    init_network,
    save_model,
    train_with_history,
    training_metadata,
)
from .common import emit, load_config, out_path, parse_hidden

logger = logging.getLogger(__name__)


def register(subparsers: _SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "train",
        help="Train a classifier (--target label) or protected-status model (--target protected)",
        description=(
            "--config takes a train config JSON (learning_rate, epochs, batch_size, "
            "adam_beta1, adam_beta2, adam_epsilon, shuffle_seed)."
        ),
    )
    parser.add_argument("--data", required=True, help="Training CSV")
    parser.add_argument("--schema", required=True, help="Schema JSON of the CSV")
    parser.add_argument("--target", choices=["label", "protected"], default="label")
    parser.add_argument(
        "--hidden",
        default=str(settings.default_hidden_width),
        help="Comma-separated hidden layer widths (default: %(default)s)",
    )
    parser.add_argument("--epochs", type=int, help="Overrides the train config")
    parser.add_argument(
        "--test-fraction",
        type=float,
        help="Hold out this fraction before fitting; the split is written next to the model",
    )
    parser.add_argument(
        "--augment",
        action="store_true",
        help="Train on the counterfactual augmentation of the training rows",
    )
    parser.set_defaults(handler=run_train)


def run_train(args: Namespace) -> int:
    seed = args.seed or 0
    schema = read_schema(args.schema)
    if args.config is None:
        cfg = settings.default_train_config(shuffle_seed=derive_seed(seed, 1))
        if args.epochs is not None:
            cfg = TrainConfig.model_validate({**cfg.model_dump(), "epochs": args.epochs})
    else:
        cfg = load_config(args.config, TrainConfig, epochs=args.epochs)

    model_path = out_path(args, "model.json")
    test = None
    if args.test_fraction is not None:
        train, test, encoder = load_csv_split(args.data, schema, args.test_fraction, seed)
        split_csv = model_path.with_name(f"{model_path.stem}-test.csv")
        save_dataset(test, split_csv, model_path.with_name(f"{model_path.stem}-test.schema.json"))
    else:
        frame = read_table(args.data, schema)
        encoder = TabularEncoder(schema).fit(frame)
        train = encoder.transform(frame)
    if args.augment:
        train = counterfactual_augment(train)

    spec = NetworkSpec(
        input_dim=train.input_dim, hidden_widths=parse_hidden(args.hidden), seed=seed
    )
    run = train_with_history(init_network(spec), train, cfg, target_column=args.target)
    metadata = training_metadata(run, train, cfg, args.target, test=test)
    save_model(
        run.params,
        model_path,
        training=metadata,
        dataset_schema=schema,
        encoder=encoder.state,
    )
    emit(
        {
            "model": str(model_path),
            "digest": run.params.digest,
            "target": args.target,
            "train_accuracy": metadata.train_accuracy,
            "test_accuracy": metadata.test_accuracy,
            "final_loss": run.loss_history[-1] if run.loss_history else None,
        },
        args.quiet,
    )
    return 0
