"""`synth` and `augment` subcommands."""

import logging
from argparse import Namespace, _SubParsersAction

from ..models.base import write_document
from ..models.dataset import BiasSpec, CausalModelSpec
from ..services.dataset_service import (
    counterfactual_augment,
    generate_biased_synthetic,
    generate_fair_synthetic,
    load_csv,
    read_schema,
    save_dataset,
)
from .common import emit, load_config, out_path

logger = logging.getLogger(__name__)


def register(subparsers: _SubParsersAction) -> None:
    synth = subparsers.add_parser(
        "synth",
        help="Generate two-cluster synthetic data (fair, or biased with --biased)",
        description="Writes data.csv, data.schema.json and spec.json into --out.",
    )
    synth.add_argument("--n-samples", type=int, help="Rows to generate (overrides --config)")
    synth.add_argument(
        "--biased",
        action="store_true",
        help="Inject label-dependent protected status with default probabilities 0.25/0.75",
    )
    synth.set_defaults(handler=run_synth)

    augment = subparsers.add_parser(
        "augment",
        help="Counterfactually augment a dataset (adds a copy with negated protected status)",
        description="Writes the augmented dataset in encoded form into --out.",
    )
    augment.add_argument("--data", required=True, help="Input CSV")
    augment.add_argument("--schema", required=True, help="Schema JSON of the input CSV")
    augment.set_defaults(handler=run_augment)


def run_synth(args: Namespace) -> int:
    spec = load_config(
        args.config,
        CausalModelSpec,
        n_samples=args.n_samples,
        seed=args.seed,
    )
    if args.biased and spec.bias is None:
        spec = spec.model_copy(update={"bias": BiasSpec()})
    data = generate_biased_synthetic(spec) if spec.bias is not None else generate_fair_synthetic(spec)

    out_dir = out_path(args, "synth")
    csv_path, schema_path = save_dataset(data, out_dir / "data.csv", out_dir / "data.schema.json")
    write_document(spec, out_dir / "spec.json")
    logger.info(f"Generated {data.n_rows} {data.provenance.value} rows")
    emit(
        {
            "rows": data.n_rows,
            "provenance": data.provenance.value,
            "data": str(csv_path),
            "schema": str(schema_path),
        },
        args.quiet,
    )
    return 0


def run_augment(args: Namespace) -> int:
    schema = read_schema(args.schema)
    data = counterfactual_augment(load_csv(args.data, schema))
    out_dir = out_path(args, "augment")
    csv_path, schema_path = save_dataset(data, out_dir / "data.csv", out_dir / "data.schema.json")
    emit({"rows": data.n_rows, "data": str(csv_path), "schema": str(schema_path)}, args.quiet)
    return 0
