"""`baseline` and `monitor` subcommands."""

import logging
import sys
from argparse import Namespace, _SubParsersAction
from contextlib import ExitStack

from ..config.settings import settings
from ..services.monitor_service import (
    SensitivityMonitor,
    compute_baseline,
    load_baseline,
    read_stream,
    save_baseline,
    verify_digests,
)
from .audit import add_model_arguments
from .common import emit, encoder_from_document, load_dataset_for_model, load_models, out_path

logger = logging.getLogger(__name__)

EXIT_ALARM = 2


def register(subparsers: _SubParsersAction) -> None:
    baseline = subparsers.add_parser(
        "baseline",
        help="Compute the prediction-sensitivity baseline of a reference set",
    )
    add_model_arguments(baseline, reference=False)
    baseline.add_argument("--data", required=True, help="Reference CSV")
    baseline.add_argument("--schema", help="Schema of the reference CSV")
    baseline.add_argument("--k-sigma", type=float, default=settings.k_sigma)
    baseline.set_defaults(handler=run_baseline)

    monitor = subparsers.add_parser(
        "monitor",
        help="Score a stream of rows and raise alarms (exit 2 if any alarm fired)",
        description="Events are written as NDJSON to --out, or stdout without it.",
    )
    add_model_arguments(monitor, reference=False)
    monitor.add_argument("--baseline", required=True, help="Baseline JSON")
    monitor.add_argument("--stream", required=True, help=".ndjson or .csv rows keyed by column")
    monitor.add_argument("--k-sigma", type=float, default=settings.k_sigma)
    monitor.add_argument("--top-k", type=int, default=settings.top_k)
    monitor.set_defaults(handler=run_monitor)


def run_baseline(args: Namespace) -> int:
    (F, f_doc), (A, _) = load_models(args.classifier, args.protected_model)
    reference = load_dataset_for_model(args.data, args.schema, f_doc)
    # The monitor fills the protected slot from the classifier's stored schema.
    schema = f_doc.dataset_schema
    deploy_absent = bool(
        schema is not None and schema.protected_deploy_absent and reference.protected_index is not None
    )
    baseline = compute_baseline(
        F,
        A,
        reference,
        k_sigma=args.k_sigma,
        workers=settings.workers,
        deploy_absent=deploy_absent,
    )
    path = save_baseline(baseline, out_path(args, "baseline.json"))
    emit(
        {
            "baseline": str(path),
            "mean_ps": baseline.mean_ps,
            "std_ps": baseline.std_ps,
            "n": baseline.n,
            "outliers": baseline.outliers,
            "deploy_absent": baseline.protected_deploy_absent,
        },
        args.quiet,
    )
    return 0


def run_monitor(args: Namespace) -> int:
    (F, f_doc), (A, _) = load_models(args.classifier, args.protected_model)
    baseline = load_baseline(args.baseline)
    verify_digests(baseline, F, A)
    monitor = SensitivityMonitor(
        F,
        A,
        baseline,
        k_sigma=args.k_sigma,
        top_k=args.top_k,
        encoder=encoder_from_document(f_doc),
        batch_size=settings.monitor_batch_size,
        workers=settings.workers,
    )

    with ExitStack() as stack:
        if args.out:
            out = out_path(args, "events.ndjson")
            out.parent.mkdir(parents=True, exist_ok=True)
            sink = stack.enter_context(open(out, "w", encoding="utf-8"))
        else:
            sink = sys.stdout
        for event in monitor.monitor_stream(read_stream(args.stream)):
            sink.write(event.model_dump_json(exclude_none=True) + "\n")

    summary = monitor.summary
    logger.info(
        f"Monitored {summary.rows} rows: {summary.alarms} alarms, {summary.errors} errors "
        f"(threshold {summary.threshold:.6g})"
    )
    return EXIT_ALARM if summary.alarms else 0
