"""`audit` subcommand."""

import logging
from argparse import Namespace, _SubParsersAction

from ..config.settings import settings
from ..models.base import content_digest, write_document
from ..services.audit_service import audit_config_digest, audit_report, write_roc_csv
from ..services.dataset_service import counterfactual_augment
from .common import emit, load_dataset_for_model, load_models, out_path

logger = logging.getLogger(__name__)


def add_model_arguments(parser, reference: bool = True) -> None:
    parser.add_argument("--classifier", required=True, help="Model file of the audited classifier F")
    if reference:
        parser.add_argument(
            "--reference", required=True, help="Model file of the counterfactually fair reference"
        )
    parser.add_argument(
        "--protected-model", required=True, help="Model file of the protected-status model A"
    )


def register(subparsers: _SubParsersAction) -> None:
    parser = subparsers.add_parser(
        "audit",
        help="Audit a classifier against a fair reference on a test set",
        description="Writes the report JSON to --out and roc.csv next to it.",
    )
    add_model_arguments(parser)
    parser.add_argument("--data", required=True, help="Test CSV")
    parser.add_argument(
        "--schema", help="Schema of the test CSV (default: the schema stored in the classifier)"
    )
    parser.add_argument("--records", action="store_true", help="Include per-row records")
    parser.add_argument(
        "--augment-test", action="store_true", help="Audit on the augmented test set"
    )
    parser.set_defaults(handler=run_audit)


def run_audit(args: Namespace) -> int:
    (F, f_doc), (F_hat, _), (A, _) = load_models(args.classifier, args.reference, args.protected_model)
    test = load_dataset_for_model(args.data, args.schema, f_doc)
    test_set = "original"
    if args.augment_test:
        test = counterfactual_augment(test)
        test_set = "augmented"

    digest = content_digest(
        {"command": "audit", "test_set": test_set, "audit": audit_config_digest(F, F_hat, A, test)}
    )
    report = audit_report(
        F,
        F_hat,
        A,
        test,
        include_records=args.records,
        config_digest=digest,
        test_set=test_set,
        top_k=settings.top_k,
        workers=settings.workers,
    )
    report_path = write_document(report, out_path(args, "report.json"))
    roc_path = None
    if report.roc is not None:
        roc_path = write_roc_csv(report.roc, report_path.with_name(f"{report_path.stem}-roc.csv"))
    emit(
        {
            "report": str(report_path),
            "roc": str(roc_path) if roc_path else None,
            "members": report.members,
            "non_members": report.non_members,
            "auc": report.auc,
            "auc_status": report.auc_status,
        },
        args.quiet,
    )
    return 0
