"""Command-line entry point for fairwatch."""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from src.commands import audit, data, experiment, monitor, train
from src.commands.common import out_path, validation_message
from src.config.settings import settings
from src.services.errors import FairwatchError, NumericalFailureError

EXIT_OK = 0
EXIT_ERROR = 1

# Commands whose --out names a directory rather than a file.
DIRECTORY_COMMANDS = {"synth", "augment", "experiment"}
DEFAULT_OUTPUTS = {
    "train": "model.json",
    "audit": "report.json",
    "baseline": "baseline.json",
    "monitor": "events.ndjson",
}

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class FairwatchArgumentParser(argparse.ArgumentParser):
    """Usage errors exit with status 1; status 2 is reserved for monitor alarms."""

    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


class JsonFormatter(logging.Formatter):
    """One JSON object per log record."""

    def format(self, record: logging.LogRecord) -> str:
        payload = {
            "time": self.formatTime(record),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        if record.exc_info:
            payload["exception"] = self.formatException(record.exc_info)
        return json.dumps(payload)


def setup_logging(
    level: str = "INFO", fmt: str = "text", sidecar: Optional[Path] = None
) -> None:
    """Configure root logging to stderr and, optionally, a sidecar log file."""
    formatter = JsonFormatter() if fmt == "json" else logging.Formatter(TEXT_FORMAT)
    handlers: List[logging.Handler] = [logging.StreamHandler(sys.stderr)]
    if sidecar is not None:
        sidecar.parent.mkdir(parents=True, exist_ok=True)
        handlers.append(logging.FileHandler(sidecar, encoding="utf-8"))
    for handler in handlers:
        handler.setFormatter(formatter)

    root = logging.getLogger()
    for handler in list(root.handlers):
        root.removeHandler(handler)
        handler.close()
    root.setLevel(getattr(logging, level))
    for handler in handlers:
        root.addHandler(handler)

    # Set external library log levels
    logging.getLogger("numexpr").setLevel(logging.WARNING)
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def build_parser() -> argparse.ArgumentParser:
    parser = FairwatchArgumentParser(
        prog="fairwatch",
        description="Counterfactual-fairness audit and monitoring via prediction sensitivity",
    )
    parser.add_argument("--seed", type=int, help="Seed for data generation, splits and training")
    parser.add_argument("--config", help="JSON config document for the command")
    parser.add_argument("--out", help="Output file or directory")
    parser.add_argument("--quiet", action="store_true", help="Only log warnings and errors")

    subparsers = parser.add_subparsers(dest="command", required=True)
    for module in (data, train, audit, monitor, experiment):
        module.register(subparsers)
    return parser


def _sidecar_path(args: argparse.Namespace) -> Optional[Path]:
    if args.command in DIRECTORY_COMMANDS:
        return out_path(args, args.command) / "run.log"
    if args.command == "monitor" and not args.out:
        return None
    return out_path(args, DEFAULT_OUTPUTS[args.command]).parent / "run.log"


def main(argv: Optional[List[str]] = None) -> int:
    """Parse ``argv``, run the command and return its exit status."""
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.seed is not None and args.seed < 0:
        parser.error("--seed must be a non-negative integer")

    level = "WARNING" if args.quiet or settings.is_quiet else settings.log_level
    setup_logging(level, settings.log_format, _sidecar_path(args))
    logger = logging.getLogger(__name__)
    logger.info(f"fairwatch {args.command}")

    try:
        return args.handler(args)
    except ValidationError as e:
        logger.error(f"Invalid configuration: {validation_message(e)}")
        print(f"error: invalid configuration: {validation_message(e)}", file=sys.stderr)
    except NumericalFailureError as e:
        logger.error(f"Training diverged at epoch {e.epoch}: {e}")
        print(f"error: {e}", file=sys.stderr)
    except FairwatchError as e:
        logger.error(str(e))
        print(f"error: {e}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
