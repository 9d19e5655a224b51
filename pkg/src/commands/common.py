"""Helpers shared by the command modules."""

import json
import logging
from argparse import Namespace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ValidationError

from ..config.settings import settings
from ..models.dataset import DatasetSchema, TabularDataset
from ..models.network import ModelDocument, NetworkParams
from ..services.dataset_service import TabularEncoder, load_csv, read_schema
from ..services.errors import ConfigurationError, InputError
from ..services.network_service import load_model

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


def validation_message(error: ValidationError) -> str:
    """One line naming every offending field."""
    parts = []
    for err in error.errors():
        field = ".".join(str(p) for p in err["loc"]) or "<root>"
        parts.append(f"{field}: {err['msg']}")
    return "; ".join(parts)


def load_config(path: Optional[Union[str, Path]], model: Type[ModelT], **overrides: Any) -> ModelT:
    """Validate a JSON config file (or just ``overrides``) into ``model``."""
    payload: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as f:
                payload = json.load(f)
        except FileNotFoundError as e:
            raise ConfigurationError(f"config file not found: {path}") from e
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"config file {path} is not valid JSON: {e.msg}") from e
        if not isinstance(payload, dict):
            raise ConfigurationError(f"config file {path} must hold a JSON object")
    payload.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return model.model_validate(payload)
    except ValidationError as e:
        source = path or "command-line options"
        raise ConfigurationError(f"invalid {model.__name__} in {source}: {validation_message(e)}")


def parse_hidden(value: str) -> List[int]:
    """'32' or '64,32' -> hidden layer widths; '' means no hidden layer."""
    if not value.strip():
        return []
    try:
        widths = [int(part) for part in value.split(",")]
    except ValueError as e:
        raise InputError(f"--hidden must be comma-separated integers, got {value!r}") from e
    if any(w < 1 for w in widths):
        raise InputError("--hidden widths must be >= 1")
    return widths


def load_models(*paths: Union[str, Path]) -> List[Tuple[NetworkParams, ModelDocument]]:
    return [load_model(path) for path in paths]


def encoder_from_document(document: ModelDocument) -> Optional[TabularEncoder]:
    """The encoder frozen into a model file, if it carries one."""
    if document.dataset_schema is None or document.encoder is None:
        return None
    return TabularEncoder(document.dataset_schema, state=document.encoder)


def load_dataset_for_model(
    data_path: Union[str, Path],
    schema_path: Optional[Union[str, Path]],
    document: ModelDocument,
) -> TabularDataset:
    """Encode ``data_path`` the way the model's training data was encoded.

    Without ``schema_path``, or with the schema stored in the model file, the
    frozen encoder is used. Any other schema describes an already-encoded
    file and is fitted on it.
    """
    frozen = encoder_from_document(document)
    schema: Optional[DatasetSchema] = read_schema(schema_path) if schema_path else None
    if schema is None:
        if frozen is None:
            raise ConfigurationError("model file has no stored schema; pass --schema")
        return load_csv(data_path, frozen.schema, encoder=frozen)
    if frozen is not None and schema == frozen.schema:
        return load_csv(data_path, schema, encoder=frozen)
    return load_csv(data_path, schema)


def out_path(args: Namespace, default_name: str) -> Path:
    """``--out`` if given, else ``default_name`` under the configured output directory."""
    return Path(args.out) if args.out else Path(settings.output_dir) / default_name


def emit(result: Dict[str, Any], quiet: bool = False) -> None:
    """Print a one-line JSON result to stdout."""
    if not quiet:
        print(json.dumps(result, sort_keys=True))
