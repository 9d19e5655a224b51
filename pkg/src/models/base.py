"""Shared pydantic base model and JSON document helpers."""

import hashlib
import json
from pathlib import Path
from typing import Any, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict

UINT64_MAX = 2**64 - 1

DocumentT = TypeVar("DocumentT", bound=BaseModel)


class FairwatchModel(BaseModel):
    """Base for every document that is read from or written to disk."""

    model_config = ConfigDict(extra="forbid", validate_assignment=True)


def canonical_json(payload: Any) -> str:
    """Serialize to JSON with sorted keys and no insignificant whitespace."""
    if isinstance(payload, BaseModel):
        payload = payload.model_dump(mode="json")
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), allow_nan=False)


def content_digest(payload: Any) -> str:
    """SHA-256 hex digest of the canonical JSON form of ``payload``."""
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def write_document(document: BaseModel, path: Union[str, Path]) -> Path:
    """Write a document as indented JSON with a trailing newline.

    Floats go through ``repr``, which is the shortest string that parses back
    to the same double, so numeric content round-trips bit-exactly.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(document.model_dump(mode="json"), indent=2, allow_nan=False)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def read_document(model: Type[DocumentT], path: Union[str, Path]) -> DocumentT:
    """Read and validate a JSON document."""
    with open(path, "r", encoding="utf-8") as f:
        payload = json.load(f)
    return model.model_validate(payload)
