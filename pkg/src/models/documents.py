"""Document encoding shared by scenario files, metrics exports and the control-plane wire schema."""

import json
from pathlib import Path
from typing import Any, Dict, Type, TypeVar, Union
from pydantic import BaseModel

ModelT = TypeVar("ModelT", bound=BaseModel)


def encode_document(model: BaseModel, indent: int = 2) -> str:
    """Encode a model as a structured-text (JSON) document.

    Field names are kept exactly as declared; null optionals are kept so the
    document round-trips to a structurally equal model.
    """
    return model.model_dump_json(indent=indent)


def decode_document(model_type: Type[ModelT], document: Union[str, bytes, Dict[str, Any]]) -> ModelT:
    """Decode a document (text or already-parsed tree) into a model."""
    if isinstance(document, dict):
        return model_type.model_validate(document)
    return model_type.model_validate_json(document)


def read_document(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a document file into a plain tree of dicts, lists and scalars."""
    return json.loads(Path(path).read_text(encoding="utf-8"))


def write_document(model: BaseModel, path: Union[str, Path]) -> Path:
    """Write a model as a document file, creating parent directories."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(encode_document(model) + "\n", encoding="utf-8")
    return path
