"""Loading and validation of the versioned report schemas shipped in-repo."""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import jsonschema
from jsonschema import Draft202012Validator
from referencing import Registry, Resource

SCHEMA_VERSION = 1
_KINDS = {"fit": "fit", "test": "test", "simulation": "simulation", "auc-eval": "auc"}


@lru_cache(maxsize=None)
def _registry():
    reg = Registry()
    for name in _KINDS.values():
        path = resources.files("npr.schemas").joinpath(f"{name}.schema.json")
        schema = json.loads(path.read_text())
        reg = reg.with_resource(f"npr/{name}.schema.json", Resource.from_contents(schema))
    return reg


@lru_cache(maxsize=None)
def load_schema(kind: str) -> dict:
    if kind not in _KINDS:
        raise ValueError(f"unknown report kind {kind!r}")
    path = resources.files("npr.schemas").joinpath(f"{_KINDS[kind]}.schema.json")
    return json.loads(path.read_text())


def validate_report(report: dict) -> None:
    """Validate a report dict against the schema for its ``kind`` field.

    Raises ``jsonschema.ValidationError`` on mismatch.
    """
    kind = report.get("kind")
    schema = load_schema(kind)
    validator = Draft202012Validator(schema, registry=_registry())
    validator.validate(report)


__all__ = ["SCHEMA_VERSION", "load_schema", "validate_report", "jsonschema"]
