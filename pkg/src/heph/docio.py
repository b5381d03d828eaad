"""Structured-document I/O shared by every exchange format in the harness.

All brief, blueprint, solver-report, feedback, manifest, and verdict files use
one syntax: a YAML-compatible subset of maps, sequences, and scalars. Anchors,
aliases, and non-standard tags are rejected so the documents stay portable and
diffable. Parsing is total: any byte string either yields a document or raises
ParseError, never an uncaught exception.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .errors import ParseError, SchemaError

Doc = dict[str, Any]


@dataclass(frozen=True)
class Diagnostic:
    """One validation finding: severity is 'error', 'warning', or 'info'."""

    severity: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"[{self.severity}] {self.path}: {self.message}"


def errors_of(diags: list[Diagnostic]) -> list[Diagnostic]:
    return [d for d in diags if d.severity == "error"]


def _reject_rich_yaml(text: str) -> None:
    # The subset forbids anchors, aliases, and application tags. yaml.parse
    # is an event stream, so this also acts as a cheap pre-validation pass.
    try:
        for event in yaml.parse(text):
            if isinstance(event, yaml.AliasEvent):
                raise ParseError("aliases are outside the accepted document subset")
            anchor = getattr(event, "anchor", None)
            if anchor is not None and not isinstance(event, yaml.AliasEvent):
                raise ParseError(f"anchor {anchor!r} is outside the accepted document subset")
            tag = getattr(event, "tag", None)
            if tag is not None and not tag.startswith("tag:yaml.org,2002:"):
                raise ParseError(f"tag {tag!r} is outside the accepted document subset")
    except ParseError:
        raise
    except yaml.YAMLError as exc:
        raise _parse_error_from_yaml(exc) from exc
    except Exception as exc:  # pragma: no cover - defensive; parsing must be total
        raise ParseError(f"unreadable document: {exc}") from exc


def _parse_error_from_yaml(exc: yaml.YAMLError) -> ParseError:
    mark = getattr(exc, "problem_mark", None)
    line = mark.line + 1 if mark is not None else None
    return ParseError(f"malformed document: {exc}", line=line)


def loads(data: str | bytes) -> Any:
    """Parse one document from text or bytes. Raises ParseError, never crashes."""
    if isinstance(data, bytes):
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"not valid UTF-8: {exc}") from exc
    else:
        text = data
    _reject_rich_yaml(text)
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise _parse_error_from_yaml(exc) from exc
    except Exception as exc:  # recursion, value errors on exotic scalars, ...
        raise ParseError(f"unreadable document: {exc}") from exc
    return doc


def load_path(path: str | Path) -> Any:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    return loads(data)


def dumps(doc: Any) -> str:
    """Serialize with stable key order (insertion order) and plain scalars."""
    return yaml.safe_dump(doc, sort_keys=False, default_flow_style=False, allow_unicode=True)


def dump_path(path: str | Path, doc: Any) -> None:
    Path(path).write_text(dumps(doc), encoding="utf-8")


def expect_map(doc: Any, where: str) -> Doc:
    if not isinstance(doc, dict):
        raise SchemaError(where, f"expected a map, got {type(doc).__name__}")
    return doc


def expect_list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(where, f"expected a sequence, got {type(value).__name__}")
    return value


def expect_str(value: Any, where: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaError(where, "expected a nonempty string")
    return value


def expect_finite(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(where, f"expected a number, got {type(value).__name__}")
    out = float(value)
    if not math.isfinite(out):
        raise SchemaError(where, "value must be finite")
    return out


def check_schema_tag(doc: Doc, expected: str, where: str) -> None:
    tag = doc.get("schema")
    if tag != expected:
        raise SchemaError(where, f"expected schema {expected!r}, got {tag!r}")


@dataclass
class DocBuilder:
    """Tiny helper for assembling schema-tagged documents in a fixed order."""

    schema: str
    body: Doc = field(default_factory=dict)

    def set(self, key: str, value: Any) -> "DocBuilder":
        self.body[key] = value
        return self

    def doc(self) -> Doc:
        out: Doc = {"schema": self.schema}
        out.update(self.body)
        return out
