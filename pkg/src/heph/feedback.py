"""Per-attempt feedback artifacts and exchange-document schemas.

Three document types travel between the controller, the solver layer, and the
agent: ``solver_report.v1`` (neutral solver output, built-in or external),
``feedback.v1`` (basic or deep grading feedback), and ``inspection.v1`` (the
agent-authored visual-inspection record). All three share the harness's
structured-document syntax and carry explicit schema tags.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import docio
from .checker import CaseVerdict
from .errors import SchemaError

SOLVER_REPORT_NAME = "solver_report.v1"
FEEDBACK_NAME = "feedback.v1"
INSPECTION_NAME = "inspection.v1"

FEEDBACK_SIZE_LIMIT = 64 * 1024  # bytes; reports must fit one agent context

_DEEP_FIELDS = ("measured", "measured_unit", "limit", "unit", "operator", "margin",
                "worst_scope", "provenance", "binding_note", "scope_values",
                "tolerance", "tolerance_is_default")


def parse_solver_report_doc(doc: Any, where: str = "solver_report") -> dict[str, Any]:
    doc = docio.expect_map(doc, where)
    docio.check_schema_tag(doc, "solver_report/1", where)
    status = doc.get("status")
    if status not in ("ok", "solver_error"):
        raise SchemaError(f"{where}.status", f"expected ok or solver_error, got {status!r}")
    errors = doc.get("errors") or []
    if status == "ok" and errors:
        raise SchemaError(f"{where}.errors", "status ok but errors present")
    for lc, metrics in docio.expect_map(doc.get("cases", {}) or {}, f"{where}.cases").items():
        for key, entry in docio.expect_map(metrics, f"{where}.cases.{lc}").items():
            entry = docio.expect_map(entry, f"{where}.cases.{lc}.{key}")
            docio.expect_finite(entry.get("value"), f"{where}.cases.{lc}.{key}.value")
    for lc, entry in docio.expect_map(doc.get("buckling", {}) or {}, f"{where}.buckling").items():
        entry = docio.expect_map(entry, f"{where}.buckling.{lc}")
        factors = docio.expect_list(entry.get("load_factors") or [], f"{where}.buckling.{lc}.load_factors")
        for i, lf in enumerate(factors):
            value = docio.expect_finite(lf, f"{where}.buckling.{lc}.load_factors[{i}]")
            if value <= 0:
                raise SchemaError(f"{where}.buckling.{lc}.load_factors[{i}]", "load factors must be positive")
    modal = docio.expect_map(doc.get("modal") or {}, f"{where}.modal")
    freqs = docio.expect_list(modal.get("frequencies_hz") or [], f"{where}.modal.frequencies_hz")
    for i, f in enumerate(freqs):
        docio.expect_finite(f, f"{where}.modal.frequencies_hz[{i}]")
    for i, err in enumerate(docio.expect_list(errors, f"{where}.errors")):
        err = docio.expect_map(err, f"{where}.errors[{i}]")
        docio.expect_str(err.get("analysis_class"), f"{where}.errors[{i}].analysis_class")
        docio.expect_str(err.get("message"), f"{where}.errors[{i}].message")
    return doc


def parse_solver_report(path: str | Path) -> dict[str, Any]:
    """Load and validate a solver report; unknown metric keys are preserved."""
    return parse_solver_report_doc(docio.load_path(path))


def serialize_solver_report(report: dict[str, Any]) -> str:
    return docio.dumps(report)


@dataclass
class FeedbackReport:
    level: str  # basic | deep
    attempt: int
    case_id: str
    summary: str
    counts: dict[str, int]
    strict_pass: bool
    req_pass_fraction: float
    entries: list[dict[str, Any]]
    analysis_failures: list[dict[str, str]] = field(default_factory=list)
    failure_category: str = ""
    primary_claim_id: str = ""
    retry_advice: str = ""

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema": "feedback/1",
            "level": self.level,
            "attempt": self.attempt,
            "case_id": self.case_id,
            "summary": self.summary,
            "strict_pass": self.strict_pass,
            "req_pass_fraction": self.req_pass_fraction,
            "counts": dict(self.counts),
            "requirements": [dict(e) for e in self.entries],
            "analysis_failures": [dict(e) for e in self.analysis_failures],
            "failure_category": self.failure_category,
            "primary_claim_id": self.primary_claim_id,
            "retry_advice": self.retry_advice,
        }


def render_feedback(case: CaseVerdict, level: str, attempt: int,
                    analysis_failures: list[dict[str, str]] | None = None) -> FeedbackReport:
    """Build the per-attempt report; basic carries statuses only, deep adds numbers."""
    if level not in ("basic", "deep"):
        raise ValueError(f"unknown feedback level {level!r}")
    counts = case.counts()
    evaluable = len(case.verdicts) - counts["not_evaluable"]
    summary = f"{counts['pass']}/{evaluable} requirements pass"
    if counts["not_evaluable"]:
        summary += f" ({counts['not_evaluable']} not evaluable)"

    entries: list[dict[str, Any]] = []
    for v in case.verdicts:
        entry: dict[str, Any] = {"id": v.requirement_id, "status": v.status, "metric": v.metric}
        if level == "deep":
            doc = v.to_doc()
            for key in _DEEP_FIELDS:
                if key in doc:
                    entry[key] = doc[key]
            if math.isinf(doc.get("measured", 0.0)):
                entry["measured"] = "no compressive member"  # infinity is notation, not data
        entries.append(entry)

    report = FeedbackReport(
        level=level,
        attempt=attempt,
        case_id=case.case_id,
        summary=summary,
        counts=counts,
        strict_pass=case.strict_pass,
        req_pass_fraction=case.req_pass_fraction,
        entries=entries,
        analysis_failures=list(analysis_failures or []),
    )
    _enforce_size(report)
    return report


def _enforce_size(report: FeedbackReport) -> None:
    """Keep serialized feedback under the compactness bound by trimming text."""
    if len(serialize_feedback(report).encode()) <= FEEDBACK_SIZE_LIMIT:
        return
    report.retry_advice = report.retry_advice[:2048]
    for entry in report.entries:
        if "binding_note" in entry:
            entry["binding_note"] = str(entry["binding_note"])[:256]
    for failure in report.analysis_failures:
        failure["message"] = str(failure.get("message", ""))[:256]
    if len(serialize_feedback(report).encode()) > FEEDBACK_SIZE_LIMIT:
        # last resort: drop per-scope detail
        for entry in report.entries:
            entry.pop("scope_values", None)


def serialize_feedback(report: FeedbackReport) -> str:
    return docio.dumps(report.to_doc())


def parse_feedback(path: str | Path) -> FeedbackReport:
    doc = docio.expect_map(docio.load_path(path), "feedback")
    docio.check_schema_tag(doc, "feedback/1", "feedback")
    return FeedbackReport(
        level=str(doc.get("level", "basic")),
        attempt=int(doc.get("attempt", 1)),
        case_id=str(doc.get("case_id", "")),
        summary=str(doc.get("summary", "")),
        counts={str(k): int(v) for k, v in (doc.get("counts") or {}).items()},
        strict_pass=bool(doc.get("strict_pass", False)),
        req_pass_fraction=float(doc.get("req_pass_fraction", 0.0)),
        entries=[dict(e) for e in doc.get("requirements") or []],
        analysis_failures=[dict(e) for e in doc.get("analysis_failures") or []],
        failure_category=str(doc.get("failure_category", "")),
        primary_claim_id=str(doc.get("primary_claim_id", "")),
        retry_advice=str(doc.get("retry_advice", "")),
    )


def redact_for_level(report: FeedbackReport, level: str) -> FeedbackReport:
    """Project a report down to the requested level; idempotent."""
    if level == "deep":
        return report
    if level != "basic":
        raise ValueError(f"unknown feedback level {level!r}")
    entries = [{"id": e["id"], "status": e["status"], "metric": e.get("metric", "")}
               for e in report.entries]
    return FeedbackReport(
        level="basic",
        attempt=report.attempt,
        case_id=report.case_id,
        summary=report.summary,
        counts=dict(report.counts),
        strict_pass=report.strict_pass,
        req_pass_fraction=report.req_pass_fraction,
        entries=entries,
        analysis_failures=[dict(e) for e in report.analysis_failures],
        failure_category=report.failure_category,
        primary_claim_id=report.primary_claim_id,
        retry_advice=report.retry_advice,
    )


INSPECTION_FIELDS = {"schema", "verdict", "summary", "issues",
                     "failure_category", "primary_claim_id", "retry_advice"}


def parse_inspection(path: str | Path) -> dict[str, Any]:
    """Validate an agent-authored inspection record (fields fixed by contract)."""
    doc = docio.expect_map(docio.load_path(path), "inspection")
    docio.check_schema_tag(doc, "inspection/1", "inspection")
    unknown = set(doc) - INSPECTION_FIELDS
    if unknown:
        raise SchemaError("inspection", f"unknown fields: {sorted(unknown)}")
    verdict = doc.get("verdict")
    if verdict not in ("ready", "revise"):
        raise SchemaError("inspection.verdict", f"expected ready or revise, got {verdict!r}")
    from .views import VIEW_NAMES

    for i, issue in enumerate(doc.get("issues") or []):
        issue = docio.expect_map(issue, f"inspection.issues[{i}]")
        view = issue.get("view_name")
        if view is not None and view not in VIEW_NAMES:
            raise SchemaError(f"inspection.issues[{i}].view_name", f"unknown view {view!r}")
        docio.expect_str(issue.get("description"), f"inspection.issues[{i}].description")
    for key in ("summary", "failure_category", "primary_claim_id", "retry_advice"):
        if key in doc and doc[key] is not None and not isinstance(doc[key], str):
            raise SchemaError(f"inspection.{key}", "expected text")
    return doc
