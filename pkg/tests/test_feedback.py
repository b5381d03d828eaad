import re

import pytest

from heph import docio
from heph.briefs import parse_brief_doc
from heph.checker import LEVEL_SOLVER, MetricNamespace, evaluate
from heph.errors import ParseError, SchemaError
from heph.feedback import (FEEDBACK_SIZE_LIMIT, parse_feedback, parse_inspection,
                           parse_solver_report, parse_solver_report_doc, redact_for_level,
                           render_feedback, serialize_feedback, serialize_solver_report)


def graded_case(n_fail=1, n_reqs=4, unbound=()):
    criteria = [{"id": f"R{i + 1}", "type": "structural", "metric": f"metric_{i}",
                 "op": "<=", "limit_MPa": 100.0, "applies_to": ["LC1"]}
                for i in range(n_reqs)]
    brief = parse_brief_doc({
        "id": "case", "full_prompt": "p",
        "prompt": {"geometric_constraints": [], "materials": [],
                   "load_cases": [{"id": "LC1", "description": "", "loads": []}],
                   "output_format": ""},
        "requirements": {"pass_fail_criteria": criteria},
        "verification": {}, "notes": {}, "eval_coverage": [],
    })
    ns = MetricNamespace()
    for i in range(n_reqs):
        if f"R{i + 1}" in unbound:
            continue
        value = 150.0 if i < n_fail else 50.0
        ns.insert("LC1", f"metric_{i}", value, "MPa", LEVEL_SOLVER, "s")
    return evaluate(brief, ns)


def test_basic_report_has_no_margins():
    case = graded_case()
    report = render_feedback(case, "basic", attempt=1)
    doc = report.to_doc()
    assert doc["level"] == "basic"
    for entry in doc["requirements"]:
        assert set(entry) == {"id", "status", "metric"}


def test_all_pass_summary():
    case = graded_case(n_fail=0, n_reqs=6)
    report = render_feedback(case, "basic", attempt=1)
    assert report.summary == "6/6 requirements pass"


def test_deep_report_carries_margins_and_scope():
    case = graded_case(n_fail=2)
    report = render_feedback(case, "deep", attempt=3)
    failing = [e for e in report.entries if e["status"] == "fail"]
    assert failing
    for entry in failing:
        assert entry["worst_scope"] == "LC1"
        assert entry["margin"] < 0
        assert "measured" in entry and "limit" in entry


def test_deep_unbound_names_missing_key():
    case = graded_case(n_fail=0, unbound=("R2",))
    report = render_feedback(case, "deep", attempt=2)
    entry = next(e for e in report.entries if e["id"] == "R2")
    assert entry["status"] == "unbound"
    assert "metric_1" in entry["binding_note"]


def test_redact_strips_numbers_and_is_idempotent():
    case = graded_case(n_fail=2)
    deep = render_feedback(case, "deep", attempt=2)
    basic = redact_for_level(deep, "basic")
    assert basic.level == "basic"
    for entry in basic.entries:
        assert "margin" not in entry and "measured" not in entry
    twice = redact_for_level(basic, "basic")
    assert twice.to_doc() == basic.to_doc()
    # statuses survive redaction unchanged
    assert [e["status"] for e in basic.entries] == [e["status"] for e in deep.entries]


def test_basic_fieldwise_subset_of_deep():
    case = graded_case(n_fail=1)
    deep = render_feedback(case, "deep", attempt=2)
    basic = redact_for_level(deep, "basic")
    for b, d in zip(basic.entries, deep.entries):
        assert set(b).issubset(set(d))
        for key in b:
            assert b[key] == d[key]


def test_size_bound_32_requirements():
    case = graded_case(n_fail=16, n_reqs=32)
    report = render_feedback(case, "deep", attempt=9)
    report.retry_advice = "x" * 100_000  # hostile free-slot content
    from heph.feedback import _enforce_size

    _enforce_size(report)
    assert len(serialize_feedback(report).encode()) <= FEEDBACK_SIZE_LIMIT


def test_feedback_round_trip(tmp_path):
    case = graded_case(n_fail=1)
    report = render_feedback(case, "deep", attempt=2,
                             analysis_failures=[{"analysis_class": "static", "message": "x"}])
    report.retry_advice = "try a thicker wall"
    path = tmp_path / "feedback.v1"
    path.write_text(serialize_feedback(report))
    again = parse_feedback(path)
    assert again.to_doc() == report.to_doc()


def test_solver_report_round_trip(tmp_path):
    report = {
        "schema": "solver_report/1", "status": "ok",
        "cases": {"LC1": {"max_von_mises_stress": {"value": 231.4, "unit": "MPa",
                                                   "analysis_class": "static"}}},
        "buckling": {"LC4": {"load_factors": [1.974, 3.1], "analysis_class": "buckle"}},
        "modal": {"frequencies_hz": [141.0], "analysis_class": "frequency"},
    }
    path = tmp_path / "solver_report.v1"
    path.write_text(serialize_solver_report(report))
    assert parse_solver_report(path) == report


def test_solver_report_error_status_accepted():
    doc = {"schema": "solver_report/1", "status": "solver_error", "cases": {},
           "errors": [{"analysis_class": "static", "message": "singular"}]}
    assert parse_solver_report_doc(doc) == doc


def test_solver_report_rejects_nan():
    doc = {"schema": "solver_report/1", "status": "ok",
           "cases": {"LC1": {"m": {"value": float("nan"), "unit": ""}}}}
    with pytest.raises(SchemaError):
        parse_solver_report_doc(doc)


def test_solver_report_ok_with_errors_rejected():
    doc = {"schema": "solver_report/1", "status": "ok", "cases": {},
           "errors": [{"analysis_class": "static", "message": "x"}]}
    with pytest.raises(SchemaError):
        parse_solver_report_doc(doc)


def test_inspection_record_validation(tmp_path):
    good = {
        "schema": "inspection/1", "verdict": "revise", "summary": "check the boss",
        "issues": [{"view_name": "front_xray", "description": "hidden void"}],
        "failure_category": "geometry", "primary_claim_id": "R1",
        "retry_advice": "thicken the boss",
    }
    path = tmp_path / "inspection.v1"
    docio.dump_path(path, good)
    assert parse_inspection(path) == good

    bad_view = dict(good, issues=[{"view_name": "selfie", "description": "?"}])
    docio.dump_path(path, bad_view)
    with pytest.raises(SchemaError):
        parse_inspection(path)

    extra_field = dict(good, mood="optimistic")
    docio.dump_path(path, extra_field)
    with pytest.raises(SchemaError):
        parse_inspection(path)

    bad_verdict = dict(good, verdict="maybe")
    docio.dump_path(path, bad_verdict)
    with pytest.raises(SchemaError):
        parse_inspection(path)


def test_redacted_report_has_no_digit_margins():
    case = graded_case(n_fail=3, n_reqs=5)
    deep = render_feedback(case, "deep", attempt=7)
    basic = redact_for_level(deep, "basic")
    text = serialize_feedback(basic)
    body = text.split("requirements:")[1].split("analysis_failures:")[0]
    assert not re.search(r"margin", body)


def test_parse_solver_report_missing_file():
    with pytest.raises(ParseError):
        parse_solver_report("/nonexistent/path.v1")
