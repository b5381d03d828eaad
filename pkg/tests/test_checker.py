from pathlib import Path

import pytest

from heph.artifact import Artifact, DeclaredMeasurement
from heph.briefs import parse_brief_doc
from heph.checker import (LEVEL_DECLARED, LEVEL_SOLVER, MetricNamespace, build_namespace,
                          case_verdict_from_doc, convert_unit, evaluate, grade_suite,
                          normalize_metric_name)
from heph.errors import AmbiguousBinding, EmptyList


def make_brief(criteria, load_cases=("LC1", "LC2", "LC3", "LC4"), verification=None):
    return parse_brief_doc({
        "id": "case",
        "full_prompt": "p",
        "prompt": {"geometric_constraints": [], "materials": [],
                   "load_cases": [{"id": lc, "description": "", "loads": []} for lc in load_cases],
                   "output_format": ""},
        "requirements": {"pass_fail_criteria": criteria},
        "verification": verification or {},
        "notes": {}, "eval_coverage": [],
    })


def empty_artifact(**kwargs):
    return Artifact(root=Path("."), manifest={"schema": "artifact_manifest/1"}, **kwargs)


def test_normalize_metric_name():
    assert normalize_metric_name("max von Mises tube stress (MPa)") == "max_von_mises_tube_stress"
    assert normalize_metric_name("primary tube OD (mm)") == "primary_tube_od"
    assert normalize_metric_name("first mode load factor under LC4") == "first_mode_load_factor_under_lc4"


def test_unit_conversion():
    assert convert_unit(0.054, "kg", "g") == pytest.approx(54.0)
    assert convert_unit(37000.0, "N", "kN") == pytest.approx(37.0)
    assert convert_unit(25.4, "mm", "mm") == 25.4
    assert convert_unit(1.0, "", "kg") == 1.0
    assert convert_unit(1.0, "MPa", "Hz") is None


def test_alias_resolution_idempotent_on_canonical():
    ns = MetricNamespace()
    assert ns.resolve("mass") == "mass"
    assert ns.resolve("mesh_derived_mass") == "mass"
    assert ns.resolve(ns.resolve("dry_mass")) == "mass"


def test_conflicting_alias_is_ambiguous():
    ns = MetricNamespace()
    with pytest.raises(AmbiguousBinding):
        ns.add_alias("mesh_derived_mass", "volume")


def test_precedence_solver_over_declared():
    artifact = empty_artifact(
        declared=[DeclaredMeasurement(metric="max_von_mises_stress", value=200.0, unit="MPa", scope="LC1")])
    report = {"schema": "solver_report/1", "status": "ok",
              "cases": {"LC1": {"max_von_mises_stress": {"value": 231.4, "unit": "MPa"}}}}
    ns = build_namespace(artifact, report)
    entry = ns.lookup("LC1", "max_von_mises_stress")
    assert entry.value == 231.4
    assert entry.provenance == "solver"


def test_same_level_conflict_is_ambiguous():
    ns = MetricNamespace()
    ns.insert("design", "mass", 1.0, "kg", LEVEL_DECLARED, "a")
    ns.insert("design", "mass", 1.0, "kg", LEVEL_DECLARED, "b")  # identical duplicate ok
    with pytest.raises(AmbiguousBinding):
        ns.insert("design", "mass", 2.0, "kg", LEVEL_DECLARED, "c")


def test_permuting_insertions_same_verdicts():
    brief = make_brief([{"id": "R1", "type": "structural", "metric": "mass",
                         "op": "<=", "limit_kg": 1.0, "applies_to": ["design"]}])
    entries = [("design", "mass", 0.5, "kg", LEVEL_DECLARED, "m1"),
               ("design", "volume", 99.0, "mm3", LEVEL_DECLARED, "m2")]
    verdicts = []
    for order in (entries, entries[::-1]):
        ns = MetricNamespace()
        for e in order:
            ns.insert(*e)
        verdicts.append(evaluate(brief, ns).to_doc())
    assert verdicts[0] == verdicts[1]


def test_alias_binding_via_manifest():
    # the declared value binds a requirement written with the display name
    brief = make_brief([{"id": "R1", "type": "geometric_check", "metric": "primary tube OD (mm)",
                         "op": "==", "limit_mm": 25.4, "applies_to": ["design"]}])
    artifact = empty_artifact(
        declared=[DeclaredMeasurement(metric="tube_OD_mm", value=25.4, unit="mm", scope="design")],
        aliases={"primary tube OD (mm)": "tube_OD_mm"})
    ns = build_namespace(artifact)
    case = evaluate(brief, ns)
    assert case.verdicts[0].status == "pass"
    assert case.verdicts[0].margin == pytest.approx(1e-3, rel=1e-12)


def test_unbound_mass_requirement():
    brief = make_brief([{"id": "R4", "type": "structural", "metric": "mass",
                         "op": "<=", "limit_kg": 1.0, "applies_to": ["design"]}])
    case = evaluate(brief, build_namespace(empty_artifact()))
    v = case.verdicts[0]
    assert v.status == "unbound"
    assert "mass" in v.binding_note
    assert not case.strict_pass
    assert case.req_pass_fraction == 0.0


def test_table_style_multi_scope_fail():
    brief = make_brief([{"id": "R2", "type": "structural", "metric": "max_von_mises_stress",
                         "op": "<=", "limit_MPa": 246.7,
                         "applies_to": ["LC1", "LC2", "LC3", "LC4"]}])
    ns = MetricNamespace()
    for lc, value in (("LC1", 200.0), ("LC2", 240.0), ("LC3", 246.0), ("LC4", 250.0)):
        ns.insert(lc, "max_von_mises_stress", value, "MPa", LEVEL_SOLVER, f"solver:{lc}")
    case = evaluate(brief, ns)
    v = case.verdicts[0]
    assert v.status == "fail"
    assert v.worst_scope == "LC4"
    assert v.margin == pytest.approx((246.7 - 250.0) / 246.7, rel=1e-12)
    assert v.margin == pytest.approx(-0.0134, abs=5e-5)
    assert v.scope_values["LC2"] == 240.0


def test_buckling_pass_margin():
    brief = make_brief([{"id": "R4", "type": "buckling", "metric": "first_mode_load_factor",
                         "op": ">=", "limit": 1.5, "applies_to": ["LC4"]}])
    ns = MetricNamespace()
    ns.insert("LC4", "first_mode_load_factor", 1.974, "", LEVEL_SOLVER, "solver")
    v = evaluate(brief, ns).verdicts[0]
    assert v.status == "pass"
    assert v.margin == pytest.approx((1.974 - 1.5) / 1.5, rel=1e-12)
    assert v.margin == pytest.approx(0.316, abs=1e-12)


def test_eq_tolerance_margin():
    brief = make_brief([{"id": "R1", "type": "geometric_check", "metric": "od",
                         "op": "==", "limit_mm": 25.4, "applies_to": ["design"]}])
    ns = MetricNamespace()
    ns.insert("design", "od", 25.41, "mm", LEVEL_DECLARED, "m")
    v = evaluate(brief, ns).verdicts[0]
    assert v.status == "pass"
    assert v.margin == pytest.approx(1e-3 - abs(25.41 - 25.4) / 25.4, rel=1e-9)


def test_unit_mismatch_reported():
    brief = make_brief([{"id": "R3", "type": "structural", "metric": "empty_enclosure_mass",
                         "op": "<=", "limit_g": 800.0, "applies_to": ["assembly"]}])
    ns = MetricNamespace()
    ns.insert("assembly", "mass", 0.054, "kg", LEVEL_DECLARED, "m")
    v = evaluate(brief, ns).verdicts[0]
    assert v.status == "pass"
    assert v.measured == pytest.approx(54.0)  # converted kg -> g


def test_not_evaluable_excluded_from_fraction():
    brief = make_brief(
        [{"id": "R1", "type": "structural", "metric": "mass", "op": "<=", "limit_kg": 1.0,
          "applies_to": ["design"]},
         {"id": "R2", "type": "fluid", "metric": "drag", "op": "<=", "limit": 1.0,
          "applies_to": ["design"]}],
        verification={"requires_non_fea_solver": {"fluid": True}})
    ns = MetricNamespace()
    ns.insert("design", "mass", 0.5, "kg", LEVEL_DECLARED, "m")
    case = evaluate(brief, ns)
    assert case.verdicts[1].status == "not_evaluable"
    assert case.not_evaluable_count == 1
    assert case.req_pass_fraction == 1.0
    assert case.strict_pass  # not_evaluable tolerated


def test_solver_error_status():
    brief = make_brief([{"id": "R1", "type": "structural", "metric": "max_von_mises_stress",
                         "op": "<=", "limit_MPa": 100.0, "applies_to": ["LC1"]}])
    report = {"schema": "solver_report/1", "status": "solver_error", "cases": {},
              "errors": [{"analysis_class": "static", "message": "singular"}]}
    case = evaluate(brief, MetricNamespace(), report)
    assert case.verdicts[0].status == "solver_error"
    assert not case.strict_pass


def test_monotone_improvement_never_flips_pass():
    import random

    rng = random.Random(5)
    brief = make_brief([
        {"id": "R1", "type": "structural", "metric": "max_von_mises_stress", "op": "<=",
         "limit_MPa": 100.0, "applies_to": ["LC1"]},
        {"id": "R2", "type": "buckling", "metric": "first_mode_load_factor", "op": ">=",
         "limit": 1.5, "applies_to": ["LC1"]},
    ])
    for _ in range(50):
        stress = rng.uniform(1, 250)
        lf = rng.uniform(0.1, 5)
        ns = MetricNamespace()
        ns.insert("LC1", "max_von_mises_stress", stress, "MPa", LEVEL_SOLVER, "s")
        ns.insert("LC1", "first_mode_load_factor", lf, "", LEVEL_SOLVER, "s")
        base = evaluate(brief, ns)
        better = MetricNamespace()
        better.insert("LC1", "max_von_mises_stress", stress * rng.uniform(0.2, 1.0), "MPa",
                      LEVEL_SOLVER, "s")
        better.insert("LC1", "first_mode_load_factor", lf * rng.uniform(1.0, 3.0), "",
                      LEVEL_SOLVER, "s")
        improved = evaluate(brief, better)
        assert improved.req_pass_fraction >= base.req_pass_fraction
        for vb, vi in zip(base.verdicts, improved.verdicts):
            assert not (vb.status == "pass" and vi.status == "fail")


def test_strict_implies_fraction_one():
    brief = make_brief([{"id": "R1", "type": "structural", "metric": "mass", "op": "<=",
                         "limit_kg": 1.0, "applies_to": ["design"]}])
    ns = MetricNamespace()
    ns.insert("design", "mass", 0.4, "kg", LEVEL_DECLARED, "m")
    case = evaluate(brief, ns)
    assert case.strict_pass
    assert case.req_pass_fraction == 1.0


def _case(case_id, statuses, not_evaluable=0):
    brief = make_brief([
        {"id": f"R{i + 1}", "type": "structural", "metric": "mass", "op": "<=",
         "limit_kg": 1.0, "applies_to": ["design"]}
        for i in range(len(statuses))])
    brief.id = case_id
    ns = MetricNamespace()
    # craft values so each requirement passes/fails as requested via per-scope keys
    case = evaluate(brief, ns)
    for v, status in zip(case.verdicts, statuses):
        v.status = status
    evaluable = [v for v in case.verdicts if v.status != "not_evaluable"]
    passes = sum(1 for v in evaluable if v.status == "pass")
    case.req_pass_fraction = passes / len(evaluable) if evaluable else 1.0
    case.strict_pass = passes == len(evaluable) and all(
        v.status in ("pass", "fail") for v in evaluable)
    return case


def test_grade_suite_means_and_strict():
    c1 = _case("a", ["pass", "pass", "fail", "fail"])
    c2 = _case("b", ["pass"] * 3)
    c3 = _case("c", ["pass", "fail", "fail", "fail"])
    grade = grade_suite([c1, c2, c3], groups={"a": "single", "b": "single", "c": "multi"})
    assert grade.overall.cases == 3
    assert grade.overall.strict_count == 1
    assert grade.overall.mean_req_pass == pytest.approx((0.5 + 1.0 + 0.25) / 3)
    assert grade.groups["single"].mean_req_pass == pytest.approx(0.75)
    assert grade.groups["multi"].strict_count == 0
    with pytest.raises(EmptyList):
        grade_suite([])


def test_mean_fraction_examples():
    c1 = _case("a", ["pass", "fail", "fail", "fail"])
    c2 = _case("b", ["pass", "pass", "pass", "fail"])
    grade = grade_suite([c1, c2])
    assert grade.overall.mean_req_pass == pytest.approx(0.5)


def test_case_verdict_doc_round_trip():
    brief = make_brief([{"id": "R1", "type": "structural", "metric": "mass", "op": "<=",
                         "limit_kg": 1.0, "applies_to": ["design"]}])
    ns = MetricNamespace()
    ns.insert("design", "mass", 0.4, "kg", LEVEL_DECLARED, "m")
    case = evaluate(brief, ns)
    again = case_verdict_from_doc(case.to_doc())
    assert again.strict_pass == case.strict_pass
    assert again.req_pass_fraction == case.req_pass_fraction
    assert [v.status for v in again.verdicts] == [v.status for v in case.verdicts]
