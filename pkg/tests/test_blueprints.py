import copy
import random

import pytest

from heph import docio
from heph.blueprints import (apply_diff, blueprint_to_doc, blueprints_equal, check_envelopes,
                             diff_blueprints, extract_claims, parse_blueprint,
                             parse_blueprint_doc)
from heph.briefs import parse_brief_doc
from heph.docio import errors_of
from heph.errors import GrammarError, SchemaError

FRAME_PLAN = {
    "assembly_schema_version": 4,
    "metadata": {
        "brief_id": "frame_case",
        "units": "mm",
        "coordinate_system": {"x": "forward", "y": "driver_right", "z": "up"},
        "material": {"name": "steel", "yield_strength_MPa": 370, "safety_factor": 1.5},
    },
    "parts": [
        {
            "name": "main_hoop",
            "geometry_definition": {
                "bounding_envelope": {"x": [-460, 460], "y": [-50, 50], "z": [0, 1100]},
                "support_zones": [
                    {"name": "weld_pad_left", "plane": {"normal": "+y", "offset": 50.0},
                     "footprint": {"x_span": [-450, -430], "z_span": [1080, 1100]}},
                ],
            },
            "construction_units": [
                {"id": "hoop_tube", "role": "additive",
                 "envelope": {"must_fit_inside": {"x": [-460, 460], "y": [-50, 50], "z": [0, 1100]}},
                 "constructive_primitives": [
                     {"op": "cylinder", "axis": "y", "radius_outer": 12.7,
                      "wall_thickness": 3.05, "sweep_path": "main_hoop_centerline"},
                 ]},
                {"id": "corner_fillet", "role": "modifier",
                 "constructive_primitives": [
                     {"op": "fillet_hint", "edge_selector": "hoop_tube.outer_edges_top",
                      "radius": 4.0},
                 ]},
            ],
            "acceptance_claims": [
                {"id": "R1", "metric": "tube_OD_mm", "operator": "==", "value": 25.4},
                {"id": "R4", "metric": "first_mode_load_factor_LC4", "operator": ">=", "value": 1.5},
            ],
        },
        {
            "name": "side_impact",
            "geometry_definition": {
                "bounding_envelope": {"x": [-1000, 1000], "y": [-460, 460], "z": [400, 600]},
            },
            "construction_units": [
                {"id": "sim_tube_left", "role": "additive",
                 "envelope": {"must_fit_inside": {"x": [-1000, 1000], "y": [-460, -430], "z": [400, 600]}},
                 "constructive_primitives": [
                     {"op": "cylinder", "axis": "x", "radius_outer": 12.7,
                      "wall_thickness": 3.05, "sweep_path": "sim_centerline_left"},
                 ]},
            ],
            "acceptance_claims": [
                {"id": "R3", "metric": "helmet_location_deflection_mm", "operator": "<=", "value": 25},
            ],
        },
        {
            "name": "suspension_pickup_tab_fr",
            "geometry_definition": {
                "bounding_envelope": {"x": [1180, 1280], "y": [-170, 170], "z": [220, 630]},
            },
            "construction_units": [
                {"id": "tab_plate", "role": "additive",
                 "envelope": {"must_fit_inside": {"x": [1180, 1280], "y": [-170, -150], "z": [220, 280]}},
                 "constructive_primitives": [
                     {"op": "extrude_polygon", "polygon_2d": [[0, 0], [40, 0], [40, 30], [0, 30]],
                      "extrude_axis": "y", "extrude_length": 6.0},
                 ]},
                {"id": "bolt_hole", "role": "modifier",
                 "constructive_primitives": [
                     {"op": "subtract_cylinder", "axis": "y", "radius": 5.0, "center_2d": [20, 15]},
                 ]},
            ],
        },
    ],
}


def make_doc():
    return copy.deepcopy(FRAME_PLAN)


def test_parse_full_plan(tmp_path):
    path = tmp_path / "blueprint.v1"
    docio.dump_path(path, make_doc())
    bp = parse_blueprint(path)
    assert [p.name for p in bp.parts] == ["main_hoop", "side_impact", "suspension_pickup_tab_fr"]
    assert bp.schema_version == 4
    assert len(bp.all_claims()) == 3


def test_unknown_op_is_grammar_error():
    doc = make_doc()
    doc["parts"][0]["construction_units"][0]["constructive_primitives"][0]["op"] = "torus_sweep"
    with pytest.raises(GrammarError):
        parse_blueprint_doc(doc)


def test_schema_version_gate():
    doc = make_doc()
    doc["assembly_schema_version"] = 3
    with pytest.raises(SchemaError):
        parse_blueprint_doc(doc)


def test_wall_thickness_bounds():
    doc = make_doc()
    doc["parts"][0]["construction_units"][0]["constructive_primitives"][0]["wall_thickness"] = 20.0
    with pytest.raises(SchemaError):
        parse_blueprint_doc(doc)


def test_self_intersecting_polygon_rejected():
    doc = make_doc()
    doc["parts"][2]["construction_units"][0]["constructive_primitives"][0]["polygon_2d"] = [
        [0, 0], [40, 30], [40, 0], [0, 30]]
    with pytest.raises(SchemaError):
        parse_blueprint_doc(doc)


def test_support_zone_must_sit_on_boundary():
    doc = make_doc()
    doc["parts"][0]["geometry_definition"]["support_zones"][0]["plane"]["offset"] = 40.0
    with pytest.raises(SchemaError):
        parse_blueprint_doc(doc)


def test_fillet_selector_must_reference_existing_unit():
    doc = make_doc()
    doc["parts"][0]["construction_units"][1]["constructive_primitives"][0]["edge_selector"] = "ghost.edges"
    with pytest.raises(SchemaError):
        parse_blueprint_doc(doc)


def test_additive_unit_requires_envelope():
    doc = make_doc()
    del doc["parts"][0]["construction_units"][0]["envelope"]
    with pytest.raises(SchemaError):
        parse_blueprint_doc(doc)


def test_envelopes_clean_on_reference_plan():
    bp = parse_blueprint_doc(make_doc())
    assert errors_of(check_envelopes(bp)) == []


def test_envelope_overshoot_reported_with_axis_and_magnitude():
    doc = make_doc()
    doc["parts"][0]["construction_units"][0]["envelope"]["must_fit_inside"]["z"] = [0, 1200]
    bp = parse_blueprint_doc(doc)
    errors = errors_of(check_envelopes(bp))
    assert len(errors) == 1
    assert "axis z" in errors[0].message
    assert "100" in errors[0].message


def test_part_without_additive_unit_reported():
    doc = make_doc()
    doc["parts"][2]["construction_units"] = [doc["parts"][2]["construction_units"][1]]
    bp = parse_blueprint_doc(doc)
    errors = errors_of(check_envelopes(bp))
    assert any("additive/subtractive unit required" in e.message for e in errors)


def test_envelope_check_monotone_under_shrink():
    rng = random.Random(7)
    doc = make_doc()
    bp = parse_blueprint_doc(doc)
    base_errors = {(d.path, d.message) for d in check_envelopes(bp)}
    for _ in range(25):
        shrunk = make_doc()
        unit = shrunk["parts"][0]["construction_units"][0]
        box = unit["envelope"]["must_fit_inside"]
        for axis, (lo, hi) in list(box.items()):
            cut = rng.uniform(0, (hi - lo) * 0.4)
            box[axis] = [lo + cut / 2, hi - cut / 2]
        errors = check_envelopes(parse_blueprint_doc(shrunk))
        new = {(d.path, d.message) for d in errors} - base_errors
        assert not {e for e in new if "hoop_tube" in e[0]}


def test_declared_paths_table_is_checked():
    doc = make_doc()
    doc["paths"] = {"main_hoop_centerline": {"x": [-450, 450], "y": [-40, 40], "z": [10, 1090]}}
    with pytest.raises(SchemaError):
        # the other two cylinders reference paths missing from the table
        parse_blueprint_doc(doc)
    doc["paths"]["sim_centerline_left"] = {"x": [-990, 990], "y": [-455, -435], "z": [410, 590]}
    bp = parse_blueprint_doc(doc)
    assert errors_of(check_envelopes(bp)) == []


BRIEF = {
    "id": "frame_case",
    "full_prompt": "frame",
    "prompt": {"geometric_constraints": [], "materials": [], "load_cases": [
        {"id": "LC4", "description": "", "loads": []}], "output_format": ""},
    "requirements": {"pass_fail_criteria": [
        {"id": "R1", "type": "geometric_check", "metric": "tube_OD_mm", "op": "==",
         "limit_mm": 25.4, "applies_to": ["design"]},
        {"id": "R4", "type": "buckling", "metric": "first_mode_load_factor", "op": ">=",
         "limit": 1.5, "applies_to": ["LC4"]},
    ]},
    "verification": {}, "notes": {}, "eval_coverage": [],
}


def test_extract_claims_binds_by_id():
    bp = parse_blueprint_doc(make_doc())
    binding = extract_claims(bp, parse_brief_doc(BRIEF))
    assert {c.id for c, _ in binding.bound} == {"R1", "R4"}
    assert binding.unmatched_claims == ["R3"]
    assert binding.unclaimed_requirements == []


def test_extract_claims_empty_blueprint_reports_all_unclaimed():
    doc = make_doc()
    for part in doc["parts"]:
        part.pop("acceptance_claims", None)
    binding = extract_claims(parse_blueprint_doc(doc), parse_brief_doc(BRIEF))
    assert binding.bound == []
    assert binding.unclaimed_requirements == ["R1", "R4"]


def test_diff_identity_is_empty():
    a = parse_blueprint_doc(make_doc())
    b = parse_blueprint_doc(make_doc())
    assert diff_blueprints(a, b).is_empty()
    assert blueprints_equal(a, b)


def test_diff_single_field_change():
    a = parse_blueprint_doc(make_doc())
    changed = make_doc()
    changed["parts"][0]["construction_units"][0]["constructive_primitives"][0]["wall_thickness"] = 3.5
    b = parse_blueprint_doc(changed)
    diff = diff_blueprints(a, b)
    assert len(diff.entries) == 1
    entry = diff.entries[0]
    assert entry.kind == "modified"
    assert "parts[main_hoop].construction_units[hoop_tube]" in entry.path
    assert entry.path.endswith("wall_thickness")
    assert (entry.before, entry.after) == (3.05, 3.5)


def test_diff_part_removed():
    a = parse_blueprint_doc(make_doc())
    reduced = make_doc()
    del reduced["parts"][1]
    diff = diff_blueprints(a, parse_blueprint_doc(reduced))
    removed = [e for e in diff.entries if e.kind == "removed"]
    assert len(removed) == 1
    assert removed[0].path == "parts[side_impact]"


def test_reorder_is_structurally_equal():
    reordered = make_doc()
    reordered["parts"] = [reordered["parts"][2], reordered["parts"][0], reordered["parts"][1]]
    a = parse_blueprint_doc(make_doc())
    b = parse_blueprint_doc(reordered)
    assert diff_blueprints(a, b).is_empty()
    assert blueprints_equal(a, b)


def _random_mutation(rng, doc):
    choice = rng.randrange(6)
    parts = doc["parts"]
    if choice == 0:  # tweak a numeric leaf
        prim = parts[0]["construction_units"][0]["constructive_primitives"][0]
        prim["radius_outer"] = round(rng.uniform(5, 20), 3)
    elif choice == 1:  # change metadata
        doc["metadata"]["material"]["safety_factor"] = round(rng.uniform(1.1, 3.0), 2)
    elif choice == 2 and len(parts) > 1:  # drop a part
        del parts[rng.randrange(1, len(parts))]
    elif choice == 3:  # add a claim
        parts[0].setdefault("acceptance_claims", []).append(
            {"id": f"RX{rng.randrange(100)}", "metric": "m", "operator": "<=",
             "value": round(rng.uniform(0, 10), 2)})
    elif choice == 4:  # add a part
        parts.append({
            "name": f"added_{rng.randrange(1000)}",
            "geometry_definition": {"bounding_envelope": {"x": [0, 10], "y": [0, 10], "z": [0, 10]}},
            "construction_units": [
                {"id": "u1", "role": "additive",
                 "envelope": {"must_fit_inside": {"x": [0, 10], "y": [0, 10], "z": [0, 10]}},
                 "constructive_primitives": []},
            ],
        })
    else:  # change an envelope bound
        box = parts[0]["construction_units"][0]["envelope"]["must_fit_inside"]
        box["z"] = [0, round(rng.uniform(500, 1500), 1)]
    return doc


def test_diff_apply_round_trip_randomized():
    rng = random.Random(20240601)
    for _ in range(40):
        old_doc = make_doc()
        new_doc = make_doc()
        for _ in range(rng.randrange(1, 4)):
            new_doc = _random_mutation(rng, new_doc)
        rng.shuffle(new_doc["parts"])
        old = parse_blueprint_doc(old_doc)
        new = parse_blueprint_doc(new_doc)
        rebuilt = apply_diff(old, diff_blueprints(old, new))
        assert blueprints_equal(rebuilt, new)
        assert diff_blueprints(rebuilt, new).is_empty()


def test_serialize_round_trip():
    bp = parse_blueprint_doc(make_doc())
    again = parse_blueprint_doc(docio.loads(docio.dumps(blueprint_to_doc(bp))))
    assert blueprints_equal(bp, again)
