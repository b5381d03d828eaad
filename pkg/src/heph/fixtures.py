"""Bundled desk-scale fixture pack: briefs, truss models, artifact variants.

Three cases cover the harness's metric vocabulary: a tubular-frame brief with
dimensional, stress, deflection, and buckling rows; a bracket brief with a
mass cap (whose unbound variant reproduces the checker-contract failure mode
and whose passing variant repairs it through a declared mass alias); and a
multi-part enclosure brief exercising modal frequency, unit conversion, and a
declared connection metric. Member sizing is derived from the Euler and
statics closed forms so the passing variants clear every threshold.

Everything is generated deterministically, so installing twice yields
identical bytes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import docio
from .briefs import parse_brief
from .errors import IoError
from .loop import evaluate_submission
from .mesh import TriMesh, dump_obj

STUB_AGENT_NAME = "stub_agent.py"
PACK_MANIFEST = "manifest.v1"
VARIANTS = ("passing", "failing_stress", "failing_unbound", "invalid_mesh")

# Tube section from the frame brief: 25.4 mm OD, 3.05 mm wall.
TUBE_OD = 25.4
TUBE_ID = TUBE_OD - 2 * 3.05
TUBE_AREA = math.pi / 4 * (TUBE_OD ** 2 - TUBE_ID ** 2)
TUBE_I_MIN = math.pi / 64 * (TUBE_OD ** 4 - TUBE_ID ** 4)

STEEL = {"E_MPa": 200000.0, "density_kg_m3": 7850.0, "yield_MPa": 370.0}
TITANIUM = {"E_MPa": 110000.0, "density_kg_m3": 4430.0, "yield_MPa": 880.0}
ALUMINUM = {"E_MPa": 70000.0, "density_kg_m3": 2700.0, "yield_MPa": 240.0}

_BOX_TRIS = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7), (1, 2, 6), (1, 6, 5),
             (0, 4, 7), (0, 7, 3), (0, 1, 5), (0, 5, 4), (3, 7, 6), (3, 6, 2)]


def box_mesh(dx: float, dy: float, dz: float, name: str = "box",
             origin: tuple[float, float, float] = (0.0, 0.0, 0.0)) -> TriMesh:
    x0, y0, z0 = origin
    corners = np.array([
        [x0, y0, z0], [x0 + dx, y0, z0], [x0 + dx, y0 + dy, z0], [x0, y0 + dy, z0],
        [x0, y0, z0 + dz], [x0 + dx, y0, z0 + dz], [x0 + dx, y0 + dy, z0 + dz], [x0, y0 + dy, z0 + dz],
    ], dtype=np.float64)
    tris = np.array(_BOX_TRIS, dtype=np.int64)
    return TriMesh(vertices=corners, triangles=tris, body_id=np.zeros(len(tris), dtype=np.int64),
                   name=name, body_names=[name])


def open_box_mesh(dx: float, dy: float, dz: float, name: str = "open_box") -> TriMesh:
    full = box_mesh(dx, dy, dz, name)
    return TriMesh(vertices=full.vertices, triangles=full.triangles[:-1],
                   body_id=full.body_id[:-1], name=name, body_names=[name])


def _frame_model(area: float, i_min: float) -> dict:
    """Tripod stand-in for the tubular frame: statically determinate."""
    r = 500.0
    h = 1100.0
    c = r * math.sqrt(3) / 2
    return {
        "schema": "analysis_model/1",
        "name": "frame_tripod",
        "nodes": [[r, 0.0, 0.0], [-r / 2, c, 0.0], [-r / 2, -c, 0.0], [0.0, 0.0, h]],
        "material": STEEL,
        "members": [
            {"i": 0, "j": 3, "area_mm2": area, "i_min_mm4": i_min},
            {"i": 1, "j": 3, "area_mm2": area, "i_min_mm4": i_min},
            {"i": 2, "j": 3, "area_mm2": area, "i_min_mm4": i_min},
        ],
        "supports": [{"node": n, "fixed": ["x", "y", "z"]} for n in (0, 1, 2)],
        "node_sets": {"helmet_location": [3], "frame_apex": [3]},
        "load_cases": {
            "LC1": {"description": "frontal impact", "loads": [{"node_set": "frame_apex", "force": [20000.0, 0.0, 0.0]}]},
            "LC2": {"description": "side impact", "loads": [{"node_set": "frame_apex", "force": [0.0, 20000.0, 0.0]}]},
            "LC3": {"description": "rear impact", "loads": [{"node_set": "frame_apex", "force": [-20000.0, 0.0, 0.0]}]},
            "LC4": {"description": "rollover crush", "loads": [{"node_set": "frame_apex", "force": [0.0, 0.0, -30000.0]}]},
        },
    }


_FRAME_BRIEF = {
    "id": "baja_frame",
    "full_prompt": (
        "Design a single-seat off-road tubular space frame from 25.4 mm OD by 3.05 mm wall "
        "steel tubing. The frame must survive frontal, side, and rear impact plus rollover "
        "crush, with a rollover buckling load factor of at least 1.5."
    ),
    "prompt": {
        "geometric_constraints": ["primary tube OD exactly 25.4 mm", "wall thickness 3.05 mm"],
        "materials": [{"name": "steel 1018 DOM", **STEEL}],
        "load_cases": [
            {"id": "LC1", "description": "frontal impact",
             "loads": [{"selector": "frame_apex", "vector": [20000.0, 0.0, 0.0], "kind": "force"}]},
            {"id": "LC2", "description": "side impact",
             "loads": [{"selector": "frame_apex", "vector": [0.0, 20000.0, 0.0], "kind": "force"}]},
            {"id": "LC3", "description": "rear impact",
             "loads": [{"selector": "frame_apex", "vector": [-20000.0, 0.0, 0.0], "kind": "force"}]},
            {"id": "LC4", "description": "rollover crush",
             "loads": [{"selector": "frame_apex", "vector": [0.0, 0.0, -30000.0], "kind": "force"}]},
        ],
        "output_format": "triangulated mesh plus analysis model and manifest",
    },
    "requirements": {"pass_fail_criteria": [
        {"id": "R1", "type": "geometric_check", "metric": "primary tube OD (mm)",
         "op": "==", "limit_mm": 25.4, "applies_to": ["design"]},
        {"id": "R2", "type": "structural", "metric": "max von Mises tube stress (MPa)",
         "op": "<=", "limit_MPa": 246.7, "applies_to": ["LC1", "LC2", "LC3", "LC4"]},
        {"id": "R3", "type": "structural", "metric": "helmet location deflection (mm)",
         "op": "<=", "limit_mm": 25.0, "applies_to": ["LC1", "LC4"]},
        {"id": "R4", "type": "buckling", "metric": "first mode load factor under LC4",
         "op": ">=", "limit": 1.5, "applies_to": ["LC4"]},
    ]},
    "verification": {"primary_class": "*STATIC", "secondary_classes": ["*BUCKLE"],
                     "excluded_classes": [], "requires_non_fea_solver": {}},
    "notes": {"exclusions_explained": "none"},
    "eval_coverage": ["dimensional", "stress", "deflection", "buckling"],
    "multi_part": False,
}

_FRAME_BLUEPRINT = {
    "assembly_schema_version": 4,
    "metadata": {
        "brief_id": "baja_frame",
        "units": "mm",
        "coordinate_system": {"x": "forward", "y": "driver_right", "z": "up"},
        "material": {"name": "steel 1018 DOM", "yield_strength_MPa": 370, "safety_factor": 1.5},
    },
    "parts": [{
        "name": "main_hoop",
        "geometry_definition": {
            "bounding_envelope": {"x": [-460, 460], "y": [-50, 50], "z": [0, 1100]},
            "support_zones": [
                {"name": "weld_pad_left", "plane": {"normal": "+y", "offset": 50.0},
                 "footprint": {"x_span": [-450, -430], "z_span": [1080, 1100]}},
                {"name": "weld_pad_right", "plane": {"normal": "-y", "offset": -50.0},
                 "footprint": {"x_span": [430, 450], "z_span": [1080, 1100]}},
            ],
        },
        "construction_units": [
            {"id": "hoop_tube", "role": "additive",
             "envelope": {"must_fit_inside": {"x": [-460, 460], "y": [-50, 50], "z": [0, 1100]}},
             "constructive_primitives": [
                 {"op": "cylinder", "axis": "y", "radius_outer": 12.7, "wall_thickness": 3.05,
                  "sweep_path": "main_hoop_centerline"},
             ]},
            {"id": "corner_fillet", "role": "modifier",
             "constructive_primitives": [
                 {"op": "fillet_hint", "edge_selector": "hoop_tube.outer_edges_top", "radius": 4.0},
             ]},
        ],
        "acceptance_claims": [
            {"id": "R1", "metric": "tube_OD_mm", "operator": "==", "value": 25.4},
            {"id": "R4", "metric": "first_mode_load_factor_LC4", "operator": ">=", "value": 1.5},
        ],
    }],
}


def _bracket_model(area: float, i_min: float) -> dict:
    """Symmetric two-bar truss: hand statics cover every load case."""
    return {
        "schema": "analysis_model/1",
        "name": "bracket_two_bar",
        "nodes": [[-400.0, 0.0, 0.0], [400.0, 0.0, 0.0], [0.0, 0.0, 300.0]],
        "material": TITANIUM,
        "members": [
            {"i": 0, "j": 2, "area_mm2": area, "i_min_mm4": i_min},
            {"i": 1, "j": 2, "area_mm2": area, "i_min_mm4": i_min},
        ],
        "supports": [{"node": 0, "fixed": ["x", "y", "z"]}, {"node": 1, "fixed": ["x", "y", "z"]}],
        "node_sets": {"pin_hole_center": [2]},
        "load_cases": {
            "LC1": {"description": "vertical pin load", "loads": [{"node_set": "pin_hole_center", "force": [0.0, 0.0, -8000.0]}]},
            "LC2": {"description": "oblique pin load", "loads": [{"node_set": "pin_hole_center", "force": [6000.0, 0.0, -6000.0]}]},
        },
    }


BRACKET_MASS_KG = 200.0 * 150.0 * 7.0 * TITANIUM["density_kg_m3"] * 1e-9  # plate stand-in

_BRACKET_BRIEF = {
    "id": "bracket",
    "full_prompt": (
        "Design a single-part monolithic titanium mounting bracket transferring an accessory "
        "pin load to a casing flange. Minimize mass while passing two independent static load "
        "cases; the design must not exceed 1.0 kg."
    ),
    "prompt": {
        "geometric_constraints": ["envelope 203 x 152 x 102 mm", "single solid body"],
        "materials": [{"name": "Ti-6Al-4V", **TITANIUM}],
        "load_cases": [
            {"id": "LC1", "description": "vertical pin load",
             "loads": [{"selector": "pin_hole_center", "vector": [0.0, 0.0, -8000.0], "kind": "force"}]},
            {"id": "LC2", "description": "oblique pin load",
             "loads": [{"selector": "pin_hole_center", "vector": [6000.0, 0.0, -6000.0], "kind": "force"}]},
        ],
        "output_format": "triangulated mesh plus analysis model and manifest",
    },
    "requirements": {"pass_fail_criteria": [
        {"id": "R1", "type": "structural_analysis", "metric": "max_von_mises_stress",
         "op": "<=", "limit_MPa": 633.0,
         "derivation": "ultimate strength over 1.5", "applies_to": ["LC1", "LC2"]},
        {"id": "R2", "type": "structural_analysis", "metric": "max_von_mises_stress",
         "op": "<=", "limit_MPa": 748.0,
         "derivation": "yield strength over 1.15", "applies_to": ["LC1", "LC2"]},
        {"id": "R3", "type": "structural_analysis", "metric": "max_displacement_at_pin_hole_center",
         "op": "<=", "limit_mm": 1.0, "applies_to": ["LC1", "LC2"]},
        {"id": "R4", "type": "structural_analysis", "metric": "mass",
         "op": "<=", "limit_kg": 1.0, "applies_to": ["design"]},
        {"id": "R5", "type": "buckling_analysis", "metric": "first_mode_load_factor",
         "op": ">=", "limit": 2.0, "applies_to": ["LC2"]},
    ]},
    "verification": {"primary_class": "*STATIC", "secondary_classes": ["*BUCKLE"],
                     "excluded_classes": [], "requires_non_fea_solver": {}},
    "notes": {"exclusions_explained": "none"},
    "eval_coverage": ["stress", "deflection", "mass", "buckling"],
    "multi_part": False,
}


def _enclosure_model(area: float) -> dict:
    """Single axial bar with one free dof: closed-form first frequency."""
    return {
        "schema": "analysis_model/1",
        "name": "enclosure_post",
        "nodes": [[0.0, 0.0, 0.0], [0.0, 0.0, 200.0]],
        "material": ALUMINUM,
        "members": [{"i": 0, "j": 1, "area_mm2": area, "i_min_mm4": 0.0}],
        "supports": [{"node": 0, "fixed": ["x", "y", "z"]}, {"node": 1, "fixed": ["x", "y"]}],
        "node_sets": {"flange": [0], "lid_mount": [1]},
        "load_cases": {
            "LC1": {"description": "quasi-static 30 g axial", "loads": [{"node_set": "lid_mount", "force": [0.0, 0.0, -2000.0]}]},
        },
    }


_ENCLOSURE_BRIEF = {
    "id": "enclosure",
    "full_prompt": (
        "Design a small-satellite equipment box as a multi-part assembly (enclosure plus lid). "
        "The flange-constrained assembly must keep its first natural frequency above 140 Hz, "
        "survive a quasi-static 30 g axial case, and stay under 800 g empty."
    ),
    "prompt": {
        "geometric_constraints": ["two-body assembly", "flange mount"],
        "materials": [{"name": "Al 6061-T6", **ALUMINUM}],
        "load_cases": [
            {"id": "LC1", "description": "quasi-static 30 g axial",
             "loads": [{"selector": "lid_mount", "vector": [0.0, 0.0, -2000.0], "kind": "force"}]},
        ],
        "output_format": "triangulated meshes plus analysis model and manifest",
    },
    "requirements": {"pass_fail_criteria": [
        {"id": "R1", "type": "vibration_analysis", "metric": "first_natural_frequency_flange_constrained",
         "op": ">=", "limit_Hz": 140.0, "applies_to": ["constrained_modal"]},
        {"id": "R2", "type": "structural_analysis", "metric": "qs_30g_max_stress",
         "op": "<=", "limit_MPa": 220.8, "applies_to": ["LC1"]},
        {"id": "R3", "type": "structural_analysis", "metric": "empty_enclosure_mass",
         "op": "<=", "limit_g": 800.0, "applies_to": ["assembly"]},
        {"id": "R_asm1", "type": "connection_integrity", "metric": "connection_DCR",
         "op": "<=", "limit": 1.0, "applies_to": ["LC1"]},
    ]},
    "verification": {"primary_class": "*FREQUENCY", "secondary_classes": ["*STATIC"],
                     "excluded_classes": [], "requires_non_fea_solver": {}},
    "notes": {"exclusions_explained": "none"},
    "eval_coverage": ["modal", "stress", "mass", "connection"],
    "multi_part": True,
}


@dataclass
class FixtureSpec:
    name: str
    brief: dict
    blueprint: dict | None
    models: dict[str, dict]  # variant -> analysis model doc
    manifests: dict[str, dict]  # variant -> artifact manifest doc
    meshes: dict[str, list[tuple[str, TriMesh]]]  # variant -> [(filename, mesh)]


def _frame_fixture() -> FixtureSpec:
    frame_mesh = [("frame.obj", box_mesh(920.0, 100.0, 1100.0, "frame", origin=(-460.0, -50.0, 0.0)))]
    frame_bad = [("frame.obj", open_box_mesh(920.0, 100.0, 1100.0, "frame"))]
    aliases = {
        "primary tube OD (mm)": "tube_OD_mm",
        "max von Mises tube stress (MPa)": "max_von_mises_stress",
        "first mode load factor under LC4": "first_mode_load_factor",
    }
    base = {
        "schema": "artifact_manifest/1",
        "meshes": [{"file": "frame.obj", "body": "frame"}],
        "density_kg_m3": STEEL["density_kg_m3"],
        "projection_axis": "z",
        "analysis_model": "model.v1",
        "blueprint": "blueprint.v1",
        "aliases": aliases,
        "declared_measurements": [{"metric": "tube_OD_mm", "value": TUBE_OD, "unit": "mm", "scope": "design"}],
    }
    unbound = {k: v for k, v in base.items() if k != "declared_measurements"}
    unbound["aliases"] = {k: v for k, v in aliases.items() if "OD" not in k}
    unbound.pop("blueprint")  # claims would re-bind R1
    return FixtureSpec(
        name="baja_frame",
        brief=_FRAME_BRIEF,
        blueprint=_FRAME_BLUEPRINT,
        models={
            "passing": _frame_model(TUBE_AREA, TUBE_I_MIN),
            "failing_stress": _frame_model(60.0, 1500.0),
            "failing_unbound": _frame_model(TUBE_AREA, TUBE_I_MIN),
            "invalid_mesh": _frame_model(TUBE_AREA, TUBE_I_MIN),
        },
        manifests={
            "passing": base,
            "failing_stress": base,
            "failing_unbound": unbound,
            "invalid_mesh": base,
        },
        meshes={
            "passing": frame_mesh,
            "failing_stress": frame_mesh,
            "failing_unbound": frame_mesh,
            "invalid_mesh": frame_bad,
        },
    )


def _bracket_fixture() -> FixtureSpec:
    plate = [("bracket.obj", box_mesh(200.0, 150.0, 7.0, "bracket"))]
    plate_bad = [("bracket.obj", open_box_mesh(200.0, 150.0, 7.0, "bracket"))]
    passing = {
        "schema": "artifact_manifest/1",
        "meshes": [{"file": "bracket.obj", "body": "bracket"}],
        "projection_axis": "z",
        "analysis_model": "model.v1",
        "aliases": {},
        # The contract repair: geometry untouched, mass exposed via the
        # mesh_derived_mass alias of the canonical mass key.
        "declared_measurements": [
            {"metric": "mesh_derived_mass", "value": BRACKET_MASS_KG, "unit": "kg", "scope": "design"},
        ],
    }
    unbound = {k: v for k, v in passing.items() if k != "declared_measurements"}
    return FixtureSpec(
        name="bracket",
        brief=_BRACKET_BRIEF,
        blueprint=None,
        models={
            "passing": _bracket_model(100.0, 5000.0),
            "failing_stress": _bracket_model(10.0, 120.0),
            "failing_unbound": _bracket_model(100.0, 5000.0),
            "invalid_mesh": _bracket_model(100.0, 5000.0),
        },
        manifests={
            "passing": passing,
            "failing_stress": passing,
            "failing_unbound": unbound,
            "invalid_mesh": unbound,
        },
        meshes={
            "passing": plate,
            "failing_stress": plate,
            "failing_unbound": plate,
            "invalid_mesh": plate_bad,
        },
    )


def _enclosure_fixture() -> FixtureSpec:
    boxes = [
        ("enclosure_base.obj", box_mesh(100.0, 100.0, 1.0, "enclosure_base")),
        ("enclosure_lid.obj", box_mesh(100.0, 100.0, 1.0, "enclosure_lid", origin=(0.0, 0.0, 20.0))),
    ]
    boxes_bad = [
        ("enclosure_base.obj", open_box_mesh(100.0, 100.0, 1.0, "enclosure_base")),
        ("enclosure_lid.obj", box_mesh(100.0, 100.0, 1.0, "enclosure_lid", origin=(0.0, 0.0, 20.0))),
    ]
    base = {
        "schema": "artifact_manifest/1",
        "meshes": [{"file": "enclosure_base.obj", "body": "enclosure_base"},
                   {"file": "enclosure_lid.obj", "body": "enclosure_lid"}],
        "density_kg_m3": ALUMINUM["density_kg_m3"],
        "projection_axis": "z",
        "analysis_model": "model.v1",
        "aliases": {
            "first_natural_frequency_flange_constrained": "first_natural_frequency",
            "qs_30g_max_stress": "max_von_mises_stress",
        },
        "declared_measurements": [
            {"metric": "connection_DCR", "value": 0.62, "unit": "", "scope": "LC1"},
        ],
    }
    unbound = {k: v for k, v in base.items() if k != "density_kg_m3"}
    return FixtureSpec(
        name="enclosure",
        brief=_ENCLOSURE_BRIEF,
        blueprint=None,
        models={
            "passing": _enclosure_model(50.0),
            "failing_stress": _enclosure_model(8.0),
            "failing_unbound": _enclosure_model(50.0),
            "invalid_mesh": _enclosure_model(50.0),
        },
        manifests={
            "passing": base,
            "failing_stress": base,
            "failing_unbound": unbound,
            "invalid_mesh": base,
        },
        meshes={
            "passing": boxes,
            "failing_stress": boxes,
            "failing_unbound": boxes,
            "invalid_mesh": boxes_bad,
        },
    )


def fixture_specs() -> list[FixtureSpec]:
    return [_frame_fixture(), _bracket_fixture(), _enclosure_fixture()]


_STUB_AGENT = '''\
"""Deterministic stub agent for loop tests.

Usage: stub_agent.py <fixture_dir> <plan>
plan is a comma-separated list of artifact variant names; attempt k uses the
k-th entry (the last entry repeats). Copies the chosen variant into output/.
"""
import re
import shutil
import sys
from pathlib import Path

fixture_dir = Path(sys.argv[1])
plan = sys.argv[2].split(",")

attempt = 1
attempt_file = Path("input") / "attempt.v1"
if attempt_file.exists():
    m = re.search(r"^attempt:\\s*(\\d+)", attempt_file.read_text(), re.M)
    if m:
        attempt = int(m.group(1))

variant = plan[min(attempt - 1, len(plan) - 1)].strip()
if variant == "none":
    sys.exit(0)  # submit nothing
src = fixture_dir / "artifacts" / variant
out = Path("output")
out.mkdir(exist_ok=True)
for item in src.iterdir():
    if item.is_file():
        shutil.copy2(item, out / item.name)
'''


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    h.update(path.read_bytes())
    return h.hexdigest()


def install_fixtures(target: str | Path) -> dict:
    """Materialize the fixture pack under target; returns the pack manifest."""
    target = Path(target)
    try:
        target.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {target}: {exc}") from exc

    (target / STUB_AGENT_NAME).write_text(_STUB_AGENT, encoding="utf-8")

    entries = []
    for spec in fixture_specs():
        fdir = target / spec.name
        fdir.mkdir(exist_ok=True)
        docio.dump_path(fdir / "brief.v1", spec.brief)
        if spec.blueprint is not None:
            docio.dump_path(fdir / "blueprint.v1", spec.blueprint)
        for variant in VARIANTS:
            vdir = fdir / "artifacts" / variant
            vdir.mkdir(parents=True, exist_ok=True)
            docio.dump_path(vdir / "artifact_manifest.v1", spec.manifests[variant])
            docio.dump_path(vdir / "model.v1", spec.models[variant])
            if spec.blueprint is not None and "blueprint" in spec.manifests[variant]:
                docio.dump_path(vdir / "blueprint.v1", spec.blueprint)
            for fname, mesh in spec.meshes[variant]:
                dump_obj(mesh, vdir / fname)
        entries.append({"name": spec.name, "brief": f"{spec.name}/brief.v1",
                        "variants": list(VARIANTS), "multi_part": bool(spec.brief["multi_part"])})

    # Expected verdicts: evaluate each variant once and snapshot the result.
    # The built-in solver must produce them even if HEPH_SOLVER is set.
    import os

    from .loop import ENV_SOLVER

    saved_solver = os.environ.pop(ENV_SOLVER, None)
    try:
        for spec in fixture_specs():
            fdir = target / spec.name
            brief = parse_brief(fdir / "brief.v1")
            edir = fdir / "expected"
            edir.mkdir(exist_ok=True)
            for variant in VARIANTS:
                outcome = evaluate_submission(brief, fdir / "artifacts" / variant)
                docio.dump_path(edir / f"{variant}.v1", outcome.verdict.to_doc())
    finally:
        if saved_solver is not None:
            os.environ[ENV_SOLVER] = saved_solver

    hashes = {}
    for path in sorted(target.rglob("*")):
        if path.is_file() and path.name != PACK_MANIFEST:
            hashes[str(path.relative_to(target))] = _sha256_file(path)
    manifest = {"schema": "fixture_pack/1", "fixtures": entries, "hashes": hashes}
    docio.dump_path(target / PACK_MANIFEST, manifest)
    return manifest
