"""Schema-v4 design-plan parsing, semantic validation, and id-keyed diffing.

Blueprints are pre-CAD plans: per-part bounding envelopes, support zones,
construction units over a closed primitive grammar, and acceptance claims tied
to brief requirement ids. The grammar is closed on purpose; any op outside it
is a hard error rather than an extension point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import docio
from .briefs import OPERATORS, OPERATOR_SYMBOL, Brief
from .docio import Diagnostic
from .errors import GrammarError, SchemaError

SCHEMA_VERSION = 4
AXES = ("x", "y", "z")
ROLES = {"additive", "subtractive", "modifier"}
PRIMITIVE_OPS = {"cylinder", "extrude_polygon", "subtract_cylinder", "fillet_hint"}
BOUNDARY_TOL = 1e-6  # mm; support zones must sit on the envelope boundary

AxisBox = dict[str, tuple[float, float]]


@dataclass
class SupportZone:
    name: str
    plane_normal: str  # signed axis, e.g. "+y"
    plane_offset: float
    footprint: AxisBox


@dataclass
class Primitive:
    op: str
    params: dict[str, Any]


@dataclass
class ConstructionUnit:
    id: str
    role: str
    envelope: AxisBox | None
    primitives: list[Primitive]


@dataclass
class Claim:
    id: str
    metric: str
    operator: str  # LE | GE | EQ
    value: float


@dataclass
class PartPlan:
    name: str
    bounding_envelope: AxisBox
    support_zones: list[SupportZone] = field(default_factory=list)
    construction_units: list[ConstructionUnit] = field(default_factory=list)
    acceptance_claims: list[Claim] = field(default_factory=list)


@dataclass
class BlueprintMetadata:
    brief_id: str
    units: str
    coordinate_system: dict[str, str]
    material: dict[str, Any]


@dataclass
class BlueprintDoc:
    schema_version: int
    metadata: BlueprintMetadata
    parts: list[PartPlan]
    paths: dict[str, AxisBox] = field(default_factory=dict)

    def part(self, name: str) -> PartPlan | None:
        for p in self.parts:
            if p.name == name:
                return p
        return None

    def all_claims(self) -> list[Claim]:
        return [c for p in self.parts for c in p.acceptance_claims]


def _parse_axis_box(raw: Any, where: str) -> AxisBox:
    raw = docio.expect_map(raw, where)
    box: AxisBox = {}
    for axis, rng in raw.items():
        if axis not in AXES:
            raise SchemaError(f"{where}.{axis}", "expected an axis key x, y, or z")
        rng = docio.expect_list(rng, f"{where}.{axis}")
        if len(rng) != 2:
            raise SchemaError(f"{where}.{axis}", "expected [lo, hi]")
        lo = docio.expect_finite(rng[0], f"{where}.{axis}[0]")
        hi = docio.expect_finite(rng[1], f"{where}.{axis}[1]")
        if not lo < hi:
            raise SchemaError(f"{where}.{axis}", f"lo must be < hi, got [{lo}, {hi}]")
        box[axis] = (lo, hi)
    if not box:
        raise SchemaError(where, "empty axis box")
    return box


def _polygon_is_simple(points: list[tuple[float, float]]) -> bool:
    """Non-self-intersection test over all non-adjacent edge pairs."""
    n = len(points)

    def seg_intersect(p1, p2, p3, p4) -> bool:
        def orient(a, b, c):
            return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

        d1, d2 = orient(p3, p4, p1), orient(p3, p4, p2)
        d3, d4 = orient(p1, p2, p3), orient(p1, p2, p4)
        if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
            return True
        return False

    for i in range(n):
        a1, a2 = points[i], points[(i + 1) % n]
        for j in range(i + 1, n):
            # skip edges sharing a vertex
            if j == i or (j + 1) % n == i or j == (i + 1) % n:
                continue
            if seg_intersect(a1, a2, points[j], points[(j + 1) % n]):
                return False
    return True


def _parse_primitive(raw: Any, unit_id: str, where: str) -> Primitive:
    raw = docio.expect_map(raw, where)
    op = raw.get("op")
    if not isinstance(op, str):
        raise SchemaError(f"{where}.op", "missing primitive op")
    if op not in PRIMITIVE_OPS:
        raise GrammarError(unit_id, op)
    params = {k: v for k, v in raw.items() if k != "op"}

    if op == "cylinder":
        r = docio.expect_finite(params.get("radius_outer"), f"{where}.radius_outer")
        w = docio.expect_finite(params.get("wall_thickness"), f"{where}.wall_thickness")
        if r <= 0:
            raise SchemaError(f"{where}.radius_outer", "radius must be positive")
        if not 0 < w < r:
            raise SchemaError(f"{where}.wall_thickness", f"wall thickness must be in (0, {r})")
        docio.expect_str(params.get("sweep_path"), f"{where}.sweep_path")
    elif op == "extrude_polygon":
        poly = docio.expect_list(params.get("polygon_2d"), f"{where}.polygon_2d")
        if len(poly) < 3:
            raise SchemaError(f"{where}.polygon_2d", "polygon needs at least 3 vertices")
        pts = []
        for i, pt in enumerate(poly):
            pt = docio.expect_list(pt, f"{where}.polygon_2d[{i}]")
            if len(pt) != 2:
                raise SchemaError(f"{where}.polygon_2d[{i}]", "expected a 2-vector")
            pts.append((docio.expect_finite(pt[0], where), docio.expect_finite(pt[1], where)))
        if not _polygon_is_simple(pts):
            raise SchemaError(f"{where}.polygon_2d", "polygon is self-intersecting")
        if docio.expect_finite(params.get("extrude_length"), f"{where}.extrude_length") <= 0:
            raise SchemaError(f"{where}.extrude_length", "extrude length must be positive")
    elif op == "subtract_cylinder":
        if docio.expect_finite(params.get("radius"), f"{where}.radius") <= 0:
            raise SchemaError(f"{where}.radius", "radius must be positive")
    elif op == "fillet_hint":
        docio.expect_str(params.get("edge_selector"), f"{where}.edge_selector")
        if docio.expect_finite(params.get("radius"), f"{where}.radius") <= 0:
            raise SchemaError(f"{where}.radius", "radius must be positive")
    return Primitive(op=op, params=params)


def _parse_unit(raw: Any, where: str) -> ConstructionUnit:
    raw = docio.expect_map(raw, where)
    uid = docio.expect_str(raw.get("id"), f"{where}.id")
    role = raw.get("role")
    if role not in ROLES:
        raise SchemaError(f"{where}.role", f"unknown role {role!r}")
    envelope = None
    env_raw = raw.get("envelope")
    if env_raw is not None:
        env_raw = docio.expect_map(env_raw, f"{where}.envelope")
        fit = env_raw.get("must_fit_inside")
        if fit is not None:
            envelope = _parse_axis_box(fit, f"{where}.envelope.must_fit_inside")
    if role in {"additive", "subtractive"} and envelope is None:
        raise SchemaError(f"{where}.envelope", f"{role} unit requires a must_fit_inside envelope")
    prims = [
        _parse_primitive(p, uid, f"{where}.constructive_primitives[{i}]")
        for i, p in enumerate(docio.expect_list(raw.get("constructive_primitives", []), f"{where}.constructive_primitives"))
    ]
    return ConstructionUnit(id=uid, role=role, envelope=envelope, primitives=prims)


def _parse_support_zone(raw: Any, envelope: AxisBox, where: str) -> SupportZone:
    raw = docio.expect_map(raw, where)
    name = docio.expect_str(raw.get("name"), f"{where}.name")
    plane = docio.expect_map(raw.get("plane"), f"{where}.plane")
    normal = plane.get("normal")
    if not isinstance(normal, str) or len(normal) != 2 or normal[0] not in "+-" or normal[1] not in AXES:
        raise SchemaError(f"{where}.plane.normal", f"expected a signed axis like '+y', got {normal!r}")
    offset = docio.expect_finite(plane.get("offset"), f"{where}.plane.offset")

    axis = normal[1]
    if axis in envelope:
        boundary = envelope[axis][1] if normal[0] == "+" else envelope[axis][0]
        if abs(offset - boundary) > BOUNDARY_TOL:
            raise SchemaError(
                f"{where}.plane.offset",
                f"support zone not on envelope boundary: offset {offset} vs {boundary} on {normal}",
            )

    footprint: AxisBox = {}
    for key, rng in docio.expect_map(raw.get("footprint"), f"{where}.footprint").items():
        if not key.endswith("_span") or key[0] not in AXES:
            raise SchemaError(f"{where}.footprint.{key}", "expected keys like x_span")
        fp_axis = key[0]
        rng = docio.expect_list(rng, f"{where}.footprint.{key}")
        if len(rng) != 2:
            raise SchemaError(f"{where}.footprint.{key}", "expected [lo, hi]")
        lo = docio.expect_finite(rng[0], where)
        hi = docio.expect_finite(rng[1], where)
        if not lo < hi:
            raise SchemaError(f"{where}.footprint.{key}", "span lo must be < hi")
        if fp_axis in envelope:
            elo, ehi = envelope[fp_axis]
            if lo < elo - BOUNDARY_TOL or hi > ehi + BOUNDARY_TOL:
                raise SchemaError(f"{where}.footprint.{key}", "footprint leaves the envelope")
        footprint[fp_axis] = (lo, hi)
    return SupportZone(name=name, plane_normal=normal, plane_offset=offset, footprint=footprint)


def _parse_claim(raw: Any, where: str) -> Claim:
    raw = docio.expect_map(raw, where)
    cid = docio.expect_str(raw.get("id"), f"{where}.id")
    op_raw = raw.get("operator")
    if op_raw not in OPERATORS:
        raise SchemaError(f"{where}.operator", f"unknown operator {op_raw!r}")
    return Claim(
        id=cid,
        metric=docio.expect_str(raw.get("metric"), f"{where}.metric"),
        operator=OPERATORS[op_raw],
        value=docio.expect_finite(raw.get("value"), f"{where}.value"),
    )


def _parse_part(raw: Any, where: str) -> PartPlan:
    raw = docio.expect_map(raw, where)
    name = docio.expect_str(raw.get("name"), f"{where}.name")
    geom = docio.expect_map(raw.get("geometry_definition"), f"{where}.geometry_definition")
    envelope = _parse_axis_box(geom.get("bounding_envelope"), f"{where}.geometry_definition.bounding_envelope")
    zones = [
        _parse_support_zone(z, envelope, f"{where}.geometry_definition.support_zones[{i}]")
        for i, z in enumerate(docio.expect_list(geom.get("support_zones", []), f"{where}.geometry_definition.support_zones"))
    ]
    units = [
        _parse_unit(u, f"{where}.construction_units[{i}]")
        for i, u in enumerate(docio.expect_list(raw.get("construction_units", []), f"{where}.construction_units"))
    ]
    uids = [u.id for u in units]
    if len(uids) != len(set(uids)):
        raise SchemaError(f"{where}.construction_units", "duplicate unit ids")

    # Modifier fillet hints must point at an existing unit in this part.
    for u in units:
        if u.role != "modifier":
            continue
        for p in u.primitives:
            if p.op == "fillet_hint":
                target = str(p.params.get("edge_selector", "")).split(".", 1)[0]
                if target not in uids:
                    raise SchemaError(
                        f"{where}.construction_units[{u.id}]",
                        f"fillet edge_selector references unknown unit {target!r}",
                    )

    claims = [
        _parse_claim(c, f"{where}.acceptance_claims[{i}]")
        for i, c in enumerate(docio.expect_list(raw.get("acceptance_claims", []), f"{where}.acceptance_claims"))
    ]
    return PartPlan(name=name, bounding_envelope=envelope, support_zones=zones,
                    construction_units=units, acceptance_claims=claims)


def parse_blueprint_doc(doc: Any, where: str = "blueprint") -> BlueprintDoc:
    doc = docio.expect_map(doc, where)
    version = doc.get("assembly_schema_version", doc.get("schema_version"))
    if version != SCHEMA_VERSION:
        raise SchemaError("assembly_schema_version", f"expected {SCHEMA_VERSION}, got {version!r}")

    meta_raw = docio.expect_map(doc.get("metadata"), "metadata")
    units = meta_raw.get("units")
    if units != "mm":
        raise SchemaError("metadata.units", f"expected 'mm', got {units!r}")
    cs = docio.expect_map(meta_raw.get("coordinate_system"), "metadata.coordinate_system")
    if set(cs.keys()) != set(AXES):
        raise SchemaError("metadata.coordinate_system", "must map exactly x, y, z")
    labels = [docio.expect_str(cs[a], f"metadata.coordinate_system.{a}") for a in AXES]
    if len(set(labels)) != 3:
        raise SchemaError("metadata.coordinate_system", "axis semantic labels must be distinct")
    metadata = BlueprintMetadata(
        brief_id=str(meta_raw.get("brief_id", "") or ""),
        units="mm",
        coordinate_system={a: cs[a] for a in AXES},
        material=docio.expect_map(meta_raw.get("material", {}) or {}, "metadata.material"),
    )

    paths: dict[str, AxisBox] = {}
    for name, box in docio.expect_map(doc.get("paths", {}) or {}, "paths").items():
        paths[str(name)] = _parse_axis_box(box, f"paths.{name}")

    parts = [
        _parse_part(p, f"parts[{i}]")
        for i, p in enumerate(docio.expect_list(doc.get("parts", []), "parts"))
    ]
    names = [p.name for p in parts]
    if len(names) != len(set(names)):
        raise SchemaError("parts", "duplicate part names")

    # Sweep-path references are declared-only, but if a paths table exists the
    # referenced names must resolve in it.
    if paths:
        for part in parts:
            for unit in part.construction_units:
                for prim in unit.primitives:
                    if prim.op == "cylinder":
                        ref = prim.params.get("sweep_path")
                        if ref not in paths:
                            raise SchemaError(
                                f"parts[{part.name}].construction_units[{unit.id}]",
                                f"sweep_path {ref!r} not found in the paths table",
                            )
    return BlueprintDoc(schema_version=SCHEMA_VERSION, metadata=metadata, parts=parts, paths=paths)


def parse_blueprint(path: str | Path) -> BlueprintDoc:
    """Parse and validate a schema-v4 blueprint file."""
    return parse_blueprint_doc(docio.load_path(path))


def blueprint_to_doc(bp: BlueprintDoc) -> dict[str, Any]:
    """Canonical plain-document form (used by serialization and diffing)."""
    doc: dict[str, Any] = {
        "assembly_schema_version": bp.schema_version,
        "metadata": {
            "brief_id": bp.metadata.brief_id,
            "units": bp.metadata.units,
            "coordinate_system": dict(bp.metadata.coordinate_system),
            "material": dict(bp.metadata.material),
        },
    }
    if bp.paths:
        doc["paths"] = {name: {a: list(rng) for a, rng in box.items()} for name, box in bp.paths.items()}
    doc["parts"] = []
    for part in bp.parts:
        entry: dict[str, Any] = {
            "name": part.name,
            "geometry_definition": {
                "bounding_envelope": {a: list(rng) for a, rng in part.bounding_envelope.items()},
            },
        }
        if part.support_zones:
            entry["geometry_definition"]["support_zones"] = [
                {
                    "name": z.name,
                    "plane": {"normal": z.plane_normal, "offset": z.plane_offset},
                    "footprint": {f"{a}_span": list(rng) for a, rng in z.footprint.items()},
                }
                for z in part.support_zones
            ]
        entry["construction_units"] = []
        for unit in part.construction_units:
            u: dict[str, Any] = {"id": unit.id, "role": unit.role}
            if unit.envelope is not None:
                u["envelope"] = {"must_fit_inside": {a: list(rng) for a, rng in unit.envelope.items()}}
            u["constructive_primitives"] = [{"op": p.op, **p.params} for p in unit.primitives]
            entry["construction_units"].append(u)
        if part.acceptance_claims:
            entry["acceptance_claims"] = [
                {"id": c.id, "metric": c.metric, "operator": OPERATOR_SYMBOL[c.operator], "value": c.value}
                for c in part.acceptance_claims
            ]
        doc["parts"].append(entry)
    return doc


def serialize_blueprint(bp: BlueprintDoc) -> str:
    return docio.dumps(blueprint_to_doc(bp))


def check_envelopes(bp: BlueprintDoc) -> list[Diagnostic]:
    """Containment checks of unit volumes against part envelopes."""
    diags: list[Diagnostic] = []
    for part in bp.parts:
        where = f"parts[{part.name}]"
        if not any(u.role in {"additive", "subtractive"} for u in part.construction_units):
            diags.append(Diagnostic("error", where, "additive/subtractive unit required"))
        for unit in part.construction_units:
            if unit.envelope is None:
                continue
            # Per-primitive bounds: a swept cylinder uses its path's declared
            # AABB when the paths table provides one; everything else falls
            # back to the unit envelope (the conservative analytic bound).
            boxes: list[tuple[str, AxisBox]] = []
            fallback_needed = not unit.primitives
            for prim in unit.primitives:
                path_box = None
                if prim.op == "cylinder":
                    path_box = bp.paths.get(prim.params.get("sweep_path", ""))
                if path_box is not None:
                    boxes.append((f"path {prim.params['sweep_path']}", path_box))
                else:
                    fallback_needed = True
            if fallback_needed:
                boxes.append(("unit envelope", unit.envelope))

            for label, box in boxes:
                for axis, (lo, hi) in box.items():
                    if axis not in part.bounding_envelope:
                        continue
                    plo, phi = part.bounding_envelope[axis]
                    overshoot = max(plo - lo, hi - phi)
                    if overshoot > 0:
                        diags.append(Diagnostic(
                            "error",
                            f"{where}.construction_units[{unit.id}]",
                            f"{label} exceeds part envelope on axis {axis} by {overshoot:.6g} mm",
                        ))
    return diags


@dataclass
class ClaimBinding:
    """Claim ids resolved against a brief's requirements."""

    bound: list[tuple[Claim, Any]]  # (claim, matching Requirement)
    unmatched_claims: list[str]
    unclaimed_requirements: list[str]
    diagnostics: list[Diagnostic]


def extract_claims(bp: BlueprintDoc, brief: Brief) -> ClaimBinding:
    req_ids = [r.id for r in brief.requirements]
    bound: list[tuple[Claim, Any]] = []
    unmatched: list[str] = []
    diags: list[Diagnostic] = []
    claimed: set[str] = set()
    for claim in bp.all_claims():
        if claim.id in req_ids:
            bound.append((claim, brief.requirement(claim.id)))
            claimed.add(claim.id)
        else:
            unmatched.append(claim.id)
            diags.append(Diagnostic("warning", f"acceptance_claims[{claim.id}]",
                                    "claim has no matching brief requirement"))
    unclaimed = [rid for rid in req_ids if rid not in claimed]
    for rid in unclaimed:
        diags.append(Diagnostic("info", f"requirements[{rid}]", "requirement never claimed by the blueprint"))
    return ClaimBinding(bound=bound, unmatched_claims=unmatched,
                        unclaimed_requirements=unclaimed, diagnostics=diags)


# --- id-keyed structural diff -------------------------------------------------

# List fields matched by identity key instead of position.
_KEYED_LISTS = {"parts": "name", "construction_units": "id",
                "acceptance_claims": "id", "support_zones": "name"}


@dataclass(frozen=True)
class DiffEntry:
    kind: str  # added | removed | modified
    path: str
    before: Any
    after: Any


@dataclass
class BlueprintDiff:
    entries: list[DiffEntry]

    def is_empty(self) -> bool:
        return not self.entries

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema": "blueprint_diff/1",
            "entries": [
                {"kind": e.kind, "path": e.path, "before": e.before, "after": e.after}
                for e in self.entries
            ],
        }


def _diff_value(old: Any, new: Any, path: str, key_field: str | None, out: list[DiffEntry]) -> None:
    if isinstance(old, dict) and isinstance(new, dict):
        for key in list(old.keys()) + [k for k in new.keys() if k not in old]:
            sub = f"{path}.{key}" if path else key
            if key not in new:
                out.append(DiffEntry("removed", sub, old[key], None))
            elif key not in old:
                out.append(DiffEntry("added", sub, None, new[key]))
            else:
                _diff_value(old[key], new[key], sub, _KEYED_LISTS.get(key), out)
        return
    if isinstance(old, list) and isinstance(new, list):
        if key_field is not None and all(isinstance(e, dict) and key_field in e for e in old + new):
            old_by = {e[key_field]: e for e in old}
            new_by = {e[key_field]: e for e in new}
            for key, entry in old_by.items():
                sub = f"{path}[{key}]"
                if key not in new_by:
                    out.append(DiffEntry("removed", sub, entry, None))
                else:
                    _diff_value(entry, new_by[key], sub, None, out)
            for key, entry in new_by.items():
                if key not in old_by:
                    out.append(DiffEntry("added", f"{path}[{key}]", None, entry))
            return
        if len(old) != len(new):
            out.append(DiffEntry("modified", path, old, new))
            return
        for i, (o, n) in enumerate(zip(old, new)):
            _diff_value(o, n, f"{path}[{i}]", None, out)
        return
    if old != new:
        out.append(DiffEntry("modified", path, old, new))


def diff_blueprints(old: BlueprintDoc, new: BlueprintDoc) -> BlueprintDiff:
    """Structural diff keyed by part name, unit id, and claim id."""
    entries: list[DiffEntry] = []
    _diff_value(blueprint_to_doc(old), blueprint_to_doc(new), "", None, entries)
    return BlueprintDiff(entries=entries)


def _walk_tokens(path: str) -> list[tuple[str, str | int | None]]:
    """'parts[main_hoop].construction_units[t].x' -> [(parts, main_hoop), ...]."""
    tokens: list[tuple[str, str | int | None]] = []
    for piece in path.split("."):
        while piece:
            if "[" in piece:
                name, rest = piece.split("[", 1)
                key, piece = rest.split("]", 1)
                selector: str | int = int(key) if key.lstrip("-").isdigit() and name not in _KEYED_LISTS else key
                tokens.append((name, selector))
            else:
                tokens.append((piece, None))
                piece = ""
    return tokens


def _locate(container: Any, tokens: list[tuple[str, str | int | None]]) -> tuple[Any, str | int]:
    """Walk to the parent of the addressed node; return (parent, final key/index)."""
    node = container
    for i, (name, selector) in enumerate(tokens):
        last = i == len(tokens) - 1
        child = node[name]
        if selector is None:
            if last:
                return node, name
            node = child
            continue
        if isinstance(selector, int):
            if last:
                return child, selector
            node = child[selector]
            continue
        key_field = _KEYED_LISTS.get(name, "id")
        idx = next((j for j, e in enumerate(child) if e.get(key_field) == selector), None)
        if idx is None:
            if last:
                return child, -1  # signals "append" for added entries
            raise KeyError(f"no element {selector!r} under {name}")
        if last:
            return child, idx
        node = child[idx]
    raise KeyError("empty path")


def apply_diff(old: BlueprintDoc, diff: BlueprintDiff) -> BlueprintDoc:
    """Reconstruct the new document: apply(old, diff(old, new)) == new."""
    import copy

    doc = copy.deepcopy(blueprint_to_doc(old))
    for entry in diff.entries:
        tokens = _walk_tokens(entry.path)
        parent, key = _locate(doc, tokens)
        if entry.kind == "removed":
            if isinstance(parent, list):
                del parent[key]
            else:
                del parent[key]
        elif entry.kind == "added":
            if isinstance(parent, list):
                parent.append(copy.deepcopy(entry.after))
            else:
                parent[key] = copy.deepcopy(entry.after)
        else:
            parent[key] = copy.deepcopy(entry.after)
    return parse_blueprint_doc(doc)


def _canon(value: Any, key_field: str | None = None) -> Any:
    if isinstance(value, dict):
        return {k: _canon(v, _KEYED_LISTS.get(k)) for k, v in sorted(value.items())}
    if isinstance(value, list):
        if key_field is not None and all(isinstance(e, dict) and key_field in e for e in value):
            return sorted((_canon(e) for e in value), key=lambda e: str(e[key_field]))
        return [_canon(e) for e in value]
    return value


def blueprints_equal(a: BlueprintDoc, b: BlueprintDoc) -> bool:
    """Structural equality: id-keyed collections compare order-insensitively."""
    return _canon(blueprint_to_doc(a)) == _canon(blueprint_to_doc(b))
