"""Requirement binding and grading.

The metric namespace is the bridge between a submission and the brief's typed
contract: values arrive from four sources in fixed precedence (solver, then
mesh-derived, then declared, then blueprint claims), metric names are funneled
through an alias table, and every requirement resolves to a typed verdict with
a signed relative margin.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Any, Iterable

from .artifact import Artifact
from .blueprints import ClaimBinding
from .briefs import Brief, Requirement
from .errors import AmbiguousBinding, EmptyList

# Source precedence, strongest first.
LEVEL_SOLVER = 0
LEVEL_MESH = 1
LEVEL_DECLARED = 2
LEVEL_CLAIM = 3
PROVENANCE = {LEVEL_SOLVER: "solver", LEVEL_MESH: "mesh_derived",
              LEVEL_DECLARED: "declared", LEVEL_CLAIM: "claim"}

# Built-in alias seeds; artifacts extend these through their manifest.
BUILTIN_ALIASES = {
    "empty_enclosure_mass": "mass",
    "dry_mass": "mass",
    "mesh_derived_mass": "mass",
    "self_weight_kg": "mass",
    "mesh_mass": "mass",
    "first_natural_frequency_constrained": "first_natural_frequency",
}

_PAREN = re.compile(r"\([^)]*\)")
_NON_ALNUM = re.compile(r"[^a-z0-9]+")

_UNIT_FACTORS = {
    ("kg", "g"): 1e3, ("g", "kg"): 1e-3,
    ("kn", "n"): 1e3, ("n", "kn"): 1e-3,
    ("m", "mm"): 1e3, ("mm", "m"): 1e-3,
}


def normalize_metric_name(name: str) -> str:
    """Fold a human metric label onto a key: lowercase, units and punctuation out."""
    text = _PAREN.sub(" ", name.lower())
    return _NON_ALNUM.sub("_", text).strip("_")


def convert_unit(value: float, from_unit: str, to_unit: str) -> float | None:
    """Convert between recognized units; None when incomparable."""
    f, t = from_unit.strip(), to_unit.strip()
    if f == t or not f or not t:
        return value
    factor = _UNIT_FACTORS.get((f.lower(), t.lower()))
    return None if factor is None else value * factor


@dataclass
class NamespaceEntry:
    value: float
    unit: str
    provenance: str
    source: str


@dataclass
class MetricNamespace:
    entries: dict[tuple[str, str], NamespaceEntry] = field(default_factory=dict)
    aliases: dict[str, str] = field(default_factory=lambda: dict(BUILTIN_ALIASES))

    def add_alias(self, name: str, canonical: str) -> None:
        key = normalize_metric_name(name)
        target = normalize_metric_name(canonical)
        if key == target:
            return
        existing = self.aliases.get(key)
        if existing is not None and existing != target:
            raise AmbiguousBinding(key, [existing, target])
        self.aliases[key] = target

    def resolve(self, name: str) -> str:
        """Alias resolution; idempotent on canonical keys, cycle-safe."""
        key = normalize_metric_name(name)
        seen = {key}
        while key in self.aliases:
            key = self.aliases[key]
            if key in seen:
                raise AmbiguousBinding(key, ["alias cycle"])
            seen.add(key)
        return key

    def insert(self, scope: str, name: str, value: float, unit: str, level: int, source: str) -> None:
        key = (scope, self.resolve(name))
        existing = self.entries.get(key)
        if existing is None:
            self.entries[key] = NamespaceEntry(value=float(value), unit=unit,
                                               provenance=PROVENANCE[level], source=source)
            return
        if PROVENANCE[level] == existing.provenance:
            # same precedence level: identical duplicates are fine, conflicts are not
            if not (existing.value == float(value) and existing.unit == unit):
                raise AmbiguousBinding(f"{key[0]}:{key[1]}", [existing.source, source])
        # lower precedence never overrides

    def lookup(self, scope: str, name: str) -> NamespaceEntry | None:
        return self.entries.get((scope, self.resolve(name)))


def build_namespace(artifact: Artifact, report: dict[str, Any] | None = None,
                    claims: ClaimBinding | None = None) -> MetricNamespace:
    """Populate a namespace from all binding sources in precedence order."""
    ns = MetricNamespace()
    for alias, canonical in artifact.aliases.items():
        ns.add_alias(alias, canonical)

    # 1. solver values, per load case
    if report:
        for lc, metrics in (report.get("cases") or {}).items():
            for key, entry in metrics.items():
                ns.insert(str(lc), key, float(entry["value"]), str(entry.get("unit", "")),
                          LEVEL_SOLVER, f"solver:{lc}")
                m = re.fullmatch(r"max_displacement_at_(.+)", normalize_metric_name(key))
                if m:
                    set_name = m.group(1)
                    for pattern in (f"{set_name}_deflection", f"{set_name}_displacement",
                                    f"deflection_at_{set_name}"):
                        ns.add_alias(pattern, key)
        for lc, entry in (report.get("buckling") or {}).items():
            factors = entry.get("load_factors") or []
            value = float(factors[0]) if factors else math.inf
            ns.insert(str(lc), "first_mode_load_factor", value, "", LEVEL_SOLVER, f"solver:buckle:{lc}")
        modal = report.get("modal") or {}
        freqs = modal.get("frequencies_hz") or []
        if freqs:
            ns.insert("constrained_modal", "first_natural_frequency", float(min(freqs)), "Hz",
                      LEVEL_SOLVER, "solver:modal")

    # 2. mesh-derived values on the design/assembly scopes
    if artifact.mass is not None:
        mp = artifact.mass
        derived = [
            ("mass", mp.mass_kg, "kg"),
            ("volume", mp.volume_mm3, "mm3"),
            ("projected_areal_density", mp.projected_areal_density, "kg/m2"),
            ("bbox_x", mp.bbox["x"][1] - mp.bbox["x"][0], "mm"),
            ("bbox_y", mp.bbox["y"][1] - mp.bbox["y"][0], "mm"),
            ("bbox_z", mp.bbox["z"][1] - mp.bbox["z"][0], "mm"),
        ]
        for scope in ("design", "assembly"):
            for key, value, unit in derived:
                ns.insert(scope, key, value, unit, LEVEL_MESH, "mesh")
    elif artifact.mesh is not None and artifact.mesh_validity is not None and artifact.mesh_validity.valid_solid:
        # no density: expose dimensions only
        bbox = artifact.mesh.bbox()
        for scope in ("design", "assembly"):
            for ax in "xyz":
                ns.insert(scope, f"bbox_{ax}", bbox[ax][1] - bbox[ax][0], "mm", LEVEL_MESH, "mesh")

    # 3. declared measurements from the manifest
    for decl in artifact.declared:
        ns.insert(decl.scope, decl.metric, decl.value, decl.unit, LEVEL_DECLARED, "manifest")

    # 4. blueprint acceptance claims, scoped by the matched requirement
    if claims:
        for claim, req in claims.bound:
            if req is None:
                continue
            scopes = req.applies_to or ["design"]
            for scope in scopes:
                ns.insert(scope, req.metric, claim.value, req.unit, LEVEL_CLAIM, f"claim:{claim.id}")
    return ns


@dataclass
class Verdict:
    requirement_id: str
    status: str  # pass | fail | unbound | solver_error | not_evaluable
    metric: str
    operator: str
    limit: float
    unit: str
    measured: float | None = None
    measured_unit: str = ""
    margin: float | None = None
    worst_scope: str = ""
    provenance: str = ""
    binding_note: str = ""
    scope_values: dict[str, float] = field(default_factory=dict)
    tolerance: float | None = None
    tolerance_is_default: bool = False

    def to_doc(self) -> dict[str, Any]:
        doc: dict[str, Any] = {
            "id": self.requirement_id,
            "status": self.status,
            "metric": self.metric,
            "operator": self.operator,
            "limit": self.limit,
            "unit": self.unit,
        }
        if self.measured is not None:
            doc["measured"] = self.measured
            doc["measured_unit"] = self.measured_unit
        if self.margin is not None:
            doc["margin"] = self.margin
        if self.worst_scope:
            doc["worst_scope"] = self.worst_scope
        if self.provenance:
            doc["provenance"] = self.provenance
        if self.binding_note:
            doc["binding_note"] = self.binding_note
        if self.scope_values:
            doc["scope_values"] = dict(self.scope_values)
        if self.tolerance is not None:
            doc["tolerance"] = self.tolerance
            doc["tolerance_is_default"] = self.tolerance_is_default
        return doc


@dataclass
class CaseVerdict:
    case_id: str
    verdicts: list[Verdict]
    strict_pass: bool
    req_pass_fraction: float
    not_evaluable_count: int

    def counts(self) -> dict[str, int]:
        out = {"pass": 0, "fail": 0, "unbound": 0, "solver_error": 0, "not_evaluable": 0}
        for v in self.verdicts:
            out[v.status] += 1
        return out

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema": "case_verdict/1",
            "case_id": self.case_id,
            "strict_pass": self.strict_pass,
            "req_pass_fraction": self.req_pass_fraction,
            "not_evaluable_count": self.not_evaluable_count,
            "counts": self.counts(),
            "verdicts": [v.to_doc() for v in self.verdicts],
            "conventions": {
                "not_evaluable_excluded_from_fraction": True,
                "strict_requires_zero_unbound_or_solver_error": True,
            },
        }


def case_verdict_from_doc(doc: dict[str, Any]) -> CaseVerdict:
    """Rebuild a CaseVerdict from its serialized form (bench-report path)."""
    verdicts = []
    for entry in doc.get("verdicts") or []:
        verdicts.append(Verdict(
            requirement_id=str(entry.get("id", "")),
            status=str(entry.get("status", "unbound")),
            metric=str(entry.get("metric", "")),
            operator=str(entry.get("operator", "LE")),
            limit=float(entry.get("limit", 0.0)),
            unit=str(entry.get("unit", "")),
            measured=entry.get("measured"),
            measured_unit=str(entry.get("measured_unit", "")),
            margin=entry.get("margin"),
            worst_scope=str(entry.get("worst_scope", "")),
            provenance=str(entry.get("provenance", "")),
            binding_note=str(entry.get("binding_note", "")),
            scope_values=dict(entry.get("scope_values") or {}),
        ))
    return CaseVerdict(
        case_id=str(doc.get("case_id", "")),
        verdicts=verdicts,
        strict_pass=bool(doc.get("strict_pass", False)),
        req_pass_fraction=float(doc.get("req_pass_fraction", 0.0)),
        not_evaluable_count=int(doc.get("not_evaluable_count", 0)),
    )


def _margin(req: Requirement, value: float) -> float:
    scale = abs(req.limit) if req.limit != 0 else 1.0
    if req.operator == "LE":
        return (req.limit - value) / scale
    if req.operator == "GE":
        return (value - req.limit) / scale
    tol = req.tolerance if req.tolerance is not None else 0.0
    return tol - abs(value - req.limit) / scale


_RTYPE_ERROR_TOKENS = {
    "structural": ("static",),
    "vibration": ("frequency", "modal", "dynamic"),
    "buckling": ("buckle",),
    "thermal": ("heat",),
    "fluid": ("cfd", "fluid"),
    "radiation": ("radiation",),
}


def _solver_errored(req: Requirement, report: dict[str, Any] | None) -> str | None:
    if not report:
        return None
    for err in report.get("errors") or []:
        cls = str(err.get("analysis_class", "")).lower()
        if any(tok in cls for tok in _RTYPE_ERROR_TOKENS.get(req.rtype, ())):
            return str(err.get("message", "solver error"))
    return None


def evaluate(brief: Brief, ns: MetricNamespace, report: dict[str, Any] | None = None) -> CaseVerdict:
    """One Verdict per requirement; the minimum margin over scopes decides."""
    verdicts: list[Verdict] = []
    for req in brief.requirements:
        base = Verdict(requirement_id=req.id, status="", metric=req.metric, operator=req.operator,
                       limit=req.limit, unit=req.unit, tolerance=req.tolerance,
                       tolerance_is_default=req.tolerance_is_default)
        if req.not_evaluable:
            base.status = "not_evaluable"
            base.binding_note = "flagged requires_non_fea_solver; outside this harness's scope"
            verdicts.append(base)
            continue

        scopes = req.applies_to or ["design"]
        canonical = ns.resolve(req.metric)
        missing: list[str] = []
        bound: list[tuple[str, float, NamespaceEntry]] = []
        for scope in scopes:
            entry = ns.lookup(scope, req.metric)
            if entry is None:
                missing.append(scope)
                continue
            converted = convert_unit(entry.value, entry.unit, req.unit)
            if converted is None:
                missing.append(scope)
                base.binding_note = (f"unit mismatch for {canonical!r} on {scope}: "
                                     f"{entry.unit!r} vs {req.unit!r}")
                continue
            bound.append((scope, converted, entry))

        if missing:
            err = _solver_errored(req, report)
            if err is not None:
                base.status = "solver_error"
                base.binding_note = err
            else:
                base.status = "unbound"
                if not base.binding_note:
                    base.binding_note = (f"metric {canonical!r} unbound: no source provided it "
                                         f"for scope(s) {', '.join(missing)}")
            verdicts.append(base)
            continue

        margins = [(scope, _margin(req, value), value, entry) for scope, value, entry in bound]
        worst = min(margins, key=lambda m: m[1])
        base.status = "pass" if worst[1] >= 0 else "fail"
        base.margin = worst[1]
        base.worst_scope = worst[0]
        base.measured = worst[2]
        base.measured_unit = req.unit or worst[3].unit
        base.provenance = worst[3].provenance
        base.scope_values = {scope: value for scope, _, value, _ in margins}
        verdicts.append(base)

    evaluable = [v for v in verdicts if v.status != "not_evaluable"]
    passes = sum(1 for v in evaluable if v.status == "pass")
    hard_misses = sum(1 for v in evaluable if v.status in ("unbound", "solver_error"))
    fraction = passes / len(evaluable) if evaluable else 1.0
    strict = passes == len(evaluable) and hard_misses == 0
    return CaseVerdict(
        case_id=brief.id,
        verdicts=verdicts,
        strict_pass=strict,
        req_pass_fraction=fraction,
        not_evaluable_count=len(verdicts) - len(evaluable),
    )


@dataclass
class GroupGrade:
    cases: int
    strict_count: int
    mean_req_pass: float

    def to_doc(self) -> dict[str, Any]:
        return {
            "cases": self.cases,
            "strict": f"{self.strict_count}/{self.cases}",
            "mean_req_pass": self.mean_req_pass,
        }


@dataclass
class SuiteGrade:
    overall: GroupGrade
    groups: dict[str, GroupGrade]

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema": "suite_grade/1",
            "overall": self.overall.to_doc(),
            "groups": {k: v.to_doc() for k, v in sorted(self.groups.items())},
        }

    def render_table(self) -> str:
        rows = [("group", "cases", "strict", "mean req pass")]
        for name, g in sorted(self.groups.items()):
            rows.append((name, str(g.cases), f"{g.strict_count}/{g.cases}", f"{g.mean_req_pass:.1%}"))
        g = self.overall
        rows.append(("overall", str(g.cases), f"{g.strict_count}/{g.cases}", f"{g.mean_req_pass:.1%}"))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in rows]
        lines.insert(1, "  ".join("-" * w for w in widths))
        return "\n".join(lines)


def _grade_group(cases: Iterable[CaseVerdict]) -> GroupGrade:
    cases = list(cases)
    return GroupGrade(
        cases=len(cases),
        strict_count=sum(1 for c in cases if c.strict_pass),
        mean_req_pass=sum(c.req_pass_fraction for c in cases) / len(cases),
    )


def grade_suite(cases: list[CaseVerdict], groups: dict[str, str] | None = None) -> SuiteGrade:
    """Aggregate case verdicts into strict counts and mean requirement pass."""
    if not cases:
        raise EmptyList("no cases to grade")
    ordered = sorted(cases, key=lambda c: c.case_id)
    by_group: dict[str, list[CaseVerdict]] = {}
    for case in ordered:
        label = (groups or {}).get(case.case_id, "all")
        by_group.setdefault(label, []).append(case)
    return SuiteGrade(
        overall=_grade_group(ordered),
        groups={name: _grade_group(members) for name, members in by_group.items()},
    )
