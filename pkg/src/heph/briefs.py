"""Engineering-brief parsing and validation.

A brief file is a structured document pairing a free-form prompt with an
ordered list of typed pass/fail requirements. The file layout is fixed:
``full_prompt``, ``prompt.*``, ``requirements.pass_fail_criteria``,
``verification``, ``notes.exclusions_explained``, ``eval_coverage``; any
``source.*`` block is accepted and ignored, and unknown top-level fields are
preserved as opaque extras.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from . import docio
from .docio import Diagnostic
from .errors import SchemaError

MAX_REQUIREMENTS = 32

# Canonical requirement types plus the pool spellings that alias onto them.
RTYPES = {
    "structural",
    "vibration",
    "thermal",
    "fluid",
    "radiation",
    "buckling",
    "dimensional",
    "material_compliance",
    "geometric_check",
}
RTYPE_ALIASES = {
    "structural_analysis": "structural",
    "vibration_analysis": "vibration",
    "buckling_analysis": "buckling",
    "connection_integrity": "structural",
}

OPERATORS = {"<=": "LE", ">=": "GE", "==": "EQ", "=": "EQ", "LE": "LE", "GE": "GE", "EQ": "EQ"}
OPERATOR_SYMBOL = {"LE": "<=", "GE": ">=", "EQ": "=="}

# Recognized limit_* unit suffixes; anything else is carried opaquely.
KNOWN_UNITS = {"MPa", "mm", "kg", "g", "Hz", "kN", "N", "m", ""}

# applies_to tokens that are always legal besides declared load cases.
BUILTIN_SCOPES = {"design", "assembly", "constrained_modal"}

DEFAULT_EQ_TOLERANCE = 1e-3

LOAD_KINDS = {"force", "acceleration_g"}


@dataclass
class MaterialRef:
    name: str
    properties: dict[str, Any] = field(default_factory=dict)


@dataclass
class LoadCaseDecl:
    id: str
    description: str = ""
    loads: list[dict[str, Any]] = field(default_factory=list)


@dataclass
class StructuredPrompt:
    geometric_constraints: list[str] = field(default_factory=list)
    materials: list[MaterialRef] = field(default_factory=list)
    load_cases: list[LoadCaseDecl] = field(default_factory=list)
    output_format: str = ""


@dataclass
class Requirement:
    id: str
    rtype: str
    metric: str
    operator: str  # LE | GE | EQ
    limit: float
    unit: str
    applies_to: list[str]
    tolerance: float | None = None
    tolerance_is_default: bool = False
    derivation: str = ""
    not_evaluable: bool = False
    extras: dict[str, Any] = field(default_factory=dict)


@dataclass
class VerificationBlock:
    primary_class: str = ""
    secondary_classes: list[str] = field(default_factory=list)
    excluded_classes: list[str] = field(default_factory=list)
    requires_non_fea_solver: dict[str, bool] = field(default_factory=dict)


@dataclass
class Brief:
    id: str
    full_prompt: str
    structured_prompt: StructuredPrompt
    requirements: list[Requirement]
    verification: VerificationBlock
    eval_coverage: list[str] = field(default_factory=list)
    multi_part: bool = False
    notes: dict[str, Any] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)

    def load_case_ids(self) -> list[str]:
        return [lc.id for lc in self.structured_prompt.load_cases]

    def requirement(self, rid: str) -> Requirement | None:
        for req in self.requirements:
            if req.id == rid:
                return req
        return None


def _parse_limit(raw: dict[str, Any], where: str) -> tuple[float, str]:
    limit_keys = [k for k in raw if k == "limit" or k.startswith("limit_")]
    if not limit_keys:
        raise SchemaError(where, "missing limit field")
    if len(limit_keys) > 1:
        raise SchemaError(where, f"multiple limit fields: {sorted(limit_keys)}")
    key = limit_keys[0]
    unit = "" if key == "limit" else key[len("limit_"):]
    value = docio.expect_finite(raw[key], f"{where}.{key}")
    return value, unit


_REQ_KNOWN_KEYS = {"id", "type", "metric", "op", "operator", "tolerance", "applies_to", "derivation"}


def _parse_requirement(raw: Any, where: str) -> Requirement:
    raw = docio.expect_map(raw, where)
    rid = docio.expect_str(raw.get("id"), f"{where}.id")
    rtype_raw = docio.expect_str(raw.get("type"), f"{where}.type")
    rtype = RTYPE_ALIASES.get(rtype_raw, rtype_raw)
    if rtype not in RTYPES:
        raise SchemaError(f"{where}.type", f"unknown requirement type {rtype_raw!r}")
    metric = docio.expect_str(raw.get("metric"), f"{where}.metric")
    op_raw = raw.get("op", raw.get("operator"))
    if op_raw not in OPERATORS:
        raise SchemaError(f"{where}.op", f"unknown operator {op_raw!r}")
    operator = OPERATORS[op_raw]
    limit, unit = _parse_limit(raw, where)

    applies = raw.get("applies_to", [])
    applies = [docio.expect_str(tok, f"{where}.applies_to") for tok in docio.expect_list(applies, f"{where}.applies_to")]

    tolerance = raw.get("tolerance")
    tolerance_is_default = False
    if tolerance is not None:
        tolerance = docio.expect_finite(tolerance, f"{where}.tolerance")
    elif operator == "EQ":
        tolerance = DEFAULT_EQ_TOLERANCE
        tolerance_is_default = True

    extras = {
        k: v
        for k, v in raw.items()
        if k not in _REQ_KNOWN_KEYS and not (k == "limit" or k.startswith("limit_"))
    }
    return Requirement(
        id=rid,
        rtype=rtype,
        metric=metric,
        operator=operator,
        limit=limit,
        unit=unit,
        applies_to=applies,
        tolerance=tolerance,
        tolerance_is_default=tolerance_is_default,
        derivation=str(raw.get("derivation", "") or ""),
        extras=extras,
    )


def _parse_load_case(raw: Any, where: str) -> LoadCaseDecl:
    raw = docio.expect_map(raw, where)
    lc_id = docio.expect_str(raw.get("id"), f"{where}.id")
    loads = []
    for i, entry in enumerate(docio.expect_list(raw.get("loads", []), f"{where}.loads")):
        entry = docio.expect_map(entry, f"{where}.loads[{i}]")
        vector = docio.expect_list(entry.get("vector"), f"{where}.loads[{i}].vector")
        if len(vector) != 3:
            raise SchemaError(f"{where}.loads[{i}].vector", "expected a 3-vector")
        vec = [docio.expect_finite(v, f"{where}.loads[{i}].vector") for v in vector]
        kind = entry.get("kind", "force")
        if kind not in LOAD_KINDS:
            raise SchemaError(f"{where}.loads[{i}].kind", f"unknown load kind {kind!r}")
        loads.append({"selector": str(entry.get("selector", "")), "vector": vec, "kind": kind})
    return LoadCaseDecl(id=lc_id, description=str(raw.get("description", "") or ""), loads=loads)


def _parse_materials(raw: Any, where: str) -> list[MaterialRef]:
    if raw is None:
        return []
    if isinstance(raw, dict):
        raw = [raw]
    out = []
    for i, entry in enumerate(docio.expect_list(raw, where)):
        entry = docio.expect_map(entry, f"{where}[{i}]")
        name = docio.expect_str(entry.get("name"), f"{where}[{i}].name")
        out.append(MaterialRef(name=name, properties={k: v for k, v in entry.items() if k != "name"}))
    return out


def _parse_verification(raw: Any) -> VerificationBlock:
    if raw is None:
        return VerificationBlock()
    raw = docio.expect_map(raw, "verification")
    secondary = [str(c) for c in docio.expect_list(raw.get("secondary_classes", []) or [],
                                                   "verification.secondary_classes")]
    excluded = [str(c) for c in docio.expect_list(raw.get("excluded_classes", []) or [],
                                                  "verification.excluded_classes")]
    overlap = set(secondary) & set(excluded)
    if overlap:
        raise SchemaError("verification", f"classes both secondary and excluded: {sorted(overlap)}")
    flags_raw = raw.get("requires_non_fea_solver", {}) or {}
    flags = {str(k): bool(v) for k, v in docio.expect_map(flags_raw, "verification.requires_non_fea_solver").items()}
    return VerificationBlock(
        primary_class=str(raw.get("primary_class", "") or ""),
        secondary_classes=secondary,
        excluded_classes=excluded,
        requires_non_fea_solver=flags,
    )


_TOP_KNOWN_KEYS = {
    "id", "full_prompt", "prompt", "requirements", "verification",
    "notes", "eval_coverage", "multi_part", "source",
}


def parse_brief_doc(doc: Any, where: str = "brief") -> Brief:
    """Build a Brief from an already-parsed document."""
    doc = docio.expect_map(doc, where)

    prompt_raw = docio.expect_map(doc.get("prompt", {}) or {}, "prompt")
    structured = StructuredPrompt(
        geometric_constraints=[str(c) for c in
                               docio.expect_list(prompt_raw.get("geometric_constraints", []) or [],
                                                 "prompt.geometric_constraints")],
        materials=_parse_materials(prompt_raw.get("materials", prompt_raw.get("material")), "prompt.materials"),
        load_cases=[
            _parse_load_case(lc, f"prompt.load_cases[{i}]")
            for i, lc in enumerate(docio.expect_list(prompt_raw.get("load_cases", []) or [], "prompt.load_cases"))
        ],
        output_format=str(prompt_raw.get("output_format", "") or ""),
    )
    lc_ids = [lc.id for lc in structured.load_cases]
    if len(lc_ids) != len(set(lc_ids)):
        raise SchemaError("prompt.load_cases", "duplicate load case ids")

    reqs_raw = docio.expect_map(doc.get("requirements", {}) or {}, "requirements")
    criteria = docio.expect_list(reqs_raw.get("pass_fail_criteria", []), "requirements.pass_fail_criteria")
    if not 1 <= len(criteria) <= MAX_REQUIREMENTS:
        raise SchemaError(
            "requirements.pass_fail_criteria",
            f"expected between 1 and {MAX_REQUIREMENTS} requirements, got {len(criteria)}",
        )
    requirements = [
        _parse_requirement(r, f"requirements.pass_fail_criteria[{i}]") for i, r in enumerate(criteria)
    ]
    ids = [r.id for r in requirements]
    if len(ids) != len(set(ids)):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise SchemaError("requirements.pass_fail_criteria", f"duplicate requirement ids: {dupes}")

    verification = _parse_verification(doc.get("verification"))
    for req in requirements:
        req.not_evaluable = _is_not_evaluable(req, verification)

    return Brief(
        id=str(doc.get("id", "") or "unnamed"),
        full_prompt=str(doc.get("full_prompt", "") or ""),
        structured_prompt=structured,
        requirements=requirements,
        verification=verification,
        eval_coverage=[str(t) for t in docio.expect_list(doc.get("eval_coverage", []) or [],
                                                         "eval_coverage")],
        multi_part=bool(doc.get("multi_part", False)),
        notes=docio.expect_map(doc.get("notes", {}) or {}, "notes"),
        extras={k: v for k, v in doc.items() if k not in _TOP_KNOWN_KEYS},
    )


def parse_brief(path: str | Path) -> Brief:
    """Parse and structurally validate a brief file."""
    return parse_brief_doc(docio.load_path(path))


def _is_not_evaluable(req: Requirement, verification: VerificationBlock) -> bool:
    if req.rtype not in {"fluid", "radiation"}:
        return False
    flags = verification.requires_non_fea_solver
    return bool(flags.get(req.metric) or flags.get(req.rtype))


def serialize_brief(brief: Brief) -> str:
    """Emit a document that reparses to an equal Brief (order preserved)."""
    criteria = []
    for req in brief.requirements:
        entry: dict[str, Any] = {"id": req.id, "type": req.rtype, "metric": req.metric,
                                 "op": OPERATOR_SYMBOL[req.operator]}
        limit_key = "limit" if req.unit == "" else f"limit_{req.unit}"
        entry[limit_key] = req.limit
        if req.tolerance is not None and not req.tolerance_is_default:
            entry["tolerance"] = req.tolerance
        if req.derivation:
            entry["derivation"] = req.derivation
        entry["applies_to"] = list(req.applies_to)
        entry.update(req.extras)
        criteria.append(entry)

    doc: dict[str, Any] = {
        "id": brief.id,
        "full_prompt": brief.full_prompt,
        "prompt": {
            "geometric_constraints": list(brief.structured_prompt.geometric_constraints),
            "materials": [{"name": m.name, **m.properties} for m in brief.structured_prompt.materials],
            "load_cases": [
                {"id": lc.id, "description": lc.description, "loads": lc.loads}
                for lc in brief.structured_prompt.load_cases
            ],
            "output_format": brief.structured_prompt.output_format,
        },
        "requirements": {"pass_fail_criteria": criteria},
        "verification": {
            "primary_class": brief.verification.primary_class,
            "secondary_classes": list(brief.verification.secondary_classes),
            "excluded_classes": list(brief.verification.excluded_classes),
            "requires_non_fea_solver": dict(brief.verification.requires_non_fea_solver),
        },
        "notes": dict(brief.notes),
        "eval_coverage": list(brief.eval_coverage),
        "multi_part": brief.multi_part,
    }
    doc.update(brief.extras)
    return docio.dumps(doc)


# Excluded-class matching: requirement types map onto loose analysis-class
# tokens so strings like "*HEAT TRANSFER" or "CFD" are recognized either way.
_RTYPE_CLASS_TOKENS = {
    "structural": ("static",),
    "vibration": ("frequency", "modal", "vibration"),
    "buckling": ("buckle", "buckling"),
    "thermal": ("heat transfer", "thermal"),
    "fluid": ("cfd", "fluid"),
    "radiation": ("radiation",),
}


def _class_matches_rtype(class_name: str, rtype: str) -> bool:
    normalized = class_name.lower().replace("*", "").replace("_", " ").strip()
    return any(tok in normalized for tok in _RTYPE_CLASS_TOKENS.get(rtype, ()))


def validate_brief(brief: Brief) -> list[Diagnostic]:
    """Cross-field consistency checks. Returns diagnostics, never raises."""
    diags: list[Diagnostic] = []
    legal_scopes = set(brief.load_case_ids()) | BUILTIN_SCOPES

    for i, req in enumerate(brief.requirements):
        where = f"requirements.pass_fail_criteria[{i}]({req.id})"
        for tok in req.applies_to:
            if tok not in legal_scopes:
                diags.append(Diagnostic("error", f"{where}.applies_to", f"unresolvable scope token {tok!r}"))
        if req.operator == "EQ" and req.tolerance is None:
            diags.append(Diagnostic("error", f"{where}.tolerance", "EQ requirement without a tolerance"))
        if req.unit not in KNOWN_UNITS:
            diags.append(Diagnostic("info", f"{where}.limit", f"unrecognized unit suffix {req.unit!r} carried opaquely"))
        flags = brief.verification.requires_non_fea_solver
        flagged = bool(flags.get(req.metric) or flags.get(req.rtype))
        if req.not_evaluable:
            diags.append(Diagnostic("info", where, "not evaluable by this harness (requires a non-FEA solver)"))
        elif not flagged:
            for cls in brief.verification.excluded_classes:
                if _class_matches_rtype(cls, req.rtype):
                    diags.append(Diagnostic(
                        "error", where,
                        f"references excluded analysis class {cls!r} without a requires_non_fea_solver flag",
                    ))
    return diags
