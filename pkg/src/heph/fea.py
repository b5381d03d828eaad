"""Linear-elastic 3D pin-jointed truss solver.

Supplies the solver-derived quantities the requirement checker consumes:
static member stress and nodal displacement, per-member Euler buckling load
factors, and the first natural frequency from a lumped-mass eigenproblem.
Units are mm / N / MPa / kg throughout; the kg-vs-mm mismatch enters only in
the frequency conversion (omega^2 = 1000 * K/M for K in N/mm, M in kg).

Members carry axial stiffness only (EA/L along the member axis). The reported
von Mises value is |axial stress|, which is exact for this element type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

import numpy as np
import scipy.linalg

from . import docio
from .errors import NoConvergence, SchemaError, SingularSystem, UnknownLoadCase

GRAVITY_M_S2 = 9.80665
DOF_CAP = 3000
MIN_MEMBER_LENGTH = 1e-6  # mm
ZERO_STIFFNESS_RTOL = 1e-12

AXIS_INDEX = {"x": 0, "y": 1, "z": 2}


@dataclass
class Material:
    e_mpa: float
    density_kg_m3: float
    yield_mpa: float = 0.0


@dataclass
class Member:
    i: int
    j: int
    area_mm2: float
    i_min_mm4: float
    material: Material


@dataclass
class Support:
    node: int
    fixed_dofs: tuple[str, ...]


@dataclass
class LoadCase:
    id: str
    loads: list[dict[str, Any]] = field(default_factory=list)
    gravity_g: tuple[float, float, float] | None = None
    description: str = ""


@dataclass
class AnalysisModel:
    nodes: np.ndarray  # (N, 3) mm
    members: list[Member]
    supports: list[Support]
    node_sets: dict[str, list[int]] = field(default_factory=dict)
    load_cases: dict[str, LoadCase] = field(default_factory=dict)
    name: str = "model"

    @property
    def ndof(self) -> int:
        return 3 * len(self.nodes)

    def member_length(self, m: Member) -> float:
        return float(np.linalg.norm(self.nodes[m.j] - self.nodes[m.i]))

    def lumped_node_masses(self) -> np.ndarray:
        """kg per node: half of each adjacent member's mass to each end."""
        masses = np.zeros(len(self.nodes))
        for m in self.members:
            half = 0.5 * m.material.density_kg_m3 * m.area_mm2 * self.member_length(m) * 1e-9
            masses[m.i] += half
            masses[m.j] += half
        return masses


@dataclass
class StaticCase:
    lc: str
    displacements: np.ndarray  # (N, 3) mm
    axial_forces: np.ndarray  # (M,) N, tension positive
    stresses: np.ndarray  # (M,) MPa
    reactions: np.ndarray  # (N, 3) N, nonzero only at supported dofs
    applied: np.ndarray  # (N, 3) N
    equilibrium_residual: float  # relative


@dataclass
class BucklingCase:
    lc: str
    member_load_factors: dict[int, float]  # member index -> LF, compressive only
    first_mode_load_factor: float  # +inf when nothing is compressive


def _parse_material(raw: Any, where: str) -> Material:
    raw = docio.expect_map(raw, where)
    e = docio.expect_finite(raw.get("E_MPa", raw.get("E")), f"{where}.E_MPa")
    if e <= 0:
        raise SchemaError(f"{where}.E_MPa", "modulus must be positive")
    density = docio.expect_finite(raw.get("density_kg_m3", raw.get("density", 0.0)), f"{where}.density_kg_m3")
    return Material(e_mpa=e, density_kg_m3=density,
                    yield_mpa=float(raw.get("yield_MPa", raw.get("yield", 0.0)) or 0.0))


def parse_model_doc(doc: Any, where: str = "model") -> AnalysisModel:
    doc = docio.expect_map(doc, where)
    nodes_raw = docio.expect_list(doc.get("nodes"), f"{where}.nodes")
    nodes = np.zeros((len(nodes_raw), 3))
    for i, entry in enumerate(nodes_raw):
        entry = docio.expect_list(entry, f"{where}.nodes[{i}]")
        if len(entry) != 3:
            raise SchemaError(f"{where}.nodes[{i}]", "expected [x, y, z]")
        nodes[i] = [docio.expect_finite(v, f"{where}.nodes[{i}]") for v in entry]
    if 3 * len(nodes) > DOF_CAP:
        raise SchemaError(f"{where}.nodes", f"{3 * len(nodes)} dofs exceeds the dense-solver cap of {DOF_CAP}")

    default_material = None
    if "material" in doc:
        default_material = _parse_material(doc["material"], f"{where}.material")

    members: list[Member] = []
    for k, entry in enumerate(docio.expect_list(doc.get("members"), f"{where}.members")):
        entry = docio.expect_map(entry, f"{where}.members[{k}]")
        i = int(docio.expect_finite(entry.get("i"), f"{where}.members[{k}].i"))
        j = int(docio.expect_finite(entry.get("j"), f"{where}.members[{k}].j"))
        if not (0 <= i < len(nodes) and 0 <= j < len(nodes)):
            raise SchemaError(f"{where}.members[{k}]", "node index out of range")
        area = docio.expect_finite(entry.get("area_mm2", entry.get("area")), f"{where}.members[{k}].area_mm2")
        if area <= 0:
            raise SchemaError(f"{where}.members[{k}].area_mm2", "area must be positive")
        i_min = float(entry.get("i_min_mm4", entry.get("I_min", 0.0)) or 0.0)
        mat = _parse_material(entry["material"], f"{where}.members[{k}].material") if "material" in entry else default_material
        if mat is None:
            raise SchemaError(f"{where}.members[{k}].material", "no member or model material given")
        member = Member(i=i, j=j, area_mm2=area, i_min_mm4=i_min, material=mat)
        members.append(member)
    model = AnalysisModel(nodes=nodes, members=members, supports=[], name=str(doc.get("name", "model")))
    for k, m in enumerate(members):
        if model.member_length(m) <= MIN_MEMBER_LENGTH:
            raise SchemaError(f"{where}.members[{k}]", "member length below 1e-6 mm")

    for s, entry in enumerate(docio.expect_list(doc.get("supports"), f"{where}.supports")):
        entry = docio.expect_map(entry, f"{where}.supports[{s}]")
        node = int(docio.expect_finite(entry.get("node"), f"{where}.supports[{s}].node"))
        if not 0 <= node < len(nodes):
            raise SchemaError(f"{where}.supports[{s}].node", "node index out of range")
        fixed = tuple(str(d) for d in docio.expect_list(entry.get("fixed"), f"{where}.supports[{s}].fixed"))
        for d in fixed:
            if d not in AXIS_INDEX:
                raise SchemaError(f"{where}.supports[{s}].fixed", f"unknown dof {d!r}")
        model.supports.append(Support(node=node, fixed_dofs=fixed))

    for name, ids in docio.expect_map(doc.get("node_sets", {}) or {}, f"{where}.node_sets").items():
        ids = [int(v) for v in docio.expect_list(ids, f"{where}.node_sets.{name}")]
        for v in ids:
            if not 0 <= v < len(nodes):
                raise SchemaError(f"{where}.node_sets.{name}", f"node {v} out of range")
        model.node_sets[str(name)] = ids

    for lc_id, entry in docio.expect_map(doc.get("load_cases", {}) or {}, f"{where}.load_cases").items():
        entry = docio.expect_map(entry, f"{where}.load_cases.{lc_id}")
        loads = []
        for li, load in enumerate(docio.expect_list(entry.get("loads", []), f"{where}.load_cases.{lc_id}.loads")):
            load = docio.expect_map(load, f"{where}.load_cases.{lc_id}.loads[{li}]")
            force = docio.expect_list(load.get("force"), f"{where}.load_cases.{lc_id}.loads[{li}].force")
            if len(force) != 3:
                raise SchemaError(f"{where}.load_cases.{lc_id}.loads[{li}].force", "expected [Fx, Fy, Fz]")
            vec = [docio.expect_finite(v, f"{where}.load_cases.{lc_id}.loads[{li}].force") for v in force]
            target: dict[str, Any]
            if "node" in load:
                target = {"node": int(load["node"]), "force": vec}
            elif "node_set" in load:
                name = str(load["node_set"])
                if name not in model.node_sets:
                    raise SchemaError(f"{where}.load_cases.{lc_id}.loads[{li}]", f"unknown node_set {name!r}")
                target = {"node_set": name, "force": vec}
            else:
                raise SchemaError(f"{where}.load_cases.{lc_id}.loads[{li}]", "load needs a node or node_set")
            loads.append(target)
        gravity = entry.get("gravity_g")
        if gravity is not None:
            gravity = tuple(docio.expect_finite(v, f"{where}.load_cases.{lc_id}.gravity_g") for v in gravity)
        model.load_cases[str(lc_id)] = LoadCase(
            id=str(lc_id), loads=loads, gravity_g=gravity,
            description=str(entry.get("description", "") or ""),
        )
    return model


def parse_model(path: str | Path) -> AnalysisModel:
    return parse_model_doc(docio.load_path(path))


def model_to_doc(model: AnalysisModel) -> dict[str, Any]:
    return {
        "schema": "analysis_model/1",
        "name": model.name,
        "nodes": [[float(v) for v in row] for row in model.nodes],
        "members": [
            {
                "i": m.i, "j": m.j, "area_mm2": m.area_mm2, "i_min_mm4": m.i_min_mm4,
                "material": {"E_MPa": m.material.e_mpa, "density_kg_m3": m.material.density_kg_m3,
                             "yield_MPa": m.material.yield_mpa},
            }
            for m in model.members
        ],
        "supports": [{"node": s.node, "fixed": list(s.fixed_dofs)} for s in model.supports],
        "node_sets": {k: list(v) for k, v in model.node_sets.items()},
        "load_cases": {
            lc.id: {
                "description": lc.description,
                "loads": lc.loads,
                **({"gravity_g": list(lc.gravity_g)} if lc.gravity_g else {}),
            }
            for lc in model.load_cases.values()
        },
    }


def _member_geometry(model: AnalysisModel) -> tuple[np.ndarray, np.ndarray]:
    """Unit direction vectors (i -> j) and lengths for every member."""
    vec = model.nodes[[m.j for m in model.members]] - model.nodes[[m.i for m in model.members]]
    lengths = np.linalg.norm(vec, axis=1)
    return vec / lengths[:, None], lengths


def _assemble_stiffness(model: AnalysisModel) -> np.ndarray:
    n = model.ndof
    K = np.zeros((n, n))
    dirs, lengths = _member_geometry(model)
    for idx, m in enumerate(model.members):
        k = m.material.e_mpa * m.area_mm2 / lengths[idx]  # N/mm
        u = dirs[idx]
        block = k * np.outer(u, u)
        di = slice(3 * m.i, 3 * m.i + 3)
        dj = slice(3 * m.j, 3 * m.j + 3)
        K[di, di] += block
        K[dj, dj] += block
        K[di, dj] -= block
        K[dj, di] -= block
    return K


def _fixed_dof_indices(model: AnalysisModel) -> np.ndarray:
    fixed = set()
    for s in model.supports:
        for d in s.fixed_dofs:
            fixed.add(3 * s.node + AXIS_INDEX[d])
    return np.array(sorted(fixed), dtype=int)


def _load_vector(model: AnalysisModel, lc: LoadCase) -> np.ndarray:
    f = np.zeros(model.ndof)
    for load in lc.loads:
        vec = np.asarray(load["force"], dtype=float)
        if "node" in load:
            targets = [load["node"]]
        else:
            targets = model.node_sets[load["node_set"]]
        for node in targets:
            f[3 * node:3 * node + 3] += vec
    if lc.gravity_g is not None:
        masses = model.lumped_node_masses()
        g = np.asarray(lc.gravity_g, dtype=float) * GRAVITY_M_S2  # m/s^2 -> N per kg
        f += np.outer(masses, g).ravel()
    return f


@dataclass
class _ReducedSystem:
    free: np.ndarray  # free dof indices
    K: np.ndarray  # full stiffness
    cho: Any = None  # cho_factor of K[free][:, free] when positive definite
    # semidefinite fallback: spectral data of K_ff
    eig_vals: np.ndarray | None = None
    eig_vecs: np.ndarray | None = None
    null_mask: np.ndarray | None = None

    @property
    def positive_definite(self) -> bool:
        return self.cho is not None

    def solve_free(self, f_free: np.ndarray) -> np.ndarray:
        if self.cho is not None:
            return scipy.linalg.cho_solve(self.cho, f_free)
        # Pin-jointed models legitimately carry zero-energy modes (a lone
        # bar's lateral tip dofs, the swing of a split member's midpoint).
        # Those are fine as long as the load does not excite them; then the
        # minimum-norm solution on the positive subspace is the physical one.
        null_load = self.eig_vecs[:, self.null_mask].T @ f_free
        scale = max(float(np.abs(f_free).max()), 1.0)
        if np.any(np.abs(null_load) > 1e-8 * scale):
            raise SingularSystem("load excites a zero-stiffness mechanism or rigid mode",
                                 mode=self.eig_vecs[:, self.null_mask][:, 0])
        pos = ~self.null_mask
        coeff = (self.eig_vecs[:, pos].T @ f_free) / self.eig_vals[pos]
        return self.eig_vecs[:, pos] @ coeff


def _reduce(model: AnalysisModel) -> _ReducedSystem:
    K = _assemble_stiffness(model)
    fixed = _fixed_dof_indices(model)
    if fixed.size == 0:
        raise SingularSystem("no supports: all six rigid-body modes are free")
    free = np.setdiff1d(np.arange(model.ndof), fixed)
    if free.size == 0:
        raise SingularSystem("every dof is constrained")

    K_ff = K[np.ix_(free, free)]
    try:
        cho = scipy.linalg.cho_factor(K_ff, lower=True)
        return _ReducedSystem(free=free, K=K, cho=cho)
    except np.linalg.LinAlgError:  # scipy re-exports numpy's LinAlgError
        vals, vecs = np.linalg.eigh(K_ff)
        tol = max(float(vals.max()), 1.0) * ZERO_STIFFNESS_RTOL
        null_mask = vals < tol
        if null_mask.all():
            raise SingularSystem("model has no stiffness")
        return _ReducedSystem(free=free, K=K, eig_vals=vals, eig_vecs=vecs, null_mask=null_mask)


def assemble_and_solve_static(model: AnalysisModel, lc_id: str,
                              reduced: _ReducedSystem | None = None) -> StaticCase:
    """Direct-stiffness solve of one load case."""
    if lc_id not in model.load_cases:
        raise UnknownLoadCase(f"load case {lc_id!r} not declared")
    sysm = reduced if reduced is not None else _reduce(model)
    f = _load_vector(model, model.load_cases[lc_id])

    u = np.zeros(model.ndof)
    u[sysm.free] = sysm.solve_free(f[sysm.free])

    dirs, lengths = _member_geometry(model)
    axial = np.zeros(len(model.members))
    for idx, m in enumerate(model.members):
        du = u[3 * m.j:3 * m.j + 3] - u[3 * m.i:3 * m.i + 3]
        axial[idx] = m.material.e_mpa * m.area_mm2 / lengths[idx] * float(du @ dirs[idx])
    stresses = axial / np.array([m.area_mm2 for m in model.members])

    residual_all = sysm.K @ u - f
    fixed = _fixed_dof_indices(model)
    reactions = np.zeros(model.ndof)
    reactions[fixed] = residual_all[fixed]

    total = reactions.reshape(-1, 3).sum(axis=0) + f.reshape(-1, 3).sum(axis=0)
    scale = max(float(np.abs(f).sum()), 1.0)
    return StaticCase(
        lc=lc_id,
        displacements=u.reshape(-1, 3),
        axial_forces=axial,
        stresses=stresses,
        reactions=reactions.reshape(-1, 3),
        applied=f.reshape(-1, 3),
        equilibrium_residual=float(np.linalg.norm(total)) / scale,
    )


def buckling_factors(model: AnalysisModel, static: StaticCase) -> BucklingCase:
    """Euler member buckling against the static axial forces.

    Pinned-pinned effective length (K = 1) throughout: P_cr = pi^2 E I / L^2.
    """
    _, lengths = _member_geometry(model)
    factors: dict[int, float] = {}
    for idx, m in enumerate(model.members):
        force = static.axial_forces[idx]
        if force >= 0 or m.i_min_mm4 <= 0:
            continue
        p_cr = math.pi ** 2 * m.material.e_mpa * m.i_min_mm4 / lengths[idx] ** 2
        factors[idx] = p_cr / abs(float(force))
    first = min(factors.values()) if factors else math.inf
    return BucklingCase(lc=static.lc, member_load_factors=factors, first_mode_load_factor=first)


def first_frequency(model: AnalysisModel, reduced: _ReducedSystem | None = None,
                    max_iter: int = 500, rtol: float = 1e-9) -> float:
    """Smallest natural frequency in Hz by inverse iteration on (K, M)."""
    sysm = reduced if reduced is not None else _reduce(model)
    if not sysm.positive_definite:
        raise SingularSystem("zero-stiffness modes present; constrain them for modal analysis")
    masses = model.lumped_node_masses()
    if masses.sum() <= 0:
        raise SchemaError("model", "total mass is zero; set member material densities")
    m_diag = np.repeat(masses, 3)[sysm.free]
    if np.any(m_diag <= 0):
        raise SchemaError("model", "a free dof carries zero mass")

    rng = np.random.Generator(np.random.PCG64(0xFEA))
    x = rng.standard_normal(len(sysm.free))
    x /= math.sqrt(float(x @ (m_diag * x)))
    rho_prev = math.inf
    for _ in range(max_iter):
        y = scipy.linalg.cho_solve(sysm.cho, m_diag * x)
        norm = math.sqrt(float(y @ (m_diag * y)))
        x = y / norm
        kx = sysm.K[np.ix_(sysm.free, sysm.free)] @ x
        rho = float(x @ kx) / float(x @ (m_diag * x))
        if rho_prev != math.inf and abs(rho - rho_prev) <= rtol * abs(rho):
            # K in N/mm over masses in kg: omega^2 = 1000 * rho in 1/s^2
            return math.sqrt(1000.0 * rho) / (2.0 * math.pi)
        rho_prev = rho
    raise NoConvergence(f"inverse iteration did not converge in {max_iter} iterations")


AnalysisRequest = tuple[str, str | None]  # ("static"|"buckle"|"modal", lc or None)


def run_analysis(model: AnalysisModel, requested: Iterable[AnalysisRequest]) -> dict[str, Any]:
    """Run the requested analyses and emit a solver_report/1 document.

    Analysis failures are data: they land in the report's errors list and the
    status flips to solver_error, but a report is always produced.
    """
    requests = list(requested)
    static_lcs: list[str] = []
    buckle_lcs: list[str] = []
    want_modal = False
    for kind, lc in requests:
        if kind == "static" and lc is not None and lc not in static_lcs:
            static_lcs.append(lc)
        elif kind == "buckle" and lc is not None and lc not in buckle_lcs:
            buckle_lcs.append(lc)
        elif kind == "modal":
            want_modal = True
    # Buckling needs the static axial forces of its load case.
    for lc in buckle_lcs:
        if lc not in static_lcs:
            static_lcs.append(lc)

    cases: dict[str, Any] = {}
    buckling: dict[str, Any] = {}
    modal: dict[str, Any] = {}
    errors: list[dict[str, str]] = []

    reduced: _ReducedSystem | None = None
    try:
        reduced = _reduce(model)
    except SingularSystem as exc:
        errors.append({"analysis_class": "static", "message": f"singular: {exc}"})

    statics: dict[str, StaticCase] = {}
    if reduced is not None:
        for lc in static_lcs:
            try:
                statics[lc] = assemble_and_solve_static(model, lc, reduced)
            except (SingularSystem, UnknownLoadCase) as exc:
                errors.append({"analysis_class": "static", "message": f"{lc}: {exc}"})
        for lc, sol in statics.items():
            metrics: dict[str, Any] = {}
            metrics["max_von_mises_stress"] = {
                "value": float(np.abs(sol.stresses).max()) if len(sol.stresses) else 0.0,
                "unit": "MPa", "analysis_class": "static",
            }
            disp_mag = np.linalg.norm(sol.displacements, axis=1)
            metrics["max_displacement"] = {
                "value": float(disp_mag.max()), "unit": "mm", "analysis_class": "static",
            }
            for set_name, ids in model.node_sets.items():
                metrics[f"max_displacement_at_{set_name}"] = {
                    "value": float(disp_mag[ids].max()) if ids else 0.0,
                    "unit": "mm", "analysis_class": "static",
                }
            total_reaction = sol.reactions.sum(axis=0)
            metrics["total_reaction_force"] = {
                "value": float(np.linalg.norm(total_reaction)), "unit": "N", "analysis_class": "static",
            }
            metrics["equilibrium_residual"] = {
                "value": sol.equilibrium_residual, "unit": "", "analysis_class": "static",
            }
            cases[lc] = metrics

        for lc in buckle_lcs:
            if lc not in statics:
                continue  # the static failure is already recorded
            sol = buckling_factors(model, statics[lc])
            entry: dict[str, Any] = {
                "load_factors": sorted(float(v) for v in sol.member_load_factors.values()),
                "analysis_class": "buckle",
            }
            if not sol.member_load_factors:
                entry["no_compressive_member"] = True
            buckling[lc] = entry

        if want_modal:
            try:
                freq = first_frequency(model, reduced)
                modal = {"frequencies_hz": [freq], "analysis_class": "frequency"}
            except (SingularSystem, NoConvergence, SchemaError) as exc:
                errors.append({"analysis_class": "frequency", "message": str(exc)})
    else:
        pending = {"static"} if static_lcs else set()
        if buckle_lcs:
            pending.add("buckle")
        if want_modal:
            pending.add("frequency")
        for cls in sorted(pending - {"static"}):
            errors.append({"analysis_class": cls, "message": "skipped: stiffness matrix singular"})

    status = "solver_error" if errors else "ok"
    report: dict[str, Any] = {"schema": "solver_report/1", "status": status, "cases": cases}
    if buckling:
        report["buckling"] = buckling
    if modal:
        report["modal"] = modal
    if errors:
        report["errors"] = errors
    return report
