"""Deterministic engineering-validation harness for CAD artifacts.

Subpackages by responsibility: brief and blueprint parsing (briefs,
blueprints), mesh ingestion and measurement (mesh), the reference metric suite
(metrics), the built-in truss solver (fea), requirement binding and grading
(checker), feedback documents (feedback), the 21-view renderer (views), the
bounded agent retry loop (loop), bundled fixtures (fixtures), and the CLI.
"""

from .briefs import Brief, Requirement, parse_brief, serialize_brief, validate_brief
from .blueprints import (BlueprintDoc, check_envelopes, diff_blueprints, apply_diff,
                         extract_claims, parse_blueprint, serialize_blueprint)
from .checker import CaseVerdict, MetricNamespace, Verdict, build_namespace, evaluate, grade_suite
from .fea import AnalysisModel, parse_model, run_analysis
from .loop import AgentAdapter, LoopConfig, evaluate_submission, run_case, run_suite
from .mesh import TriMesh, load_mesh, mass_properties, sample_surface, validity, voxelize
from .metrics import MetricConfig, box_iou, chamfer, f_score, invalidity_ratio, mesh_metrics, voxel_iou
from .views import RenderJob, render, render_manifest_for_agent, view_set

__version__ = "0.1.0"

__all__ = [
    "AgentAdapter", "AnalysisModel", "BlueprintDoc", "Brief", "CaseVerdict", "LoopConfig",
    "MetricConfig", "MetricNamespace", "RenderJob", "Requirement", "TriMesh", "Verdict",
    "apply_diff", "box_iou", "build_namespace", "chamfer", "check_envelopes", "diff_blueprints",
    "evaluate", "evaluate_submission", "extract_claims", "f_score", "grade_suite",
    "invalidity_ratio", "load_mesh", "mass_properties", "mesh_metrics", "parse_blueprint",
    "parse_brief", "parse_model", "render", "render_manifest_for_agent", "run_analysis",
    "run_case", "run_suite", "sample_surface", "serialize_blueprint", "serialize_brief",
    "validate_brief", "validity", "view_set", "voxel_iou", "voxelize",
]
