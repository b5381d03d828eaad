"""Single executable exposing the harness as subcommands.

Exit code contract: 0 success, 1 evaluated-with-failures, 2 usage or input
parse error, 3 internal error. Human-readable tables go to stdout; machine
documents go to files, never interleaved.
"""

from __future__ import annotations

import argparse
import os
import shlex
import sys
from pathlib import Path

from . import docio, fea, views
from .blueprints import check_envelopes, extract_claims, parse_blueprint
from .briefs import parse_brief, validate_brief
from .checker import case_verdict_from_doc, grade_suite
from .docio import errors_of
from .errors import EmptyMesh, GrammarError, HarnessError, ParseError, SchemaError
from .feedback import FEEDBACK_NAME, render_feedback, serialize_feedback, serialize_solver_report
from .loop import (AgentAdapter, AttemptRecord, LoopConfig, SCALING_CSV, build_scaling_log,
                   evaluate_submission, run_suite)
from .mesh import load_mesh, merge_meshes
from .metrics import MetricConfig, mesh_metrics

EXIT_OK = 0
EXIT_FAILURES = 1
EXIT_USAGE = 2
EXIT_INTERNAL = 3


def _env_seed() -> int:
    try:
        return int(os.environ.get("HEPH_SEED", "0"))
    except ValueError:
        return 0


def _cmd_validate_brief(args: argparse.Namespace) -> int:
    brief = parse_brief(args.path)
    diags = validate_brief(brief)
    for d in diags:
        print(d)
    if errors_of(diags):
        return EXIT_FAILURES
    print(f"ok: {brief.id} ({len(brief.requirements)} requirements)")
    return EXIT_OK


def _cmd_validate_blueprint(args: argparse.Namespace) -> int:
    bp = parse_blueprint(args.path)
    diags = check_envelopes(bp)
    if args.brief:
        binding = extract_claims(bp, parse_brief(args.brief))
        diags = diags + binding.diagnostics
    for d in diags:
        print(d)
    if errors_of(diags):
        return EXIT_FAILURES
    print(f"ok: {len(bp.parts)} parts, {len(bp.all_claims())} claims")
    return EXIT_OK


def _find_brief(workdir: Path) -> Path:
    for candidate in (workdir / "brief.v1", workdir / "input" / "brief.v1"):
        if candidate.is_file():
            return candidate
    raise ParseError(f"no brief.v1 under {workdir}")


def _cmd_grade(args: argparse.Namespace) -> int:
    workdir = Path(args.workdir)
    brief = parse_brief(_find_brief(workdir))
    output_dir = workdir / "output" if (workdir / "output").is_dir() else workdir
    outcome = evaluate_submission(brief, output_dir, timeout_s=args.timeout)

    eval_dir = Path(args.out) if args.out else workdir / "eval"
    eval_dir.mkdir(parents=True, exist_ok=True)
    docio.dump_path(eval_dir / "case_verdict.v1", outcome.verdict.to_doc())
    if outcome.solver_report is not None:
        (eval_dir / "solver_report.v1").write_text(
            serialize_solver_report(outcome.solver_report), encoding="utf-8")
    report = render_feedback(outcome.verdict, args.level, attempt=1,
                             analysis_failures=outcome.analysis_failures)
    (eval_dir / FEEDBACK_NAME).write_text(serialize_feedback(report), encoding="utf-8")

    for v in outcome.verdict.verdicts:
        detail = ""
        if v.margin is not None:
            detail = f" margin={v.margin:+.6g} ({v.worst_scope or 'n/a'})"
        elif v.binding_note:
            detail = f" [{v.binding_note}]"
        print(f"{v.requirement_id:>8}  {v.status:<13}{detail}")
    print(f"strict_pass={outcome.verdict.strict_pass} "
          f"req_pass_fraction={outcome.verdict.req_pass_fraction:.4f}")
    return EXIT_OK if outcome.verdict.strict_pass else EXIT_FAILURES


def _cmd_metrics(args: argparse.Namespace) -> int:
    generated = load_mesh(args.generated)
    reference = load_mesh(args.reference)
    config = MetricConfig(sample_n=args.sample_n, tau_fraction=args.tau_fraction,
                          voxel_res=args.voxel_res, seed=args.seed,
                          normalize=not args.no_normalize)
    result = mesh_metrics(generated, reference, config)
    doc = result.to_doc()
    if args.out:
        docio.dump_path(args.out, doc)
    for key in ("f_score", "voxel_iou", "box_iou"):
        print(f"{key}: {doc[key]:.6f}")
    chamfer_key = "chamfer_sq_normalized" if config.normalize else "chamfer_sq_mm2"
    print(f"{chamfer_key}: {doc[chamfer_key]}")
    print(f"valid_solid: {doc['generated_valid_solid']}")
    return EXIT_OK


def _cmd_render_views(args: argparse.Namespace) -> int:
    meshes = [load_mesh(p) for p in args.meshes]
    mesh = merge_meshes(meshes) if len(meshes) > 1 else meshes[0]
    width, height = (int(v) for v in args.size.lower().split("x"))
    job = views.RenderJob(mesh=mesh, image_size=(width, height),
                          distance_factor=args.distance_factor, xray_alpha=args.alpha)
    manifest = views.render_manifest_for_agent(job, args.out, image_format=args.format)
    print(f"wrote {len(job.views)} views under {Path(args.out)} (manifest {manifest.name})")
    return EXIT_OK


def _cmd_solve(args: argparse.Namespace) -> int:
    model = fea.parse_model(args.model)
    requests: list[fea.AnalysisRequest] = []
    for lc in args.static or []:
        requests.append(("static", lc))
    for lc in args.buckle or []:
        requests.append(("buckle", lc))
    if args.modal:
        requests.append(("modal", None))
    if not requests:
        requests = [("static", lc) for lc in model.load_cases]
    report = fea.run_analysis(model, requests)
    out = Path(args.out) if args.out else Path("solver_report.v1")
    out.write_text(serialize_solver_report(report), encoding="utf-8")
    print(f"status: {report['status']} ({len(report.get('cases', {}))} load cases) -> {out}")
    return EXIT_OK if report["status"] == "ok" else EXIT_FAILURES


def _collect_briefs(paths: list[str], subset: str) -> list:
    briefs = []
    for raw in paths:
        p = Path(raw)
        candidates = sorted(p.rglob("brief.v1")) if p.is_dir() else [p]
        for c in candidates:
            briefs.append(parse_brief(c))
    if subset == "single":
        briefs = [b for b in briefs if not b.multi_part]
    elif subset == "multi":
        briefs = [b for b in briefs if b.multi_part]
    if not briefs:
        raise ParseError("no briefs matched the given paths and --set filter")
    return briefs


def _cmd_run_loop(args: argparse.Namespace) -> int:
    briefs = _collect_briefs(args.briefs, args.set)
    cfg = LoopConfig(
        max_attempts=args.max_attempts,
        jobs=args.jobs,
        timeout_model=args.timeout_model,
        timeout_eval=args.timeout_eval,
        feedback_mode=args.feedback_mode,
        require_rich_view=args.require_rich_view,
        rich_view_from=args.rich_view_from,
        deep_from=args.deep_from,
        early_stop=not args.no_early_stop,
        seed=args.seed,
    )
    agent = AgentAdapter(command=shlex.split(args.agent_cmd))
    grade, _log = run_suite(briefs, agent, cfg, args.out_root)
    print(grade.render_table())
    print(f"outputs under {args.out_root} (scope: {args.scope})")
    return EXIT_OK if grade.overall.strict_count == grade.overall.cases else EXIT_FAILURES


def _cmd_bench_report(args: argparse.Namespace) -> int:
    run_dir = Path(args.run_dir)
    case_records: dict[str, list[AttemptRecord]] = {}
    groups: dict[str, str] = {}
    for case_dir in sorted(p for p in run_dir.iterdir() if p.is_dir()):
        records = []
        for attempt_dir in sorted(case_dir.glob("attempt_*")):
            record_doc = attempt_dir / "eval" / "attempt_record.v1"
            if not record_doc.is_file():
                continue
            doc = docio.load_path(record_doc)
            verdict_doc = attempt_dir / "eval" / "case_verdict.v1"
            verdict = case_verdict_from_doc(docio.load_path(verdict_doc)) if verdict_doc.is_file() else None
            records.append(AttemptRecord(
                attempt=int(doc.get("attempt", len(records) + 1)),
                workspace=attempt_dir,
                agent_wall_s=float(doc.get("agent_wall_s", 0.0)),
                eval_wall_s=float(doc.get("eval_wall_s", 0.0)),
                verdict=verdict,
                termination=str(doc.get("termination", "submitted")),
            ))
        if not records:
            continue
        case_records[case_dir.name] = records
        brief_file = case_dir / "attempt_01" / "input" / "brief.v1"
        if brief_file.is_file():
            try:
                groups[case_dir.name] = "multi" if parse_brief(brief_file).multi_part else "single"
            except HarnessError:
                groups[case_dir.name] = "single"
    if not case_records:
        raise ParseError(f"no attempt records under {run_dir}")

    finals = []
    for case_id, records in sorted(case_records.items()):
        with_verdict = [r for r in records if r.verdict is not None]
        if not with_verdict:
            continue
        best = max(with_verdict, key=lambda r: (r.verdict.req_pass_fraction, -r.attempt))
        finals.append(best.verdict)
    grade = grade_suite(finals, groups)
    log = build_scaling_log(case_records)

    out_root = Path(args.out_root) if args.out_root else run_dir
    out_root.mkdir(parents=True, exist_ok=True)
    log.write_csv(out_root / SCALING_CSV)
    docio.dump_path(out_root / "suite_grade.v1", grade.to_doc())
    print(grade.render_table())
    print("per-attempt rollup:")
    for row in log.rollup:
        print(f"  attempt {row['attempt']}: mean req pass {row['mean_req_pass']:.1%}, "
              f"strict {row['strict_count']}/{row['cases']}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="heph",
        description="Engineering-validation harness for CAD artifacts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate-brief", help="parse and lint a brief file")
    p.add_argument("path")
    p.set_defaults(func=_cmd_validate_brief)

    p = sub.add_parser("validate-blueprint", help="parse and lint a schema-v4 blueprint")
    p.add_argument("path")
    p.add_argument("--brief", help="bind acceptance claims against this brief")
    p.set_defaults(func=_cmd_validate_blueprint)

    p = sub.add_parser("grade", help="evaluate one case workdir (brief + artifact)")
    p.add_argument("workdir")
    p.add_argument("--out", help="directory for verdict/feedback docs (default <workdir>/eval)")
    p.add_argument("--level", choices=["basic", "deep"], default="deep")
    p.add_argument("--timeout", type=float, default=900.0)
    p.set_defaults(func=_cmd_grade)

    p = sub.add_parser("metrics", help="compare a generated mesh against a reference mesh")
    p.add_argument("generated")
    p.add_argument("reference")
    p.add_argument("--sample-n", type=int, default=8192)
    p.add_argument("--tau-fraction", type=float, default=0.01)
    p.add_argument("--voxel-res", type=int, default=64)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.add_argument("--no-normalize", action="store_true")
    p.add_argument("--out", help="write the metric document here")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("render-views", help="render the 21-view inspection bundle")
    p.add_argument("meshes", nargs="+")
    p.add_argument("--out", required=True)
    p.add_argument("--size", default="960x720")
    p.add_argument("--format", choices=["ppm", "png"], default="ppm")
    p.add_argument("--distance-factor", type=float, default=views.DEFAULT_DISTANCE_FACTOR)
    p.add_argument("--alpha", type=float, default=views.DEFAULT_XRAY_ALPHA)
    p.set_defaults(func=_cmd_render_views)

    p = sub.add_parser("solve", help="run the built-in truss solver on a model file")
    p.add_argument("model")
    p.add_argument("--static", action="append", metavar="LC")
    p.add_argument("--buckle", action="append", metavar="LC")
    p.add_argument("--modal", action="store_true")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("run-loop", help="drive the bounded agent retry loop")
    p.add_argument("--briefs", nargs="+", required=True, help="brief files or directories")
    p.add_argument("--agent-cmd", required=True, help="agent command line (workspace contract)")
    p.add_argument("--set", choices=["all", "single", "multi"], default="all")
    p.add_argument("--scope", default="curated")
    p.add_argument("--max-attempts", type=int, default=10, choices=range(1, 16), metavar="1..15")
    p.add_argument("--jobs", type=int, default=8)
    p.add_argument("--timeout-model", type=float, default=2400.0)
    p.add_argument("--timeout-eval", type=float, default=900.0)
    p.add_argument("--feedback-mode", choices=["basic", "deep-feedback"], default="deep-feedback")
    p.add_argument("--require-rich-view", action="store_true")
    p.add_argument("--rich-view-from", type=int, default=2)
    p.add_argument("--deep-from", type=int, default=7)
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--out-root", required=True)
    p.add_argument("--seed", type=int, default=_env_seed())
    p.set_defaults(func=_cmd_run_loop)

    p = sub.add_parser("bench-report", help="aggregate stored verdicts into suite tables")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out-root")
    p.set_defaults(func=_cmd_bench_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    try:
        return args.func(args)
    except (ParseError, SchemaError, GrammarError, EmptyMesh) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except HarnessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURES
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
