"""Bounded multi-attempt retry loop around an external design agent.

The agent is any command obeying the workspace contract: the controller
populates ``input/`` (brief, attempt counter, blueprint template, scheduled
feedback and view bundle), runs the command with the workspace as its working
directory under a wall-clock limit, and evaluates whatever lands in
``output/``. Every attempt's artifacts are retained immutably (hash manifest +
read-only bits), evaluation failures are data rather than crashes, and a
strict pass stops the loop early unless configured otherwise.
"""

from __future__ import annotations

import csv
import hashlib
import os
import shlex
import shutil
import signal
import subprocess
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable, Iterable

from . import docio, fea, views
from .artifact import Artifact, load_artifact
from .blueprints import ClaimBinding, check_envelopes, extract_claims
from .briefs import Brief, serialize_brief
from .checker import CaseVerdict, SuiteGrade, Verdict, build_namespace, evaluate, grade_suite
from .errors import AgentLaunchError, AmbiguousBinding, EmptyList, HarnessError
from .feedback import (FEEDBACK_NAME, INSPECTION_NAME, SOLVER_REPORT_NAME, FeedbackReport,
                       parse_inspection, redact_for_level, render_feedback, serialize_feedback,
                       serialize_solver_report)

ENV_SOLVER = "HEPH_SOLVER"
DEFAULT_ENV_ALLOWLIST = ("PATH", "HOME", "LANG", "LC_ALL", "PYTHONPATH", "TMPDIR")

BRIEF_NAME = "brief.v1"
ATTEMPT_NAME = "attempt.v1"
BLUEPRINT_TEMPLATE_NAME = "blueprint_template.v1"
ATTEMPT_RECORD_NAME = "attempt_record.v1"
CASE_VERDICT_NAME = "case_verdict.v1"
HASHES_NAME = "hashes.v1"
SCALING_CSV = "scaling_log.csv"

_BLUEPRINT_TEMPLATE = {
    "assembly_schema_version": 4,
    "metadata": {
        "brief_id": "",
        "units": "mm",
        "coordinate_system": {"x": "forward", "y": "right", "z": "up"},
        "material": {"name": "", "yield_strength_MPa": 0.0, "safety_factor": 1.5},
    },
    "parts": [],
}


@dataclass
class LoopConfig:
    max_attempts: int = 10
    jobs: int = 8
    timeout_model: float = 2400.0
    timeout_eval: float = 900.0
    feedback_mode: str = "deep-feedback"  # basic | deep-feedback
    require_rich_view: bool = False  # when set, a view-render failure fails the attempt
    rich_view_from: int = 2
    deep_from: int = 7
    early_stop: bool = True
    keep_best: bool = True
    image_size: tuple[int, int] = views.DEFAULT_IMAGE_SIZE
    seed: int = 0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")
        if self.timeout_model <= 0 or self.timeout_eval <= 0:
            raise ValueError("timeouts must be positive")
        if self.feedback_mode not in ("basic", "deep-feedback"):
            raise ValueError(f"unknown feedback mode {self.feedback_mode!r}")

    def schedule(self, attempt: int) -> dict[str, Any]:
        """Feedback plan for one attempt: view bundle presence and level."""
        rich = attempt >= self.rich_view_from
        level = "deep" if (attempt >= self.deep_from and self.feedback_mode == "deep-feedback") else "basic"
        return {"rich_view": rich, "level": level}


@dataclass
class AgentAdapter:
    """External-command contract for any design agent (LLM harness, script, stub)."""

    command: list[str]
    env_allowlist: tuple[str, ...] = DEFAULT_ENV_ALLOWLIST
    extra_env: dict[str, str] = field(default_factory=dict)

    def environment(self) -> dict[str, str]:
        env = {k: os.environ[k] for k in self.env_allowlist if k in os.environ}
        env.update(self.extra_env)
        return env

    def run(self, workspace: Path, timeout_s: float, log_dir: Path) -> tuple[str, float, int | None]:
        """Run the agent; returns (termination, wall_time_s, exit_code)."""
        log_dir.mkdir(parents=True, exist_ok=True)
        start = time.monotonic()
        try:
            with open(log_dir / "agent_stdout.txt", "wb") as out, \
                 open(log_dir / "agent_stderr.txt", "wb") as err:
                proc = subprocess.Popen(
                    self.command,
                    cwd=str(workspace),
                    env=self.environment(),
                    stdout=out,
                    stderr=err,
                    start_new_session=True,
                )
                try:
                    code = proc.wait(timeout=timeout_s)
                except subprocess.TimeoutExpired:
                    try:
                        os.killpg(proc.pid, signal.SIGKILL)
                    except (ProcessLookupError, PermissionError):
                        proc.kill()
                    proc.wait()
                    return "model_timeout", time.monotonic() - start, None
        except FileNotFoundError as exc:
            raise AgentLaunchError(f"agent command not found: {self.command[0]!r}: {exc}") from exc
        wall = time.monotonic() - start
        return ("submitted" if code == 0 else "agent_error"), wall, code


@dataclass
class AttemptRecord:
    attempt: int
    workspace: Path
    agent_wall_s: float
    eval_wall_s: float
    verdict: CaseVerdict | None
    termination: str
    artifact_hashes: dict[str, str] = field(default_factory=dict)
    feedback_deep: FeedbackReport | None = None

    def to_doc(self) -> dict[str, Any]:
        return {
            "schema": "attempt_record/1",
            "attempt": self.attempt,
            "agent_wall_s": self.agent_wall_s,
            "eval_wall_s": self.eval_wall_s,
            "termination": self.termination,
            "strict_pass": bool(self.verdict.strict_pass) if self.verdict else False,
            "req_pass_fraction": self.verdict.req_pass_fraction if self.verdict else 0.0,
            "artifact_hashes": dict(sorted(self.artifact_hashes.items())),
        }


class _EvalDeadline(Exception):
    pass


class _DeadlineClock:
    """Soft evaluation timeout: checked between pipeline stages."""

    def __init__(self, budget_s: float):
        self.start = time.monotonic()
        self.budget = budget_s

    def check(self) -> None:
        if time.monotonic() - self.start > self.budget:
            raise _EvalDeadline()

    def elapsed(self) -> float:
        return time.monotonic() - self.start


@dataclass
class EvalOutcome:
    verdict: CaseVerdict
    solver_report: dict[str, Any] | None
    artifact: Artifact | None
    analysis_failures: list[dict[str, str]]
    timed_out: bool = False


def _requested_analyses(brief: Brief) -> list[fea.AnalysisRequest]:
    lc_ids = set(brief.load_case_ids())
    requests: list[fea.AnalysisRequest] = []
    want_modal = False
    for req in brief.requirements:
        if req.not_evaluable:
            continue
        for scope in req.applies_to:
            if scope == "constrained_modal":
                want_modal = True
            elif scope in lc_ids:
                kind = "buckle" if req.rtype == "buckling" else "static"
                if (kind, scope) not in requests:
                    requests.append((kind, scope))
    if want_modal:
        requests.append(("modal", None))
    return requests


def _external_solver_report(model_path: Path, workdir: Path) -> dict[str, Any]:
    command = shlex.split(os.environ[ENV_SOLVER])
    report_path = workdir / "external_solver_report.v1"
    proc = subprocess.run(
        command + [str(model_path), str(report_path)],
        capture_output=True,
        timeout=600,
        check=False,
    )
    if proc.returncode != 0:
        raise HarnessError(f"external solver exited {proc.returncode}: {proc.stderr.decode(errors='replace')[:200]}")
    from .feedback import parse_solver_report

    return parse_solver_report(report_path)


def _unbound_fallback_verdict(brief: Brief, note: str) -> CaseVerdict:
    verdicts = []
    for req in brief.requirements:
        status = "not_evaluable" if req.not_evaluable else "unbound"
        verdicts.append(Verdict(
            requirement_id=req.id, status=status, metric=req.metric, operator=req.operator,
            limit=req.limit, unit=req.unit, binding_note=note,
        ))
    evaluable = [v for v in verdicts if v.status != "not_evaluable"]
    return CaseVerdict(
        case_id=brief.id,
        verdicts=verdicts,
        strict_pass=False,
        req_pass_fraction=0.0 if evaluable else 1.0,
        not_evaluable_count=len(verdicts) - len(evaluable),
    )


def evaluate_submission(brief: Brief, output_dir: Path, timeout_s: float = 900.0) -> EvalOutcome:
    """Full evaluation of one submission directory against a brief."""
    clock = _DeadlineClock(timeout_s)
    failures: list[dict[str, str]] = []
    try:
        artifact = load_artifact(output_dir)
        clock.check()
        for problem in artifact.problems:
            failures.append({"analysis_class": "artifact", "message": problem})
        if not artifact.manifest:
            verdict = _unbound_fallback_verdict(brief, "no parseable artifact manifest")
            return EvalOutcome(verdict=verdict, solver_report=None, artifact=artifact,
                               analysis_failures=failures)

        report: dict[str, Any] | None = None
        if artifact.solver_report_doc is not None:
            report = artifact.solver_report_doc
        elif artifact.model is not None:
            requests = _requested_analyses(brief)
            if os.environ.get(ENV_SOLVER):
                try:
                    model_path = output_dir / str(artifact.manifest.get("analysis_model"))
                    report = _external_solver_report(model_path, output_dir)
                except Exception as exc:  # external command: anything can happen
                    failures.append({"analysis_class": "static", "message": f"external solver failed: {exc}"})
            if report is None and requests:
                report = fea.run_analysis(artifact.model, requests)
        clock.check()

        claims: ClaimBinding | None = None
        if artifact.blueprint is not None:
            for diag in check_envelopes(artifact.blueprint):
                if diag.severity == "error":
                    failures.append({"analysis_class": "blueprint", "message": str(diag)})
            claims = extract_claims(artifact.blueprint, brief)
        clock.check()

        try:
            ns = build_namespace(artifact, report, claims)
        except AmbiguousBinding as exc:
            failures.append({"analysis_class": "binding", "message": str(exc)})
            verdict = _unbound_fallback_verdict(brief, f"ambiguous binding: {exc}")
            return EvalOutcome(verdict=verdict, solver_report=report, artifact=artifact,
                               analysis_failures=failures)
        for err in (report or {}).get("errors") or []:
            failures.append({"analysis_class": str(err.get("analysis_class", "")),
                             "message": str(err.get("message", ""))})
        verdict = evaluate(brief, ns, report)
        return EvalOutcome(verdict=verdict, solver_report=report, artifact=artifact,
                           analysis_failures=failures)
    except _EvalDeadline:
        verdict = _unbound_fallback_verdict(brief, "evaluation timed out")
        failures.append({"analysis_class": "harness", "message": "evaluation timed out"})
        return EvalOutcome(verdict=verdict, solver_report=None, artifact=None,
                           analysis_failures=failures, timed_out=True)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def hash_tree(root: Path) -> dict[str, str]:
    out = {}
    if root.exists():
        for p in sorted(root.rglob("*")):
            if p.is_file():
                out[str(p.relative_to(root))] = _sha256(p)
    return out


def _retain_immutable(workspace: Path) -> dict[str, str]:
    """Hash and write-protect everything in the attempt workspace."""
    hashes = {}
    for sub in ("input", "output", "eval"):
        tree = hash_tree(workspace / sub)
        hashes.update({f"{sub}/{k}": v for k, v in tree.items()})
    docio.dump_path(workspace / "eval" / HASHES_NAME, {"schema": "hashes/1", "files": hashes})
    for rel in hashes:
        try:
            os.chmod(workspace / rel, 0o444)
        except OSError:
            pass
    return hashes


def verify_retained_hashes(workspace: Path) -> list[str]:
    """Re-hash a retained attempt; returns the paths that changed."""
    doc = docio.load_path(workspace / "eval" / HASHES_NAME)
    stored = doc.get("files", {})
    return [rel for rel, digest in stored.items()
            if not (workspace / rel).is_file() or _sha256(workspace / rel) != digest]


def feedback_for_attempt(attempt: int, cfg: LoopConfig,
                         prior: AttemptRecord | None) -> dict[str, Any]:
    """Scheduled inputs for one attempt: feedback level and view-bundle flag."""
    plan = cfg.schedule(attempt)
    report = None
    if attempt >= 2 and prior is not None and prior.feedback_deep is not None:
        report = redact_for_level(prior.feedback_deep, plan["level"])
        report.attempt = attempt
    return {"rich_view": plan["rich_view"], "level": plan["level"], "feedback": report}


def _force_write(path: Path, text: str) -> None:
    # retained attempts are read-only; a reused out_root must not wedge
    if path.exists():
        path.chmod(0o644)
    path.write_text(text, encoding="utf-8")


def _write_attempt_inputs(brief: Brief, workspace: Path, attempt: int, cfg: LoopConfig,
                          prior: AttemptRecord | None) -> None:
    input_dir = workspace / "input"
    input_dir.mkdir(parents=True, exist_ok=True)
    (workspace / "output").mkdir(parents=True, exist_ok=True)
    _force_write(input_dir / BRIEF_NAME, serialize_brief(brief))
    _force_write(input_dir / ATTEMPT_NAME, docio.dumps({
        "schema": "attempt/1", "attempt": attempt, "max_attempts": cfg.max_attempts,
    }))
    template = dict(_BLUEPRINT_TEMPLATE)
    template["metadata"] = dict(template["metadata"], brief_id=brief.id)
    _force_write(input_dir / BLUEPRINT_TEMPLATE_NAME, docio.dumps(template))

    plan = feedback_for_attempt(attempt, cfg, prior)
    if plan["feedback"] is not None:
        _force_write(input_dir / FEEDBACK_NAME, serialize_feedback(plan["feedback"]))
    if plan["rich_view"] and prior is not None:
        prior_views = prior.workspace / "eval" / "views"
        if prior_views.is_dir():
            if (input_dir / "views").exists():
                shutil.rmtree(input_dir / "views")
            shutil.copytree(prior_views, input_dir / "views")


def _merge_inspection_slots(report: FeedbackReport, inspection_path: Path) -> None:
    """Copy the agent's inspection free slots into the feedback verbatim."""
    if not inspection_path.is_file():
        return
    try:
        record = parse_inspection(inspection_path)
    except HarnessError:
        return  # malformed inspection records are ignored, not fatal
    report.failure_category = str(record.get("failure_category", "") or "")
    report.primary_claim_id = str(record.get("primary_claim_id", "") or "")
    report.retry_advice = str(record.get("retry_advice", "") or "")


def _render_views_for_next(brief: Brief, artifact: Artifact | None, workspace: Path,
                           cfg: LoopConfig) -> str | None:
    if artifact is None or artifact.mesh is None:
        return "no mesh to render"
    try:
        job = views.RenderJob(mesh=artifact.mesh, image_size=cfg.image_size)
        views.render_manifest_for_agent(job, workspace / "eval" / "views")
        return None
    except HarnessError as exc:
        return str(exc)


def run_case(brief: Brief, agent: AgentAdapter, cfg: LoopConfig,
             out_root: str | Path) -> list[AttemptRecord]:
    """Drive one case through up to max_attempts agent/evaluate rounds."""
    case_root = Path(out_root) / brief.id
    case_root.mkdir(parents=True, exist_ok=True)
    records: list[AttemptRecord] = []
    prior: AttemptRecord | None = None

    for attempt in range(1, cfg.max_attempts + 1):
        workspace = case_root / f"attempt_{attempt:02d}"
        workspace.mkdir(parents=True, exist_ok=True)
        _write_attempt_inputs(brief, workspace, attempt, cfg, prior)

        termination, agent_wall, _code = agent.run(workspace, cfg.timeout_model, workspace / "logs")

        record = AttemptRecord(
            attempt=attempt, workspace=workspace, agent_wall_s=agent_wall,
            eval_wall_s=0.0, verdict=None, termination=termination,
        )
        if termination == "submitted":
            eval_start = time.monotonic()
            outcome = evaluate_submission(brief, workspace / "output", cfg.timeout_eval)
            record.eval_wall_s = time.monotonic() - eval_start
            record.verdict = outcome.verdict
            if outcome.timed_out:
                record.termination = "eval_timeout"
            eval_dir = workspace / "eval"
            eval_dir.mkdir(parents=True, exist_ok=True)
            docio.dump_path(eval_dir / CASE_VERDICT_NAME, outcome.verdict.to_doc())
            if outcome.solver_report is not None:
                (eval_dir / SOLVER_REPORT_NAME).write_text(
                    serialize_solver_report(outcome.solver_report), encoding="utf-8")
            deep = render_feedback(outcome.verdict, "deep", attempt,
                                   analysis_failures=outcome.analysis_failures)
            _merge_inspection_slots(deep, workspace / "output" / INSPECTION_NAME)
            record.feedback_deep = deep
            (eval_dir / FEEDBACK_NAME).write_text(serialize_feedback(deep), encoding="utf-8")

            next_plan = cfg.schedule(attempt + 1)
            if attempt < cfg.max_attempts and next_plan["rich_view"]:
                problem = _render_views_for_next(brief, outcome.artifact, workspace, cfg)
                if problem is not None and cfg.require_rich_view:
                    record.termination = "agent_error"
        else:
            eval_dir = workspace / "eval"
            eval_dir.mkdir(parents=True, exist_ok=True)

        docio.dump_path(workspace / "eval" / ATTEMPT_RECORD_NAME, record.to_doc())
        record.artifact_hashes = _retain_immutable(workspace)
        records.append(record)
        if record.verdict is not None:
            prior = record
        if cfg.early_stop and record.verdict is not None and record.verdict.strict_pass:
            break
    return records


def best_record(records: Iterable[AttemptRecord]) -> AttemptRecord | None:
    """Highest requirement-pass fraction; ties go to the earliest attempt."""
    best = None
    for rec in records:
        if rec.verdict is None:
            continue
        if best is None or rec.verdict.req_pass_fraction > best.verdict.req_pass_fraction:
            best = rec
    return best


@dataclass
class ScalingLog:
    rows: list[dict[str, Any]]
    rollup: list[dict[str, Any]]

    def write_csv(self, path: str | Path) -> None:
        fields = ["case_id", "attempt", "cum_model_s", "eval_s",
                  "req_pass_fraction", "strict", "termination"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=fields)
            writer.writeheader()
            for row in self.rows:
                writer.writerow({k: row[k] for k in fields})

    def comparable(self) -> list[dict[str, Any]]:
        """Rows with wall-clock fields masked (used by determinism checks)."""
        out = []
        for row in self.rows:
            masked = dict(row)
            masked["cum_model_s"] = 0.0
            masked["eval_s"] = 0.0
            out.append(masked)
        return out


def build_scaling_log(case_records: dict[str, list[AttemptRecord]], keep_best: bool = True) -> ScalingLog:
    rows: list[dict[str, Any]] = []
    max_attempt = 0
    for case_id in sorted(case_records):
        cum = 0.0
        best_fraction = 0.0
        for rec in case_records[case_id]:
            cum += rec.agent_wall_s
            fraction = rec.verdict.req_pass_fraction if rec.verdict else 0.0
            if keep_best:
                best_fraction = max(best_fraction, fraction)
                fraction = best_fraction
            rows.append({
                "case_id": case_id,
                "attempt": rec.attempt,
                "cum_model_s": round(cum, 3),
                "eval_s": round(rec.eval_wall_s, 3),
                "req_pass_fraction": fraction,
                "strict": bool(rec.verdict.strict_pass) if rec.verdict else False,
                "termination": rec.termination,
            })
            max_attempt = max(max_attempt, rec.attempt)

    rollup = []
    for k in range(1, max_attempt + 1):
        fractions = []
        strict = 0
        for case_id, records in case_records.items():
            upto = [r for r in records if r.attempt <= k and r.verdict is not None]
            if not upto:
                fractions.append(0.0)
                continue
            best = max(upto, key=lambda r: (r.verdict.req_pass_fraction, -r.attempt))
            fractions.append(best.verdict.req_pass_fraction)
            if any(r.verdict.strict_pass for r in upto):
                strict += 1
        rollup.append({
            "attempt": k,
            "mean_req_pass": sum(fractions) / len(fractions) if fractions else 0.0,
            "strict_count": strict,
            "cases": len(case_records),
        })
    return ScalingLog(rows=rows, rollup=rollup)


def run_suite(briefs: list[Brief], agent: AgentAdapter | Callable[[Brief], AgentAdapter],
              cfg: LoopConfig, out_root: str | Path) -> tuple[SuiteGrade, ScalingLog]:
    """Run every case across worker slots; aggregation order is fixed by case id."""
    if not briefs:
        raise EmptyList("no briefs to run")
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)

    def adapter_for(brief: Brief) -> AgentAdapter:
        return agent(brief) if callable(agent) else agent

    def one_case(brief: Brief) -> tuple[str, list[AttemptRecord]]:
        return brief.id, run_case(brief, adapter_for(brief), cfg, out_root)

    results: dict[str, list[AttemptRecord]] = {}
    if cfg.jobs <= 1:
        for brief in briefs:
            case_id, records = one_case(brief)
            results[case_id] = records
    else:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            for case_id, records in pool.map(one_case, briefs):
                results[case_id] = records

    groups = {b.id: ("multi" if b.multi_part else "single") for b in briefs}
    final_verdicts = []
    for brief in briefs:
        records = results[brief.id]
        chosen = best_record(records) if cfg.keep_best else next(
            (r for r in reversed(records) if r.verdict is not None), None)
        if chosen is not None:
            final_verdicts.append(chosen.verdict)
        else:
            final_verdicts.append(_unbound_fallback_verdict(brief, "no attempt produced a verdict"))

    grade = grade_suite(final_verdicts, groups)
    log = build_scaling_log(results, keep_best=cfg.keep_best)
    log.write_csv(out_root / SCALING_CSV)
    docio.dump_path(out_root / "suite_grade.v1", grade.to_doc())
    rollup_doc = {"schema": "scaling_rollup/1", "per_attempt": log.rollup}
    docio.dump_path(out_root / "scaling_rollup.v1", rollup_doc)
    return grade, log
