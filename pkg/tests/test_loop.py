import os
import stat
import sys
import time

import pytest

from heph import docio
from heph.briefs import parse_brief
from heph.errors import AgentLaunchError, EmptyList
from heph.fixtures import STUB_AGENT_NAME, install_fixtures
from heph.loop import (AgentAdapter, LoopConfig, best_record, build_scaling_log,
                       evaluate_submission, feedback_for_attempt, run_case, run_suite,
                       verify_retained_hashes)


@pytest.fixture(scope="module")
def pack(tmp_path_factory):
    target = tmp_path_factory.mktemp("fixtures")
    install_fixtures(target)
    return target


def stub_agent(pack, fixture, plan):
    return AgentAdapter(command=[sys.executable, str(pack / STUB_AGENT_NAME),
                                 str(pack / fixture), plan])


def fast_cfg(**kwargs):
    defaults = dict(max_attempts=3, jobs=1, timeout_model=60.0, timeout_eval=60.0,
                    image_size=(96, 72))
    defaults.update(kwargs)
    return LoopConfig(**defaults)


def test_evaluate_submission_passing(pack):
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    outcome = evaluate_submission(brief, pack / "baja_frame" / "artifacts" / "passing")
    assert outcome.verdict.strict_pass
    assert [v.status for v in outcome.verdict.verdicts] == ["pass"] * 4
    assert outcome.solver_report is not None


def test_evaluate_submission_missing_manifest(pack, tmp_path):
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    outcome = evaluate_submission(brief, tmp_path)
    assert not outcome.verdict.strict_pass
    assert all(v.status == "unbound" for v in outcome.verdict.verdicts)


def test_run_case_early_stop(pack, tmp_path):
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    records = run_case(brief, stub_agent(pack, "baja_frame", "passing"), fast_cfg(),
                       tmp_path / "run")
    assert len(records) == 1
    assert records[0].verdict.strict_pass
    assert records[0].termination == "submitted"


def test_run_case_no_early_stop(pack, tmp_path):
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    records = run_case(brief, stub_agent(pack, "baja_frame", "passing"),
                       fast_cfg(early_stop=False, max_attempts=2), tmp_path / "run")
    assert len(records) == 2


def test_contract_repair_flip(pack, tmp_path):
    """Unbound mass on attempt 1, alias added on attempt 2, same geometry."""
    brief = parse_brief(pack / "bracket" / "brief.v1")
    cfg = fast_cfg(deep_from=2)
    records = run_case(brief, stub_agent(pack, "bracket", "failing_unbound,passing"),
                       cfg, tmp_path / "run")
    assert len(records) == 2
    first, second = records
    r4_first = next(v for v in first.verdict.verdicts if v.requirement_id == "R4")
    assert r4_first.status == "unbound"
    assert not first.verdict.strict_pass
    assert second.verdict.strict_pass

    # geometry unchanged: identical mesh bytes across attempts
    mesh1 = (first.workspace / "output" / "bracket.obj").read_bytes()
    mesh2 = (second.workspace / "output" / "bracket.obj").read_bytes()
    assert mesh1 == mesh2

    # the deep feedback handed to attempt 2 names the missing canonical key
    feedback_doc = docio.load_path(second.workspace / "input" / "feedback.v1")
    assert feedback_doc["level"] == "deep"
    entry = next(e for e in feedback_doc["requirements"] if e["id"] == "R4")
    assert entry["status"] == "unbound"
    assert "mass" in entry["binding_note"]


def test_model_timeout_recorded_and_loop_continues(pack, tmp_path):
    sleeper = tmp_path / "sleeper.py"
    sleeper.write_text("import time\ntime.sleep(30)\n")
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    agent = AgentAdapter(command=[sys.executable, str(sleeper)])
    cfg = fast_cfg(max_attempts=2, timeout_model=1.0)
    start = time.monotonic()
    records = run_case(brief, agent, cfg, tmp_path / "run")
    elapsed = time.monotonic() - start
    assert [r.termination for r in records] == ["model_timeout", "model_timeout"]
    assert all(r.verdict is None for r in records)
    assert elapsed < 10


def test_agent_launch_error(pack, tmp_path):
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    agent = AgentAdapter(command=["/nonexistent/agent-binary"])
    with pytest.raises(AgentLaunchError):
        run_case(brief, agent, fast_cfg(), tmp_path / "run")


def test_default_schedule_attempt2_views_and_basic_attempt7_deep(pack, tmp_path):
    brief = parse_brief(pack / "bracket" / "brief.v1")
    cfg = fast_cfg(max_attempts=7)  # defaults: rich view from 2, deep from 7
    records = run_case(brief, stub_agent(pack, "bracket", "failing_stress"), cfg,
                       tmp_path / "run")
    assert len(records) == 7

    a2 = records[1].workspace / "input"
    views_dir = a2 / "views"
    ppms = sorted(views_dir.glob("*.ppm"))
    assert len(ppms) == 21
    assert (views_dir / "manifest.v1").is_file()
    feedback2 = docio.load_path(a2 / "feedback.v1")
    assert feedback2["level"] == "basic"
    assert all(("margin" not in e) for e in feedback2["requirements"])

    a7 = records[6].workspace / "input"
    feedback7 = docio.load_path(a7 / "feedback.v1")
    assert feedback7["level"] == "deep"
    assert any("margin" in e for e in feedback7["requirements"])

    # attempt 1 gets brief + blueprint template only
    a1 = records[0].workspace / "input"
    assert (a1 / "brief.v1").is_file()
    assert (a1 / "blueprint_template.v1").is_file()
    assert not (a1 / "feedback.v1").exists()
    assert not (a1 / "views").exists()


def test_feedback_mode_basic_overrides_schedule(pack):
    cfg = fast_cfg(feedback_mode="basic", deep_from=2)
    assert cfg.schedule(9)["level"] == "basic"
    assert feedback_for_attempt(9, cfg, None)["level"] == "basic"


def test_workspace_retention_hashes_and_readonly(pack, tmp_path):
    brief = parse_brief(pack / "baja_frame" / "brief.v1")
    records = run_case(brief, stub_agent(pack, "baja_frame", "passing"), fast_cfg(),
                       tmp_path / "run")
    ws = records[0].workspace
    assert verify_retained_hashes(ws) == []
    manifest_file = ws / "output" / "artifact_manifest.v1"
    mode = stat.S_IMODE(os.stat(manifest_file).st_mode)
    assert not mode & stat.S_IWUSR  # read-only after retention
    assert records[0].artifact_hashes


def test_no_records_after_strict_pass(pack, tmp_path):
    brief = parse_brief(pack / "bracket" / "brief.v1")
    records = run_case(brief, stub_agent(pack, "bracket", "failing_unbound,passing,passing"),
                       fast_cfg(max_attempts=3), tmp_path / "run")
    assert [bool(r.verdict.strict_pass) for r in records] == [False, True]
    assert not (tmp_path / "run" / brief.id / "attempt_03").exists()


def test_run_suite_jobs_invariance(pack, tmp_path):
    briefs = [parse_brief(pack / name / "brief.v1")
              for name in ("baja_frame", "bracket", "enclosure")]

    def agent_for(brief):
        plans = {"baja_frame": "failing_stress,passing", "bracket": "failing_unbound,passing",
                 "enclosure": "passing"}
        return stub_agent(pack, brief.id, plans[brief.id])

    grade1, log1 = run_suite(briefs, agent_for, fast_cfg(jobs=1), tmp_path / "run1")
    grade8, log8 = run_suite(briefs, agent_for, fast_cfg(jobs=8), tmp_path / "run8")
    assert grade1.to_doc() == grade8.to_doc()
    assert log1.comparable() == log8.comparable()
    assert grade1.overall.strict_count == 3
    assert grade1.groups["multi"].cases == 1
    assert (tmp_path / "run1" / "scaling_log.csv").is_file()


def test_run_suite_empty_errors(pack, tmp_path):
    with pytest.raises(EmptyList):
        run_suite([], AgentAdapter(command=["true"]), fast_cfg(), tmp_path / "run")


def test_scaling_log_monotone(pack, tmp_path):
    brief = parse_brief(pack / "bracket" / "brief.v1")
    records = run_case(brief, stub_agent(pack, "bracket", "failing_stress,failing_unbound,passing"),
                       fast_cfg(max_attempts=3), tmp_path / "run")
    log = build_scaling_log({brief.id: records})
    cums = [row["cum_model_s"] for row in log.rows]
    assert cums == sorted(cums)
    fractions = [row["req_pass_fraction"] for row in log.rows]
    assert fractions == sorted(fractions)  # keep-best reporting
    assert log.rollup[-1]["strict_count"] == 1


def test_best_record_tie_earliest(pack):
    class FakeVerdict:
        def __init__(self, fraction):
            self.req_pass_fraction = fraction
            self.strict_pass = False

    from heph.loop import AttemptRecord
    from pathlib import Path

    a = AttemptRecord(attempt=1, workspace=Path("a"), agent_wall_s=0, eval_wall_s=0,
                      verdict=FakeVerdict(0.5), termination="submitted")
    b = AttemptRecord(attempt=2, workspace=Path("b"), agent_wall_s=0, eval_wall_s=0,
                      verdict=FakeVerdict(0.5), termination="submitted")
    assert best_record([a, b]) is a


def test_inspection_slots_passed_through(pack, tmp_path):
    agent_script = tmp_path / "inspecting_agent.py"
    agent_script.write_text(
        "import shutil, sys\n"
        "from pathlib import Path\n"
        f"src = Path({str(pack / 'bracket' / 'artifacts' / 'failing_stress')!r})\n"
        "out = Path('output'); out.mkdir(exist_ok=True)\n"
        "for f in src.iterdir():\n"
        "    shutil.copy2(f, out / f.name)\n"
        "(out / 'inspection.v1').write_text(\n"
        "    'schema: inspection/1\\n'\n"
        "    'verdict: revise\\n'\n"
        "    'summary: wall looks thin\\n'\n"
        "    'issues:\\n'\n"
        "    '- view_name: front_xray\\n'\n"
        "    '  description: thin web\\n'\n"
        "    'failure_category: structural\\n'\n"
        "    'primary_claim_id: R1\\n'\n"
        "    'retry_advice: thicken the web\\n')\n")
    brief = parse_brief(pack / "bracket" / "brief.v1")
    records = run_case(brief, AgentAdapter(command=[sys.executable, str(agent_script)]),
                       fast_cfg(max_attempts=2, deep_from=2), tmp_path / "run")
    # the agent-authored free slots travel verbatim into the next feedback
    feedback = docio.load_path(records[1].workspace / "input" / "feedback.v1")
    assert feedback["failure_category"] == "structural"
    assert feedback["primary_claim_id"] == "R1"
    assert feedback["retry_advice"] == "thicken the web"


def test_external_solver_hook(pack, tmp_path, monkeypatch):
    solver = tmp_path / "extsolver.py"
    solver.write_text(
        "import sys\n"
        "report = '''schema: solver_report/1\n"
        "status: ok\n"
        "cases:\n"
        "  LC1:\n"
        "    max_von_mises_stress: {value: 1000000.0, unit: MPa, analysis_class: static}\n"
        "  LC2:\n"
        "    max_von_mises_stress: {value: 1000000.0, unit: MPa, analysis_class: static}\n"
        "'''\n"
        "open(sys.argv[2], 'w').write(report)\n")
    monkeypatch.setenv("HEPH_SOLVER", f"{sys.executable} {solver}")
    brief = parse_brief(pack / "bracket" / "brief.v1")
    outcome = evaluate_submission(brief, pack / "bracket" / "artifacts" / "passing")
    r1 = next(v for v in outcome.verdict.verdicts if v.requirement_id == "R1")
    assert r1.status == "fail"  # the absurd external stress wins over mini-fea
    assert r1.measured == pytest.approx(1000000.0)
