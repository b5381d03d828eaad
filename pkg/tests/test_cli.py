import sys

import pytest

from heph import docio
from heph.cli import main
from heph.fixtures import STUB_AGENT_NAME, install_fixtures

from conftest import make_box, make_sphere, write_binary_stl


@pytest.fixture(scope="module")
def pack(tmp_path_factory):
    target = tmp_path_factory.mktemp("fixtures")
    install_fixtures(target)
    return target


def case_workdir(pack, tmp_path, fixture, variant):
    import shutil

    workdir = tmp_path / f"{fixture}_{variant}"
    workdir.mkdir()
    shutil.copy2(pack / fixture / "brief.v1", workdir / "brief.v1")
    out = workdir / "output"
    shutil.copytree(pack / fixture / "artifacts" / variant, out)
    return workdir


def test_validate_brief_ok(pack, capsys):
    assert main(["validate-brief", str(pack / "baja_frame" / "brief.v1")]) == 0
    assert "ok:" in capsys.readouterr().out


def test_validate_brief_parse_error(tmp_path, capsys):
    bad = tmp_path / "bad.v1"
    bad.write_text("requirements: [unclosed")
    assert main(["validate-brief", str(bad)]) == 2


def test_validate_blueprint_ok(pack, capsys):
    code = main(["validate-blueprint", str(pack / "baja_frame" / "blueprint.v1"),
                 "--brief", str(pack / "baja_frame" / "brief.v1")])
    assert code == 0


def test_unknown_flag_exits_2(pack):
    assert main(["grade", "--bogus-flag", "x"]) == 2


def test_unknown_subcommand_exits_2():
    assert main(["frobnicate"]) == 2


def test_grade_passing_sample(pack, tmp_path, capsys):
    workdir = case_workdir(pack, tmp_path, "baja_frame", "passing")
    assert main(["grade", str(workdir)]) == 0
    out = capsys.readouterr().out
    assert "strict_pass=True" in out
    verdict = docio.load_path(workdir / "eval" / "case_verdict.v1")
    assert verdict["strict_pass"] is True
    assert (workdir / "eval" / "feedback.v1").is_file()


def test_grade_failing_sample(pack, tmp_path, capsys):
    workdir = case_workdir(pack, tmp_path, "baja_frame", "failing_stress")
    assert main(["grade", str(workdir)]) == 1
    verdict = docio.load_path(workdir / "eval" / "case_verdict.v1")
    statuses = {v["id"]: v["status"] for v in verdict["verdicts"]}
    assert statuses["R2"] == "fail"


def test_metrics_subcommand_byte_stable(tmp_path, capsys):
    gen = write_binary_stl(tmp_path / "gen.stl", make_sphere(n_theta=8, n_phi=12))
    ref = write_binary_stl(tmp_path / "ref.stl", make_box())
    out1 = tmp_path / "m1.v1"
    out2 = tmp_path / "m2.v1"
    args = ["metrics", str(gen), str(ref), "--sample-n", "64", "--voxel-res", "8", "--seed", "7"]
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()
    doc = docio.load_path(out1)
    assert doc["schema"] == "metric_result/1"
    assert 0 <= doc["f_score"] <= 1


def test_render_views_subcommand(tmp_path, capsys):
    mesh = write_binary_stl(tmp_path / "cube.stl", make_box())
    out = tmp_path / "views"
    assert main(["render-views", str(mesh), "--out", str(out), "--size", "96x72"]) == 0
    assert len(list(out.glob("*.ppm"))) == 21
    assert (out / "manifest.v1").is_file()


def test_solve_subcommand(pack, tmp_path, capsys):
    model = pack / "baja_frame" / "artifacts" / "passing" / "model.v1"
    out = tmp_path / "report.v1"
    code = main(["solve", str(model), "--static", "LC1", "--buckle", "LC4", "--out", str(out)])
    assert code == 0
    report = docio.load_path(out)
    assert report["status"] == "ok"
    assert "LC1" in report["cases"]
    assert "LC4" in report["buckling"]


def test_run_loop_and_bench_report(pack, tmp_path, capsys):
    out_root = tmp_path / "run"
    agent_cmd = f"{sys.executable} {pack / STUB_AGENT_NAME} {pack / 'bracket'} failing_unbound,passing"
    code = main([
        "run-loop", "--briefs", str(pack / "bracket" / "brief.v1"),
        "--agent-cmd", agent_cmd, "--max-attempts", "3", "--jobs", "1",
        "--timeout-model", "60", "--timeout-eval", "60",
        "--deep-from", "2", "--out-root", str(out_root),
    ])
    assert code == 0  # strict pass reached on attempt 2
    out = capsys.readouterr().out
    assert "overall" in out
    assert (out_root / "scaling_log.csv").is_file()
    assert (out_root / "suite_grade.v1").is_file()

    assert main(["bench-report", "--run-dir", str(out_root)]) == 0
    report_out = capsys.readouterr().out
    assert "per-attempt rollup" in report_out
    assert "attempt 2" in report_out


def test_internal_error_exits_3(pack, tmp_path, monkeypatch):
    def boom(*args, **kwargs):
        raise RuntimeError("wires crossed")

    monkeypatch.setattr("heph.cli.evaluate_submission", boom)
    workdir = case_workdir(pack, tmp_path, "baja_frame", "passing")
    assert main(["grade", str(workdir)]) == 3


def test_run_loop_set_filter_no_match(pack, tmp_path):
    code = main(["run-loop", "--briefs", str(pack / "bracket" / "brief.v1"),
                 "--agent-cmd", "true", "--set", "multi",
                 "--out-root", str(tmp_path / "r")])
    assert code == 2  # bracket is single-part; nothing matched
