"""End-to-end bounded retry loop with a scripted stub agent.

The stub submits a broken artifact first and the repaired one on attempt 2,
so the run shows the unbound -> pass flip and the scaling log.

Run:  python3 demos/06_retry_loop.py
"""

import sys
import tempfile
from pathlib import Path

from heph.briefs import parse_brief
from heph.fixtures import STUB_AGENT_NAME, install_fixtures
from heph.loop import AgentAdapter, LoopConfig, run_suite

workdir = Path(tempfile.mkdtemp(prefix="heph_demo_"))
fixtures = workdir / "fixtures"
install_fixtures(fixtures)

briefs = [parse_brief(fixtures / name / "brief.v1")
          for name in ("baja_frame", "bracket", "enclosure")]
plans = {
    "baja_frame": "failing_stress,passing",
    "bracket": "failing_unbound,passing",
    "enclosure": "passing",
}


def agent_for(brief):
    return AgentAdapter(command=[sys.executable, str(fixtures / STUB_AGENT_NAME),
                                 str(fixtures / brief.id), plans[brief.id]])


cfg = LoopConfig(max_attempts=4, jobs=2, timeout_model=120, timeout_eval=120,
                 deep_from=2, image_size=(240, 180))
grade, log = run_suite(briefs, agent_for, cfg, workdir / "run")

print(grade.render_table())
print("\nper-attempt rollup (best-so-far):")
for row in log.rollup:
    print(f"  attempt {row['attempt']}: mean req pass {row['mean_req_pass']:.1%}, "
          f"strict {row['strict_count']}/{row['cases']}")
print(f"\nattempt workspaces and the scaling CSV are under {workdir / 'run'}")
