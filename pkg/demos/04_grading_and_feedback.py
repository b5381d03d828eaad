"""Requirement binding and grading, including the alias-repair failure mode.

Run:  python3 demos/04_grading_and_feedback.py
"""

import tempfile
from pathlib import Path

from heph.briefs import parse_brief
from heph.feedback import redact_for_level, render_feedback, serialize_feedback
from heph.fixtures import install_fixtures
from heph.loop import evaluate_submission

workdir = Path(tempfile.mkdtemp(prefix="heph_demo_"))
install_fixtures(workdir)
brief = parse_brief(workdir / "bracket" / "brief.v1")


def show(title, outcome):
    case = outcome.verdict
    print(f"\n{title}: strict={case.strict_pass} fraction={case.req_pass_fraction:.2f}")
    for v in case.verdicts:
        extra = f" margin={v.margin:+.4f} via {v.provenance}" if v.margin is not None else ""
        if v.binding_note:
            extra += f"  [{v.binding_note}]"
        print(f"  {v.requirement_id}: {v.status}{extra}")


# the artifact without any mass source: the checker cannot bind the mass row
show("bracket without mass binding",
     evaluate_submission(brief, workdir / "bracket" / "artifacts" / "failing_unbound"))

# the repaired artifact exposes mass through the mesh_derived_mass alias;
# geometry is unchanged, only the manifest differs
outcome = evaluate_submission(brief, workdir / "bracket" / "artifacts" / "passing")
show("bracket with the mass alias declared", outcome)

deep = render_feedback(outcome.verdict, "deep", attempt=2)
basic = redact_for_level(deep, "basic")
print("\nbasic feedback (statuses only):")
print(serialize_feedback(basic))
