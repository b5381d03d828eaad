"""Parse a brief and a blueprint, lint both, and diff a repaired plan.

Run:  python3 demos/01_briefs_and_blueprints.py
"""

import copy
import tempfile
from pathlib import Path

from heph.blueprints import (check_envelopes, diff_blueprints, parse_blueprint,
                             parse_blueprint_doc, blueprint_to_doc, extract_claims)
from heph.briefs import parse_brief, validate_brief
from heph.fixtures import install_fixtures

workdir = Path(tempfile.mkdtemp(prefix="heph_demo_"))
install_fixtures(workdir)

brief = parse_brief(workdir / "baja_frame" / "brief.v1")
print(f"brief {brief.id}: {len(brief.requirements)} requirements, "
      f"load cases {brief.load_case_ids()}")
for req in brief.requirements:
    print(f"  {req.id}: {req.metric} {req.operator} {req.limit} {req.unit} "
          f"on {req.applies_to}")

print("\nlint:", validate_brief(brief) or "clean")

bp = parse_blueprint(workdir / "baja_frame" / "blueprint.v1")
print(f"\nblueprint: parts {[p.name for p in bp.parts]}")
print("envelope check:", check_envelopes(bp) or "clean")

binding = extract_claims(bp, brief)
print(f"claims bound to requirements: {[c.id for c, _ in binding.bound]}")
print(f"requirements never claimed:  {binding.unclaimed_requirements}")

# a repair loop edits the plan; diffs are keyed by ids, not list positions
repaired = copy.deepcopy(blueprint_to_doc(bp))
repaired["parts"][0]["construction_units"][0]["constructive_primitives"][0]["wall_thickness"] = 3.5
diff = diff_blueprints(bp, parse_blueprint_doc(repaired))
print("\nplan diff after thickening the hoop tube wall:")
for entry in diff.entries:
    print(f"  {entry.kind}: {entry.path}  {entry.before} -> {entry.after}")
