"""The built-in truss solver: statics, buckling factors, first frequency.

Run:  python3 demos/03_truss_solver.py
"""

import numpy as np

from heph.fea import (assemble_and_solve_static, buckling_factors, first_frequency,
                      parse_model_doc, run_analysis)
from heph.fixtures import TUBE_AREA, TUBE_I_MIN, _frame_model

model = parse_model_doc(_frame_model(TUBE_AREA, TUBE_I_MIN))
print(f"tripod frame stand-in: {len(model.nodes)} nodes, {len(model.members)} members, "
      f"tube A={TUBE_AREA:.1f} mm^2, I={TUBE_I_MIN:.0f} mm^4")

for lc in ("LC1", "LC4"):
    sol = assemble_and_solve_static(model, lc)
    print(f"\n{lc}: member stresses {np.round(sol.stresses, 1)} MPa, "
          f"apex displacement {np.round(sol.displacements[3], 3)} mm, "
          f"equilibrium residual {sol.equilibrium_residual:.1e}")

buckle = buckling_factors(model, assemble_and_solve_static(model, "LC4"))
print(f"\nrollover buckling: first mode load factor {buckle.first_mode_load_factor:.3f} "
      f"(pinned-pinned Euler)")

spring = parse_model_doc({
    "schema": "analysis_model/1",
    "nodes": [[0.0, 0.0, 0.0], [0.0, 0.0, 200.0]],
    "material": {"E_MPa": 70000.0, "density_kg_m3": 2700.0},
    "members": [{"i": 0, "j": 1, "area_mm2": 50.0, "i_min_mm4": 0.0}],
    "supports": [{"node": 0, "fixed": ["x", "y", "z"]}, {"node": 1, "fixed": ["x", "y"]}],
    "load_cases": {},
})
print(f"single-dof post first frequency: {first_frequency(spring):.1f} Hz")

report = run_analysis(model, [("static", "LC1"), ("buckle", "LC4"), ("modal", None)])
print(f"\nsolver report status={report['status']}, cases={sorted(report['cases'])}, "
      f"buckling={sorted(report.get('buckling', {}))}")
