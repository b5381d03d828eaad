"""Mesh ingestion, validity, mass properties, and the metric quartet.

Run:  python3 demos/02_mesh_and_metrics.py
"""

import numpy as np

from heph.fixtures import box_mesh, open_box_mesh
from heph.mesh import mass_properties, sample_surface, validity, voxelize
from heph.metrics import MetricConfig, invalidity_ratio, mesh_metrics

plate = box_mesh(100.0, 100.0, 10.0, "plate")
report = validity(plate)
print(f"plate: watertight={report.watertight} oriented={report.consistently_oriented}")

mp = mass_properties(plate, density_kg_m3=2700.0, projection_axis="z")
print(f"volume {mp.volume_mm3:.0f} mm^3, mass {mp.mass_kg:.3f} kg, "
      f"areal density {mp.projected_areal_density:.1f} kg/m^2")

pts = sample_surface(plate, n=5, seed=1)
print("five area-weighted surface samples:")
print(np.round(pts, 2))

grid = voxelize(plate, resolution=16)
print(f"voxel grid {grid.dims}, occupancy {grid.occupancy_fraction():.2f}")

# compare a slightly wrong copy against the reference plate
candidate = box_mesh(100.0, 100.0, 12.0, "thick_plate")
result = mesh_metrics(candidate, plate, MetricConfig(sample_n=2048, voxel_res=32, seed=7))
print(f"\ncandidate vs reference: chamfer={result.chamfer:.5f} "
      f"f_score={result.f_score:.3f} voxel_iou={result.voxel_iou:.3f} "
      f"box_iou={result.box_iou:.3f}")

# invalid solids get worst-case metrics and count toward the invalidity ratio
broken = open_box_mesh(100.0, 100.0, 10.0)
worst = mesh_metrics(broken, plate, MetricConfig(sample_n=64, voxel_res=8))
print(f"open mesh policy: chamfer={worst.chamfer} f={worst.f_score} iou={worst.voxel_iou}")
print("invalidity ratio over a 4-submission batch:",
      invalidity_ratio([validity(plate), validity(broken), validity(plate), validity(plate)]))
