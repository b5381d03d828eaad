"""Render the calibrated 21-view inspection bundle for a small assembly.

Run:  python3 demos/05_rich_views.py
"""

import tempfile
from pathlib import Path

from heph.fixtures import box_mesh
from heph.mesh import merge_meshes
from heph.views import RenderJob, load_view_manifest, render_manifest_for_agent, view_set

outer = box_mesh(60.0, 40.0, 30.0, "housing", origin=(-30.0, -20.0, -15.0))
inner = box_mesh(30.0, 20.0, 15.0, "core", origin=(-15.0, -10.0, -7.5))
assembly = merge_meshes([outer, inner], name="demo_assembly")

out_dir = Path(tempfile.mkdtemp(prefix="heph_views_")) / "views"
job = RenderJob(mesh=assembly, image_size=(480, 360))
manifest_path = render_manifest_for_agent(job, out_dir)
manifest = load_view_manifest(manifest_path)

print(f"rendered {len(manifest['views'])} views into {out_dir}")
print(f"camera distance: {manifest['camera_distance_mm']:.1f} mm "
      f"({manifest['camera_distance_factor']}x bounding-sphere radius)")
for spec in view_set():
    marker = " (x-ray)" if spec.xray else ""
    zoom = f" zoom x{spec.zoom:.2f}" if spec.zoom != 1.0 else ""
    print(f"  {spec.name:<22} {spec.group:<9}{zoom}{marker}")
