"""Calibrated 21-view render set and the deterministic software rasterizer.

Axis conventions follow the blueprint coordinate system (+x forward, +y right,
+z up): the front camera sits on +x looking along -x. The name-to-octant
mapping for the isometric views is a harness convention, documented here and
frozen by tests:

  iso                 camera octant (+x, -y, +z)   (canonical display iso)
  iso_front_right     (+x, +y) horizontal oblique
  iso_rear_right      (-x, +y) horizontal oblique
  iso_rear_left       (-x, -y) horizontal oblique
  iso_front_left      (+x, -y) horizontal oblique
  iso_top_front_right (+x, +y, +z)

Rendering is orthographic with a z-buffer, flat shading under one directional
light fixed in camera space, and per-body palette colors; x-ray views
composite bodies back to front with a per-body alpha. Output is binary PPM
(P6); PNG encoding is an optional extra behind the Pillow dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import docio
from .errors import EmptyMesh, IoError
from .mesh import TriMesh, _bounding_sphere

DEFAULT_IMAGE_SIZE = (960, 720)
DEFAULT_DISTANCE_FACTOR = 2.5  # camera distance = k * bounding-sphere radius
DEFAULT_XRAY_ALPHA = 0.35
BACKGROUND = (28, 30, 34)
# light direction in camera space, so rotating mesh + cameras together
# leaves every pixel unchanged
LIGHT_CAMERA = (-0.35, 0.45, -0.82)

PALETTE = [
    (196, 92, 60), (84, 148, 196), (108, 176, 92), (188, 156, 72),
    (148, 100, 180), (92, 180, 168), (180, 116, 148), (140, 140, 96),
]

CLOSEUP_ZOOM_LO = 1.45
CLOSEUP_ZOOM_HI = 1.8

_UP_Z = (0.0, 0.0, 1.0)
_UP_X = (1.0, 0.0, 0.0)

# (name, camera octant, up, group)
_VIEW_TABLE = [
    ("front", (1, 0, 0), _UP_Z, "axis_iso"),
    ("rear", (-1, 0, 0), _UP_Z, "axis_iso"),
    ("left", (0, -1, 0), _UP_Z, "axis_iso"),
    ("right", (0, 1, 0), _UP_Z, "axis_iso"),
    ("top", (0, 0, 1), _UP_X, "axis_iso"),
    ("bottom", (0, 0, -1), _UP_X, "axis_iso"),
    ("iso", (1, -1, 1), _UP_Z, "axis_iso"),
    ("iso_front_right", (1, 1, 0), _UP_Z, "axis_iso"),
    ("iso_rear_right", (-1, 1, 0), _UP_Z, "axis_iso"),
    ("iso_rear_left", (-1, -1, 0), _UP_Z, "axis_iso"),
    ("iso_front_left", (1, -1, 0), _UP_Z, "axis_iso"),
    ("iso_top_front_right", (1, 1, 1), _UP_Z, "axis_iso"),
    ("front_close", (1, 0, 0), _UP_Z, "closeup"),
    ("rear_close", (-1, 0, 0), _UP_Z, "closeup"),
    ("left_close", (0, -1, 0), _UP_Z, "closeup"),
    ("right_close", (0, 1, 0), _UP_Z, "closeup"),
    ("top_close", (0, 0, 1), _UP_X, "closeup"),
    ("iso_close", (1, -1, 1), _UP_Z, "closeup"),
    ("iso_xray", (1, -1, 1), _UP_Z, "xray"),
    ("front_xray", (1, 0, 0), _UP_Z, "xray"),
    ("right_xray", (0, 1, 0), _UP_Z, "xray"),
]

VIEW_NAMES = tuple(name for name, *_ in _VIEW_TABLE)


@dataclass(frozen=True)
class ViewSpec:
    name: str
    direction: tuple[float, float, float]  # unit vector, camera -> target
    up: tuple[float, float, float]
    zoom: float
    xray: bool
    group: str


def view_set() -> list[ViewSpec]:
    """The frozen 21-view set."""
    closeup_names = [name for name, *_rest in _VIEW_TABLE if _rest[-1] == "closeup"]
    step = (CLOSEUP_ZOOM_HI - CLOSEUP_ZOOM_LO) / (len(closeup_names) - 1)
    zooms = {name: CLOSEUP_ZOOM_LO + i * step for i, name in enumerate(closeup_names)}

    specs = []
    for name, octant, up, group in _VIEW_TABLE:
        norm = math.sqrt(sum(c * c for c in octant))
        direction = tuple(-c / norm for c in octant)
        specs.append(ViewSpec(
            name=name,
            direction=direction,  # type: ignore[arg-type]
            up=up,
            zoom=zooms.get(name, 1.0),
            xray=group == "xray",
            group=group,
        ))
    return specs


@dataclass
class RenderJob:
    mesh: TriMesh
    views: list[ViewSpec] = field(default_factory=view_set)
    image_size: tuple[int, int] = DEFAULT_IMAGE_SIZE
    distance_factor: float = DEFAULT_DISTANCE_FACTOR
    xray_alpha: float = DEFAULT_XRAY_ALPHA
    background: tuple[int, int, int] = BACKGROUND
    palette: list[tuple[int, int, int]] = field(default_factory=lambda: list(PALETTE))


def _camera_frame(direction: tuple[float, float, float], up: tuple[float, float, float]):
    f = np.asarray(direction, dtype=np.float64)
    f /= np.linalg.norm(f)
    u = np.asarray(up, dtype=np.float64)
    r = np.cross(f, u)
    r_norm = np.linalg.norm(r)
    if r_norm < 1e-12:
        raise ValueError("view up vector parallel to the view direction")
    r /= r_norm
    u2 = np.cross(r, f)
    return r, u2, f


def _shade(normals_cam: np.ndarray, base_rgb: np.ndarray) -> np.ndarray:
    light = np.asarray(LIGHT_CAMERA)
    light = light / np.linalg.norm(light)
    lambert = np.abs(normals_cam @ light)  # two-sided flat shading
    intensity = 0.35 + 0.65 * lambert
    return np.clip(base_rgb[None, :] * intensity[:, None], 0, 255)


def _raster_layer(xy: np.ndarray, depth: np.ndarray, tris: np.ndarray, colors: np.ndarray,
                  width: int, height: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Z-buffered flat-shaded rasterization of one triangle batch.

    Returns (rgb float array, coverage mask, z-buffer). Triangles are processed
    in index order with a strict depth test, so output is deterministic.
    """
    img = np.zeros((height, width, 3), dtype=np.float64)
    cover = np.zeros((height, width), dtype=bool)
    zbuf = np.full((height, width), np.inf)

    for t in range(tris.shape[0]):
        idx = tris[t]
        p0, p1, p2 = xy[idx[0]], xy[idx[1]], xy[idx[2]]
        z0, z1, z2 = depth[idx[0]], depth[idx[1]], depth[idx[2]]
        denom = (p1[0] - p0[0]) * (p2[1] - p0[1]) - (p2[0] - p0[0]) * (p1[1] - p0[1])
        if denom == 0.0:
            continue
        x_lo = max(int(math.floor(min(p0[0], p1[0], p2[0]))), 0)
        x_hi = min(int(math.ceil(max(p0[0], p1[0], p2[0]))) + 1, width)
        y_lo = max(int(math.floor(min(p0[1], p1[1], p2[1]))), 0)
        y_hi = min(int(math.ceil(max(p0[1], p1[1], p2[1]))) + 1, height)
        if x_lo >= x_hi or y_lo >= y_hi:
            continue
        xs = np.arange(x_lo, x_hi) + 0.5
        ys = np.arange(y_lo, y_hi) + 0.5
        gx, gy = np.meshgrid(xs, ys)

        w0 = ((p1[0] - p0[0]) * (gy - p0[1]) - (p1[1] - p0[1]) * (gx - p0[0])) / denom
        w1 = ((p2[0] - p1[0]) * (gy - p1[1]) - (p2[1] - p1[1]) * (gx - p1[0])) / denom
        w2 = 1.0 - w0 - w1
        inside = (w0 >= 0) & (w1 >= 0) & (w2 >= 0)
        if not inside.any():
            continue
        z = w1 * z0 + w2 * z1 + w0 * z2  # weights are opposite-vertex areas

        sub_z = zbuf[y_lo:y_hi, x_lo:x_hi]
        win = inside & (z < sub_z)
        if not win.any():
            continue
        sub_z[win] = z[win]
        img[y_lo:y_hi, x_lo:x_hi][win] = colors[t]
        cover[y_lo:y_hi, x_lo:x_hi][win] = True
    return img, cover, zbuf


def render_view(job: RenderJob, spec: ViewSpec) -> np.ndarray:
    """Render one view to an (H, W, 3) uint8 image."""
    mesh = job.mesh
    if mesh.num_triangles == 0:
        raise EmptyMesh("nothing to render")
    width, height = job.image_size
    center, radius = _bounding_sphere(mesh.vertices)
    if radius <= 0:
        raise EmptyMesh("degenerate mesh extent")

    r, u, f = _camera_frame(spec.direction, spec.up)
    rel = mesh.vertices - center
    x_cam = rel @ r
    y_cam = rel @ u
    depth = rel @ f  # larger = farther from camera

    half = job.distance_factor * radius / spec.zoom
    scale = (min(width, height) / 2.0) / half
    px = width / 2.0 + x_cam * scale
    py = height / 2.0 - y_cam * scale
    xy = np.stack([px, py], axis=1)

    # flat normals in camera space
    a, b, c = mesh.triangle_corners()
    n_world = np.cross(b - a, c - a)
    norms = np.linalg.norm(n_world, axis=1)
    norms[norms == 0] = 1.0
    n_world = n_world / norms[:, None]
    basis = np.stack([r, u, f], axis=1)
    n_cam = n_world @ basis

    palette = job.palette
    body_rgb = np.array([palette[b % len(palette)] for b in range(max(mesh.body_id.max() + 1, 1))],
                        dtype=np.float64)

    out = np.empty((height, width, 3), dtype=np.float64)
    out[:, :] = job.background

    if not spec.xray:
        colors = _shade(n_cam, np.array([255.0, 255.0, 255.0]))
        colors = colors / 255.0 * body_rgb[mesh.body_id]
        img, cover, _ = _raster_layer(xy, depth, mesh.triangles, colors, width, height)
        out[cover] = img[cover]
    else:
        # back-to-front per-body compositing; ties broken by body index
        order = []
        for body in range(int(mesh.body_id.max()) + 1):
            tri_mask = mesh.body_id == body
            if not tri_mask.any():
                continue
            verts = np.unique(mesh.triangles[tri_mask])
            order.append((float(np.mean(depth[verts])), body))
        order.sort(key=lambda item: (-item[0], item[1]))
        alpha = job.xray_alpha
        for _, body in order:
            tri_mask = mesh.body_id == body
            tris = mesh.triangles[tri_mask]
            colors = _shade(n_cam[tri_mask], np.array([255.0, 255.0, 255.0]))
            colors = colors / 255.0 * body_rgb[body]
            img, cover, _ = _raster_layer(xy, depth, tris, colors, width, height)
            out[cover] = alpha * img[cover] + (1.0 - alpha) * out[cover]

    return np.clip(np.rint(out), 0, 255).astype(np.uint8)


def render(job: RenderJob) -> dict[str, np.ndarray]:
    """Render every view in the job; deterministic pixels for fixed inputs."""
    return {spec.name: render_view(job, spec) for spec in job.views}


def write_ppm(path: str | Path, image: np.ndarray) -> None:
    h, w, _ = image.shape
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(image.tobytes())


def read_ppm(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if not data.startswith(b"P6"):
        raise IoError(f"{path}: not a binary PPM")
    parts = data.split(b"\n", 3)
    w, h = (int(v) for v in parts[1].split())
    return np.frombuffer(parts[3], dtype=np.uint8, count=w * h * 3).reshape(h, w, 3)


def write_png(path: str | Path, image: np.ndarray) -> None:
    """Optional PNG output; requires the 'png' extra (Pillow)."""
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - depends on extras
        raise IoError("PNG output needs Pillow; install the 'png' extra") from exc
    Image.fromarray(image, mode="RGB").save(str(path), format="PNG")


MANIFEST_NAME = "manifest.v1"


def render_manifest_for_agent(job: RenderJob, out_dir: str | Path, image_format: str = "ppm") -> Path:
    """Render all views into out_dir and write the inspection manifest."""
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc

    center, radius = _bounding_sphere(job.mesh.vertices)
    images = render(job)
    entries = []
    for spec in job.views:
        fname = f"{spec.name}.{image_format}"
        writer = write_png if image_format == "png" else write_ppm
        writer(out_dir / fname, images[spec.name])
        entries.append({
            "name": spec.name,
            "file": fname,
            "group": spec.group,
            "direction": [round(c, 12) for c in spec.direction],
            "up": list(spec.up),
            "zoom": spec.zoom,
            "xray": spec.xray,
        })
    manifest = {
        "schema": "view_manifest/1",
        "image_size": list(job.image_size),
        "camera_distance_factor": job.distance_factor,
        "camera_distance_mm": job.distance_factor * radius,
        "bounding_sphere": {"center": [float(v) for v in center], "radius": float(radius)},
        "xray_alpha": job.xray_alpha,
        "views": entries,
    }
    manifest_path = out_dir / MANIFEST_NAME
    docio.dump_path(manifest_path, manifest)
    return manifest_path


def load_view_manifest(path: str | Path) -> dict[str, Any]:
    """Parse the manifest and verify every referenced image exists."""
    path = Path(path)
    doc = docio.expect_map(docio.load_path(path), "view_manifest")
    docio.check_schema_tag(doc, "view_manifest/1", "view_manifest")
    for entry in doc.get("views") or []:
        fname = entry.get("file", "")
        if not (path.parent / fname).exists():
            raise IoError(f"view {entry.get('name')!r}: missing image file {fname!r}")
    return doc
