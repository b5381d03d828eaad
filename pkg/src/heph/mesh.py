"""Triangle-mesh ingestion and measurement.

Meshes arrive as binary/ASCII STL or OBJ, in millimetres. Ingestion welds
duplicate vertices at 1e-6 mm and drops degenerate triangles; everything
downstream (validity, mass properties, sampling, voxelization) is pure and
deterministic for fixed inputs and seeds.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import EmptyMesh, InvalidSolid, ParseError

WELD_TOL = 1e-6  # mm
DEGENERATE_AREA = 1e-12  # mm^2


@dataclass
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64, mm
    triangles: np.ndarray  # (T, 3) int64
    body_id: np.ndarray  # (T,) int64
    name: str = "mesh"
    body_names: list[str] = field(default_factory=list)
    degenerate_dropped: int = 0

    @property
    def num_triangles(self) -> int:
        return int(self.triangles.shape[0])

    def triangle_corners(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        v = self.vertices
        t = self.triangles
        return v[t[:, 0]], v[t[:, 1]], v[t[:, 2]]

    def triangle_areas(self) -> np.ndarray:
        a, b, c = self.triangle_corners()
        return 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)

    def bbox(self) -> dict[str, tuple[float, float]]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return {ax: (float(lo[i]), float(hi[i])) for i, ax in enumerate("xyz")}


@dataclass
class ValidityReport:
    watertight: bool
    consistently_oriented: bool
    self_intersection_checked: bool = False  # by design: edge manifoldness is the proxy
    boundary_edges: int = 0
    nonmanifold_edges: int = 0

    @property
    def valid_solid(self) -> bool:
        return self.watertight and self.consistently_oriented


@dataclass
class MassProperties:
    volume_mm3: float
    volume_sign: int
    centroid: np.ndarray
    mass_kg: float
    bbox: dict[str, tuple[float, float]]
    bounding_sphere_center: np.ndarray
    bounding_sphere_radius: float
    projected_areal_density: float  # kg/m^2 over the bbox footprint
    projection_axis: str


def _finish_mesh(vertices: np.ndarray, triangles: np.ndarray, body_id: np.ndarray,
                 name: str, body_names: list[str]) -> TriMesh:
    if triangles.size == 0:
        raise EmptyMesh(f"{name}: no triangles")
    if not np.isfinite(vertices).all():
        raise ParseError(f"{name}: non-finite vertex coordinates")

    # Weld: quantize to the tolerance grid, then unique rows. Representative
    # coordinates come from the first occurrence of each welded vertex.
    keys = np.round(vertices / WELD_TOL).astype(np.int64)
    uniq, inverse = np.unique(keys, axis=0, return_inverse=True)
    inverse = inverse.reshape(-1)
    first = np.full(uniq.shape[0], -1, dtype=np.int64)
    for idx in range(vertices.shape[0] - 1, -1, -1):
        first[inverse[idx]] = idx
    welded = vertices[first]
    tris = inverse[triangles]

    # Drop triangles with repeated vertices or vanishing area.
    distinct = (tris[:, 0] != tris[:, 1]) & (tris[:, 1] != tris[:, 2]) & (tris[:, 0] != tris[:, 2])
    a, b, c = welded[tris[:, 0]], welded[tris[:, 1]], welded[tris[:, 2]]
    areas = 0.5 * np.linalg.norm(np.cross(b - a, c - a), axis=1)
    keep = distinct & (areas > DEGENERATE_AREA)
    dropped = int((~keep).sum())
    tris = tris[keep]
    body_id = body_id[keep]
    if tris.size == 0:
        raise EmptyMesh(f"{name}: all triangles degenerate")

    # Drop unreferenced vertices for a compact result.
    used, remap = np.unique(tris, return_inverse=True)
    return TriMesh(
        vertices=welded[used],
        triangles=remap.reshape(-1, 3).astype(np.int64),
        body_id=body_id.astype(np.int64),
        name=name,
        body_names=body_names,
        degenerate_dropped=dropped,
    )


def _load_stl_binary(data: bytes, name: str) -> TriMesh:
    if len(data) < 84:
        raise ParseError(f"{name}: binary STL shorter than its header")
    (count,) = struct.unpack_from("<I", data, 80)
    expected = 84 + 50 * count
    if len(data) < expected:
        raise ParseError(f"{name}: truncated binary STL ({len(data)} bytes, expected {expected})")
    if count == 0:
        raise EmptyMesh(f"{name}: zero facets")
    records = np.frombuffer(data, dtype=np.uint8, count=50 * count, offset=84).reshape(count, 50)
    floats = records[:, :48].copy().view("<f4").reshape(count, 12).astype(np.float64)
    verts = floats[:, 3:12].reshape(count * 3, 3)
    tris = np.arange(count * 3, dtype=np.int64).reshape(count, 3)
    return _finish_mesh(verts, tris, np.zeros(count, dtype=np.int64), name, [name])


def _load_stl_ascii(text: str, name: str) -> TriMesh:
    verts: list[list[float]] = []
    in_loop = 0
    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if line.startswith("vertex"):
            parts = line.split()
            if len(parts) != 4:
                raise ParseError(f"{name}: malformed vertex record", line=ln)
            try:
                verts.append([float(x) for x in parts[1:]])
            except ValueError as exc:
                raise ParseError(f"{name}: bad vertex number: {exc}", line=ln) from exc
        elif line.startswith("outer loop"):
            in_loop = len(verts)
        elif line.startswith("endloop"):
            if len(verts) - in_loop != 3:
                raise ParseError(f"{name}: facet loop with {len(verts) - in_loop} vertices", line=ln)
    if not verts:
        raise EmptyMesh(f"{name}: no facets")
    if len(verts) % 3 != 0:
        raise ParseError(f"{name}: vertex count not a multiple of 3")
    v = np.asarray(verts, dtype=np.float64)
    tris = np.arange(len(verts), dtype=np.int64).reshape(-1, 3)
    return _finish_mesh(v, tris, np.zeros(tris.shape[0], dtype=np.int64), name, [name])


def _load_obj(text: str, name: str) -> TriMesh:
    verts: list[list[float]] = []
    faces: list[tuple[int, int, int]] = []
    face_body: list[int] = []
    body_names: list[str] = []
    current_body = -1

    def body_index() -> int:
        nonlocal current_body
        if current_body < 0:
            body_names.append(name)
            current_body = 0
        return current_body

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        tag = parts[0]
        if tag == "v":
            if len(parts) < 4:
                raise ParseError(f"{name}: short vertex record", line=ln)
            try:
                verts.append([float(parts[1]), float(parts[2]), float(parts[3])])
            except ValueError as exc:
                raise ParseError(f"{name}: bad vertex number: {exc}", line=ln) from exc
        elif tag in ("o", "g"):
            label = parts[1] if len(parts) > 1 else f"body{len(body_names)}"
            body_names.append(label)
            current_body = len(body_names) - 1
        elif tag == "f":
            idx = []
            for tok in parts[1:]:
                head = tok.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError as exc:
                    raise ParseError(f"{name}: bad face index {tok!r}", line=ln) from exc
                if i < 0:
                    i = len(verts) + 1 + i
                if not 1 <= i <= len(verts):
                    raise ParseError(f"{name}: face index {i} out of range", line=ln)
                idx.append(i - 1)
            if len(idx) < 3:
                raise ParseError(f"{name}: face with fewer than 3 vertices", line=ln)
            b = body_index()
            for k in range(1, len(idx) - 1):  # fan triangulation
                faces.append((idx[0], idx[k], idx[k + 1]))
                face_body.append(b)
    if not faces:
        raise EmptyMesh(f"{name}: no faces")
    return _finish_mesh(
        np.asarray(verts, dtype=np.float64),
        np.asarray(faces, dtype=np.int64),
        np.asarray(face_body, dtype=np.int64),
        name,
        body_names or [name],
    )


def load_mesh(path: str | Path) -> TriMesh:
    """Load a triangle mesh from .stl (binary or ASCII) or .obj."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    name = path.stem
    suffix = path.suffix.lower()
    if suffix == ".obj":
        try:
            text = data.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"{name}: OBJ is not UTF-8: {exc}") from exc
        return _load_obj(text, name)
    # STL: ASCII files start with 'solid' and stay decodable; everything else
    # is treated as the 50-byte-record binary layout.
    if data[:5].lower() == b"solid":
        try:
            text = data.decode("ascii")
        except UnicodeDecodeError:
            text = None
        if text is not None and "facet" in text:
            return _load_stl_ascii(text, name)
    return _load_stl_binary(data, name)


def merge_meshes(meshes: list[TriMesh], name: str = "assembly") -> TriMesh:
    """Concatenate bodies; per-triangle body ids stay distinct per source mesh."""
    if not meshes:
        raise EmptyMesh("no meshes to merge")
    if len(meshes) == 1:
        return meshes[0]
    verts = []
    tris = []
    bodies = []
    names: list[str] = []
    v_off = 0
    b_off = 0
    for m in meshes:
        verts.append(m.vertices)
        tris.append(m.triangles + v_off)
        bodies.append(m.body_id + b_off)
        names.extend(m.body_names)
        v_off += m.vertices.shape[0]
        b_off += len(m.body_names)
    return TriMesh(
        vertices=np.vstack(verts),
        triangles=np.vstack(tris),
        body_id=np.concatenate(bodies),
        name=name,
        body_names=names,
        degenerate_dropped=sum(m.degenerate_dropped for m in meshes),
    )


def _edge_table(mesh: TriMesh) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    t = mesh.triangles
    edges = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]], axis=0)
    ordered = np.sort(edges, axis=1)
    # forward flag: was the edge traversed low->high in its triangle winding
    forward = edges[:, 0] < edges[:, 1]
    uniq, inverse, counts = np.unique(ordered, axis=0, return_inverse=True, return_counts=True)
    return uniq, inverse.reshape(-1), np.asarray(counts), forward


def validity(mesh: TriMesh) -> ValidityReport:
    """Edge-manifoldness and orientation checks; O(T log T)."""
    uniq, inverse, counts, forward = _edge_table(mesh)
    boundary = int((counts == 1).sum())
    nonmanifold = int((counts > 2).sum())
    watertight = boundary == 0 and nonmanifold == 0

    consistent = True
    if watertight:
        # Each interior edge must be traversed once in each direction.
        fwd_count = np.zeros(len(uniq), dtype=np.int64)
        np.add.at(fwd_count, inverse, forward.astype(np.int64))
        consistent = bool(np.all(fwd_count == 1))
    return ValidityReport(
        watertight=watertight,
        consistently_oriented=consistent if watertight else False,
        boundary_edges=boundary,
        nonmanifold_edges=nonmanifold,
    )


def _bounding_sphere(points: np.ndarray) -> tuple[np.ndarray, float]:
    """Ritter's two-pass sphere; deterministic and covers all points."""
    p0 = points[0]
    p1 = points[np.argmax(np.linalg.norm(points - p0, axis=1))]
    p2 = points[np.argmax(np.linalg.norm(points - p1, axis=1))]
    center = (p1 + p2) / 2.0
    radius = float(np.linalg.norm(p2 - center))
    for _ in range(2):  # growth passes
        d = np.linalg.norm(points - center, axis=1)
        i = int(np.argmax(d))
        if d[i] <= radius * (1 + 1e-12):
            break
        far = points[i]
        radius = (radius + float(d[i])) / 2.0
        center = far + (center - far) * (radius / float(d[i]))
    # final guarantee
    radius = max(radius, float(np.linalg.norm(points - center, axis=1).max()))
    return center, radius


def mass_properties(mesh: TriMesh, density_kg_m3: float, projection_axis: str = "z") -> MassProperties:
    """Divergence-theorem volume/centroid plus mass and areal density.

    Requires a valid solid; volume is the absolute signed-tetrahedron sum with
    the sign recorded. Mass converts mm^3 to m^3.
    """
    report = validity(mesh)
    if not report.valid_solid:
        raise InvalidSolid(f"{mesh.name}: mesh is not a watertight, consistently oriented solid")
    if projection_axis not in "xyz":
        raise ValueError(f"bad projection axis {projection_axis!r}")

    a, b, c = mesh.triangle_corners()
    signed = np.einsum("ij,ij->i", a, np.cross(b, c)) / 6.0
    volume_signed = float(signed.sum())
    volume = abs(volume_signed)
    if volume <= 0:
        raise InvalidSolid(f"{mesh.name}: zero enclosed volume")
    tet_centroids = (a + b + c) / 4.0  # fourth vertex is the origin
    centroid = (tet_centroids * signed[:, None]).sum(axis=0) / volume_signed

    mass = volume * 1e-9 * density_kg_m3
    bbox = mesh.bbox()
    center, radius = _bounding_sphere(mesh.vertices)

    others = [ax for ax in "xyz" if ax != projection_axis]
    spans = {ax: bbox[ax][1] - bbox[ax][0] for ax in "xyz"}
    footprint_m2 = spans[others[0]] * spans[others[1]] * 1e-6
    areal = mass / footprint_m2 if footprint_m2 > 0 else float("inf")

    return MassProperties(
        volume_mm3=volume,
        volume_sign=1 if volume_signed >= 0 else -1,
        centroid=centroid,
        mass_kg=mass,
        bbox=bbox,
        bounding_sphere_center=center,
        bounding_sphere_radius=radius,
        projected_areal_density=areal,
        projection_axis=projection_axis,
    )


def sample_surface(mesh: TriMesh, n: int, seed: int) -> np.ndarray:
    """n area-weighted surface samples; identical for identical (mesh, n, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    areas = mesh.triangle_areas()
    cum = np.cumsum(areas)
    total = cum[-1]
    rng = np.random.Generator(np.random.PCG64(seed))
    u = rng.random(n) * total
    tri_idx = np.searchsorted(cum, u, side="right").clip(0, len(areas) - 1)

    r1 = rng.random(n)
    r2 = rng.random(n)
    over = r1 + r2 > 1.0  # fold back into the simplex
    r1[over] = 1.0 - r1[over]
    r2[over] = 1.0 - r2[over]

    a, b, c = mesh.triangle_corners()
    a, b, c = a[tri_idx], b[tri_idx], c[tri_idx]
    return a + r1[:, None] * (b - a) + r2[:, None] * (c - a)


@dataclass
class OccupancyGrid:
    origin: np.ndarray  # frame lower corner
    cell: np.ndarray  # per-axis cell size
    occupied: np.ndarray  # (nx, ny, nz) bool

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(self.occupied.shape)  # type: ignore[return-value]

    def same_frame(self, other: "OccupancyGrid") -> bool:
        return (
            self.occupied.shape == other.occupied.shape
            and np.allclose(self.origin, other.origin, atol=1e-9)
            and np.allclose(self.cell, other.cell, atol=1e-12)
        )

    def occupancy_fraction(self) -> float:
        return float(self.occupied.mean())


def grid_dims(frame_lo: np.ndarray, frame_hi: np.ndarray, resolution: int) -> tuple[int, int, int]:
    ext = frame_hi - frame_lo
    longest = float(ext.max())
    dims = np.maximum(1, np.round(resolution * ext / longest).astype(int))
    return int(dims[0]), int(dims[1]), int(dims[2])


def voxelize(mesh: TriMesh, resolution: int, frame: dict[str, tuple[float, float]] | None = None) -> OccupancyGrid:
    """Occupancy by cell-center parity ray casts along +x.

    Ties on shared projected edges are resolved with a half-open fill rule so
    each crossing is counted exactly once for watertight input.
    """
    if not 8 <= resolution <= 512:
        raise ValueError("resolution must be in [8, 512]")
    report = validity(mesh)
    if not report.valid_solid:
        raise InvalidSolid(f"{mesh.name}: voxelization needs a valid solid")

    box = frame if frame is not None else mesh.bbox()
    lo = np.array([box[ax][0] for ax in "xyz"], dtype=np.float64)
    hi = np.array([box[ax][1] for ax in "xyz"], dtype=np.float64)
    nx, ny, nz = grid_dims(lo, hi, resolution)
    cell = (hi - lo) / np.array([nx, ny, nz], dtype=np.float64)

    ys = lo[1] + (np.arange(ny) + 0.5) * cell[1]
    zs = lo[2] + (np.arange(nz) + 0.5) * cell[2]
    xs = lo[0] + (np.arange(nx) + 0.5) * cell[0]

    a, b, c = mesh.triangle_corners()
    occupied = np.zeros((nx, ny, nz), dtype=bool)

    # Collect (ray index, x crossing) pairs triangle by triangle.
    ray_ids: list[np.ndarray] = []
    ray_xs: list[np.ndarray] = []
    for t in range(mesh.num_triangles):
        p = np.array([a[t], b[t], c[t]])  # (3, 3)
        # project to the (y, z) plane; normalize winding to CCW
        py = p[:, 1]
        pz = p[:, 2]
        area2 = (py[1] - py[0]) * (pz[2] - pz[0]) - (pz[1] - pz[0]) * (py[2] - py[0])
        if area2 == 0.0:
            continue  # edge-on to the ray direction: tangent, no crossing
        if area2 < 0:
            p = p[[0, 2, 1]]
            py = p[:, 1]
            pz = p[:, 2]
            area2 = -area2

        j0 = np.searchsorted(ys, min(py) - 1e-12, side="left")
        j1 = np.searchsorted(ys, max(py) + 1e-12, side="right")
        k0 = np.searchsorted(zs, min(pz) - 1e-12, side="left")
        k1 = np.searchsorted(zs, max(pz) + 1e-12, side="right")
        if j0 >= j1 or k0 >= k1:
            continue
        yy, zz = np.meshgrid(ys[j0:j1], zs[k0:k1], indexing="ij")
        yy = yy.ravel()
        zz = zz.ravel()

        inside = np.ones(yy.shape, dtype=bool)
        w = np.zeros((3, yy.shape[0]))
        for e in range(3):
            y0, z0 = py[e], pz[e]
            y1, z1 = py[(e + 1) % 3], pz[(e + 1) % 3]
            s = (y1 - y0) * (zz - z0) - (z1 - z0) * (yy - y0)
            # half-open rule: points exactly on an edge belong to the triangle
            # whose edge is "top or left" in the projected plane
            dy, dz = y1 - y0, z1 - z0
            top_left = (dz < 0) or (dz == 0 and dy < 0)
            inside &= (s > 0) | ((s == 0) & top_left)
            w[e] = s
        if not inside.any():
            continue
        wsum = w[0] + w[1] + w[2]
        # barycentric interp of x at the ray location (weights are opposite-edge areas)
        x_hit = (w[1] * p[0, 0] + w[2] * p[1, 0] + w[0] * p[2, 0]) / wsum
        jk = (np.repeat(np.arange(j0, j1), k1 - k0) * nz + np.tile(np.arange(k0, k1), j1 - j0))
        ray_ids.append(jk[inside])
        ray_xs.append(x_hit[inside])

    if ray_ids:
        rid = np.concatenate(ray_ids)
        rx = np.concatenate(ray_xs)
        order = np.lexsort((rx, rid))
        rid = rid[order]
        rx = rx[order]
        starts = np.searchsorted(rid, np.arange(ny * nz), side="left")
        ends = np.searchsorted(rid, np.arange(ny * nz), side="right")
        for ray in np.unique(rid):
            j, k = divmod(int(ray), nz)
            crossings = rx[starts[ray]:ends[ray]]
            # parity fill between successive crossings
            for m in range(0, len(crossings) - 1, 2):
                x_lo, x_hi = crossings[m], crossings[m + 1]
                i0 = np.searchsorted(xs, x_lo, side="left")
                i1 = np.searchsorted(xs, x_hi, side="left")
                if i1 > i0:
                    occupied[i0:i1, j, k] = True
    return OccupancyGrid(origin=lo, cell=cell, occupied=occupied)


def dump_obj(mesh: TriMesh, path: str | Path) -> None:
    """Debug-only OBJ writer."""
    lines = [f"o {mesh.name}"]
    for v in mesh.vertices:
        lines.append(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}")
    for t in mesh.triangles:
        lines.append(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
