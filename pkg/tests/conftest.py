import math
import struct

import numpy as np
import pytest

from heph.mesh import TriMesh

BOX_TRIS = [(0, 2, 1), (0, 3, 2), (4, 5, 6), (4, 6, 7), (1, 2, 6), (1, 6, 5),
            (0, 4, 7), (0, 7, 3), (0, 1, 5), (0, 5, 4), (3, 7, 6), (3, 6, 2)]


def make_box(dx=1.0, dy=1.0, dz=1.0, origin=(0.0, 0.0, 0.0), name="box"):
    x0, y0, z0 = origin
    v = np.array([
        [x0, y0, z0], [x0 + dx, y0, z0], [x0 + dx, y0 + dy, z0], [x0, y0 + dy, z0],
        [x0, y0, z0 + dz], [x0 + dx, y0, z0 + dz], [x0 + dx, y0 + dy, z0 + dz], [x0, y0 + dy, z0 + dz],
    ], dtype=np.float64)
    t = np.array(BOX_TRIS, dtype=np.int64)
    return TriMesh(vertices=v, triangles=t, body_id=np.zeros(len(t), dtype=np.int64),
                   name=name, body_names=[name])


def make_sphere(radius=1.0, n_theta=24, n_phi=48, center=(0.0, 0.0, 0.0), name="sphere"):
    """Watertight UV sphere with consistent outward orientation."""
    cx, cy, cz = center
    verts = [(cx, cy, cz + radius), (cx, cy, cz - radius)]
    rings = []
    for i in range(1, n_theta):
        theta = math.pi * i / n_theta
        ring = []
        for j in range(n_phi):
            phi = 2 * math.pi * j / n_phi
            ring.append(len(verts))
            verts.append((cx + radius * math.sin(theta) * math.cos(phi),
                          cy + radius * math.sin(theta) * math.sin(phi),
                          cz + radius * math.cos(theta)))
        rings.append(ring)
    tris = []
    top, bottom = 0, 1
    first = rings[0]
    for j in range(n_phi):
        tris.append((top, first[j], first[(j + 1) % n_phi]))
    for i in range(len(rings) - 1):
        a, b = rings[i], rings[i + 1]
        for j in range(n_phi):
            j2 = (j + 1) % n_phi
            tris.append((a[j], b[j], b[j2]))
            tris.append((a[j], b[j2], a[j2]))
    last = rings[-1]
    for j in range(n_phi):
        tris.append((bottom, last[(j + 1) % n_phi], last[j]))
    t = np.array(tris, dtype=np.int64)
    return TriMesh(vertices=np.array(verts), triangles=t,
                   body_id=np.zeros(len(t), dtype=np.int64), name=name, body_names=[name])


def write_binary_stl(path, mesh: TriMesh):
    a, b, c = mesh.triangle_corners()
    n = np.cross(b - a, c - a)
    lens = np.linalg.norm(n, axis=1)
    lens[lens == 0] = 1.0
    n = n / lens[:, None]
    with open(path, "wb") as fh:
        fh.write(b"\0" * 80)
        fh.write(struct.pack("<I", mesh.num_triangles))
        for i in range(mesh.num_triangles):
            fh.write(struct.pack("<3f", *n[i]))
            fh.write(struct.pack("<9f", *a[i], *b[i], *c[i]))
            fh.write(struct.pack("<H", 0))
    return path


def write_ascii_stl(path, mesh: TriMesh):
    a, b, c = mesh.triangle_corners()
    lines = [f"solid {mesh.name}"]
    for i in range(mesh.num_triangles):
        lines.append("  facet normal 0 0 0")
        lines.append("    outer loop")
        for p in (a[i], b[i], c[i]):
            lines.append(f"      vertex {p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
        lines.append("    endloop")
        lines.append("  endfacet")
    lines.append(f"endsolid {mesh.name}")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture
def unit_cube():
    return make_box()


@pytest.fixture
def sphere():
    return make_sphere()
