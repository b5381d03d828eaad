/**
 * Minimal parametric solids and their tessellation.
 *
 * Solids stay parametric until export; tessellation resolves curved surfaces
 * at a linear deflection (max sagitta, mm). Units are millimetres throughout,
 * matching the harness mesh contract.
 */

export type Vec3 = [number, number, number];
export type Triangle = [Vec3, Vec3, Vec3];
export type Axis = "x" | "y" | "z";

export type Solid =
  | { kind: "box"; dx: number; dy: number; dz: number; at: Vec3 }
  | { kind: "cylinder"; radius: number; height: number; axis: Axis; at: Vec3 };

export interface BoxParams {
  dx: number;
  dy: number;
  dz: number;
  at?: Vec3;
}

export interface CylinderParams {
  radius: number;
  height: number;
  axis?: Axis;
  at?: Vec3; // center of the base circle
}

export function box(params: BoxParams): Solid {
  const { dx, dy, dz } = params;
  if (!(dx > 0 && dy > 0 && dz > 0)) {
    throw new Error(`box dimensions must be positive, got ${dx}x${dy}x${dz}`);
  }
  return { kind: "box", dx, dy, dz, at: params.at ?? [0, 0, 0] };
}

export function cylinder(params: CylinderParams): Solid {
  const { radius, height } = params;
  if (!(radius > 0 && height > 0)) {
    throw new Error(`cylinder radius and height must be positive`);
  }
  return { kind: "cylinder", radius, height, axis: params.axis ?? "z", at: params.at ?? [0, 0, 0] };
}

/** Segments so the chord sagitta stays at or below the deflection. */
export function segmentsForDeflection(radius: number, deflectionMm: number): number {
  const ratio = Math.min(deflectionMm / radius, 0.5);
  const n = Math.ceil(Math.PI / Math.acos(1 - ratio));
  return Math.max(8, n);
}

const AXIS_FRAMES: Record<Axis, { u: Vec3; v: Vec3; w: Vec3 }> = {
  z: { u: [1, 0, 0], v: [0, 1, 0], w: [0, 0, 1] },
  x: { u: [0, 1, 0], v: [0, 0, 1], w: [1, 0, 0] },
  y: { u: [0, 0, 1], v: [1, 0, 0], w: [0, 1, 0] },
};

function add(a: Vec3, b: Vec3): Vec3 {
  return [a[0] + b[0], a[1] + b[1], a[2] + b[2]];
}

function scale(a: Vec3, s: number): Vec3 {
  return [a[0] * s, a[1] * s, a[2] * s];
}

function tessellateBox(s: Solid & { kind: "box" }): Triangle[] {
  const [x0, y0, z0] = s.at;
  const c: Vec3[] = [
    [x0, y0, z0], [x0 + s.dx, y0, z0], [x0 + s.dx, y0 + s.dy, z0], [x0, y0 + s.dy, z0],
    [x0, y0, z0 + s.dz], [x0 + s.dx, y0, z0 + s.dz],
    [x0 + s.dx, y0 + s.dy, z0 + s.dz], [x0, y0 + s.dy, z0 + s.dz],
  ];
  const faces: [number, number, number][] = [
    [0, 2, 1], [0, 3, 2], [4, 5, 6], [4, 6, 7], [1, 2, 6], [1, 6, 5],
    [0, 4, 7], [0, 7, 3], [0, 1, 5], [0, 5, 4], [3, 7, 6], [3, 6, 2],
  ];
  return faces.map(([a, b, d]) => [c[a], c[b], c[d]] as Triangle);
}

function tessellateCylinder(s: Solid & { kind: "cylinder" }, deflectionMm: number): Triangle[] {
  const n = segmentsForDeflection(s.radius, deflectionMm);
  const { u, v, w } = AXIS_FRAMES[s.axis];
  const base = s.at;
  const top = add(base, scale(w, s.height));
  const ring = (center: Vec3, i: number): Vec3 => {
    const t = (2 * Math.PI * i) / n;
    return add(center, add(scale(u, s.radius * Math.cos(t)), scale(v, s.radius * Math.sin(t))));
  };
  const tris: Triangle[] = [];
  for (let i = 0; i < n; i++) {
    const j = (i + 1) % n;
    const b0 = ring(base, i);
    const b1 = ring(base, j);
    const t0 = ring(top, i);
    const t1 = ring(top, j);
    tris.push([b0, b1, t1], [b0, t1, t0]); // wall, outward
    tris.push([base, b1, b0]); // bottom cap faces -w
    tris.push([top, t0, t1]); // top cap faces +w
  }
  return tris;
}

export function tessellate(solid: Solid, deflectionMm: number): Triangle[] {
  switch (solid.kind) {
    case "box":
      return tessellateBox(solid);
    case "cylinder":
      return tessellateCylinder(solid, deflectionMm);
  }
}

/** Signed-tetrahedron volume of a closed triangle soup (mm^3). */
export function meshVolume(tris: Triangle[]): number {
  let total = 0;
  for (const [a, b, c] of tris) {
    total +=
      (a[0] * (b[1] * c[2] - b[2] * c[1]) -
        a[1] * (b[0] * c[2] - b[2] * c[0]) +
        a[2] * (b[0] * c[1] - b[1] * c[0])) / 6;
  }
  return Math.abs(total);
}

/** Closed-form volume of the tessellated (prism) approximation of a solid. */
export function tessellatedVolume(solid: Solid, deflectionMm: number): number {
  if (solid.kind === "box") {
    return solid.dx * solid.dy * solid.dz;
  }
  const n = segmentsForDeflection(solid.radius, deflectionMm);
  return 0.5 * n * solid.radius * solid.radius * Math.sin((2 * Math.PI) / n) * solid.height;
}
