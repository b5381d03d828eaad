/**
 * The `cad` object handed to user scripts.
 *
 * A script exports one function and receives this API:
 *
 *   module.exports = (cad) => {
 *     const body = cad.box({ dx: 10, dy: 10, dz: 10 });
 *     cad.exportSolid("body", body);
 *     cad.setDensity(7850);
 *     cad.declare("tube_OD_mm", 25.4, { unit: "mm", scope: "design" });
 *     cad.alias("primary tube OD (mm)", "tube_OD_mm");
 *   };
 *
 * Everything the script exports or declares lands in the harness artifact
 * manifest; nothing else escapes the sandbox.
 */

import { BoxParams, CylinderParams, Solid, box, cylinder } from "./geometry";

export interface DeclaredMeasurement {
  metric: string;
  value: number;
  unit: string;
  scope: string;
}

export interface ExportedSolid {
  name: string;
  solid: Solid;
}

export interface Collected {
  solids: ExportedSolid[];
  declared: DeclaredMeasurement[];
  aliases: Record<string, string>;
  densityKgM3?: number;
  projectionAxis: string;
}

export interface CadApi {
  box(params: BoxParams): Solid;
  cylinder(params: CylinderParams): Solid;
  exportSolid(name: string, solid: Solid): void;
  declare(metric: string, value: number, opts?: { unit?: string; scope?: string }): void;
  alias(from: string, to: string): void;
  setDensity(kgPerM3: number): void;
  setProjectionAxis(axis: string): void;
}

export function makeApi(): { api: CadApi; collected: Collected } {
  const collected: Collected = { solids: [], declared: [], aliases: {}, projectionAxis: "z" };
  const seen = new Set<string>();
  const api: CadApi = {
    box,
    cylinder,
    exportSolid(name, solid) {
      if (!name || seen.has(name)) {
        throw new Error(`exportSolid needs a unique nonempty name, got ${JSON.stringify(name)}`);
      }
      if (!solid || typeof solid !== "object" || !("kind" in solid)) {
        throw new Error("exportSolid expects a solid built by this API");
      }
      seen.add(name);
      collected.solids.push({ name, solid });
    },
    declare(metric, value, opts) {
      if (!metric || !Number.isFinite(value)) {
        throw new Error("declare needs a metric name and a finite value");
      }
      collected.declared.push({
        metric,
        value,
        unit: opts?.unit ?? "",
        scope: opts?.scope ?? "design",
      });
    },
    alias(from, to) {
      if (!from || !to) {
        throw new Error("alias needs two nonempty names");
      }
      collected.aliases[from] = to;
    },
    setDensity(kgPerM3) {
      if (!(kgPerM3 > 0)) {
        throw new Error("density must be positive");
      }
      collected.densityKgM3 = kgPerM3;
    },
    setProjectionAxis(axis) {
      if (!["x", "y", "z"].includes(axis)) {
        throw new Error(`projection axis must be x, y, or z, got ${JSON.stringify(axis)}`);
      }
      collected.projectionAxis = axis;
    },
  };
  return { api, collected };
}
