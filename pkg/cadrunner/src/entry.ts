/**
 * Subprocess entry: runs one user script and writes the artifact.
 *
 * argv: entry.js <script-path> <output-dir> <deflection-mm>
 * Exit codes: 0 ok (even with zero solids; the runner classifies that),
 * 1 script threw. The collected result summary goes to stdout as one JSON
 * line prefixed with CADRUNNER_RESULT: so logs and the marker can share the
 * stream.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { makeApi } from "./api";
import { meshVolume, tessellate } from "./geometry";
import { encodeBinaryStl } from "./stl";

function main(): number {
  const [scriptPath, outputDir, deflectionRaw] = process.argv.slice(2);
  const deflection = Number(deflectionRaw)
  if (!scriptPath || !outputDir || !(deflection > 0)) {
    process.stderr.write("usage: entry.js <script> <output-dir> <deflection-mm>\n");
    return 2;
  }
  const { api, collected } = makeApi();

  // eslint-disable-next-line @typescript-eslint/no-var-requires
  const userModule = require(path.resolve(scriptPath));
  const build = typeof userModule === "function" ? userModule : userModule?.build;
  if (typeof build !== "function") {
    throw new Error("script must export a function (module.exports = (cad) => { ... })");
  }
  build(api);

  fs.mkdirSync(outputDir, { recursive: true });
  const meshes: { file: string; body: string }[] = [];
  let totalVolume = 0;
  for (const { name, solid } of collected.solids) {
    const tris = tessellate(solid, deflection);
    totalVolume += meshVolume(tris);
    const file = `${name}.stl`;
    fs.writeFileSync(path.join(outputDir, file), encodeBinaryStl(tris, name));
    meshes.push({ file, body: name });
  }

  if (meshes.length > 0) {
    // JSON is inside the harness's structured-document subset, so the
    // manifest parses on the Python side unchanged.
    const manifest: Record<string, unknown> = {
      schema: "artifact_manifest/1",
      meshes,
      projection_axis: collected.projectionAxis,
    };
    if (collected.densityKgM3 !== undefined) {
      manifest.density_kg_m3 = collected.densityKgM3;
    }
    if (collected.declared.length) {
      manifest.declared_measurements = collected.declared;
    }
    if (Object.keys(collected.aliases).length) {
      manifest.aliases = collected.aliases;
    }
    fs.writeFileSync(path.join(outputDir, "artifact_manifest.v1"),
      JSON.stringify(manifest, null, 2) + "\n");
  }

  process.stdout.write("CADRUNNER_RESULT:" + JSON.stringify({
    solids: meshes.length,
    total_volume_mm3: totalVolume,
  }) + "\n");
  return 0;
}

try {
  process.exit(main());
} catch (err) {
  const stack = err instanceof Error ? err.stack ?? String(err) : String(err);
  process.stderr.write(stack + "\n");
  process.exit(1);
}
