/**
 * Supervised execution of one CAD script.
 *
 * The script runs under node in a subprocess whose working directory is a
 * fresh empty sandbox; only the job's output directory receives artifacts.
 * The environment is reduced to an allowlist, the wall clock is enforced with
 * SIGKILL, and stdout/stderr are captured into a log file beside the output.
 */

import { spawn } from "node:child_process";
import * as fs from "node:fs";
import * as os from "node:os";
import * as path from "node:path";

export const DEFAULT_DEFLECTION_MM = 0.1;
export const DEFAULT_ENV_ALLOWLIST = ["PATH", "HOME", "LANG", "LC_ALL", "TMPDIR"];
export const KILL_GRACE_S = 2; // contract: killed within limit + grace

export type RunnerErrorKind = "ScriptError" | "TimeoutKilled" | "NoSolidExported";

export class RunnerError extends Error {
  constructor(public kind: RunnerErrorKind, message: string) {
    super(`${kind}: ${message}`);
  }
}

export interface RunnerJob {
  scriptPath: string;
  outputDir: string;
  timeLimitS?: number;
  linearDeflectionMm?: number;
  envAllowlist?: string[];
}

export interface RunnerResult {
  manifestPath: string;
  meshFiles: string[];
  solids: number;
  totalVolumeMm3: number;
  wallTimeS: number;
  logPath: string;
}

function findEntry(): string {
  // compiled layout: dist/runner.js next to dist/entry.js; under vitest the
  // sources run from src/, so fall back to the built entry in dist/
  const candidates = [
    path.join(__dirname, "entry.js"),
    path.join(__dirname, "..", "dist", "entry.js"),
  ];
  for (const candidate of candidates) {
    if (fs.existsSync(candidate)) {
      return candidate;
    }
  }
  throw new Error("entry.js not found; run `npm run build` first");
}

export async function execute(job: RunnerJob): Promise<RunnerResult> {
  if (!fs.existsSync(job.scriptPath)) {
    throw new RunnerError("ScriptError", `script not found: ${job.scriptPath}`);
  }
  const timeLimitS = job.timeLimitS ?? 60;
  const deflection = job.linearDeflectionMm ?? DEFAULT_DEFLECTION_MM;
  const outputDir = path.resolve(job.outputDir);
  fs.mkdirSync(outputDir, { recursive: true });
  const sandbox = fs.mkdtempSync(path.join(os.tmpdir(), "cadrunner-"));
  const logPath = path.join(outputDir, "script_log.txt");

  const allow = job.envAllowlist ?? DEFAULT_ENV_ALLOWLIST;
  const env: Record<string, string> = {};
  for (const key of allow) {
    const value = process.env[key];
    if (value !== undefined) {
      env[key] = value;
    }
  }

  const start = Date.now();
  const child = spawn(process.execPath,
    [findEntry(), path.resolve(job.scriptPath), outputDir, String(deflection)],
    { cwd: sandbox, env, stdio: ["ignore", "pipe", "pipe"], detached: true });

  let output = "";
  child.stdout.on("data", (chunk) => { output += chunk.toString(); });
  child.stderr.on("data", (chunk) => { output += chunk.toString(); });

  let killed = false;
  const timer = setTimeout(() => {
    killed = true;
    try {
      process.kill(-child.pid!, "SIGKILL"); // whole process group
    } catch {
      child.kill("SIGKILL");
    }
  }, timeLimitS * 1000);

  const exitCode: number | null = await new Promise((resolve) => {
    child.on("close", (code) => resolve(code));
    child.on("error", () => resolve(127));
  });
  clearTimeout(timer);
  const wallTimeS = (Date.now() - start) / 1000;

  fs.writeFileSync(logPath, output);
  fs.rmSync(sandbox, { recursive: true, force: true });

  if (killed) {
    throw new RunnerError("TimeoutKilled", `script exceeded ${timeLimitS}s wall clock`);
  }
  if (exitCode !== 0) {
    const tail = output.split("\n").slice(-12).join("\n");
    throw new RunnerError("ScriptError", `exit ${exitCode}\n${tail}`);
  }

  const marker = output.split("\n").find((line) => line.startsWith("CADRUNNER_RESULT:"));
  const summary = marker ? JSON.parse(marker.slice("CADRUNNER_RESULT:".length)) : { solids: 0 };
  if (!summary.solids) {
    throw new RunnerError("NoSolidExported", "script finished without exporting any solid");
  }
  const manifestPath = path.join(outputDir, "artifact_manifest.v1");
  const manifest = JSON.parse(fs.readFileSync(manifestPath, "utf-8"));
  return {
    manifestPath,
    meshFiles: manifest.meshes.map((m: { file: string }) => m.file),
    solids: summary.solids,
    totalVolumeMm3: summary.total_volume_mm3 ?? 0,
    wallTimeS,
    logPath,
  };
}
