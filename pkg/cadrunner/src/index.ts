export { BoxParams, CylinderParams, Solid, Triangle, Vec3, box, cylinder, meshVolume,
         segmentsForDeflection, tessellate, tessellatedVolume } from "./geometry";
export { decodeBinaryStl, encodeBinaryStl } from "./stl";
export { CadApi, Collected, DeclaredMeasurement, makeApi } from "./api";
export { DEFAULT_DEFLECTION_MM, DEFAULT_ENV_ALLOWLIST, KILL_GRACE_S, RunnerError,
         RunnerJob, RunnerResult, execute } from "./runner";
