/** Binary STL writer (80-byte header, uint32 count, 50-byte facet records). */

import { Triangle, Vec3 } from "./geometry";

function normal(tri: Triangle): Vec3 {
  const [a, b, c] = tri;
  const u: Vec3 = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
  const v: Vec3 = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
  const n: Vec3 = [
    u[1] * v[2] - u[2] * v[1],
    u[2] * v[0] - u[0] * v[2],
    u[0] * v[1] - u[1] * v[0],
  ];
  const len = Math.hypot(n[0], n[1], n[2]) || 1;
  return [n[0] / len, n[1] / len, n[2] / len];
}

export function encodeBinaryStl(tris: Triangle[], comment = "cadrunner"): Buffer {
  const buf = Buffer.alloc(84 + 50 * tris.length);
  buf.write(comment.slice(0, 79), 0, "ascii");
  buf.writeUInt32LE(tris.length, 80);
  let off = 84;
  for (const tri of tris) {
    const n = normal(tri);
    for (const v of [n, ...tri]) {
      buf.writeFloatLE(v[0], off);
      buf.writeFloatLE(v[1], off + 4);
      buf.writeFloatLE(v[2], off + 8);
      off += 12;
    }
    buf.writeUInt16LE(0, off);
    off += 2;
  }
  return buf;
}

export function decodeBinaryStl(buf: Buffer): Triangle[] {
  const count = buf.readUInt32LE(80);
  const tris: Triangle[] = [];
  let off = 84;
  for (let i = 0; i < count; i++) {
    off += 12; // skip normal
    const tri: Vec3[] = [];
    for (let k = 0; k < 3; k++) {
      tri.push([buf.readFloatLE(off), buf.readFloatLE(off + 4), buf.readFloatLE(off + 8)]);
      off += 12;
    }
    off += 2;
    tris.push(tri as Triangle);
  }
  return tris;
}
