// Client side of the edit-server protocol: JSON control messages out,
// binary geometry frames in. Shared by the browser UI and headless scripts.

export type Matrix34 = number[]; // 3x4 row-major [linear | translation]
export type Vec3 = [number, number, number];
export type BlendMode = "literal" | "displacement" | "pou";

export interface Message {
  type: string;
  [key: string]: unknown;
}

export const messages = {
  load: (meshPath: string, fieldPath: string): Message => ({ type: "load", mesh_path: meshPath, field_path: fieldPath }),
  addHandle: (vertex: number, matrix?: Matrix34): Message =>
    matrix ? { type: "add_handle", vertex, matrix } : { type: "add_handle", vertex },
  updateHandle: (id: number, matrix: Matrix34): Message => ({ type: "update_handle", id, matrix }),
  removeHandle: (id: number): Message => ({ type: "remove_handle", id }),
  setAnchors: (vertices: number[]): Message => ({ type: "set_anchors", vertices }),
  setLambda: (value: number): Message => ({ type: "set_lambda", value }),
  setMode: (mode: BlendMode): Message => ({ type: "set_mode", mode }),
  symmetryAuto: (): Message => ({ type: "symmetry", mode: "auto" }),
  symmetryOff: (): Message => ({ type: "symmetry", mode: "off" }),
  symmetryPlane: (normal: Vec3, offset: number, force = false): Message =>
    ({ type: "symmetry", mode: "plane", normal, offset, force }),
  queryWeights: (handleId: number): Message => ({ type: "query_weights", handle_id: handleId }),
  snapshot: (path: string): Message => ({ type: "snapshot", path }),
  restore: (path: string): Message => ({ type: "restore", path }),
};

export const identity = (): Matrix34 => [1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0];

export function translation(t: Vec3): Matrix34 {
  return [1, 0, 0, t[0], 0, 1, 0, t[1], 0, 0, 1, t[2]];
}

// a after b.
export function compose(a: Matrix34, b: Matrix34): Matrix34 {
  const out: Matrix34 = new Array(12).fill(0);
  for (let r = 0; r < 3; ++r) {
    for (let c = 0; c < 4; ++c) {
      let s = c === 3 ? a[4 * r + 3] : 0;
      for (let k = 0; k < 3; ++k) s += a[4 * r + k] * b[4 * k + c];
      out[4 * r + c] = s;
    }
  }
  return out;
}

export function apply(m: Matrix34, p: Vec3): Vec3 {
  const out: Vec3 = [0, 0, 0];
  for (let r = 0; r < 3; ++r) out[r] = m[4 * r] * p[0] + m[4 * r + 1] * p[1] + m[4 * r + 2] * p[2] + m[4 * r + 3];
  return out;
}

// Rodrigues rotation about a unit axis through `pivot`, as one global affine.
export function rotationAbout(axis: Vec3, radians: number, pivot: Vec3): Matrix34 {
  const n = Math.hypot(axis[0], axis[1], axis[2]);
  const [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
  const c = Math.cos(radians), s = Math.sin(radians), t = 1 - c;
  const r = [
    t * x * x + c, t * x * y - s * z, t * x * z + s * y,
    t * x * y + s * z, t * y * y + c, t * y * z - s * x,
    t * x * z - s * y, t * y * z + s * x, t * z * z + c,
  ];
  const m: Matrix34 = [r[0], r[1], r[2], 0, r[3], r[4], r[5], 0, r[6], r[7], r[8], 0];
  const rp = apply(m, pivot);
  m[3] = pivot[0] - rp[0];
  m[7] = pivot[1] - rp[1];
  m[11] = pivot[2] - rp[2];
  return m;
}

export function scaleAbout(factor: number, pivot: Vec3): Matrix34 {
  return [factor, 0, 0, pivot[0] * (1 - factor), 0, factor, 0, pivot[1] * (1 - factor),
    0, 0, factor, pivot[2] * (1 - factor)];
}

export interface GeometryFrame {
  revision: bigint;
  vertices: Float32Array; // 3n, xyz interleaved
}

// u64 revision, u64 n, 3n float32, little-endian.
export function decodeFrame(buffer: ArrayBuffer): GeometryFrame {
  if (buffer.byteLength < 16) throw new Error("geometry frame shorter than its header");
  const view = new DataView(buffer);
  const revision = view.getBigUint64(0, true);
  const n = view.getBigUint64(8, true);
  if (BigInt(buffer.byteLength) !== 16n + 12n * n) throw new Error("geometry frame length does not match its vertex count");
  const count = Number(n) * 3;
  const vertices = new Float32Array(count);
  for (let i = 0; i < count; ++i) vertices[i] = view.getFloat32(16 + 4 * i, true);
  return { revision, vertices };
}

// Keeps the freshest geometry; stale or duplicate revisions are dropped and
// the vertex buffer is reused.
export class GeometryState {
  revision = -1n;
  readonly vertices: Float32Array;

  constructor(rest: Float32Array) {
    this.vertices = Float32Array.from(rest);
  }

  apply(frame: GeometryFrame): boolean {
    if (frame.revision <= this.revision) return false;
    if (frame.vertices.length !== this.vertices.length) throw new Error("frame vertex count differs from the mesh");
    this.vertices.set(frame.vertices);
    this.revision = frame.revision;
    return true;
  }
}

// Drag updates: at most one send per 1/rate seconds, always ending with the
// latest pending matrix.
export class UpdateThrottle {
  private last = -Infinity;
  private pending: Message | null = null;

  constructor(private readonly send: (m: Message) => void, private readonly rate = 60,
              private readonly now: () => number = () => Date.now()) {}

  push(message: Message): void {
    this.pending = message;
    this.flush(false);
  }

  // Call from an animation tick; `force` sends immediately (drag end).
  flush(force = true): void {
    if (!this.pending) return;
    const t = this.now();
    if (!force && t - this.last < 1000 / this.rate) return;
    this.last = t;
    const m = this.pending;
    this.pending = null;
    this.send(m);
  }
}

// Weight heatmap: 0 -> blue, 1 -> red.
export function heatColor(w: number): Vec3 {
  const t = Math.min(Math.max(w, 0), 1);
  return [t, 0, 1 - t];
}

export function nearestVertex(rest: Float32Array, p: Vec3): number {
  let best = -1, bestD = Infinity;
  for (let i = 0; i < rest.length / 3; ++i) {
    const d = (rest[3 * i] - p[0]) ** 2 + (rest[3 * i + 1] - p[1]) ** 2 + (rest[3 * i + 2] - p[2]) ** 2;
    if (d < bestD) {
      bestD = d;
      best = i;
    }
  }
  return best;
}
