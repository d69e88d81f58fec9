/** Minimal camera math shared by the renderer and the selection logic, so
 * what you see is exactly what a lasso tests against. Column-major 4x4
 * matrices, y-up perspective camera. */

export type Vec3 = [number, number, number];

export interface Camera {
  position: Vec3;
  target: Vec3;
  up: Vec3;
  fovY: number; // radians
  aspect: number;
  near: number;
  far: number;
}

export type Mat4 = Float64Array; // 16 entries, column-major

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function normalize(a: Vec3): Vec3 {
  const len = Math.hypot(a[0], a[1], a[2]) || 1;
  return [a[0] / len, a[1] / len, a[2] / len];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function lookAt(eye: Vec3, target: Vec3, up: Vec3): Mat4 {
  const z = normalize(sub(eye, target)); // camera looks down -z
  const x = normalize(cross(up, z));
  const y = cross(z, x);
  // prettier-ignore
  return new Float64Array([
    x[0], y[0], z[0], 0,
    x[1], y[1], z[1], 0,
    x[2], y[2], z[2], 0,
    -dot(x, eye), -dot(y, eye), -dot(z, eye), 1,
  ]);
}

export function perspective(fovY: number, aspect: number, near: number, far: number): Mat4 {
  const f = 1 / Math.tan(fovY / 2);
  const m = new Float64Array(16);
  m[0] = f / aspect;
  m[5] = f;
  m[10] = (far + near) / (near - far);
  m[11] = -1;
  m[14] = (2 * far * near) / (near - far);
  return m;
}

export function multiply(a: Mat4, b: Mat4): Mat4 {
  const out = new Float64Array(16);
  for (let col = 0; col < 4; col++) {
    for (let row = 0; row < 4; row++) {
      let sum = 0;
      for (let k = 0; k < 4; k++) {
        sum += a[k * 4 + row] * b[col * 4 + k];
      }
      out[col * 4 + row] = sum;
    }
  }
  return out;
}

export function viewProjection(camera: Camera): Mat4 {
  return multiply(
    perspective(camera.fovY, camera.aspect, camera.near, camera.far),
    lookAt(camera.position, camera.target, camera.up),
  );
}

export interface Projected {
  x: number; // screen px, origin top-left
  y: number;
  depth: number; // NDC z in [-1, 1]
  visible: boolean; // inside frustum (w > 0 and NDC within [-1, 1])
}

export function projectPoint(
  m: Mat4, px: number, py: number, pz: number, width: number, height: number,
): Projected {
  const cx = m[0] * px + m[4] * py + m[8] * pz + m[12];
  const cy = m[1] * px + m[5] * py + m[9] * pz + m[13];
  const cz = m[2] * px + m[6] * py + m[10] * pz + m[14];
  const cw = m[3] * px + m[7] * py + m[11] * pz + m[15];
  if (cw <= 0) {
    return { x: NaN, y: NaN, depth: Infinity, visible: false };
  }
  const ndcX = cx / cw;
  const ndcY = cy / cw;
  const ndcZ = cz / cw;
  return {
    x: (ndcX + 1) * 0.5 * width,
    y: (1 - ndcY) * 0.5 * height,
    depth: ndcZ,
    visible: Math.abs(ndcX) <= 1 && Math.abs(ndcY) <= 1 && Math.abs(ndcZ) <= 1,
  };
}

export function projectAll(
  camera: Camera, positions: Float32Array, width: number, height: number,
): Projected[] {
  const m = viewProjection(camera);
  const out: Projected[] = new Array(positions.length / 3);
  for (let i = 0; i < out.length; i++) {
    out[i] = projectPoint(m, positions[3 * i], positions[3 * i + 1], positions[3 * i + 2], width, height);
  }
  return out;
}
