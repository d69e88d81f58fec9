/** WebGL point renderer plus orbit/pan/zoom controls and the lasso overlay.
 * Uses the same camera math as the selection module, so lasso hits are
 * exactly what is on screen. Candidates draw at 3x the reference size and
 * labeled ones tint by class. */

import { Camera, viewProjection } from './projection.js';
import { classColor } from './palette.js';
import { Cloud } from './sqnc.js';
import { AnnotationSession, UNLABELED } from './session.js';
import { ScreenPolygon } from './selection.js';

const VERT = `#version 300 es
uniform mat4 uMvp;
uniform float uSize;
in vec3 aPos;
in vec3 aColor;
in float aBoost;
out vec3 vColor;
void main() {
  gl_Position = uMvp * vec4(aPos, 1.0);
  gl_PointSize = uSize * (1.0 + 2.0 * aBoost);
  vColor = aColor;
}`;

const FRAG = `#version 300 es
precision mediump float;
in vec3 vColor;
uniform float uAlpha;
out vec4 color;
void main() {
  vec2 d = gl_PointCoord - vec2(0.5);
  if (dot(d, d) > 0.25) discard;
  color = vec4(vColor, uAlpha);
}`;

interface PointBatch {
  vao: WebGLVertexArrayObject;
  colorBuffer: WebGLBuffer;
  count: number;
  size: number;
  alpha: number;
}

export class Viewer {
  readonly camera: Camera;
  private gl: WebGL2RenderingContext;
  private program: WebGLProgram;
  private batches: PointBatch[] = [];
  private candidateBatch: PointBatch | null = null;
  private lasso: ScreenPolygon = [];
  lassoActive = false;

  constructor(readonly canvas: HTMLCanvasElement, center: [number, number, number], radius: number) {
    const gl = canvas.getContext('webgl2');
    if (!gl) throw new Error('WebGL2 unavailable');
    this.gl = gl;
    this.program = compile(gl, VERT, FRAG);
    this.camera = {
      position: [center[0] + radius, center[1] - radius * 1.2, center[2] + radius],
      target: center,
      up: [0, 0, 1],
      fovY: Math.PI / 4,
      aspect: canvas.width / canvas.height,
      near: 0.05,
      far: radius * 40,
    };
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.07, 0.08, 0.1, 1);
  }

  addCloud(cloud: Cloud, size: number, alpha: number, boost = 0): PointBatch {
    const gl = this.gl;
    const vao = gl.createVertexArray()!;
    gl.bindVertexArray(vao);

    const posBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, posBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, cloud.positions, gl.STATIC_DRAW);
    gl.enableVertexAttribArray(0);
    gl.vertexAttribPointer(0, 3, gl.FLOAT, false, 0, 0);

    const colors = new Uint8Array(cloud.n * 3);
    if (cloud.colors) colors.set(cloud.colors);
    else colors.fill(200);
    const colorBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, colorBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, colors, gl.DYNAMIC_DRAW);
    gl.enableVertexAttribArray(1);
    gl.vertexAttribPointer(1, 3, gl.UNSIGNED_BYTE, true, 0, 0);

    const boosts = new Float32Array(cloud.n).fill(boost);
    const boostBuffer = gl.createBuffer()!;
    gl.bindBuffer(gl.ARRAY_BUFFER, boostBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, boosts, gl.STATIC_DRAW);
    gl.enableVertexAttribArray(2);
    gl.vertexAttribPointer(2, 1, gl.FLOAT, false, 0, 0);

    const batch: PointBatch = { vao, colorBuffer, count: cloud.n, size, alpha };
    this.batches.push(batch);
    return batch;
  }

  setReference(cloud: Cloud): void {
    this.addCloud(cloud, 2.0, 0.35);
  }

  setCandidates(cloud: Cloud): void {
    // enlarged: at least 3x the reference point size
    this.candidateBatch = this.addCloud(cloud, 6.0, 1.0, 1.0);
  }

  /** Recolor candidates from session label state (palette tint when labeled). */
  refreshCandidateColors(cloud: Cloud, session: AnnotationSession, numClasses: number): void {
    if (!this.candidateBatch) return;
    const colors = new Uint8Array(cloud.n * 3);
    for (let i = 0; i < cloud.n; i++) {
      const cls = session.labelOf(i);
      if (cls === UNLABELED) {
        colors[3 * i] = 235; colors[3 * i + 1] = 235; colors[3 * i + 2] = 235;
      } else {
        const [r, g, b] = classColor(cls, numClasses);
        colors[3 * i] = r; colors[3 * i + 1] = g; colors[3 * i + 2] = b;
      }
    }
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.candidateBatch.colorBuffer);
    gl.bufferSubData(gl.ARRAY_BUFFER, 0, colors);
  }

  draw(): void {
    const gl = this.gl;
    this.camera.aspect = this.canvas.width / this.canvas.height;
    gl.viewport(0, 0, this.canvas.width, this.canvas.height);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    gl.useProgram(this.program);
    const mvp = viewProjection(this.camera);
    const loc = gl.getUniformLocation(this.program, 'uMvp');
    gl.uniformMatrix4fv(loc, false, new Float32Array(mvp));
    for (const batch of this.batches) {
      gl.uniform1f(gl.getUniformLocation(this.program, 'uSize'), batch.size);
      gl.uniform1f(gl.getUniformLocation(this.program, 'uAlpha'), batch.alpha);
      gl.bindVertexArray(batch.vao);
      gl.drawArrays(gl.POINTS, 0, batch.count);
    }
  }

  // --- lasso overlay -------------------------------------------------

  beginLasso(): void {
    this.lasso = [];
    this.lassoActive = true;
  }

  extendLasso(x: number, y: number): void {
    if (this.lassoActive) this.lasso.push([x, y]);
  }

  finishLasso(): ScreenPolygon {
    this.lassoActive = false;
    const polygon = this.lasso;
    this.lasso = [];
    return polygon;
  }

  drawLassoOverlay(ctx: CanvasRenderingContext2D): void {
    ctx.clearRect(0, 0, ctx.canvas.width, ctx.canvas.height);
    if (!this.lassoActive || this.lasso.length < 2) return;
    ctx.strokeStyle = '#ffcf40';
    ctx.lineWidth = 1.5;
    ctx.beginPath();
    ctx.moveTo(this.lasso[0][0], this.lasso[0][1]);
    for (const [x, y] of this.lasso.slice(1)) ctx.lineTo(x, y);
    ctx.closePath();
    ctx.stroke();
  }

  // --- orbit / pan / zoom ----------------------------------------------

  orbit(dx: number, dy: number): void {
    const cam = this.camera;
    const off: [number, number, number] = [
      cam.position[0] - cam.target[0],
      cam.position[1] - cam.target[1],
      cam.position[2] - cam.target[2],
    ];
    const radius = Math.hypot(...off);
    let azimuth = Math.atan2(off[1], off[0]) - dx * 0.008;
    let polar = Math.acos(Math.min(1, Math.max(-1, off[2] / radius))) - dy * 0.008;
    polar = Math.min(Math.PI - 0.05, Math.max(0.05, polar));
    cam.position = [
      cam.target[0] + radius * Math.sin(polar) * Math.cos(azimuth),
      cam.target[1] + radius * Math.sin(polar) * Math.sin(azimuth),
      cam.target[2] + radius * Math.cos(polar),
    ];
  }

  pan(dx: number, dy: number): void {
    const cam = this.camera;
    const scale = Math.hypot(
      cam.position[0] - cam.target[0],
      cam.position[1] - cam.target[1],
      cam.position[2] - cam.target[2],
    ) * 0.0015;
    // move target in the screen plane
    const fwd = [
      cam.target[0] - cam.position[0],
      cam.target[1] - cam.position[1],
      cam.target[2] - cam.position[2],
    ];
    const len = Math.hypot(fwd[0], fwd[1], fwd[2]) || 1;
    const f = fwd.map((v) => v / len);
    const right = [f[1] * cam.up[2] - f[2] * cam.up[1], f[2] * cam.up[0] - f[0] * cam.up[2], f[0] * cam.up[1] - f[1] * cam.up[0]];
    const up = [right[1] * f[2] - right[2] * f[1], right[2] * f[0] - right[0] * f[2], right[0] * f[1] - right[1] * f[0]];
    for (let i = 0; i < 3; i++) {
      const shift = (-dx * right[i] + dy * up[i]) * scale;
      cam.position[i] += shift;
      cam.target[i] += shift;
    }
  }

  zoom(factor: number): void {
    const cam = this.camera;
    for (let i = 0; i < 3; i++) {
      cam.position[i] = cam.target[i] + (cam.position[i] - cam.target[i]) * factor;
    }
  }
}

function compile(gl: WebGL2RenderingContext, vert: string, frag: string): WebGLProgram {
  const make = (type: number, src: string) => {
    const shader = gl.createShader(type)!;
    gl.shaderSource(shader, src);
    gl.compileShader(shader);
    if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
      throw new Error(`shader: ${gl.getShaderInfoLog(shader)}`);
    }
    return shader;
  };
  const program = gl.createProgram()!;
  gl.attachShader(program, make(gl.VERTEX_SHADER, vert));
  gl.attachShader(program, make(gl.FRAGMENT_SHADER, frag));
  gl.bindAttribLocation(program, 0, 'aPos');
  gl.bindAttribLocation(program, 1, 'aColor');
  gl.bindAttribLocation(program, 2, 'aBoost');
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(`program: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}
