/**
 * WebGL2 renderer: one mesh, optional wireframe overlay and control-point
 * markers, orbit camera. Flat shading comes from screen-space derivatives so
 * position updates are the only per-interaction upload.
 */

const MESH_VS = `#version 300 es
in vec3 position;
in float highlight;
uniform mat4 uProj;
uniform mat4 uView;
out vec3 vView;
out float vHl;
void main() {
  vec4 view = uView * vec4(position, 1.0);
  vView = view.xyz;
  vHl = highlight;
  gl_Position = uProj * view;
}`;

const MESH_FS = `#version 300 es
precision highp float;
in vec3 vView;
in float vHl;
uniform vec3 uBase;
uniform vec3 uAccent;
out vec4 color;
void main() {
  vec3 normal = normalize(cross(dFdx(vView), dFdy(vView)));
  float diffuse = clamp(dot(normal, normalize(-vView)), 0.0, 1.0);
  vec3 albedo = mix(uBase, uAccent, clamp(vHl, 0.0, 1.0));
  color = vec4(albedo * (0.25 + 0.75 * diffuse), 1.0);
}`;

const FLAT_VS = `#version 300 es
in vec3 position;
uniform mat4 uProj;
uniform mat4 uView;
uniform float uPointSize;
void main() {
  gl_Position = uProj * uView * vec4(position, 1.0);
  gl_PointSize = uPointSize;
}`;

const FLAT_FS = `#version 300 es
precision highp float;
uniform vec4 uColor;
out vec4 color;
void main() { color = uColor; }`;

export interface DisplayOptions {
  wireframe: boolean;
  markers: boolean;
  /** index of the handle whose field is color-coded, or -1 for none */
  coloredHandle: number;
}

function compile(gl: WebGL2RenderingContext, vsSrc: string, fsSrc: string): WebGLProgram {
  const make = (type: number, src: string) => {
    const shader = gl.createShader(type)!;
    gl.shaderSource(shader, src);
    gl.compileShader(shader);
    if (!gl.getShaderParameter(shader, gl.COMPILE_STATUS)) {
      throw new Error(`shader compile failed: ${gl.getShaderInfoLog(shader)}`);
    }
    return shader;
  };
  const program = gl.createProgram()!;
  gl.attachShader(program, make(gl.VERTEX_SHADER, vsSrc));
  gl.attachShader(program, make(gl.FRAGMENT_SHADER, fsSrc));
  gl.linkProgram(program);
  if (!gl.getProgramParameter(program, gl.LINK_STATUS)) {
    throw new Error(`program link failed: ${gl.getProgramInfoLog(program)}`);
  }
  return program;
}

function perspective(fovY: number, aspect: number, near: number, far: number): Float32Array {
  const f = 1 / Math.tan(fovY / 2);
  const out = new Float32Array(16);
  out[0] = f / aspect;
  out[5] = f;
  out[10] = (far + near) / (near - far);
  out[11] = -1;
  out[14] = (2 * far * near) / (near - far);
  return out;
}

function orbitView(yaw: number, pitch: number, dist: number, target: Float32Array): Float32Array {
  const cy = Math.cos(yaw);
  const sy = Math.sin(yaw);
  const cp = Math.cos(pitch);
  const sp = Math.sin(pitch);
  // camera basis: right, up, back (row-major thinking, stored column-major)
  const right = [cy, 0, -sy];
  const up = [-sy * sp, cp, -cy * sp];
  const back = [sy * cp, sp, cy * cp];
  const eye = [
    target[0] + dist * back[0],
    target[1] + dist * back[1],
    target[2] + dist * back[2],
  ];
  const out = new Float32Array(16);
  out.set([right[0], up[0], back[0], 0], 0);
  out.set([right[1], up[1], back[1], 0], 4);
  out.set([right[2], up[2], back[2], 0], 8);
  out[12] = -(right[0] * eye[0] + right[1] * eye[1] + right[2] * eye[2]);
  out[13] = -(up[0] * eye[0] + up[1] * eye[1] + up[2] * eye[2]);
  out[14] = -(back[0] * eye[0] + back[1] * eye[1] + back[2] * eye[2]);
  out[15] = 1;
  return out;
}

function edgeIndices(faces: Uint32Array): Uint32Array {
  const seen = new Set<number>();
  const edges: number[] = [];
  const push = (a: number, b: number) => {
    const key = a < b ? a * 0x100000 + b : b * 0x100000 + a;
    if (seen.has(key)) return;
    seen.add(key);
    edges.push(a, b);
  };
  for (let f = 0; f < faces.length; f += 3) {
    push(faces[f], faces[f + 1]);
    push(faces[f + 1], faces[f + 2]);
    push(faces[f + 2], faces[f]);
  }
  return Uint32Array.from(edges);
}

export class Renderer {
  private gl: WebGL2RenderingContext;
  private meshProgram: WebGLProgram;
  private flatProgram: WebGLProgram;
  private positionBuffer: WebGLBuffer;
  private highlightBuffer: WebGLBuffer;
  private triBuffer: WebGLBuffer;
  private edgeBuffer: WebGLBuffer;
  private markerBuffer: WebGLBuffer;
  private triCount = 0;
  private edgeCount = 0;
  private markerCount = 0;
  private vertexCount = 0;
  private canvas: HTMLCanvasElement;

  options: DisplayOptions = { wireframe: false, markers: true, coloredHandle: -1 };
  yaw = 0.6;
  pitch = 0.35;
  dist = 3.2;
  target = new Float32Array(3);

  constructor(canvas: HTMLCanvasElement) {
    const gl = canvas.getContext("webgl2");
    if (!gl) throw new Error("WebGL2 is not available in this browser");
    this.gl = gl;
    this.canvas = canvas;
    this.meshProgram = compile(gl, MESH_VS, MESH_FS);
    this.flatProgram = compile(gl, FLAT_VS, FLAT_FS);
    this.positionBuffer = gl.createBuffer()!;
    this.highlightBuffer = gl.createBuffer()!;
    this.triBuffer = gl.createBuffer()!;
    this.edgeBuffer = gl.createBuffer()!;
    this.markerBuffer = gl.createBuffer()!;
    gl.enable(gl.DEPTH_TEST);
    gl.clearColor(0.09, 0.1, 0.12, 1.0);
    this.attachOrbitControls();
  }

  setMesh(positions: Float32Array, faces: Uint32Array, controlIndices: Int32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, positions, gl.DYNAMIC_DRAW);
    gl.bindBuffer(gl.ARRAY_BUFFER, this.highlightBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, new Float32Array(positions.length / 3), gl.STATIC_DRAW);
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.triBuffer);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, faces, gl.STATIC_DRAW);
    const edges = edgeIndices(faces);
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.edgeBuffer);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, edges, gl.STATIC_DRAW);
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.markerBuffer);
    gl.bufferData(gl.ELEMENT_ARRAY_BUFFER, Uint32Array.from(controlIndices), gl.STATIC_DRAW);
    this.triCount = faces.length;
    this.edgeCount = edges.length;
    this.markerCount = controlIndices.length;
    this.vertexCount = positions.length / 3;
  }

  updatePositions(positions: Float32Array): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.bufferSubData(gl.ARRAY_BUFFER, 0, positions);
  }

  /** Per-vertex scalar in [0, 1]; drives the accent mix of the active handle. */
  setHighlight(values: Float32Array | null): void {
    const gl = this.gl;
    gl.bindBuffer(gl.ARRAY_BUFFER, this.highlightBuffer);
    gl.bufferData(gl.ARRAY_BUFFER, values ?? new Float32Array(this.vertexCount), gl.STATIC_DRAW);
  }

  draw(): void {
    const gl = this.gl;
    const dpr = window.devicePixelRatio || 1;
    const w = Math.max(1, Math.floor(this.canvas.clientWidth * dpr));
    const h = Math.max(1, Math.floor(this.canvas.clientHeight * dpr));
    if (this.canvas.width !== w || this.canvas.height !== h) {
      this.canvas.width = w;
      this.canvas.height = h;
    }
    gl.viewport(0, 0, w, h);
    gl.clear(gl.COLOR_BUFFER_BIT | gl.DEPTH_BUFFER_BIT);
    if (this.triCount === 0) return;

    const proj = perspective(0.9, w / h, 0.01, 100);
    const view = orbitView(this.yaw, this.pitch, this.dist, this.target);

    gl.useProgram(this.meshProgram);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.meshProgram, "uProj"), false, proj);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.meshProgram, "uView"), false, view);
    gl.uniform3f(gl.getUniformLocation(this.meshProgram, "uBase"), 0.62, 0.66, 0.74);
    gl.uniform3f(gl.getUniformLocation(this.meshProgram, "uAccent"), 0.95, 0.55, 0.2);
    this.bindPosition(this.meshProgram);
    const hlLoc = gl.getAttribLocation(this.meshProgram, "highlight");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.highlightBuffer);
    gl.enableVertexAttribArray(hlLoc);
    gl.vertexAttribPointer(hlLoc, 1, gl.FLOAT, false, 0, 0);
    gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.triBuffer);
    gl.drawElements(gl.TRIANGLES, this.triCount, gl.UNSIGNED_INT, 0);

    gl.useProgram(this.flatProgram);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.flatProgram, "uProj"), false, proj);
    gl.uniformMatrix4fv(gl.getUniformLocation(this.flatProgram, "uView"), false, view);
    this.bindPosition(this.flatProgram);
    if (this.options.wireframe) {
      gl.uniform4f(gl.getUniformLocation(this.flatProgram, "uColor"), 0.1, 0.1, 0.12, 1);
      gl.uniform1f(gl.getUniformLocation(this.flatProgram, "uPointSize"), 1);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.edgeBuffer);
      gl.drawElements(gl.LINES, this.edgeCount, gl.UNSIGNED_INT, 0);
    }
    if (this.options.markers) {
      gl.uniform4f(gl.getUniformLocation(this.flatProgram, "uColor"), 0.98, 0.83, 0.25, 1);
      gl.uniform1f(gl.getUniformLocation(this.flatProgram, "uPointSize"), 9);
      gl.bindBuffer(gl.ELEMENT_ARRAY_BUFFER, this.markerBuffer);
      gl.drawElements(gl.POINTS, this.markerCount, gl.UNSIGNED_INT, 0);
    }
  }

  private bindPosition(program: WebGLProgram): void {
    const gl = this.gl;
    const loc = gl.getAttribLocation(program, "position");
    gl.bindBuffer(gl.ARRAY_BUFFER, this.positionBuffer);
    gl.enableVertexAttribArray(loc);
    gl.vertexAttribPointer(loc, 3, gl.FLOAT, false, 0, 0);
  }

  private attachOrbitControls(): void {
    let dragging = false;
    let lastX = 0;
    let lastY = 0;
    this.canvas.addEventListener("pointerdown", (ev) => {
      dragging = true;
      lastX = ev.clientX;
      lastY = ev.clientY;
      this.canvas.setPointerCapture(ev.pointerId);
    });
    this.canvas.addEventListener("pointermove", (ev) => {
      if (!dragging) return;
      this.yaw -= (ev.clientX - lastX) * 0.008;
      this.pitch = Math.min(1.5, Math.max(-1.5, this.pitch + (ev.clientY - lastY) * 0.008));
      lastX = ev.clientX;
      lastY = ev.clientY;
    });
    this.canvas.addEventListener("pointerup", () => {
      dragging = false;
    });
    this.canvas.addEventListener("wheel", (ev) => {
      ev.preventDefault();
      this.dist = Math.min(30, Math.max(0.3, this.dist * Math.exp(ev.deltaY * 0.001)));
    });
  }
}
