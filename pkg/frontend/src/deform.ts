/**
 * Deformation state: rest vertices plus per-handle displacement fields.
 *
 * The n x c weight product with each handle's offsets is paid once at load;
 * after that a slider move is one scalar-times-vector update, which is what
 * keeps interaction latency flat in the control count.
 */

import type { Bundle } from "./bundle.js";

export class DeformState {
  readonly n: number;
  readonly m: number;
  readonly rest: Float64Array;
  /** per-handle vertex displacement field, each (n*3) */
  readonly fields: Float64Array[];
  /** current coefficients, one per handle */
  readonly coefficients: Float64Array;
  /** current displayed positions, double precision */
  readonly positions: Float64Array;
  /** same positions quantized for GPU upload, maintained in lockstep */
  readonly positionsF32: Float32Array;

  constructor(bundle: Bundle) {
    const { n, c, m } = bundle;
    this.n = n;
    this.m = m;
    this.rest = bundle.vertices.slice();
    this.coefficients = new Float64Array(m);
    this.positions = bundle.vertices.slice();
    this.positionsF32 = Float32Array.from(this.positions);

    this.fields = [];
    const W = bundle.coordinates;
    const H = bundle.metaHandles;
    for (let h = 0; h < m; h++) {
      const field = new Float64Array(n * 3);
      const base = h * c * 3;
      for (let v = 0; v < n; v++) {
        let x = 0;
        let y = 0;
        let z = 0;
        const row = v * c;
        for (let k = 0; k < c; k++) {
          const w = W[row + k];
          x += w * H[base + k * 3];
          y += w * H[base + k * 3 + 1];
          z += w * H[base + k * 3 + 2];
        }
        field[v * 3] = x;
        field[v * 3 + 1] = y;
        field[v * 3 + 2] = z;
      }
      this.fields.push(field);
    }
  }

  /** Move one handle; positions update incrementally. */
  setCoefficient(handle: number, value: number): void {
    const delta = value - this.coefficients[handle];
    if (delta === 0) return;
    this.coefficients[handle] = value;
    const field = this.fields[handle];
    const pos = this.positions;
    const pos32 = this.positionsF32;
    for (let i = 0; i < pos.length; i++) {
      const p = pos[i] + delta * field[i];
      pos[i] = p;
      pos32[i] = p;
    }
  }

  /** Back to the exact rest pose (bit-equal, no residue from increments). */
  reset(): void {
    this.coefficients.fill(0);
    this.positions.set(this.rest);
    this.positionsF32.set(this.rest);
  }

  /** positions recomputed from scratch; the incremental path must agree. */
  recompute(): Float64Array {
    const out = this.rest.slice();
    for (let h = 0; h < this.m; h++) {
      const a = this.coefficients[h];
      if (a === 0) continue;
      const field = this.fields[h];
      for (let i = 0; i < out.length; i++) out[i] += a * field[i];
    }
    return out;
  }
}
