import { describe, expect, it } from "vitest";

import type { Bundle } from "../src/bundle.js";
import { DeformState } from "../src/deform.js";
import { makeRng } from "./helpers.js";

/** Synthetic bundle at the published interaction scale. */
function syntheticBundle(n: number, c: number, m: number): Bundle {
  const rng = makeRng(99);
  const vertices = new Float64Array(n * 3);
  for (let i = 0; i < vertices.length; i++) vertices[i] = rng() * 2 - 1;
  const coordinates = new Float64Array(n * c);
  for (let v = 0; v < n; v++) {
    let sum = 0;
    for (let k = 0; k < c; k++) {
      const w = rng();
      coordinates[v * c + k] = w;
      sum += w;
    }
    for (let k = 0; k < c; k++) coordinates[v * c + k] /= sum;
  }
  const metaHandles = new Float64Array(m * c * 3);
  for (let h = 0; h < m; h++) {
    let norm = 0;
    for (let i = 0; i < c * 3; i++) {
      const x = rng() * 2 - 1;
      metaHandles[h * c * 3 + i] = x;
      norm += x * x;
    }
    norm = Math.sqrt(norm);
    for (let i = 0; i < c * 3; i++) metaHandles[h * c * 3 + i] /= norm;
  }
  const ranges = new Float64Array(m * 2);
  for (let h = 0; h < m; h++) {
    ranges[2 * h] = -0.3;
    ranges[2 * h + 1] = 0.3;
  }
  return {
    n,
    c,
    m,
    vertices,
    faces: Uint32Array.from([0, 1, 2]),
    controlIndices: Int32Array.from({ length: c }, (_, i) => i),
    restPositions: new Float64Array(c * 3),
    coordinates,
    metaHandles,
    ranges,
    metadata: {},
  };
}

describe("interaction latency", () => {
  it("slider updates stay within the 33 ms frame budget at n=20000, c=50", () => {
    const bundle = syntheticBundle(20_000, 50, 8);
    const state = new DeformState(bundle);
    const rng = makeRng(3);

    // warm up the JIT before timing anything
    for (let i = 0; i < 20; i++) state.setCoefficient(i % bundle.m, rng() * 0.6 - 0.3);

    const times: number[] = [];
    for (let i = 0; i < 300; i++) {
      const handle = Math.floor(rng() * bundle.m);
      const value = rng() * 0.6 - 0.3;
      const start = performance.now();
      state.setCoefficient(handle, value);
      times.push(performance.now() - start);
    }
    times.sort((a, b) => a - b);
    const median = times[Math.floor(times.length / 2)];
    const worst = times[times.length - 1];
    console.log(`slider update: median ${median.toFixed(3)} ms, worst ${worst.toFixed(3)} ms`);
    expect(worst).toBeLessThanOrEqual(33);
  });

  it("even a full recompute fits the budget", () => {
    const bundle = syntheticBundle(20_000, 50, 8);
    const state = new DeformState(bundle);
    const rng = makeRng(11);
    for (let h = 0; h < bundle.m; h++) state.setCoefficient(h, rng() * 0.6 - 0.3);
    const start = performance.now();
    const recomputed = state.recompute();
    const elapsed = performance.now() - start;
    console.log(`full recompute: ${elapsed.toFixed(3)} ms`);
    expect(recomputed.length).toBe(bundle.n * 3);
    expect(elapsed).toBeLessThanOrEqual(33);
  });
});
