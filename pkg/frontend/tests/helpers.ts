import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";

export function fixture(name: string): string {
  return readFileSync(fileURLToPath(new URL(`./fixtures/${name}`, import.meta.url)), "utf-8");
}

/** Vertex positions from an OBJ file, flattened (n*3). */
export function objVertices(text: string): Float64Array {
  const out: number[] = [];
  for (const line of text.split("\n")) {
    if (!line.startsWith("v ")) continue;
    const parts = line.slice(2).trim().split(/\s+/).map(Number);
    out.push(parts[0], parts[1], parts[2]);
  }
  return Float64Array.from(out);
}

/** Coefficient vectors from the CLI text record ('#' comments, one vector per line). */
export function coefficientLines(text: string): number[][] {
  const vectors: number[][] = [];
  for (const raw of text.split("\n")) {
    const line = raw.split("#", 1)[0].trim();
    if (!line) continue;
    vectors.push(line.split(/\s+/).map(Number));
  }
  return vectors;
}

/** Deterministic uniform in [0, 1); xorshift, good enough for test data. */
export function makeRng(seed: number): () => number {
  let s = seed >>> 0 || 0x9e3779b9;
  return () => {
    s ^= s << 13;
    s >>>= 0;
    s ^= s >> 17;
    s ^= s << 5;
    s >>>= 0;
    return s / 4294967296;
  };
}
