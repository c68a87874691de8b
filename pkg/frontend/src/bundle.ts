/**
 * Parser for the JSON text variant of a deformation bundle.
 *
 * The document carries flat arrays plus a dims table; this module checks the
 * shapes and cross-field consistency and returns typed arrays ready for the
 * deformation cache. Every failure throws BundleError naming the offending
 * field so the UI can show it verbatim.
 */

export class BundleError extends Error {}

export interface Bundle {
  /** vertex count */
  n: number;
  /** control point count */
  c: number;
  /** handle count (0 = coordinates-only bundle) */
  m: number;
  vertices: Float64Array; // (n*3) rest vertex positions
  faces: Uint32Array; // (F*3) triangle indices
  controlIndices: Int32Array; // (c) vertex index of each control point
  restPositions: Float64Array; // (c*3) control rest positions
  coordinates: Float64Array; // (n*c) row-stochastic weight matrix
  metaHandles: Float64Array; // (m*c*3) unit-norm per-control offset stacks
  ranges: Float64Array; // (m*2) [lo, hi] per handle, lo <= 0 <= hi
  metadata: Record<string, string>;
}

const FORMAT = "metaforge-bundle-text";

interface RawDoc {
  format?: unknown;
  version?: unknown;
  metadata?: unknown;
  dims?: unknown;
  data?: unknown;
}

function fieldArray(
  doc: { dims: Record<string, unknown>; data: Record<string, unknown> },
  name: string,
): { shape: number[]; flat: number[] } {
  const dims = doc.dims[name];
  const data = doc.data[name];
  if (!Array.isArray(dims) || !dims.every((d) => Number.isInteger(d) && d >= 0)) {
    throw new BundleError(`field '${name}': dims missing or not a list of sizes`);
  }
  if (!Array.isArray(data)) {
    throw new BundleError(`field '${name}': data missing`);
  }
  const expected = dims.reduce((acc: number, d: number) => acc * d, 1);
  if (data.length !== expected) {
    throw new BundleError(
      `field '${name}': ${data.length} values do not fill dims [${dims.join(", ")}]`,
    );
  }
  for (let i = 0; i < data.length; i++) {
    if (typeof data[i] !== "number" || !Number.isFinite(data[i])) {
      throw new BundleError(`field '${name}': non-finite value at index ${i}`);
    }
  }
  return { shape: dims as number[], flat: data as number[] };
}

function expectRank(name: string, shape: number[], rank: number): void {
  if (shape.length !== rank) {
    throw new BundleError(`field '${name}': expected ${rank} dims, got [${shape.join(", ")}]`);
  }
}

export function parseBundle(text: string): Bundle {
  let doc: RawDoc;
  try {
    doc = JSON.parse(text) as RawDoc;
  } catch (exc) {
    throw new BundleError(`not valid JSON (${(exc as Error).message})`);
  }
  if (typeof doc !== "object" || doc === null || doc.format !== FORMAT) {
    throw new BundleError("not a deformation bundle (missing format tag)");
  }
  if (doc.version !== 1) {
    throw new BundleError(`unsupported bundle version ${String(doc.version)}`);
  }
  if (typeof doc.dims !== "object" || doc.dims === null || typeof doc.data !== "object" || doc.data === null) {
    throw new BundleError("missing dims/data tables");
  }
  const tables = {
    dims: doc.dims as Record<string, unknown>,
    data: doc.data as Record<string, unknown>,
  };

  const vertices = fieldArray(tables, "vertices");
  const faces = fieldArray(tables, "faces");
  const controlIndices = fieldArray(tables, "control_indices");
  const restPositions = fieldArray(tables, "rest_positions");
  const coordinates = fieldArray(tables, "coordinates");
  const metaHandles = fieldArray(tables, "meta_handles");
  const ranges = fieldArray(tables, "ranges");

  expectRank("vertices", vertices.shape, 2);
  expectRank("faces", faces.shape, 2);
  expectRank("control_indices", controlIndices.shape, 1);
  expectRank("rest_positions", restPositions.shape, 2);
  expectRank("coordinates", coordinates.shape, 2);
  expectRank("meta_handles", metaHandles.shape, 3);
  expectRank("ranges", ranges.shape, 2);

  const n = vertices.shape[0];
  const c = controlIndices.shape[0];
  const m = metaHandles.shape[0];
  if (vertices.shape[1] !== 3) throw new BundleError("field 'vertices': rows must have 3 entries");
  if (faces.shape[1] !== 3) throw new BundleError("field 'faces': rows must have 3 entries");
  if (restPositions.shape[0] !== c || restPositions.shape[1] !== 3) {
    throw new BundleError(`field 'rest_positions': expected [${c}, 3], got [${restPositions.shape.join(", ")}]`);
  }
  if (coordinates.shape[0] !== n || coordinates.shape[1] !== c) {
    throw new BundleError(`field 'coordinates': expected [${n}, ${c}], got [${coordinates.shape.join(", ")}]`);
  }
  if (m > 0 && (metaHandles.shape[1] !== c || metaHandles.shape[2] !== 3)) {
    throw new BundleError(`field 'meta_handles': expected [${m}, ${c}, 3], got [${metaHandles.shape.join(", ")}]`);
  }
  if (ranges.shape[0] !== m || (m > 0 && ranges.shape[1] !== 2)) {
    throw new BundleError(`field 'ranges': expected [${m}, 2], got [${ranges.shape.join(", ")}]`);
  }

  for (let i = 0; i < faces.flat.length; i++) {
    const v = faces.flat[i];
    if (!Number.isInteger(v) || v < 0 || v >= n) {
      throw new BundleError(`field 'faces': vertex index ${v} out of range [0, ${n})`);
    }
  }
  for (let i = 0; i < c; i++) {
    const v = controlIndices.flat[i];
    if (!Number.isInteger(v) || v < 0 || v >= n) {
      throw new BundleError(`field 'control_indices': vertex index ${v} out of range [0, ${n})`);
    }
  }
  for (let i = 0; i < m; i++) {
    const lo = ranges.flat[2 * i];
    const hi = ranges.flat[2 * i + 1];
    if (!(lo <= 0 && 0 <= hi)) {
      throw new BundleError(`field 'ranges': handle ${i} has [${lo}, ${hi}], must contain 0`);
    }
  }

  const metadata: Record<string, string> = {};
  if (typeof doc.metadata === "object" && doc.metadata !== null) {
    for (const [k, v] of Object.entries(doc.metadata as Record<string, unknown>)) {
      metadata[k] = String(v);
    }
  }

  return {
    n,
    c,
    m,
    vertices: Float64Array.from(vertices.flat),
    faces: Uint32Array.from(faces.flat),
    controlIndices: Int32Array.from(controlIndices.flat),
    restPositions: Float64Array.from(restPositions.flat),
    coordinates: Float64Array.from(coordinates.flat),
    metaHandles: Float64Array.from(metaHandles.flat),
    ranges: Float64Array.from(ranges.flat),
    metadata,
  };
}
