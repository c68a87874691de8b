/**
 * App wiring: load a bundle from the file picker or a ?bundle= URL, keep the
 * displayed mesh equal to rest + weighted handle fields at the current slider
 * values, and re-render on demand.
 */

import { parseBundle, BundleError, type Bundle } from "./bundle.js";
import { DeformState } from "./deform.js";
import { Renderer } from "./render.js";
import { Panel } from "./ui.js";

const canvas = document.getElementById("view") as HTMLCanvasElement;
const panelRoot = document.getElementById("panel") as HTMLElement;
const statusLine = document.getElementById("status") as HTMLElement;

let state: DeformState | null = null;
let bundle: Bundle | null = null;
const renderer = new Renderer(canvas);

const panel = new Panel(panelRoot, () => state?.coefficients ?? [], {
  onCoefficient(handle, value) {
    if (!state) return;
    state.setCoefficient(handle, value);
    renderer.updatePositions(state.positionsF32);
  },
  onReset() {
    if (!state) return;
    state.reset();
    renderer.updatePositions(state.positionsF32);
  },
  onWireframe(on) {
    renderer.options.wireframe = on;
  },
  onMarkers(on) {
    renderer.options.markers = on;
  },
  onColoredHandle(handle) {
    renderer.options.coloredHandle = handle;
    if (!state || handle < 0) {
      renderer.setHighlight(null);
      return;
    }
    const field = state.fields[handle];
    const scalar = new Float32Array(state.n);
    let peak = 0;
    for (let v = 0; v < state.n; v++) {
      const x = field[v * 3];
      const y = field[v * 3 + 1];
      const z = field[v * 3 + 2];
      const mag = Math.sqrt(x * x + y * y + z * z);
      scalar[v] = mag;
      if (mag > peak) peak = mag;
    }
    if (peak > 0) for (let v = 0; v < state.n; v++) scalar[v] /= peak;
    renderer.setHighlight(scalar);
  },
});

function loadText(text: string, label: string): void {
  let parsed: Bundle;
  let next: DeformState;
  try {
    parsed = parseBundle(text);
    next = new DeformState(parsed);
  } catch (exc) {
    // leave whatever was loaded before fully intact
    panel.showError(`failed to load ${label}: ${(exc as Error).message}`);
    return;
  }
  panel.clearError();
  bundle = parsed;
  state = next;
  renderer.setMesh(state.positionsF32, bundle.faces, bundle.controlIndices);
  renderer.setHighlight(null);
  renderer.options.coloredHandle = -1;
  panel.setHandles(bundle.ranges, bundle.m);
  panel.syncSliders();
  const meta = bundle.metadata["source"] ?? label;
  statusLine.textContent = `${meta}: ${bundle.n} vertices, ${bundle.c} controls, ${bundle.m} handles`;
}

const picker = document.getElementById("picker") as HTMLInputElement;
picker.addEventListener("change", async () => {
  const file = picker.files?.[0];
  if (!file) return;
  loadText(await file.text(), file.name);
});

const query = new URLSearchParams(window.location.search).get("bundle");
if (query) {
  fetch(query)
    .then(async (resp) => {
      if (!resp.ok) throw new BundleError(`HTTP ${resp.status}`);
      loadText(await resp.text(), query);
    })
    .catch((exc: Error) => panel.showError(`failed to load ${query}: ${exc.message}`));
}

function frame(): void {
  renderer.draw();
  requestAnimationFrame(frame);
}
requestAnimationFrame(frame);
