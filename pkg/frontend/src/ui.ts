/**
 * Control panel: one slider per handle (endpoints labeled, zero detent via a
 * datalist tick, degenerate [0, 0] ranges disabled), display toggles, reset,
 * and coefficient export. Pure DOM, no framework.
 */

import { formatCoefficients } from "./coeffs.js";

export interface PanelCallbacks {
  onCoefficient: (handle: number, value: number) => void;
  onReset: () => void;
  onWireframe: (on: boolean) => void;
  onMarkers: (on: boolean) => void;
  onColoredHandle: (handle: number) => void;
}

export class Panel {
  private root: HTMLElement;
  private errorBox: HTMLElement;
  private sliderBox: HTMLElement;
  private sliders: HTMLInputElement[] = [];
  private readouts: HTMLElement[] = [];
  private coefficients: () => ArrayLike<number>;

  constructor(root: HTMLElement, coefficients: () => ArrayLike<number>, cb: PanelCallbacks) {
    this.root = root;
    this.coefficients = coefficients;
    root.textContent = "";

    this.errorBox = document.createElement("div");
    this.errorBox.className = "error-panel";
    this.errorBox.hidden = true;
    root.appendChild(this.errorBox);

    this.sliderBox = document.createElement("div");
    this.sliderBox.className = "sliders";
    root.appendChild(this.sliderBox);

    const options = document.createElement("div");
    options.className = "options";
    const mkCheck = (label: string, initial: boolean, onChange: (v: boolean) => void) => {
      const wrap = document.createElement("label");
      const box = document.createElement("input");
      box.type = "checkbox";
      box.checked = initial;
      box.addEventListener("change", () => onChange(box.checked));
      wrap.appendChild(box);
      wrap.appendChild(document.createTextNode(" " + label));
      options.appendChild(wrap);
    };
    mkCheck("wireframe", false, cb.onWireframe);
    mkCheck("control points", true, cb.onMarkers);

    this.colorSelect = document.createElement("select");
    this.colorSelect.addEventListener("change", () =>
      cb.onColoredHandle(Number(this.colorSelect.value)),
    );
    const colorLabel = document.createElement("label");
    colorLabel.appendChild(document.createTextNode("color by handle "));
    colorLabel.appendChild(this.colorSelect);
    options.appendChild(colorLabel);

    const reset = document.createElement("button");
    reset.textContent = "reset";
    reset.addEventListener("click", () => {
      cb.onReset();
      this.syncSliders();
    });
    options.appendChild(reset);

    const exportBtn = document.createElement("button");
    exportBtn.textContent = "export coefficients";
    exportBtn.addEventListener("click", () => this.download());
    options.appendChild(exportBtn);

    root.appendChild(options);
    this.onCoefficient = cb.onCoefficient;
  }

  private onCoefficient: (handle: number, value: number) => void;
  private colorSelect: HTMLSelectElement;

  /** Rebuild the slider column for a freshly loaded bundle. */
  setHandles(ranges: Float64Array, m: number): void {
    this.sliderBox.textContent = "";
    this.sliders = [];
    this.readouts = [];
    this.colorSelect.textContent = "";
    const none = document.createElement("option");
    none.value = "-1";
    none.textContent = "none";
    this.colorSelect.appendChild(none);

    for (let i = 0; i < m; i++) {
      const lo = ranges[2 * i];
      const hi = ranges[2 * i + 1];
      const row = document.createElement("div");
      row.className = "slider-row";

      const name = document.createElement("span");
      name.className = "slider-name";
      name.textContent = `handle ${i}`;
      row.appendChild(name);

      const loLabel = document.createElement("span");
      loLabel.className = "endpoint";
      loLabel.textContent = lo.toPrecision(3);
      row.appendChild(loLabel);

      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(lo);
      slider.max = String(hi);
      slider.step = hi > lo ? String((hi - lo) / 1000) : "1";
      slider.value = "0";
      const detent = document.createElement("datalist");
      detent.id = `detent-${i}`;
      const zero = document.createElement("option");
      zero.value = "0";
      zero.label = "0";
      detent.appendChild(zero);
      slider.setAttribute("list", detent.id);
      if (lo === 0 && hi === 0) slider.disabled = true;
      slider.addEventListener("input", () => {
        const v = Number(slider.value);
        this.readouts[i].textContent = v.toFixed(4);
        this.onCoefficient(i, v);
      });
      row.appendChild(slider);
      row.appendChild(detent);

      const hiLabel = document.createElement("span");
      hiLabel.className = "endpoint";
      hiLabel.textContent = hi.toPrecision(3);
      row.appendChild(hiLabel);

      const readout = document.createElement("span");
      readout.className = "readout";
      readout.textContent = "0.0000";
      row.appendChild(readout);

      this.sliderBox.appendChild(row);
      this.sliders.push(slider);
      this.readouts.push(readout);

      const opt = document.createElement("option");
      opt.value = String(i);
      opt.textContent = `handle ${i}`;
      this.colorSelect.appendChild(opt);
    }
  }

  syncSliders(): void {
    const a = this.coefficients();
    for (let i = 0; i < this.sliders.length; i++) {
      this.sliders[i].value = String(a[i]);
      this.readouts[i].textContent = Number(a[i]).toFixed(4);
    }
  }

  showError(message: string): void {
    this.errorBox.textContent = message;
    this.errorBox.hidden = false;
  }

  clearError(): void {
    this.errorBox.hidden = true;
  }

  private download(): void {
    const blob = new Blob([formatCoefficients(this.coefficients())], { type: "text/plain" });
    const url = URL.createObjectURL(blob);
    const link = document.createElement("a");
    link.href = url;
    link.download = "coefficients.txt";
    link.click();
    URL.revokeObjectURL(url);
  }
}
