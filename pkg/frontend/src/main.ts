// Browser entry point: wires the pure modules to a canvas, pointer events,
// and the WebSocket stream. Kept deliberately thin; all logic the tests pin
// down lives in the imported modules.

import { ApiClient, parseStreamEvent } from "./api.js";
import { planPointsToPixels } from "./geometry.js";
import { LivePanels } from "./panels.js";
import { submitPolyline } from "./polylineTool.js";
import { submitRoi, validateRoiStroke } from "./roiTool.js";
import { initialViewState, setToolMode, VertexBuffer, ViewState } from "./state.js";
import type { CalibrationDoc, PlanDoc, Point } from "./types.js";

const SURFACE_HEIGHT_MM = 12.0; // overlay height of the default specimens

interface Ui {
  view: HTMLCanvasElement;
  forcePlot: HTMLCanvasElement;
  specPlot: HTMLCanvasElement;
  status: HTMLElement;
  planInfo: HTMLElement;
}

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

export class OperatorConsole {
  state: ViewState = initialViewState();
  panels = new LivePanels();
  stroke = new VertexBuffer();
  calibration: CalibrationDoc | null = null;
  plan: PlanDoc | null = null;
  planPixels: Point[] = [];
  private ws: WebSocket | null = null;

  constructor(private api: ApiClient, private ui: Ui) {}

  async start(): Promise<void> {
    try {
      this.calibration = await this.api.calibration();
      this.state = { ...this.state, calibrated: true };
      this.setStatus("calibration loaded");
    } catch {
      this.setStatus("no calibration loaded; ROI/polyline submission disabled");
    }
    this.bindPointer();
    this.render();
  }

  setTool(mode: ViewState["toolMode"]): void {
    this.state = setToolMode(this.state, mode);
    this.stroke.clear();
    this.render();
  }

  undoVertex(): void {
    this.stroke.undo();
    this.render();
  }

  private bindPointer(): void {
    this.ui.view.addEventListener("pointerdown", (ev) => {
      if (this.state.toolMode === "PAN") return;
      const rect = this.ui.view.getBoundingClientRect();
      this.stroke.add([ev.clientX - rect.left, ev.clientY - rect.top]);
      this.render();
    });
  }

  async confirmRoi(): Promise<void> {
    const check = validateRoiStroke(this.stroke.vertices, this.state.calibrated);
    if (!check.ok) {
      this.setStatus(`ROI blocked: ${check.reason}`);
      return;
    }
    const preview = await submitRoi(this.api, this.stroke.vertices, this.state.calibrated);
    this.adoptPlan(preview.plan);
  }

  async confirmPolyline(): Promise<void> {
    try {
      const plan = await submitPolyline(this.api, this.stroke.vertices, this.state.calibrated);
      this.adoptPlan(plan);
    } catch (err) {
      this.setStatus(`polyline blocked: ${(err as Error).message}`);
    }
  }

  private adoptPlan(plan: PlanDoc): void {
    this.plan = plan;
    this.planPixels = this.calibration
      ? planPointsToPixels(this.calibration, plan.points_mm, SURFACE_HEIGHT_MM)
      : [];
    this.ui.planInfo.textContent = `${plan.pattern} plan: ${plan.points_mm.length} points`;
    this.render();
  }

  async runPlan(sessionId: string): Promise<void> {
    if (!this.plan) {
      this.setStatus("no plan to run");
      return;
    }
    await this.api.createSession(sessionId, this.plan);
    this.subscribe(sessionId);
    await this.api.run(sessionId);
    this.state = { ...this.state, sessionId };
  }

  subscribe(sessionId: string): void {
    this.ws?.close();
    const url = this.api.streamUrl(sessionId, [
      "STATE",
      "FORCE_POINT",
      "AUDIO_CHUNK",
      "POINT_RESULT",
      "FRAME",
    ]);
    this.ws = new WebSocket(url);
    this.ws.onmessage = (msg) => {
      this.panels.consume(parseStreamEvent(String(msg.data)));
      if (this.panels.sessionState === "DONE" && this.state.sessionId) {
        void this.refreshMap(this.state.sessionId);
      }
      this.render();
    };
  }

  private async refreshMap(sessionId: string): Promise<void> {
    try {
      await this.api.sessionMap(sessionId);
      this.setStatus(`map ready for ${sessionId}`);
    } catch {
      /* map not written yet */
    }
  }

  private setStatus(text: string): void {
    this.ui.status.textContent = text;
  }

  render(): void {
    const ctx = this.ui.view.getContext("2d");
    if (!ctx) return;
    ctx.clearRect(0, 0, this.ui.view.width, this.ui.view.height);

    if (this.state.overlays.planPoints) {
      ctx.fillStyle = "#ffffff";
      for (const [u, v] of this.planPixels) ctx.fillRect(u - 1, v - 1, 2, 2);
    }
    if (this.calibration) {
      for (const marker of this.panels.overlay.list()) {
        const [u, v] = planPointsToPixels(
          this.calibration,
          [[marker.xMm, marker.yMm]],
          SURFACE_HEIGHT_MM,
        )[0];
        ctx.globalAlpha = marker.opacity;
        ctx.fillStyle = marker.color;
        ctx.beginPath();
        ctx.arc(u, v, 4, 0, 2 * Math.PI);
        ctx.fill();
        ctx.globalAlpha = 1;
      }
    }
    ctx.strokeStyle = this.state.toolMode === "SELECT_ROI" ? "#ffd700" : "#00c0ff";
    ctx.beginPath();
    this.stroke.vertices.forEach(([u, v], i) => (i ? ctx.lineTo(u, v) : ctx.moveTo(u, v)));
    ctx.stroke();

    this.drawForce();
    this.drawSpectrogram();
    const badge = this.panels.paused ? "PAUSED" : this.panels.sessionState;
    this.setStatus(`${badge} ${this.panels.completed}/${this.panels.total}`);
  }

  private drawForce(): void {
    const ctx = this.ui.forcePlot.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.ui.forcePlot;
    ctx.clearRect(0, 0, width, height);
    const curve = this.panels.force.currentCurve();
    if (curve.length < 2) return;
    const dMax = Math.max(...curve.map((s) => s.displacement), 1e-9);
    const fMax = Math.max(...curve.map((s) => s.force), 1e-9);
    ctx.strokeStyle = "#3cb44b";
    ctx.beginPath();
    curve.forEach((s, i) => {
      const x = (s.displacement / dMax) * (width - 10) + 5;
      const y = height - 5 - (s.force / fMax) * (height - 10);
      if (i) ctx.lineTo(x, y);
      else ctx.moveTo(x, y);
    });
    ctx.stroke();
  }

  private drawSpectrogram(): void {
    const ctx = this.ui.specPlot.getContext("2d");
    if (!ctx) return;
    const { width, height } = this.ui.specPlot;
    ctx.clearRect(0, 0, width, height);
    const cols = this.panels.spectrogram.slice();
    const visible = cols.slice(Math.max(0, cols.length - width));
    visible.forEach((col, x) => {
      for (let y = 0; y < height; y++) {
        const bin = Math.floor(((height - 1 - y) / height) * col.length * 0.25);
        const db = col[bin];
        const level = Math.max(0, Math.min(1, (db + 90) / 90));
        ctx.fillStyle = `rgb(${Math.round(255 * level)}, ${Math.round(80 * level)}, ${Math.round(
          160 * (1 - level),
        )})`;
        ctx.fillRect(x, y, 1, 1);
      }
    });
  }
}

export function boot(baseUrl = ""): OperatorConsole {
  const api = new ApiClient(baseUrl || `${location.protocol}//${location.host}`);
  const consoleUi = new OperatorConsole(api, {
    view: el<HTMLCanvasElement>("view"),
    forcePlot: el<HTMLCanvasElement>("force-plot"),
    specPlot: el<HTMLCanvasElement>("spec-plot"),
    status: el<HTMLElement>("status"),
    planInfo: el<HTMLElement>("plan-info"),
  });
  el<HTMLButtonElement>("tool-roi").onclick = () => consoleUi.setTool("SELECT_ROI");
  el<HTMLButtonElement>("tool-polyline").onclick = () => consoleUi.setTool("DRAW_POLYLINE");
  el<HTMLButtonElement>("tool-pan").onclick = () => consoleUi.setTool("PAN");
  el<HTMLButtonElement>("undo").onclick = () => consoleUi.undoVertex();
  el<HTMLButtonElement>("confirm-roi").onclick = () => void consoleUi.confirmRoi();
  el<HTMLButtonElement>("confirm-polyline").onclick = () => void consoleUi.confirmPolyline();
  el<HTMLButtonElement>("run").onclick = () =>
    void consoleUi.runPlan(`ui-${Date.now().toString(36)}`);
  void consoleUi.start();
  return consoleUi;
}

declare global {
  interface Window {
    palpbenchBoot: typeof boot;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  window.palpbenchBoot = boot;
}
