// Operator console: pick a model, click targets in the workspace, watch the
// open-loop run stream in, read the final errors, go again.

import { ApiClient, ApiError, type RunEvent } from "./api.js";
import { pointInPolygon } from "./geometry.js";
import { draw, makeViewport, summaryText } from "./render.js";
import {
  applyEvent,
  initialState,
  onRunStarted,
  onSessionCreated,
  summaryGrade,
  type ViewState,
} from "./viewmodel.js";

export interface AppElements {
  canvas: HTMLCanvasElement;
  modelSelect: HTMLSelectElement;
  connectBtn: HTMLButtonElement;
  resetBtn: HTMLButtonElement;
  poseMode: HTMLInputElement;
  stageMode: HTMLInputElement;
  thetaSlider: HTMLInputElement;
  status: HTMLElement;
  readout: HTMLElement;
  log: HTMLElement;
}

export class App {
  state: ViewState = initialState();
  private streaming = false;

  constructor(
    private el: AppElements,
    private api: ApiClient,
  ) {}

  async init(): Promise<void> {
    const { models } = await this.api.listModels();
    this.el.modelSelect.innerHTML = models
      .map((m) => `<option value="${m}">${m}</option>`)
      .join("");
    this.el.connectBtn.addEventListener("click", () => void this.connect());
    this.el.resetBtn.addEventListener("click", () => void this.reset());
    this.el.canvas.addEventListener("click", (ev) => void this.onClick(ev));
    this.render();
  }

  async connect(): Promise<void> {
    if (this.state.session) {
      await this.api.deleteSession(this.state.session.id).catch(() => undefined);
    }
    const info = await this.api.createSession(this.el.modelSelect.value);
    this.state = onSessionCreated(this.state, info);
    this.render();
  }

  async reset(): Promise<void> {
    if (!this.state.session || this.state.status === "running") return;
    await this.api.reset(this.state.session.id);
    this.state = { ...this.state, pressures: [0, 0], stage: 0, summary: null };
    this.render();
  }

  async onClick(ev: MouseEvent): Promise<void> {
    if (!this.state.session || this.state.status === "running") return;
    const rect = this.el.canvas.getBoundingClientRect();
    const vp = makeViewport(this.state, this.el.canvas.width, this.el.canvas.height);
    const p = vp.toWorld(ev.clientX - rect.left, ev.clientY - rect.top);
    const staged = this.el.stageMode.checked;
    const inHull = pointInPolygon(p, this.state.session.workspace.hull);
    if (!inHull && !staged) {
      this.toast("target outside the reachable workspace (enable staging?)");
      return;
    }
    // pose models always need an orientation target; position models only
    // take one when the operator asked for pose mode
    const wantsTheta = this.el.poseMode.checked || this.state.session.model.n === 3;
    const theta = wantsTheta ? Number(this.el.thetaSlider.value) : undefined;
    try {
      await this.api.setTarget(this.state.session.id, {
        x: p.x,
        y: p.y,
        theta,
        stage: staged && !inHull,
      });
    } catch (err) {
      if (err instanceof ApiError && (err.status === 422 || err.status === 409)) {
        this.toast(err.body);
        return;
      }
      throw err;
    }
    this.state = onRunStarted(this.state, {
      x: p.x,
      y: p.y,
      theta: theta ?? null,
      staged,
    });
    this.render();
    void this.followStream();
  }

  /** Consume the run's event stream; reconnect once from the last step. */
  async followStream(): Promise<void> {
    if (!this.state.session || this.streaming) return;
    this.streaming = true;
    const sid = this.state.session.id;
    const handle = (ev: RunEvent) => {
      this.state = applyEvent(this.state, ev);
      this.render();
    };
    try {
      await this.api.streamEvents(sid, handle, 0);
    } catch {
      await this.api
        .streamEvents(sid, handle, this.state.lastStep + 1)
        .catch((err) => this.toast(`stream lost: ${err}`));
    } finally {
      this.streaming = false;
    }
  }

  toast(message: string): void {
    this.state = { ...this.state, log: [...this.state.log, message] };
    this.render();
  }

  render(): void {
    const ctx = this.el.canvas.getContext("2d");
    if (ctx && this.state.session) {
      draw(ctx, this.state, this.el.canvas.width, this.el.canvas.height);
    }
    this.el.status.textContent = this.state.status;
    this.el.readout.textContent = summaryText(this.state);
    const grade = summaryGrade(this.state);
    this.el.readout.className = grade ? `readout ${grade}` : "readout";
    this.el.log.textContent = this.state.log.slice(-8).join("\n");
  }
}

export function mount(root: Document = document): App {
  const el: AppElements = {
    canvas: root.getElementById("workspace") as HTMLCanvasElement,
    modelSelect: root.getElementById("model") as HTMLSelectElement,
    connectBtn: root.getElementById("connect") as HTMLButtonElement,
    resetBtn: root.getElementById("reset") as HTMLButtonElement,
    poseMode: root.getElementById("pose-mode") as HTMLInputElement,
    stageMode: root.getElementById("stage-mode") as HTMLInputElement,
    thetaSlider: root.getElementById("theta") as HTMLInputElement,
    status: root.getElementById("status") as HTMLElement,
    readout: root.getElementById("readout") as HTMLElement,
    log: root.getElementById("log") as HTMLElement,
  };
  const app = new App(el, new ApiClient(""));
  void app.init();
  return app;
}

declare global {
  interface Window {
    __softkoopmanApp?: App;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined" && !("__vitest__" in globalThis)) {
  window.addEventListener("DOMContentLoaded", () => {
    window.__softkoopmanApp = mount();
  });
}
