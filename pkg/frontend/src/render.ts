// Canvas rendering: workspace hull, catheter backbone, target marker with
// orientation handle, and the live error readout.

import { backbone, type DrawParams, type Pt } from "./geometry.js";
import { summaryGrade, type ViewState } from "./viewmodel.js";

export interface Viewport {
  toPx(p: Pt): [number, number];
  toWorld(px: number, py: number): Pt;
  scale: number;
}

export function makeViewport(
  state: ViewState,
  width: number,
  height: number,
  margin = 30,
): Viewport {
  const ws = state.session!.workspace;
  const pad = 18;
  const x0 = ws.x_range[0] - pad;
  const x1 = ws.x_range[1] + pad + 28; // room for staged targets right of the hull
  const y0 = -4;
  const y1 = ws.y_range[1] + pad;
  const scale = Math.min(
    (width - 2 * margin) / (x1 - x0),
    (height - 2 * margin) / (y1 - y0),
  );
  return {
    scale,
    toPx(p: Pt): [number, number] {
      return [margin + (p.x - x0) * scale, height - margin - (p.y - y0) * scale];
    },
    toWorld(px: number, py: number): Pt {
      return { x: x0 + (px - margin) / scale, y: y0 + (height - margin - py) / scale };
    },
  };
}

const GRADE_COLORS = { good: "#2e9e44", ok: "#d98e04", bad: "#c43c3c" };

export function draw(
  ctx: CanvasRenderingContext2D,
  state: ViewState,
  width: number,
  height: number,
): void {
  ctx.clearRect(0, 0, width, height);
  if (!state.session) return;
  const vp = makeViewport(state, width, height);
  const ws = state.session.workspace;

  ctx.beginPath();
  ws.hull.forEach(([x, y], i) => {
    const [px, py] = vp.toPx({ x, y });
    i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
  });
  ctx.closePath();
  ctx.fillStyle = "#eef3f8";
  ctx.fill();
  ctx.strokeStyle = "#9db4c8";
  ctx.stroke();

  if (state.pressures) {
    const pts = backbone(
      state.session.draw as DrawParams,
      state.pressures[0],
      state.pressures[1],
      state.stage,
    );
    ctx.beginPath();
    pts.forEach((p, i) => {
      const [px, py] = vp.toPx(p);
      i === 0 ? ctx.moveTo(px, py) : ctx.lineTo(px, py);
    });
    ctx.strokeStyle = "#38506b";
    ctx.lineWidth = 4;
    ctx.stroke();
    ctx.lineWidth = 1;
  }

  if (state.pose) {
    const [px, py] = vp.toPx({ x: state.pose[0], y: state.pose[1] });
    ctx.beginPath();
    ctx.arc(px, py, 5, 0, 2 * Math.PI);
    ctx.fillStyle = "#1f77b4";
    ctx.fill();
  }
  if (state.believed) {
    const [px, py] = vp.toPx({ x: state.believed[0], y: state.believed[1] });
    ctx.beginPath();
    ctx.arc(px, py, 4, 0, 2 * Math.PI);
    ctx.strokeStyle = "#7f7f7f";
    ctx.stroke();
  }

  if (state.target) {
    const [px, py] = vp.toPx({ x: state.target.x, y: state.target.y });
    const grade = summaryGrade(state);
    ctx.strokeStyle = grade ? GRADE_COLORS[grade] : "#c43c3c";
    ctx.beginPath();
    ctx.moveTo(px - 7, py);
    ctx.lineTo(px + 7, py);
    ctx.moveTo(px, py - 7);
    ctx.lineTo(px, py + 7);
    ctx.stroke();
    if (state.target.theta !== null) {
      const rad = (state.target.theta * Math.PI) / 180;
      ctx.beginPath();
      ctx.moveTo(px, py);
      // orientation handle: angle measured from +y toward +x
      ctx.lineTo(px + 22 * Math.sin(rad), py - 22 * Math.cos(rad));
      ctx.stroke();
    }
  }
}

export function summaryText(state: ViewState): string {
  if (state.status === "error") return `error: ${state.errorMessage}`;
  if (!state.summary) {
    return state.status === "running" ? "running..." : "click a target in the workspace";
  }
  const s = state.summary;
  const parts = [`d_err ${s.d_err.toFixed(2)} mm`];
  if (s.theta_err !== undefined) parts.push(`theta_err ${s.theta_err.toFixed(2)} deg`);
  if (s.stage_move) parts.push(`stage ${s.stage_move.toFixed(1)} mm`);
  parts.push(`${s.n_steps} steps, ${s.sim_time_s.toFixed(1)} s`);
  return parts.join(" | ");
}
