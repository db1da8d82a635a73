// UI state derived purely from server responses and stream events.  The
// rendered pose is always the latest streamed event; the client never
// extrapolates between events.

import type { RunEvent, SessionInfo, StepEvent, SummaryEvent } from "./api.js";

export interface TargetMark {
  x: number;
  y: number;
  theta: number | null;
  staged: boolean;
}

export type Status = "disconnected" | "idle" | "running" | "done" | "error";

export interface ViewState {
  session: SessionInfo | null;
  status: Status;
  pose: number[] | null; // latest true pose from the stream
  believed: number[] | null;
  pressures: number[] | null; // latest commanded pressures (backbone drawing)
  stage: number;
  target: TargetMark | null;
  summary: SummaryEvent | null;
  lastStep: number; // resume cursor for reconnects
  log: string[];
  errorMessage: string | null;
}

export function initialState(): ViewState {
  return {
    session: null,
    status: "disconnected",
    pose: null,
    believed: null,
    pressures: null,
    stage: 0,
    target: null,
    summary: null,
    lastStep: -1,
    log: [],
    errorMessage: null,
  };
}

export function onSessionCreated(state: ViewState, info: SessionInfo): ViewState {
  return {
    ...initialState(),
    session: info,
    status: "idle",
    log: [`session ${info.id} (${info.model.name})`],
  };
}

export function onRunStarted(state: ViewState, target: TargetMark): ViewState {
  return {
    ...state,
    status: "running",
    target,
    summary: null,
    lastStep: -1,
    errorMessage: null,
    log: [...state.log, `target (${target.x.toFixed(1)}, ${target.y.toFixed(1)})`],
  };
}

export function applyEvent(state: ViewState, ev: RunEvent): ViewState {
  if (ev.type === "step") {
    const step = ev as StepEvent;
    return {
      ...state,
      pose: step.x_true,
      believed: step.x_believed,
      pressures: step.u_cmd.slice(0, 2),
      lastStep: step.step,
    };
  }
  if (ev.type === "summary") {
    const summary = ev as SummaryEvent;
    return {
      ...state,
      status: "done",
      summary,
      pose: summary.final_true,
      stage: summary.stage_move,
      log: [
        ...state.log,
        `run ${summary.run}: d_err ${summary.d_err.toFixed(2)} mm` +
          (summary.theta_err !== undefined
            ? `, theta_err ${summary.theta_err.toFixed(2)} deg`
            : ""),
      ],
    };
  }
  return {
    ...state,
    status: "error",
    errorMessage: ev.message,
    log: [...state.log, `error: ${ev.message}`],
  };
}

/** Color class for the summary readout against the accuracy thresholds. */
export function summaryGrade(state: ViewState): "good" | "ok" | "bad" | null {
  if (!state.summary || !state.session) return null;
  const { sigma1, sigma2 } = state.session.workspace.thresholds;
  if (state.summary.d_err <= sigma1) return "good";
  if (state.summary.d_err <= sigma2) return "ok";
  return "bad";
}
