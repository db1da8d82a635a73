"""HTTP sessions around the simulator + controller for interactive targeting.

Each session owns one plant instance and one selected model checkpoint.
Target runs execute on a worker thread through the same single-target code
path as the evaluation harness, streaming control-log events as
newline-delimited JSON; the stream ends with a summary event carrying the
final stable-state errors.  Sessions serialize their own runs (409 while
busy) and never share plant state.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse, StreamingResponse
from pydantic import BaseModel
from scipy.spatial import Delaunay

from .experiments import default_mpc_config, run_seed, run_single_target
from .mpc import MpcConfig
from .plant import (
    CatheterPlant,
    PlantConfig,
    settled_pose,
    solve_pressures,
    workspace_grid,
)


class SessionRequest(BaseModel):
    model: str
    seed: int = 0
    plant_config: dict | None = None


class TargetRequest(BaseModel):
    x: float
    y: float
    theta: float | None = None
    seed: int | None = None
    stage: bool = False


class ResetRequest(BaseModel):
    seed: int | None = None
    pressures: tuple[float, float] = (0.0, 0.0)


@dataclass
class Session:
    sid: str
    model_name: str
    model: object
    plant: CatheterPlant
    plant_cfg: PlantConfig
    mpc_cfg: MpcConfig
    hull: Delaunay
    hull_points: np.ndarray
    theta_range: tuple[float, float]
    seed: int
    state: str = "idle"
    run_index: int = -1
    events: list[dict] = field(default_factory=list)
    lock: threading.Lock = field(default_factory=threading.Lock)
    thread: threading.Thread | None = None


def _workspace_hull(cfg: PlantConfig, n: int = 50) -> tuple[Delaunay, np.ndarray, tuple]:
    grid = workspace_grid(cfg, n)
    pts = grid[:, :2]
    tri = Delaunay(pts)
    boundary = pts[np.unique(tri.convex_hull.ravel())]
    center = boundary.mean(axis=0)
    order = np.argsort(np.arctan2(boundary[:, 1] - center[1], boundary[:, 0] - center[0]))
    th_range = (float(grid[:, 2].min()), float(grid[:, 2].max()))
    return tri, boundary[order], th_range


def _draw_params(cfg: PlantConfig) -> dict:
    return {
        "h1": cfg.h1,
        "h2": cfg.h2,
        "h3": cfg.h3,
        "theta1_map": cfg.theta1_map.coeffs(),
        "len1_map": cfg.len1_map.coeffs(),
        "theta2_map": cfg.theta2_map.coeffs(),
        "len2_map": cfg.len2_map.coeffs(),
        "coupling": cfg.coupling,
        "u_min": cfg.u_min,
        "u_max": cfg.u_max,
    }


def create_app(
    models: dict[str, object],
    plant_cfg: PlantConfig | None = None,
    pace_hz: float = 0.0,
    ui_dir: str | Path | None = None,
) -> FastAPI:
    """Build the service around a model registry.

    ``pace_hz`` throttles event emission for watchable animations (0 = as
    fast as the solver runs); pacing only sleeps, it never changes what is
    logged.
    """
    app = FastAPI(title="softkoopman control service")
    base_cfg = plant_cfg or PlantConfig()
    sessions: dict[str, Session] = {}

    def get_session(sid: str) -> Session:
        if sid not in sessions:
            raise HTTPException(404, f"unknown session {sid}")
        return sessions[sid]

    @app.get("/models")
    def list_models():
        return {"models": sorted(models.keys())}

    @app.post("/sessions", status_code=201)
    def create_session(req: SessionRequest):
        if req.model not in models:
            raise HTTPException(404, f"unknown model {req.model!r}")
        cfg = PlantConfig.from_json(req.plant_config) if req.plant_config else base_cfg
        tri, boundary, th_range = _workspace_hull(cfg)
        sid = uuid.uuid4().hex[:12]
        model = models[req.model]
        sess = Session(
            sid=sid,
            model_name=req.model,
            model=model,
            plant=CatheterPlant(cfg, seed=req.seed),
            plant_cfg=cfg,
            mpc_cfg=default_mpc_config(cfg),
            hull=tri,
            hull_points=boundary,
            theta_range=th_range,
            seed=req.seed,
        )
        sessions[sid] = sess
        grid = workspace_grid(cfg, 40)
        ranges = np.ptp(grid[:, :2], axis=0)
        diag = float(np.hypot(ranges[0], ranges[1]))
        return {
            "id": sid,
            "model": {"name": req.model, "n": model.n, "m": model.m},
            "workspace": {
                "hull": sess.hull_points.tolist(),
                "x_range": [float(grid[:, 0].min()), float(grid[:, 0].max())],
                "y_range": [float(grid[:, 1].min()), float(grid[:, 1].max())],
                "theta_range": list(th_range),
                "thresholds": {"sigma1": 0.0275 * diag, "sigma2": 0.05 * diag},
            },
            "draw": _draw_params(cfg),
        }

    @app.get("/sessions/{sid}/state")
    def session_state(sid: str):
        sess = get_session(sid)
        believed = None
        for ev in reversed(sess.events):
            if ev.get("type") == "step":
                believed = ev["x_believed"]
                break
        return {
            "status": sess.state,
            "true": sess.plant.true_pose().to_array().tolist(),
            "believed": believed,
            "run": sess.run_index,
        }

    @app.post("/sessions/{sid}/reset")
    def reset_session(sid: str, req: ResetRequest):
        sess = get_session(sid)
        with sess.lock:
            if sess.state == "running":
                raise HTTPException(409, "cannot reset while a run is active")
            pose = sess.plant.reset(seed=req.seed, pressures=req.pressures)
        return {"measured": pose.to_array().tolist()}

    @app.post("/sessions/{sid}/target", status_code=202)
    def set_target(sid: str, req: TargetRequest):
        sess = get_session(sid)
        cfg = sess.plant_cfg
        stage_move = 0.0
        x_run = req.x
        if sess.hull.find_simplex(np.array([req.x, req.y])) < 0:
            if not req.stage:
                raise HTTPException(422, "target outside the reachable workspace")
            try:
                theta = req.theta if req.theta is not None else 0.0
                q = solve_pressures(cfg, req.y, theta)
            except ValueError as err:
                raise HTTPException(422, f"target unreachable even with staging: {err}")
            inter = settled_pose(cfg, q[0], q[1])
            stage_move = req.x - inter.x
            x_run = inter.x
        if req.theta is not None:
            lo, hi = sess.theta_range
            if not lo - 1e-9 <= req.theta <= hi + 1e-9:
                raise HTTPException(422, "target orientation outside the reachable range")
            if sess.model.n < 3:
                raise HTTPException(422, "selected model controls position only")
        elif sess.model.n == 3:
            raise HTTPException(
                422, "selected model controls the full pose; include a theta target"
            )
        with sess.lock:
            if sess.state == "running":
                raise HTTPException(409, "a run is already active")
            sess.state = "running"
            sess.run_index += 1
            sess.events.clear()
        target = np.array(
            [x_run, req.y] if req.theta is None else [x_run, req.y, req.theta]
        )
        world_target = np.array(
            [req.x, req.y] if req.theta is None else [req.x, req.y, req.theta]
        )
        reset_seed = req.seed if req.seed is not None else run_seed(sess.seed, sess.run_index)

        def worker():
            period = 1.0 / pace_hz if pace_hz > 0 else 0.0

            def on_step(rec):
                sess.events.append({"type": "step", **rec.to_json()})
                if period:
                    time.sleep(period)

            try:
                log, final = run_single_target(
                    sess.model,
                    sess.plant_cfg,
                    target,
                    sess.mpc_cfg,
                    reset_seed=reset_seed,
                    plant=sess.plant,
                    on_step=on_step,
                )
                if stage_move:
                    sess.plant.set_stage(stage_move)
                    final = sess.plant.true_pose().to_array()
                d_err = float(np.linalg.norm(final[:2] - world_target[:2]))
                summary = {
                    "type": "summary",
                    "run": sess.run_index,
                    "converged": log.converged,
                    "n_steps": len(log.steps),
                    "final_true": final.tolist(),
                    "target": world_target.tolist(),
                    "d_err": d_err,
                    "stage_move": stage_move,
                    "sim_time_s": log.sim_time_s,
                    "wall_time_s": log.wall_time_s,
                }
                if len(world_target) > 2:
                    summary["theta_err"] = float(abs(final[2] - world_target[2]))
                sess.events.append(summary)
            except Exception as err:  # surface solver failures to the stream
                sess.events.append({"type": "error", "message": str(err)})
            finally:
                sess.state = "done"

        sess.thread = threading.Thread(target=worker, daemon=True)
        sess.thread.start()
        return {"run": sess.run_index, "target": world_target.tolist()}

    @app.get("/sessions/{sid}/events")
    def stream_events(sid: str, from_step: int = 0):
        sess = get_session(sid)

        def gen():
            i = max(0, from_step)
            while True:
                while i < len(sess.events):
                    ev = sess.events[i]
                    yield json.dumps(ev) + "\n"
                    if ev.get("type") in ("summary", "error"):
                        return
                    i += 1
                if sess.state != "running" and i >= len(sess.events):
                    return
                time.sleep(0.005)

        return StreamingResponse(gen(), media_type="application/x-ndjson")

    @app.delete("/sessions/{sid}")
    def delete_session(sid: str):
        sess = get_session(sid)
        if sess.thread is not None and sess.thread.is_alive():
            sess.thread.join(timeout=30.0)
        del sessions[sid]
        return {"deleted": sid}

    if ui_dir is not None:
        ui_path = Path(ui_dir)
        from fastapi.staticfiles import StaticFiles

        if (ui_path / "dist").exists():
            app.mount("/static", StaticFiles(directory=ui_path / "dist"), name="static")

        @app.get("/")
        def index():
            page = ui_path / "index.html"
            if not page.exists():
                raise HTTPException(404, "UI not built")
            return FileResponse(page)

    return app


def load_models(models_dir: str | Path) -> dict[str, object]:
    """Load every checkpoint in a directory; names are the file stems."""
    from .edmd import LinearLiftedModel
    from .neural import NeuralKoopmanModel

    registry: dict[str, object] = {}
    for path in sorted(Path(models_dir).glob("*.json")):
        kind = json.loads(path.read_text()).get("kind")
        if kind == "edmd":
            registry[path.stem] = LinearLiftedModel.load(path)
        elif kind in ("nink", "link"):
            registry[path.stem] = NeuralKoopmanModel.load(path)
    return registry
