"""Finite-horizon quadratic control in the lifted space, plus the open loop.

The controller is generic over any lifted model exposing::

    lift(x) -> gamma            decode_state(gamma) -> x
    encode_input(x, u) -> ut    decode_input(x, ut) -> u
    lifted_input_box(lo, hi) -> (lo, hi) | None
    A, B, n, m, n_lift

The horizon problem is condensed onto the input sequence and solved by a
direct symmetric factorization; when the physical pressure box maps to a box
on the lifted input (linear-input models), an accelerated projected-gradient
refinement enforces it.  The open-loop runner follows the model's own
predictions for its state belief and never reads the plant back.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .control_log import ControlLog


class MpcError(RuntimeError):
    pass


def _as_weight(w, dim: int, name: str) -> np.ndarray:
    W = np.asarray(w, dtype=float)
    if W.ndim == 0:
        W = float(W) * np.eye(dim)
    if W.shape != (dim, dim):
        raise ValueError(f"{name} must be scalar or {dim}x{dim}")
    if not np.allclose(W, W.T, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    if np.min(np.linalg.eigvalsh(W)) < -1e-10:
        raise ValueError(f"{name} must be positive semidefinite")
    return W


@dataclass(frozen=True)
class MpcConfig:
    """Horizon costs and loop limits.

    ``q_weight``/``r_weight`` may be scalars (scaled identity) or full
    matrices; both are validated PSD, and the condensed Hessian must come
    out positive definite at solve time (a tiny ridge is retried once
    before failing).  ``max_steps`` is the open-loop control step budget.
    """

    horizon: int = 10
    q_weight: float | np.ndarray = 1.0
    r_weight: float | np.ndarray = 1e-3
    terminal: bool = True
    u_min: float = 0.0
    u_max: float = 80.0
    max_steps: int = 40
    pos_tol: float = 1.0
    ori_tol_deg: float = 2.0
    kkt_tol: float = 1e-8
    ridge: float = 1e-12

    def __post_init__(self) -> None:
        if self.horizon < 1 or self.max_steps < 1:
            raise ValueError("horizon and max_steps must be at least 1")
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        if np.ndim(self.q_weight) == 2:
            _as_weight(self.q_weight, np.asarray(self.q_weight).shape[0], "q_weight")
        if np.ndim(self.r_weight) == 2:
            _as_weight(self.r_weight, np.asarray(self.r_weight).shape[0], "r_weight")


@dataclass
class MpcSolution:
    u_seq: np.ndarray        # (H, m) optimal lifted-input sequence
    gamma_traj: np.ndarray   # (H+1, N) predicted lifted trajectory
    objective: float
    kkt_residual: float


def _stack_dynamics(A: np.ndarray, B: np.ndarray, H: int) -> tuple[np.ndarray, np.ndarray]:
    """Prediction matrices: Gamma = Sx gamma0 + Su U over the horizon."""
    N, m = B.shape
    Sx = np.zeros((H * N, N))
    Su = np.zeros((H * N, H * m))
    Apow = np.eye(N)
    for i in range(H):
        Apow = A @ Apow
        Sx[i * N : (i + 1) * N] = Apow
    for i in range(H):
        blk = B.copy()
        for j in range(i, -1, -1):
            Su[i * N : (i + 1) * N, j * m : (j + 1) * m] = blk
            if j > 0:
                blk = A @ blk
    return Sx, Su


def solve_lifted_qp(
    gamma0: np.ndarray,
    gamma_des: np.ndarray,
    A: np.ndarray,
    B: np.ndarray,
    cfg: MpcConfig,
    u_box: tuple[np.ndarray, np.ndarray] | None = None,
) -> MpcSolution:
    """Minimize the quadratic tracking cost over the lifted-input sequence.

    ``gamma_des`` is one pose (replicated) or an (H+1, N) sequence.  The
    dynamics are condensed into the input-sequence quadratic and solved by a
    Cholesky factorization; with ``u_box`` set, an accelerated projected
    gradient iterates until the projected-gradient (KKT) residual drops
    below ``cfg.kkt_tol``.
    """
    gamma0 = np.asarray(gamma0, dtype=float)
    N, m = B.shape
    H = cfg.horizon
    gamma_des = np.asarray(gamma_des, dtype=float)
    if gamma_des.ndim == 1:
        gamma_des = np.tile(gamma_des, (H + 1, 1))
    if gamma_des.shape != (H + 1, N):
        raise ValueError(f"target sequence must be ({H + 1}, {N})")
    if not (np.all(np.isfinite(gamma0)) and np.all(np.isfinite(gamma_des))):
        raise MpcError("non-finite lifted state handed to the horizon problem")

    Q = _as_weight(cfg.q_weight, N, "q_weight")
    R = _as_weight(cfg.r_weight, m, "r_weight")
    Qf = Q if cfg.terminal else np.zeros((N, N))

    # stage costs weight the predicted states up to H-1; the final state
    # carries only the terminal weight
    Sx, Su = _stack_dynamics(A, B, H)
    Qbar = scipy.linalg.block_diag(*([Q] * (H - 1) + [Qf])) if H > 1 else Qf
    Rbar = scipy.linalg.block_diag(*([R] * H))
    d = np.concatenate([gamma_des[i] for i in range(1, H + 1)])
    resid0 = Sx @ gamma0 - d

    Hess = Su.T @ Qbar @ Su + Rbar
    Hess = 0.5 * (Hess + Hess.T)
    grad0 = Su.T @ Qbar @ resid0
    try:
        cho = scipy.linalg.cho_factor(Hess)
    except np.linalg.LinAlgError:
        Hess_r = Hess + cfg.ridge * max(1.0, np.trace(Hess) / len(Hess)) * np.eye(len(Hess))
        try:
            cho = scipy.linalg.cho_factor(Hess_r)
            Hess = Hess_r
        except np.linalg.LinAlgError:
            vals, vecs = np.linalg.eigh(Hess)
            raise MpcError(
                f"condensed Hessian not positive definite: eigenvalue {vals[0]:.3e} "
                f"along direction {np.round(vecs[:, 0], 3).tolist()}"
            )
    u = scipy.linalg.cho_solve(cho, -grad0)

    if u_box is not None:
        lo = np.tile(np.asarray(u_box[0], dtype=float), H)
        hi = np.tile(np.asarray(u_box[1], dtype=float), H)
        u = np.clip(u, lo, hi)
        L = float(np.linalg.eigvalsh(Hess)[-1])
        step = 1.0 / L
        z, t_acc = u.copy(), 1.0
        for _ in range(20000):
            g = Hess @ z + grad0
            u_next = np.clip(z - step * g, lo, hi)
            kkt = float(np.max(np.abs(u_next - np.clip(u_next - (Hess @ u_next + grad0), lo, hi))))
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t_acc * t_acc))
            z = u_next + ((t_acc - 1.0) / t_next) * (u_next - u)
            u, t_acc = u_next, t_next
            if kkt < cfg.kkt_tol:
                break
        else:
            raise MpcError(f"projected gradient stalled at KKT residual {kkt:.3e}")
        kkt_residual = kkt
    else:
        kkt_residual = float(np.max(np.abs(Hess @ u + grad0)))

    U = u.reshape(H, m)
    with np.errstate(over="ignore", invalid="ignore"):
        gammas = [gamma0]
        for i in range(H):
            gammas.append(A @ gammas[-1] + B @ U[i])
        gamma_traj = np.array(gammas)
        err = gamma_traj - gamma_des
        objective = float(err[0] @ Q @ err[0])
        for i in range(1, H):
            objective += float(err[i] @ Q @ err[i]) + float(U[i - 1] @ R @ U[i - 1])
        objective += float(U[H - 1] @ R @ U[H - 1]) + float(err[H] @ Qf @ err[H])
    if not math.isfinite(objective):
        raise MpcError("predicted lifted trajectory diverges over the horizon")
    return MpcSolution(U, gamma_traj, objective, kkt_residual)


def decode_input(model, x_believed: np.ndarray, u_tilde: np.ndarray, cfg: MpcConfig):
    """Physical command from a lifted input, clamped to the actuator box."""
    u = np.asarray(model.decode_input(x_believed, u_tilde), dtype=float)
    clamped = np.clip(u, cfg.u_min, cfg.u_max)
    return clamped, bool(np.any(clamped != u))


def _within_tolerance(x: np.ndarray, x_des: np.ndarray, cfg: MpcConfig) -> bool:
    if np.linalg.norm(x[:2] - x_des[:2]) >= cfg.pos_tol:
        return False
    if len(x_des) > 2 and abs(x[2] - x_des[2]) >= cfg.ori_tol_deg:
        return False
    return True


def run_open_loop(
    model, plant, x0: np.ndarray, x_des: np.ndarray, cfg: MpcConfig, on_step=None
) -> ControlLog:
    """Open-loop regulation toward ``x_des``.

    Every step: lift the believed state, solve the horizon problem, decode
    and clamp the first input, apply it to the plant, then advance the
    belief with the model's own prediction of the applied input.  Plant
    measurements are never consumed; the loop stops when the believed state
    enters the tolerance band or the step budget runs out.  ``on_step``
    receives each step record as it is logged (event streaming).
    """
    t0 = time.perf_counter()
    x_des = np.asarray(x_des, dtype=float)
    believed = np.asarray(x0, dtype=float).copy()
    gamma_des = model.lift(x_des)
    u_box = model.lifted_input_box(cfg.u_min, cfg.u_max)
    log = ControlLog()
    for k in range(cfg.max_steps):
        with np.errstate(over="ignore", invalid="ignore"):
            gamma = model.lift(believed)
        try:
            sol = solve_lifted_qp(gamma, gamma_des, model.A, model.B, cfg, u_box)
        except MpcError as err:
            raise MpcError(f"step {k}: {err}") from err
        u_cmd, saturated = decode_input(model, believed, sol.u_seq[0], cfg)
        x_true = plant.apply(u_cmd)
        u_used = model.encode_input(believed, u_cmd)
        gamma_next = model.A @ gamma + model.B @ u_used
        believed = model.decode_state(gamma_next)
        if not np.all(np.isfinite(believed)):
            raise MpcError(f"step {k}: model belief diverged (non-finite state)")
        rec = log.record(k, u_cmd, believed, x_true, sol.objective, saturated)
        if on_step is not None:
            on_step(rec)
        if _within_tolerance(believed, x_des, cfg):
            log.converged = True
            break
    rate = getattr(getattr(plant, "cfg", None), "sample_rate_hz", 1.0)
    log.sim_time_s = len(log.steps) / rate
    log.wall_time_s = time.perf_counter() - t0
    return log
