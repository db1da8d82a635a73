"""Piecewise-constant-curvature baseline: kinematics, Jacobian, DLS control.

The model chains five planar transforms, base to tip:

    T = S(h1) B(theta1, l1) S(h2) B(theta2, l2) S(h3)

where S(h) translates along the local +y axis and B(theta, l) is a circular
arc of length l and bend theta whose tip displacement is
((l/theta)(1 - cos theta), (l/theta) sin theta) with the frame rotated
clockwise by theta.  The pressure-to-joint maps theta1(q1), l1(q1),
theta2(q2), l2(q2) are quadratics fitted empirically against the plant, so
the baseline carries exactly the calibration error a hardware fit would.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .control_log import ControlLog
from .core import ControlInput, RobotState
from .plant import CatheterPlant, PlantConfig, Quadratic, bend_offsets

DEG = math.pi / 180.0


@dataclass(frozen=True)
class PlanarTransform:
    """Rigid planar transform with a clockwise rotation angle (radians)."""

    angle: float
    translation: tuple[float, float]

    def as_matrix(self) -> np.ndarray:
        c, s = math.cos(self.angle), math.sin(self.angle)
        # clockwise convention: local +y maps onto (sin, cos) in parent axes
        return np.array(
            [
                [c, s, self.translation[0]],
                [-s, c, self.translation[1]],
                [0.0, 0.0, 1.0],
            ]
        )

    @classmethod
    def straight(cls, h: float) -> "PlanarTransform":
        return cls(0.0, (0.0, h))

    @classmethod
    def bend(cls, theta: float, length: float) -> "PlanarTransform":
        return cls(theta, bend_offsets(length, theta))


def fk_joints(
    th1: float, th2: float, l1: float, l2: float, h1: float, h2: float, h3: float
) -> np.ndarray:
    """Tip pose (x, y, theta_rad) via composed transforms."""
    T = np.eye(3)
    for tf in (
        PlanarTransform.straight(h1),
        PlanarTransform.bend(th1, l1),
        PlanarTransform.straight(h2),
        PlanarTransform.bend(th2, l2),
        PlanarTransform.straight(h3),
    ):
        T = T @ tf.as_matrix()
    # rotation block is [[c, s], [-s, c]] for the accumulated clockwise angle
    phi = math.atan2(T[0, 1], T[0, 0])
    return np.array([T[0, 2], T[1, 2], phi])


def fk_fused(
    th1: float, th2: float, l1: float, l2: float, h1: float, h2: float, h3: float
) -> np.ndarray:
    """Tip pose from the hand-expanded closed form (independent of fk_joints)."""
    ax1, ay1 = bend_offsets(l1, th1)
    ax2, ay2 = bend_offsets(l2, th2)
    c1, s1 = math.cos(th1), math.sin(th1)
    c12, s12 = math.cos(th1 + th2), math.sin(th1 + th2)
    x = ax1 + s1 * h2 + (c1 * ax2 + s1 * ay2) + s12 * h3
    y = h1 + ay1 + c1 * h2 + (-s1 * ax2 + c1 * ay2) + c12 * h3
    return np.array([x, y, th1 + th2])


@dataclass(frozen=True)
class PccParams:
    """Fitted pressure-to-joint maps plus the DLS controller knobs."""

    theta1_map: Quadratic
    len1_map: Quadratic
    theta2_map: Quadratic
    len2_map: Quadratic
    h1: float
    h2: float
    h3: float
    u_min: float
    u_max: float
    damping: float = 1e-2
    gain: np.ndarray | None = None
    step_budget: int = 100
    pos_tol: float = 0.2
    ori_tol_deg: float = 0.5

    def __post_init__(self) -> None:
        if self.damping <= 0:
            raise ValueError("damping must be positive")
        if self.gain is not None:
            P = np.asarray(self.gain, dtype=float)
            if not np.allclose(P, P.T, atol=1e-12):
                raise ValueError("gain matrix must be symmetric")
            if np.any(np.linalg.eigvalsh(P) <= 0):
                raise ValueError("gain matrix must be positive definite")
            object.__setattr__(self, "gain", P)
        grid = np.linspace(self.u_min, self.u_max, 101)
        for ln_map, name in ((self.len1_map, "segment 1"), (self.len2_map, "segment 2")):
            if np.any(np.asarray(ln_map(grid)) <= 0):
                raise ValueError(f"{name} length non-positive over pressure range")

    @classmethod
    def from_plant(cls, cfg: PlantConfig, **kwargs) -> "PccParams":
        """Copy the plant's true maps (the idealized, mismatch-free baseline)."""
        return cls(
            cfg.theta1_map,
            cfg.len1_map,
            cfg.theta2_map,
            cfg.len2_map,
            cfg.h1,
            cfg.h2,
            cfg.h3,
            cfg.u_min,
            cfg.u_max,
            **kwargs,
        )

    def joints(self, q: np.ndarray) -> np.ndarray:
        """(theta1, theta2, l1, l2) predicted by the fitted maps."""
        return np.array(
            [
                self.theta1_map(q[0]),
                self.theta2_map(q[1]),
                self.len1_map(q[0]),
                self.len2_map(q[1]),
            ]
        )

    def joint_jacobian(self, q: np.ndarray) -> np.ndarray:
        """Analytic d(joints)/dq, shape (4, 2)."""
        return np.array(
            [
                [self.theta1_map.deriv(q[0]), 0.0],
                [0.0, self.theta2_map.deriv(q[1])],
                [self.len1_map.deriv(q[0]), 0.0],
                [0.0, self.len2_map.deriv(q[1])],
            ]
        )


def calibrate(
    cfg: PlantConfig,
    n_points: int = 100,
    seed: int = 0,
    noise_theta_rad: float = 0.3 * DEG,
    noise_len_mm: float = 0.3,
    **kwargs,
) -> PccParams:
    """Fit the quadratic maps on a per-chamber pressure sweep of the plant.

    Each chamber is swept alone with the other vented, the lag is allowed
    to settle, and the joint parameters are read back with vision-level
    noise before the least-squares quadratic fit.  Cross-chamber coupling
    never shows up in a single-chamber sweep, so it remains an unmodeled
    effect of the fitted baseline.
    """
    rng = np.random.default_rng(seed)
    qs = np.linspace(cfg.u_min, cfg.u_max, n_points)
    th1 = np.array([cfg.joint_params(q, cfg.u_min)[0] for q in qs])
    l1 = np.array([cfg.joint_params(q, cfg.u_min)[2] for q in qs])
    th2 = np.array([cfg.joint_params(cfg.u_min, q)[1] for q in qs])
    l2 = np.array([cfg.joint_params(cfg.u_min, q)[3] for q in qs])
    th1 = th1 + noise_theta_rad * rng.standard_normal(n_points)
    th2 = th2 + noise_theta_rad * rng.standard_normal(n_points)
    l1 = l1 + noise_len_mm * rng.standard_normal(n_points)
    l2 = l2 + noise_len_mm * rng.standard_normal(n_points)
    fit = lambda y: Quadratic(*np.polyfit(qs, y, 2))
    return PccParams(
        fit(th1), fit(l1), fit(th2), fit(l2),
        cfg.h1, cfg.h2, cfg.h3, cfg.u_min, cfg.u_max, **kwargs,
    )


def fk(q: np.ndarray, p: PccParams) -> RobotState:
    """Model-predicted tip pose for chamber pressures q (degrees out)."""
    th1, th2, l1, l2 = p.joints(np.asarray(q, dtype=float))
    pose = fk_joints(th1, th2, l1, l2, p.h1, p.h2, p.h3)
    return RobotState(pose[0], pose[1], pose[2] / DEG)


def _fk_pose_rad(q: np.ndarray, p: PccParams) -> np.ndarray:
    th1, th2, l1, l2 = p.joints(q)
    return fk_joints(th1, th2, l1, l2, p.h1, p.h2, p.h3)


def jacobian(q: np.ndarray, p: PccParams, task_dim: int = 3) -> np.ndarray:
    """Task Jacobian d(pose)/dq, shape (task_dim, 2); theta row in radians.

    The pose-to-joint block is central finite differences on the transform
    chain; the joint-to-pressure block is the analytic derivative of the
    quadratic maps.
    """
    q = np.asarray(q, dtype=float)
    joints = p.joints(q)
    h = 1e-6
    Jx = np.empty((3, 4))
    for j in range(4):
        jp, jm = joints.copy(), joints.copy()
        jp[j] += h
        jm[j] -= h
        fp = fk_joints(jp[0], jp[1], jp[2], jp[3], p.h1, p.h2, p.h3)
        fm = fk_joints(jm[0], jm[1], jm[2], jm[3], p.h1, p.h2, p.h3)
        Jx[:, j] = (fp - fm) / (2 * h)
    J = Jx @ p.joint_jacobian(q)
    return J[:task_dim]


def dls_step(J: np.ndarray, dx_des: np.ndarray, p: PccParams) -> np.ndarray:
    """Damped least-squares pressure increment for a task-space error.

    Solves argmin ||J dq - P dx||^2 + damping ||dq||^2, i.e.
    dq = (J^T J + damping I)^-1 J^T P dx.
    """
    J = np.asarray(J, dtype=float)
    dx = np.asarray(dx_des, dtype=float)
    P = np.eye(J.shape[0]) if p.gain is None else p.gain
    if P.shape[0] != J.shape[0]:
        raise ValueError("gain matrix does not match task dimension")
    lhs = J.T @ J + p.damping * np.eye(J.shape[1])
    return np.linalg.solve(lhs, J.T @ (P @ dx))


def plan_resolved_rate(
    q0: np.ndarray, x_des: np.ndarray, p: PccParams
) -> tuple[list[np.ndarray], bool]:
    """Offline resolved-rate iteration against the model's own prediction.

    Returns the pressure command sequence and whether it converged within
    the step budget.  ``x_des`` is (x, y) or (x, y, theta_deg).
    """
    x_des = np.asarray(x_des, dtype=float)
    task_dim = x_des.shape[0]
    target = x_des.copy()
    if task_dim == 3:
        target[2] *= DEG
    q = np.asarray(q0, dtype=float).copy()
    commands: list[np.ndarray] = []
    converged = False
    for _ in range(p.step_budget):
        pose = _fk_pose_rad(q, p)[:task_dim]
        err = target - pose
        pos_ok = np.linalg.norm(err[:2]) < p.pos_tol
        ori_ok = task_dim < 3 or abs(err[2]) < p.ori_tol_deg * DEG
        if pos_ok and ori_ok:
            converged = True
            break
        J = jacobian(q, p, task_dim)
        dq = dls_step(J, err, p)
        q = np.clip(q + dq, p.u_min, p.u_max)
        commands.append(q.copy())
    return commands, converged


def pcc_control(
    plant: CatheterPlant,
    x_des: np.ndarray,
    p: PccParams,
    q0: np.ndarray = (0.0, 0.0),
    settle_steps: int = 6,
) -> ControlLog:
    """Plan offline with the PCC model, then replay open-loop on the plant.

    The believed trajectory is the model's own forward kinematics of each
    command; the true trajectory is the plant response.  The last command is
    held for ``settle_steps`` so the pressure lag washes out.
    """
    t0 = time.perf_counter()
    commands, converged = plan_resolved_rate(np.asarray(q0, dtype=float), x_des, p)
    log = ControlLog(converged=converged)
    for k, q in enumerate(commands):
        hold = settle_steps if k == len(commands) - 1 else 1
        for _ in range(hold):
            plant.step(ControlInput(q[0], q[1], stage=plant.stage))
        believed = fk(q, p).to_array()
        log.record(k, q, believed, plant.true_pose().to_array(), 0.0, False)
    log.sim_time_s = (len(commands) + max(0, settle_steps - 1)) / plant.cfg.sample_rate_hz
    log.wall_time_s = time.perf_counter() - t0
    return log
