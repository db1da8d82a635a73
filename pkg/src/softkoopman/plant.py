"""Ground-truth simulated plant: a planar two-segment pneumatic catheter.

Each chamber pressure sets one segment's bend angle and length through
quadratic maps.  On top of that constant-curvature skeleton the plant adds
three realism knobs that the fitted models have to cope with: a first-order
pressure lag, a small cross-chamber coupling into the bend angles, and
Gaussian measurement noise on the returned pose.  Chamber 1 bends segment 1
toward +x, chamber 2 bends segment 2 toward -x, and both chambers elongate
their segment, so the workspace is tall and narrow (the x range is smaller
than the y range).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .core import ControlInput, Dataset, RobotState, Sample

DEG = math.pi / 180.0


@dataclass(frozen=True)
class Quadratic:
    """a*q^2 + b*q + c pressure-to-joint map."""

    a: float
    b: float
    c: float

    def __call__(self, q: float | np.ndarray) -> float | np.ndarray:
        return (self.a * q + self.b) * q + self.c

    def deriv(self, q: float | np.ndarray) -> float | np.ndarray:
        return 2.0 * self.a * q + self.b

    def coeffs(self) -> tuple[float, float, float]:
        return (self.a, self.b, self.c)


def bend_offsets(length: float, theta: float) -> tuple[float, float]:
    """In-plane tip displacement of a constant-curvature arc.

    Returns (lateral, axial) = ((l/theta)(1-cos theta), (l/theta) sin theta)
    with a series expansion below |theta| = 1e-6 so the map is continuous
    through the straight configuration.
    """
    if abs(theta) < 1e-6:
        t2 = theta * theta
        lateral = length * (theta / 2.0 - theta * t2 / 24.0)
        axial = length * (1.0 - t2 / 6.0 + t2 * t2 / 120.0)
        return lateral, axial
    half_sin = math.sin(0.5 * theta)
    # 2 sin^2(t/2) / t is (1 - cos t)/t without the cancellation near zero
    return (
        length * 2.0 * half_sin * half_sin / theta,
        length * math.sin(theta) / theta,
    )


def _tip_pose(
    th1: float, th2: float, l1: float, l2: float, h1: float, h2: float, h3: float
) -> tuple[float, float, float]:
    """Tip pose (x, y, theta_rad) from joint parameters.

    Straight sections translate along the local +y axis; a bend of +theta
    deflects the tip toward +x and rotates the frame clockwise by theta
    (the frame maps local +y onto (sin theta, cos theta) in world axes).
    """
    x = y = 0.0
    phi = 0.0  # accumulated clockwise bend
    for dx, dy, dphi in (
        (0.0, h1, 0.0),
        (*bend_offsets(l1, th1), th1),
        (0.0, h2, 0.0),
        (*bend_offsets(l2, th2), th2),
        (0.0, h3, 0.0),
    ):
        c, s = math.cos(phi), math.sin(phi)
        x += c * dx + s * dy
        y += -s * dx + c * dy
        phi += dphi
    return x, y, phi


@dataclass(frozen=True)
class PlantConfig:
    """Geometry, pressure maps and realism knobs of the simulated catheter.

    The length maps ``len1_map``/``len2_map`` return the full segment length,
    so their constant terms are the rest lengths.  ``coupling`` leaks a
    fraction of the opposite chamber's bend into each segment, ``lag`` is the
    first-order pressure filter coefficient (0 = instantaneous), and the
    noise fields are the per-component standard deviations of the returned
    measurement.  Default numbers are a design choice for a desk-scale
    simulator, not measured values.
    """

    theta1_map: Quadratic = Quadratic(a=2.65890e-05, b=7.0904e-04, c=0.0)
    len1_map: Quadratic = Quadratic(a=1.5625e-03, b=0.025, c=25.0)
    theta2_map: Quadratic = Quadratic(a=-2.29074e-05, b=-7.8540e-04, c=0.0)
    len2_map: Quadratic = Quadratic(a=1.640625e-03, b=0.03125, c=25.0)
    h1: float = 6.0
    h2: float = 4.0
    h3: float = 5.0
    u_min: float = 0.0
    u_max: float = 80.0
    coupling: float = 0.05
    lag: float = 0.3
    noise_pos_mm: float = 0.3
    noise_ori_deg: float = 0.3
    seed: int = 0
    sample_rate_hz: float = 2.0

    def __post_init__(self) -> None:
        if not self.u_min < self.u_max:
            raise ValueError("u_min must be below u_max")
        if not 0.0 <= self.lag < 1.0:
            raise ValueError("lag must lie in [0, 1)")
        if self.noise_pos_mm < 0 or self.noise_ori_deg < 0:
            raise ValueError("noise levels must be non-negative")
        if self.l1 <= 0 or self.l2 <= 0:
            raise ValueError("rest lengths must be positive")
        grid = np.linspace(self.u_min, self.u_max, 201)
        for th_map, ln_map, name in (
            (self.theta1_map, self.len1_map, "segment 1"),
            (self.theta2_map, self.len2_map, "segment 2"),
        ):
            lengths = np.asarray(ln_map(grid), dtype=float)
            if np.any(lengths <= 0):
                raise ValueError(f"{name} length map non-positive on pressure range")
            curv = np.abs(np.asarray(th_map(grid), dtype=float)) / lengths
            if np.any(np.diff(curv) < -1e-12):
                raise ValueError(f"{name} curvature not monotone over pressure range")

    @property
    def l1(self) -> float:
        return self.len1_map.c

    @property
    def l2(self) -> float:
        return self.len2_map.c

    @property
    def straight_height(self) -> float:
        return self.h1 + self.l1 + self.h2 + self.l2 + self.h3

    def joint_params(self, p1: float, p2: float) -> tuple[float, float, float, float]:
        """(theta1, theta2, l1, l2) in radians/mm for settled pressures."""
        th1 = self.theta1_map(p1) + self.coupling * self.theta2_map(p2)
        th2 = self.theta2_map(p2) + self.coupling * self.theta1_map(p1)
        return th1, th2, self.len1_map(p1), self.len2_map(p2)

    def to_json(self) -> dict:
        return {
            "theta1_map": self.theta1_map.coeffs(),
            "len1_map": self.len1_map.coeffs(),
            "theta2_map": self.theta2_map.coeffs(),
            "len2_map": self.len2_map.coeffs(),
            "h1": self.h1,
            "h2": self.h2,
            "h3": self.h3,
            "u_min": self.u_min,
            "u_max": self.u_max,
            "coupling": self.coupling,
            "lag": self.lag,
            "noise_pos_mm": self.noise_pos_mm,
            "noise_ori_deg": self.noise_ori_deg,
            "seed": self.seed,
            "sample_rate_hz": self.sample_rate_hz,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "PlantConfig":
        kwargs = dict(obj)
        for key in ("theta1_map", "len1_map", "theta2_map", "len2_map"):
            if key in kwargs:
                kwargs[key] = Quadratic(*kwargs[key])
        return cls(**kwargs)


@dataclass(frozen=True)
class PlantState:
    """Snapshot of the plant internals: joints, lagged pressures, stage."""

    theta1: float
    theta2: float
    l1: float
    l2: float
    pressures: tuple[float, float]
    stage: float


def settled_pose(cfg: PlantConfig, u1: float, u2: float, stage: float = 0.0) -> RobotState:
    """Noise-free pose once the pressure lag has fully settled."""
    th1, th2, l1, l2 = cfg.joint_params(u1, u2)
    x, y, phi = _tip_pose(th1, th2, l1, l2, cfg.h1, cfg.h2, cfg.h3)
    return RobotState(x + stage, y, phi / DEG)


class CatheterPlant:
    """Stateful simulator driven one control period at a time.

    One controller loop owns one plant; the RNG for measurement noise is
    per-plant and seeded, so runs are reproducible.
    """

    def __init__(self, cfg: PlantConfig, seed: int | None = None):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed if seed is None else seed)
        self._p = np.array([cfg.u_min, cfg.u_min], dtype=float)
        self._stage = 0.0

    @property
    def state(self) -> PlantState:
        th1, th2, l1, l2 = self.cfg.joint_params(self._p[0], self._p[1])
        return PlantState(th1, th2, l1, l2, (self._p[0], self._p[1]), self._stage)

    @property
    def stage(self) -> float:
        return self._stage

    def reset(
        self,
        seed: int | None = None,
        pressures: Sequence[float] = (0.0, 0.0),
        stage: float = 0.0,
    ) -> RobotState:
        """Re-seat the catheter at settled ``pressures`` and return a measurement."""
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        p, _ = ControlInput(float(pressures[0]), float(pressures[1])).clamped(
            self.cfg.u_min, self.cfg.u_max
        )
        self._p = p.pressures()
        self._stage = stage
        return self.measure()

    def true_pose(self) -> RobotState:
        return settled_pose(self.cfg, self._p[0], self._p[1], self._stage)

    def measure(self) -> RobotState:
        pose = self.true_pose()
        noise = self._rng.standard_normal(3)
        return RobotState(
            pose.x + self.cfg.noise_pos_mm * noise[0],
            pose.y + self.cfg.noise_pos_mm * noise[1],
            pose.theta + self.cfg.noise_ori_deg * noise[2],
        )

    def step(self, u: ControlInput) -> tuple[RobotState, bool]:
        """Advance one control period; returns (measured pose, saturated)."""
        cmd, saturated = u.clamped(self.cfg.u_min, self.cfg.u_max)
        self._p = self.cfg.lag * self._p + (1.0 - self.cfg.lag) * cmd.pressures()
        self._stage = cmd.stage
        return self.measure(), saturated

    def apply(self, u: np.ndarray) -> np.ndarray:
        """Array-facing step for controllers: keeps the current stage."""
        self.step(ControlInput(float(u[0]), float(u[1]), stage=self._stage))
        return self.true_pose().to_array()

    def set_stage(self, stage: float) -> RobotState:
        """Instantaneous, exact base translation (the steering stage)."""
        self._stage = float(stage)
        return self.true_pose()


def collect_random_walk(
    cfg: PlantConfig,
    trial_sizes: Iterable[int] = (500, 500, 500, 500, 586),
    seed: int = 0,
) -> Dataset:
    """Random-walk pressure excitation, one dataset sample per plant step.

    Per chamber and per step the commanded target moves by d * dq with
    d drawn from {-1, +1} and dq drawn uniformly from {0, 1, ..., 10} kPa,
    clamped to the pressure bounds.  Trials are independent: each starts
    from the straight, vented pose with its own RNG stream.
    """
    trial_sizes = list(trial_sizes)
    if any(n < 2 for n in trial_sizes):
        raise ValueError("each trial needs at least 2 samples")
    children = np.random.SeedSequence(seed).spawn(2 * len(trial_sizes))
    samples: list[Sample] = []
    for trial, size in enumerate(trial_sizes):
        walk_rng = np.random.default_rng(children[2 * trial])
        plant = CatheterPlant(cfg, seed=children[2 * trial + 1].entropy % (2**32))
        q = np.array([cfg.u_min, cfg.u_min], dtype=float)
        state = plant.reset(pressures=q)
        for _ in range(size):
            d = walk_rng.choice([-1.0, 1.0], size=2)
            dq = walk_rng.integers(0, 11, size=2).astype(float)
            q = np.clip(q + d * dq, cfg.u_min, cfg.u_max)
            u = ControlInput(q[0], q[1])
            nxt, _ = plant.step(u)
            samples.append(Sample(state, u, nxt, trial))
            state = nxt
    meta = {
        "sample_rate_hz": cfg.sample_rate_hz,
        "n_trials": len(trial_sizes),
        "seed": seed,
    }
    return Dataset(samples, meta)


def workspace_grid(cfg: PlantConfig, n: int = 50) -> np.ndarray:
    """Settled noise-free poses on an n-by-n pressure grid, shape (n*n, 3)."""
    qs = np.linspace(cfg.u_min, cfg.u_max, n)
    poses = np.empty((n * n, 3))
    k = 0
    for q1 in qs:
        for q2 in qs:
            poses[k] = settled_pose(cfg, q1, q2).to_array()
            k += 1
    return poses


def workspace_ranges(cfg: PlantConfig, n: int = 50) -> np.ndarray:
    """Per-dimension (x, y, theta) ranges of the unsteered workspace."""
    grid = workspace_grid(cfg, n)
    return grid.max(axis=0) - grid.min(axis=0)


def solve_pressures(
    cfg: PlantConfig,
    y_des: float,
    theta_des_deg: float,
    tol: float = 1e-9,
    max_iter: int = 60,
) -> np.ndarray:
    """Pressures whose settled pose matches (y, theta); Newton with FD Jacobian.

    Raises ValueError when the target is not on the reachable (y, theta)
    manifold to within ``tol``.
    """
    grid_n = 25
    qs = np.linspace(cfg.u_min, cfg.u_max, grid_n)
    best, best_err = None, np.inf
    for q1 in qs:
        for q2 in qs:
            p = settled_pose(cfg, q1, q2)
            err = (p.y - y_des) ** 2 + ((p.theta - theta_des_deg) * 0.5) ** 2
            if err < best_err:
                best, best_err = np.array([q1, q2]), err
    q = best.copy()
    h = 1e-5
    for _ in range(max_iter):
        pose = settled_pose(cfg, q[0], q[1])
        r = np.array([pose.y - y_des, pose.theta - theta_des_deg])
        if np.linalg.norm(r) < tol:
            return q
        J = np.empty((2, 2))
        for j in range(2):
            qp, qm = q.copy(), q.copy()
            qp[j] += h
            qm[j] -= h
            pp = settled_pose(cfg, qp[0], qp[1])
            pm = settled_pose(cfg, qm[0], qm[1])
            J[0, j] = (pp.y - pm.y) / (2 * h)
            J[1, j] = (pp.theta - pm.theta) / (2 * h)
        dq = np.linalg.solve(J.T @ J + 1e-12 * np.eye(2), J.T @ r)
        q = np.clip(q - dq, cfg.u_min, cfg.u_max)
    pose = settled_pose(cfg, q[0], q[1])
    r = np.array([pose.y - y_des, pose.theta - theta_des_deg])
    if np.linalg.norm(r) < 1e-6:
        return q
    raise ValueError(
        f"(y={y_des}, theta={theta_des_deg}) not reachable; residual {r.tolist()}"
    )


def steering_offset(x_w: float, x_d: float) -> float:
    """Stage steering offset dx = x_w - x_d between reachable and desired x."""
    return x_w - x_d


@dataclass(frozen=True)
class PoseTarget:
    x: float
    y: float
    theta: float


@dataclass(frozen=True)
class TargetPlan:
    """One atrium target with its in-workspace intermediate pose.

    ``dx`` is the steering offset x_w - x_d; the stage must move by -dx
    after the intermediate pose is reached.
    """

    target: PoseTarget
    intermediate: RobotState
    dx: float

    @property
    def stage_move(self) -> float:
        return -self.dx


@dataclass(frozen=True)
class AtriumScenario:
    """Five pose targets along the inner wall of an atrium-like cavity.

    Every target sits beyond the unsteered workspace bound ``x_w`` in x, so
    reaching it requires the stage maneuver.  The cavity dimensions are
    descriptive metadata for the scenario geometry.
    """

    targets: tuple[PoseTarget, ...]
    intermediates: tuple[RobotState, ...]
    x_w: float
    cavity_length_mm: float = 43.0
    entry_diameter_mm: float = 20.0

    def __post_init__(self) -> None:
        if len(self.targets) != len(self.intermediates):
            raise ValueError("each target needs an intermediate pose")
        for t in self.targets:
            if t.x <= self.x_w:
                raise ValueError(
                    f"target x={t.x} inside the unsteered workspace (x_w={self.x_w})"
                )

    @classmethod
    def build(
        cls,
        cfg: PlantConfig,
        wall_poses: Sequence[tuple[float, float, float]] | None = None,
    ) -> "AtriumScenario":
        """Construct the scenario for a plant configuration.

        ``wall_poses`` are (x, y, theta_deg) targets on the cavity wall; the
        defaults trace an arc just outside the +x edge of the workspace.
        Intermediate poses are solved on the true reachable manifold so each
        (y, theta) pair is attainable and only x needs the stage.
        """
        grid = workspace_grid(cfg, n=40)
        x_w = float(grid[:, 0].max())
        if wall_poses is None:
            wall_poses = _default_wall_poses(cfg, x_w)
        targets = []
        intermediates = []
        for x_d, y_d, th_d in wall_poses:
            q = solve_pressures(cfg, y_d, th_d)
            inter = settled_pose(cfg, q[0], q[1])
            targets.append(PoseTarget(float(x_d), float(y_d), float(th_d)))
            intermediates.append(inter)
        return cls(tuple(targets), tuple(intermediates), x_w)


def _default_wall_poses(cfg: PlantConfig, x_w: float) -> list[tuple[float, float, float]]:
    """Five wall poses on an arc beyond the +x workspace edge.

    (y, theta) pairs are taken from interior points of the reachable
    manifold; x positions step outward along the wall.
    """
    fractions = [
        (0.78, 0.15),  # (q1, q2) fractions of full pressure
        (0.85, 0.35),
        (0.80, 0.55),
        (0.65, 0.70),
        (0.45, 0.80),
    ]
    poses = []
    for i, (f1, f2) in enumerate(fractions):
        q1 = cfg.u_min + f1 * (cfg.u_max - cfg.u_min)
        q2 = cfg.u_min + f2 * (cfg.u_max - cfg.u_min)
        p = settled_pose(cfg, q1, q2)
        x_d = x_w + 6.0 + 4.0 * i
        poses.append((x_d, p.y, p.theta))
    return poses


def atrium_targets(scn: AtriumScenario) -> list[TargetPlan]:
    """Per-target plan: intermediate pose and steering offset dx = x_w - x_d."""
    plans = []
    for target, inter in zip(scn.targets, scn.intermediates):
        dx = steering_offset(inter.x, target.x)
        plans.append(TargetPlan(target, inter, dx))
    return plans
