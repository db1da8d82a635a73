import math
from dataclasses import replace

import numpy as np
import pytest

from softkoopman.core import ControlInput
from softkoopman.pcc import PccParams, fk
from softkoopman.plant import (
    AtriumScenario,
    CatheterPlant,
    PlantConfig,
    Quadratic,
    atrium_targets,
    bend_offsets,
    collect_random_walk,
    settled_pose,
    steering_offset,
    workspace_grid,
)


def ideal_cfg(**kwargs) -> PlantConfig:
    base = dict(lag=0.0, coupling=0.0, noise_pos_mm=0.0, noise_ori_deg=0.0)
    base.update(kwargs)
    return replace(PlantConfig(), **base)


class TestKinematics:
    def test_straight_configuration(self):
        cfg = ideal_cfg()
        pose = settled_pose(cfg, 0.0, 0.0)
        assert pose.x == pytest.approx(0.0, abs=1e-12)
        assert pose.y == pytest.approx(cfg.straight_height, abs=1e-12)
        assert pose.theta == pytest.approx(0.0, abs=1e-12)

    def test_single_segment_quarter_circle(self):
        # unit-length arc bent to 90 degrees: tip at (2/pi, 2/pi)
        lateral, axial = bend_offsets(1.0, math.pi / 2)
        assert lateral == pytest.approx(2 / math.pi, abs=1e-12)
        assert axial == pytest.approx(2 / math.pi, abs=1e-12)

    def test_series_branch_continuous(self):
        for l in (1.0, 25.0):
            # continuity across zero: lateral is odd, axial is even
            xp, yp = bend_offsets(l, 1e-8)
            xm, ym = bend_offsets(l, -1e-8)
            assert abs(xp + xm) < 1e-10 and abs(yp - ym) < 1e-10
            # no jump at the series cutoff
            a = bend_offsets(l, 1e-6 - 1e-13)
            b = bend_offsets(l, 1e-6 + 1e-13)
            assert abs(a[0] - b[0]) < 1e-10 and abs(a[1] - b[1]) < 1e-10

    def test_step_deterministic_without_noise(self):
        cfg = ideal_cfg()
        p1, p2 = CatheterPlant(cfg, seed=1), CatheterPlant(cfg, seed=99)
        u = ControlInput(30.0, 50.0)
        a, _ = p1.step(u)
        b, _ = p2.step(u)
        assert a == b  # noise-free output independent of rng seed

    def test_matches_pcc_fk_when_ideal(self):
        cfg = ideal_cfg()
        params = PccParams.from_plant(cfg)
        plant = CatheterPlant(cfg)
        rng = np.random.default_rng(1)
        for _ in range(1000):
            q = rng.uniform(cfg.u_min, cfg.u_max, 2)
            plant.reset(pressures=q)
            ours = plant.true_pose().to_array()
            theirs = fk(q, params).to_array()
            assert np.abs(ours - theirs).max() < 1e-10


class TestPlantDynamics:
    def test_lag_filters_pressure(self):
        cfg = ideal_cfg(lag=0.5)
        plant = CatheterPlant(cfg)
        plant.step(ControlInput(40.0, 0.0))
        assert plant.state.pressures[0] == pytest.approx(20.0)
        plant.step(ControlInput(40.0, 0.0))
        assert plant.state.pressures[0] == pytest.approx(30.0)

    def test_coupling_bends_other_segment(self):
        cfg = ideal_cfg(coupling=0.1)
        plant = CatheterPlant(cfg)
        plant.reset(pressures=(0.0, 60.0))
        st = plant.state
        assert st.theta1 == pytest.approx(0.1 * cfg.theta2_map(60.0))

    def test_clamping_flagged(self):
        plant = CatheterPlant(ideal_cfg())
        _, saturated = plant.step(ControlInput(200.0, 10.0))
        assert saturated
        assert plant.state.pressures[0] == pytest.approx(80.0)

    def test_stage_shifts_x_only(self):
        cfg = ideal_cfg()
        plant = CatheterPlant(cfg)
        base = plant.true_pose()
        moved = plant.set_stage(-12.5)
        assert moved.x == pytest.approx(base.x - 12.5)
        assert moved.y == pytest.approx(base.y)

    def test_measurement_noise_reproducible(self):
        cfg = PlantConfig()
        a = CatheterPlant(cfg, seed=42).measure()
        b = CatheterPlant(cfg, seed=42).measure()
        assert a == b

    def test_curvature_monotonicity_enforced(self):
        with pytest.raises(ValueError, match="monotone"):
            replace(PlantConfig(), theta1_map=Quadratic(-1e-4, 5e-3, 0.0))


class TestRandomWalk:
    def test_walk_arithmetic(self):
        # q + d*dq with d in {-1, 1} and dq in {0..10}
        assert np.clip(20.0 + 1 * 10, 0, 80) == 30.0
        assert np.clip(80.0 + 1 * 7, 0, 80) == 80.0

    def test_layout_and_chaining(self, dataset):
        assert len(dataset) == 2586
        assert dataset.n_trials == 5
        dataset.validate_chaining()

    def test_pressures_stay_in_bounds(self, dataset, plant_cfg):
        _, U, _ = dataset.arrays()
        assert U.min() >= plant_cfg.u_min and U.max() <= plant_cfg.u_max

    def test_increments_at_most_ten(self, dataset):
        for chunk in dataset.trials().values():
            U = np.array([s.input.pressures() for s in chunk])
            steps = np.abs(np.diff(U, axis=0))
            assert steps.max() <= 10.0 + 1e-12

    def test_trials_reset_to_straight(self, dataset, plant_cfg):
        for chunk in dataset.trials().values():
            start = chunk[0].state
            assert abs(start.x) < 5 * plant_cfg.noise_pos_mm + 1e-9
            assert abs(start.y - plant_cfg.straight_height) < 5 * plant_cfg.noise_pos_mm

    def test_requires_two_samples(self, plant_cfg):
        with pytest.raises(ValueError):
            collect_random_walk(plant_cfg, (1,), seed=0)


class TestWorkspace:
    def test_x_narrower_than_y(self, plant_cfg):
        grid = workspace_grid(plant_cfg, 50)
        assert np.ptp(grid[:, 0]) < np.ptp(grid[:, 1])

    def test_theta_within_guarantee(self, plant_cfg):
        grid = workspace_grid(plant_cfg, 50)
        assert grid[:, 2].min() > -90.0 and grid[:, 2].max() < 90.0


class TestAtriumScenario:
    def test_steering_offset_formula(self):
        assert steering_offset(10.0, 25.0) == -15.0
        assert steering_offset(10.0, 10.0) == 0.0

    def test_zero_offset_means_target_reached_in_place(self, plant_cfg):
        scn = AtriumScenario.build(plant_cfg)
        plan = atrium_targets(scn)[0]
        # shifting the intermediate by the stage move lands on the target
        assert plan.intermediate.x + plan.stage_move == pytest.approx(plan.target.x)
        assert plan.intermediate.y == pytest.approx(plan.target.y)
        assert plan.intermediate.theta == pytest.approx(plan.target.theta, abs=1e-6)

    def test_all_targets_require_steering(self, plant_cfg):
        scn = AtriumScenario.build(plant_cfg)
        plans = atrium_targets(scn)
        assert len(plans) == 5
        assert all(abs(p.dx) > 0 for p in plans)

    def test_targets_outside_workspace_enforced(self, plant_cfg):
        scn = AtriumScenario.build(plant_cfg)
        inside = [(scn.x_w - 1.0, t.y, t.theta) for t in scn.targets]
        with pytest.raises(ValueError, match="inside"):
            AtriumScenario.build(plant_cfg, wall_poses=inside)

    def test_intermediates_on_manifold(self, plant_cfg):
        scn = AtriumScenario.build(plant_cfg)
        for t, inter in zip(scn.targets, scn.intermediates):
            assert inter.y == pytest.approx(t.y, abs=1e-6)
            assert inter.theta == pytest.approx(t.theta, abs=1e-6)
