"""Acceptance gate: every criterion as one test with a printed verdict.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one line per
criterion.  Comparative criteria use 3-seed means over the training seed to
damp initialization variance; thresholds are fixed here, nothing is
calibrated at runtime.
"""

import math
import time

import numpy as np
import pytest

from softkoopman.edmd import Dictionary, fit_edmd
from softkoopman.experiments import (
    modeling_report,
    run_experiment_1,
    run_experiment_2,
)
from softkoopman.metrics import ThresholdPolicy, compute_metrics, distance_stats
from softkoopman.mpc import MpcConfig, run_open_loop, solve_lifted_qp
from softkoopman.nets import finite_difference_probe
from softkoopman.neural import _init_partial, rollout_backward, rollout_loss
from softkoopman.pcc import PccParams, calibrate, dls_step, fk_joints
from softkoopman.plant import PlantConfig, workspace_ranges

from tests.conftest import ZOO_SEEDS
from tests.test_mpc import LinearModel, LinearPlant, kkt_reference_solution
from tests.test_neural import linear_dataset

EXPERIMENT_SEED = 11


def verdict(name: str, ok: bool, detail: str = "") -> None:
    line = f"ACCEPTANCE {'PASS' if ok else 'FAIL'}: {name}"
    if detail:
        line += f"  [{detail}]"
    print("\n" + line)
    assert ok, line


class TestAcceptance:
    def test_edmd_oracle_recovery(self):
        t0 = time.perf_counter()
        rng = np.random.default_rng(0)
        X = rng.uniform(-1, 1, (50, 1))
        U = rng.uniform(-1, 1, (50, 1))
        m1 = fit_edmd((X, U, 0.9 * X + 0.1 * U), Dictionary.identity(1))
        err1 = max(abs(m1.A[0, 0] - 0.9), abs(m1.B[0, 0] - 0.1))
        A0 = np.array([[0.8, 0.15], [-0.05, 0.6]])
        B0 = np.array([[0.2], [0.4]])
        X2 = rng.uniform(-1, 1, (50, 2))
        U2 = rng.uniform(-1, 1, (50, 1))
        m2 = fit_edmd((X2, U2, X2 @ A0.T + U2 @ B0.T), Dictionary.identity(2))
        err2 = max(np.abs(m2.A - A0).max(), np.abs(m2.B - B0).max())
        elapsed = time.perf_counter() - t0
        verdict(
            "EDMD oracle recovery",
            err1 < 1e-8 and err2 < 1e-8 and elapsed < 1.0,
            f"scalar {err1:.2e}, 2-state {err2:.2e}, {elapsed:.2f}s",
        )

    def test_gradient_suite(self):
        t0 = time.perf_counter()
        from softkoopman.core import Normalizer
        from softkoopman.neural import TrainConfig

        worst_overall = 0.0
        for variant in ("nink", "link"):
            cfg = TrainConfig(seed=3)  # full-size architecture
            model = _init_partial(3, 2, cfg, variant, Normalizer.identity(3, 2))
            rng = np.random.default_rng(1)
            model.A[:] = np.eye(30) * 0.9 + 0.02 * rng.standard_normal((30, 30))
            model.B[:] = 0.2 * rng.standard_normal((30, 2))
            Xw = rng.standard_normal((4, 4, 3))
            Uw = rng.standard_normal((4, 3, 2))
            _, ctx = rollout_loss(model, Xw, Uw)
            dA, dB, gx, gu = rollout_backward(model, ctx)
            tensors = [model.A, model.B] + model.enc_x.parameters()
            grads = [dA, dB] + [g for pair in gx for g in pair]
            if gu is not None:
                tensors += model.enc_u.parameters()
                grads += [g for pair in gu for g in pair]
            loss_fn = lambda: rollout_loss(model, Xw, Uw)[0]
            for tensor, grad in zip(tensors, grads):
                worst = finite_difference_probe(
                    loss_fn, [tensor], [grad], n_probes=64, rng=np.random.default_rng(5)
                )
                worst_overall = max(worst_overall, worst)
        elapsed = time.perf_counter() - t0
        verdict(
            "Gradient suite (64 probes per tensor)",
            worst_overall < 1e-4 and elapsed < 30.0,
            f"worst rel err {worst_overall:.2e}, {elapsed:.1f}s",
        )

    def test_reconstruction(self, zoo, plant_cfg):
        model = zoo.neural("nink", 3, ZOO_SEEDS[0])
        ranges = workspace_ranges(plant_cfg)
        recon = np.array(model.train_meta["recon_rmse"])
        roundtrip = model.train_meta["input_roundtrip_mean"]
        pressure_range = plant_cfg.u_max - plant_cfg.u_min
        verdict(
            "Reconstruction after two-stage training",
            bool(np.all(recon < 0.05 * ranges)) and roundtrip < 0.02 * pressure_range,
            f"recon {np.round(recon, 3).tolist()} vs {np.round(0.05 * ranges, 3).tolist()}, "
            f"input roundtrip {roundtrip:.3f} kPa vs {0.02 * pressure_range:.2f}",
        )

    def test_qp_optimality(self):
        rng = np.random.default_rng(2)
        worst_kkt = 0.0
        worst_gap = 0.0
        for _ in range(25):
            N, m, H = int(rng.integers(2, 7)), int(rng.integers(1, 3)), int(rng.integers(1, 6))
            A = 0.9 * rng.standard_normal((N, N)) / np.sqrt(N)
            B = rng.standard_normal((N, m))
            gamma0 = rng.standard_normal(N)
            gdes = np.tile(rng.standard_normal(N), (H + 1, 1))
            cfg = MpcConfig(horizon=H, r_weight=1e-2, u_min=-99, u_max=99)
            sol = solve_lifted_qp(gamma0, gdes, A, B, cfg)
            ref = kkt_reference_solution(gamma0, gdes, A, B, cfg)
            worst_kkt = max(worst_kkt, sol.kkt_residual)
            worst_gap = max(worst_gap, float(np.abs(sol.u_seq - ref).max()))
        cfg1 = MpcConfig(horizon=1, q_weight=1.0, r_weight=1.0, u_min=-9, u_max=9)
        hand = solve_lifted_qp(np.array([1.0]), np.array([0.0]), np.eye(1), np.eye(1), cfg1)
        hand_err = abs(hand.u_seq[0, 0] + 0.5)
        verdict(
            "QP optimality",
            worst_kkt < 1e-8 and worst_gap < 1e-9 and hand_err < 1e-10,
            f"kkt {worst_kkt:.2e}, vs dense {worst_gap:.2e}, hand case {hand_err:.2e}",
        )

    def test_exact_model_open_loop(self):
        A = np.array([[0.9, 0.2], [0.0, 0.8]])
        B = np.array([[0.1, 0.0], [0.05, 0.3]])
        model = LinearModel(A, B)
        plant = LinearPlant(A, B, [1.0, -0.5])
        cfg = MpcConfig(horizon=8, max_steps=20, u_min=-50, u_max=50,
                        pos_tol=1e-7, ori_tol_deg=1e-7, r_weight=1e-6)
        log = run_open_loop(model, plant, np.array([1.0, -0.5]), np.zeros(2), cfg)
        final = float(np.linalg.norm(log.final_true))
        belief_gap = max(
            float(np.abs(np.array(r.x_believed) - np.array(r.x_true)).max())
            for r in log.steps
        )
        verdict(
            "Exact-model open loop",
            final < 1e-6 and len(log) <= 20 and belief_gap == 0.0,
            f"|x| {final:.2e} in {len(log)} steps, belief gap {belief_gap:.1e}",
        )

    def test_pcc_closed_forms(self):
        cfg = PlantConfig(lag=0.0, coupling=0.0, noise_pos_mm=0.0, noise_ori_deg=0.0)
        straight = fk_joints(0.0, 0.0, cfg.l1, cfg.l2, cfg.h1, cfg.h2, cfg.h3)
        straight_err = max(
            abs(straight[0]), abs(straight[1] - cfg.straight_height), abs(straight[2])
        )
        quarter = fk_joints(math.pi / 2, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0)
        quarter_err = max(abs(quarter[0] - 2 / math.pi), abs(quarter[1] - 2 / math.pi))
        a = fk_joints(1e-8, 0.0, 25.0, 25.0, 6.0, 4.0, 5.0)
        b = fk_joints(-1e-8, 0.0, 25.0, 25.0, 6.0, 4.0, 5.0)
        continuity = max(abs(a[0] + b[0]), abs(a[1] - b[1]))
        rng = np.random.default_rng(3)
        params = PccParams.from_plant(cfg)
        dls_resid = 0.0
        for _ in range(50):
            J = rng.standard_normal((3, 2))
            dx = rng.standard_normal(3)
            dq = dls_step(J, dx, params)
            r = (J.T @ J + params.damping * np.eye(2)) @ dq - J.T @ dx
            dls_resid = max(dls_resid, float(np.abs(r).max()))
        verdict(
            "PCC closed forms",
            straight_err < 1e-10 and quarter_err < 1e-10
            and continuity < 1e-10 and dls_resid < 1e-10,
            f"straight {straight_err:.1e}, quarter {quarter_err:.1e}, "
            f"continuity {continuity:.1e}, dls {dls_resid:.1e}",
        )

    def test_modeling_ordering_and_budget(self, zoo, dataset):
        nink_means = []
        for seed in ZOO_SEEDS:
            rep = modeling_report(
                {"NINK": zoo.neural("nink", 3, seed)}, dataset, zoo.val_ids(3)
            )
            nink_means.append(rep["NINK"]["mean"])
        base = modeling_report(
            {"SSM": zoo.edmd("ssm", 3), "MBKM": zoo.edmd("mbkm", 3)},
            dataset,
            zoo.val_ids(3),
        )
        nink = float(np.mean(nink_means))
        ssm, mbkm = base["SSM"]["mean"], base["MBKM"]["mean"]
        pipeline_s = (
            dataset.meta["collect_time_s"]
            + zoo.train_times[f"nink_n3_s{ZOO_SEEDS[0]}"]
            + zoo.train_times.get("link_n3_s1", 0.0)
            + zoo.train_times["ssm_n3"]
            + zoo.train_times["mbkm_n3"]
        )
        verdict(
            "Modeling ordering (3-seed mean) and pipeline budget",
            nink < ssm and nink < mbkm and pipeline_s < 900.0,
            f"NINK {nink:.3f} < SSM {ssm:.3f} and < MBKM {mbkm:.3f}; "
            f"collect+train+eval {pipeline_s:.0f}s < 900s",
        )

    def test_experiment_1_analog(self, zoo, plant_cfg):
        mbkm = zoo.edmd("mbkm", 2)
        nnkm_acc, mbkm_acc, hits = [], [], []
        for seed in ZOO_SEEDS:
            rep = run_experiment_1(
                {"NNKM": zoo.neural("nink", 2, seed), "MBKM": mbkm},
                plant_cfg,
                n_targets=6,
                seed=EXPERIMENT_SEED,
            )
            nnkm_acc.append(rep.row("NNKM").acc["sigma2"])
            mbkm_acc.append(rep.row("MBKM").acc["sigma2"])
            hits.append(sum(d <= rep.thresholds["sigma2"] for d in rep.row("NNKM").d_err))
        mean_hits = float(np.mean(hits))
        verdict(
            "Experiment-1 analog",
            mean_hits >= 4.0 and np.mean(nnkm_acc) >= np.mean(mbkm_acc),
            f"NNKM hits {hits} (mean {mean_hits:.1f}/6), "
            f"Acc(sigma2) NNKM {np.mean(nnkm_acc):.2f} vs MBKM {np.mean(mbkm_acc):.2f}",
        )

    def test_experiment_2_analog(self, zoo, plant_cfg):
        pcc = calibrate(plant_cfg, seed=EXPERIMENT_SEED)
        methods = {
            "NNKM": zoo.neural("nink", 3, ZOO_SEEDS[0]),
            "LNKM": zoo.neural("link", 3, ZOO_SEEDS[0]),
            "MBKM": zoo.edmd("mbkm", 3),
            "SSM": zoo.edmd("ssm", 3),
            "PCC": pcc,
        }
        rep = run_experiment_2(methods, plant_cfg, trials_per_target=8, seed=EXPERIMENT_SEED)
        table = [r.as_table_row() for r in rep.rows]
        shape_ok = all(
            list(row.keys()) == ["method", "AVG_pos", "STD_pos", "AVG_ori", "STD_ori", "Time(s)"]
            for row in table
        ) and len(table) == 5
        nnkm_means = [rep.row("NNKM").avg_pos]
        for seed in ZOO_SEEDS[1:]:
            extra = run_experiment_2(
                {"NNKM": zoo.neural("nink", 3, seed)},
                plant_cfg,
                trials_per_target=8,
                seed=EXPERIMENT_SEED,
            )
            nnkm_means.append(extra.row("NNKM").avg_pos)
        nnkm = float(np.mean(nnkm_means))
        pcc_avg = rep.row("PCC").avg_pos
        print()
        for row in table:
            print(
                f"    {row['method']:>5}: pos {row['AVG_pos']:.2f}+-{row['STD_pos']:.2f} mm, "
                f"ori {row['AVG_ori']:.2f}+-{row['STD_ori']:.2f} deg, {row['Time(s)']:.1f}s"
            )
        verdict(
            "Experiment-2 analog (5 targets x 8 trials)",
            shape_ok and nnkm <= pcc_avg and len(rep.trials) == 5 * 5 * 8,
            f"NNKM mean pos {nnkm:.3f} <= PCC {pcc_avg:.3f}; table rows {len(table)}",
        )

    def test_metrics_unit_cases(self):
        avg, std, dmax = distance_stats([3.0, 4.0])
        case1 = avg == 3.5 and std == 0.5 and dmax == 4.0
        same = np.tile([1.0, 2.0], (4, 1))
        rep = compute_metrics(same, same.copy())
        case2 = rep.avg == rep.std == rep.max == 0.0 and np.all(rep.rmse == 0)
        d = np.array([[1.0, 0.0], [2.0, 0.0], [5.0, 0.0]])
        z = np.zeros_like(d)
        ranges = np.array([40.0, 40.0])
        accs = [
            compute_metrics(d, z, {"s": ThresholdPolicy(p, ranges)}).acc_euclidean["s"]
            for p in (0.01, 0.05, 0.1, 0.2)
        ]
        case3 = all(a <= b for a, b in zip(accs, accs[1:]))
        verdict(
            "Metrics unit cases",
            case1 and case2 and case3,
            f"{{3,4}} -> 3.5/0.5/4; identical -> zeros; Acc monotone {accs}",
        )

    def test_http_end_to_end_secondary(self, zoo, plant_cfg, tmp_path):
        """[SECONDARY] headless client vs harness equivalence over HTTP."""
        from fastapi.testclient import TestClient

        from softkoopman.experiments import (
            default_mpc_config,
            run_seed,
            run_single_target,
            sample_reachable_targets,
        )
        from softkoopman.service import create_app

        model = zoo.neural("nink", 2, ZOO_SEEDS[0])
        app = create_app({"nnkm": model}, plant_cfg, pace_hz=0.0)
        seed = 21
        targets = sample_reachable_targets(plant_cfg, 6, run_seed(seed, 0))
        mpc_cfg = default_mpc_config(plant_cfg)
        harness = []
        for k, t in enumerate(targets):
            _, final = run_single_target(
                model, plant_cfg, t, mpc_cfg, reset_seed=run_seed(seed, 1, k)
            )
            harness.append(float(np.linalg.norm(final[:2] - t[:2])))
        with TestClient(app) as client:
            sid = client.post("/sessions", json={"model": "nnkm"}).json()["id"]
            service = []
            for k, t in enumerate(targets):
                client.post(
                    f"/sessions/{sid}/target",
                    json={"x": t[0], "y": t[1], "seed": run_seed(seed, 1, k)},
                )
                import json as _json

                with client.stream("GET", f"/sessions/{sid}/events") as r:
                    last = None
                    for line in r.iter_lines():
                        if line:
                            last = _json.loads(line)
                    service.append(last["d_err"])
        gap = float(np.abs(np.array(service) - np.array(harness)).max())
        verdict(
            "HTTP end-to-end equivalence (secondary)",
            gap < 1e-9,
            f"six targets, worst |service - harness| = {gap:.2e}",
        )
