"""Command-line entry: collect data, fit/train models, evaluate, serve."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .core import Dataset, Normalizer
from .edmd import Dictionary, fit_edmd
from .neural import TrainConfig, train, trial_split
from .plant import PlantConfig, collect_random_walk


def _load_plant(path: str | None) -> PlantConfig:
    if path is None:
        return PlantConfig()
    return PlantConfig.from_json(json.loads(Path(path).read_text()))


def cmd_collect(args) -> int:
    cfg = _load_plant(args.plant_config)
    sizes = [int(s) for s in args.trials.split(",")]
    ds = collect_random_walk(cfg, sizes, seed=args.seed)
    ds.save(args.out)
    print(f"wrote {len(ds)} samples over {ds.n_trials} trials to {args.out}")
    return 0


def cmd_fit(args) -> int:
    ds = Dataset.load(args.data)
    if args.position_only:
        ds = ds.position_only()
    X, U, _ = ds.arrays()
    train_ids, _ = trial_split(ds, args.val_fraction)
    mask = np.isin(ds.trial_ids(), train_ids)
    norm = Normalizer.fit(X[mask], U[mask])
    n = ds.state_dim
    if args.kind == "ssm":
        dictionary = Dictionary.identity(n)
    else:
        dictionary = Dictionary.monomial(n, args.degree)
    model = fit_edmd(ds, dictionary, norm)
    model.save(args.out)
    print(
        f"fitted {args.kind} (N={model.n_lift}, cond={model.cond:.2e}) -> {args.out}"
    )
    return 0


def cmd_train(args) -> int:
    ds = Dataset.load(args.data)
    if args.position_only:
        ds = ds.position_only()
    cfg = TrainConfig(
        epochs=args.epochs,
        dec_epochs=args.dec_epochs,
        lr=args.lr,
        lr_decay=args.lr_decay,
        r_loss=args.r_loss,
        seed=args.seed,
        batch=args.batch,
        n_lift=args.n_lift,
    )
    model = train(ds, cfg, args.variant)
    model.save(args.out)
    meta = model.train_meta
    print(
        f"trained {args.variant} in {meta['train_time_s']:.1f}s; "
        f"loss {meta['loss_curve'][0]:.4f} -> {meta['loss_curve'][-1]:.4f}; "
        f"recon rmse {np.round(meta['recon_rmse'], 3).tolist()} -> {args.out}"
    )
    return 0


def cmd_eval(args) -> int:
    from .experiments import (
        modeling_report,
        run_experiment_1,
        run_experiment_2,
        tag_models,
        write_report,
    )
    from .pcc import calibrate
    from .service import load_models

    cfg = _load_plant(args.plant_config)
    models = load_models(args.models_dir)
    if not models:
        print(f"no model checkpoints found in {args.models_dir}", file=sys.stderr)
        return 2
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures: list[str] = []

    if args.experiment in ("1", "all"):
        pos_models = tag_models({k: v for k, v in models.items() if v.n == 2})
        if pos_models:
            rep = run_experiment_1(pos_models, cfg, seed=args.seed)
            write_report(out_dir / "experiment1.json", rep.to_json())
            for row in rep.rows:
                print(
                    f"exp1 {row.method}: AVG {row.avg:.2f} STD {row.std:.2f} "
                    f"MAX {row.max:.2f} Acc1 {row.acc['sigma1']:.2f} Acc2 {row.acc['sigma2']:.2f}"
                )
            if "NNKM" in pos_models and "MBKM" in pos_models:
                if rep.row("NNKM").acc["sigma2"] < rep.row("MBKM").acc["sigma2"]:
                    failures.append("exp1: NNKM Acc(sigma2) below MBKM")
        else:
            print("exp1 skipped: no position-only (n=2) checkpoints")

    if args.experiment in ("2", "all"):
        pose_models = tag_models({k: v for k, v in models.items() if v.n == 3})
        if pose_models:
            methods = dict(pose_models)
            methods["PCC"] = calibrate(cfg, seed=args.seed)
            rep2 = run_experiment_2(methods, cfg, seed=args.seed)
            write_report(out_dir / "experiment2.json", rep2.to_json())
            rep2.write_trials_csv(out_dir / "experiment2_trials.csv")
            for row in rep2.rows:
                print(
                    f"exp2 {row.method}: AVGpos {row.avg_pos:.2f} STDpos {row.std_pos:.2f} "
                    f"AVGori {row.avg_ori:.2f} STDori {row.std_ori:.2f} T {row.mean_time_s:.1f}s"
                )
            if "NNKM" in pose_models:
                if rep2.row("NNKM").avg_pos > rep2.row("PCC").avg_pos:
                    failures.append("exp2: NNKM mean position error above PCC")
        else:
            print("exp2 skipped: no pose (n=3) checkpoints")

    if args.data:
        ds = Dataset.load(args.data)
        for proj, label in ((False, "pose"), (True, "position")):
            sub = ds.position_only() if proj else ds
            from .experiments import tag_models as _tag

            group = _tag({k: v for k, v in models.items() if v.n == sub.state_dim})
            if group:
                _, val_ids = trial_split(sub, 0.2)
                rep = modeling_report(group, sub, val_ids)
                write_report(out_dir / f"modeling_{label}.json", rep)
                for name, row in rep.items():
                    print(f"modeling[{label}] {name}: one-step rmse {row['mean']:.3f}")

    for msg in failures:
        print(f"FAIL {msg}", file=sys.stderr)
    return 1 if failures else 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app, load_models

    models = load_models(args.models_dir)
    if not models:
        print(f"no model checkpoints found in {args.models_dir}", file=sys.stderr)
        return 2
    app = create_app(
        models,
        _load_plant(args.plant_config),
        pace_hz=args.pace_hz,
        ui_dir=args.ui_dir,
    )
    uvicorn.run(app, host=args.host, port=args.port)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="softkoopman")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("collect", help="random-walk data collection on the simulator")
    c.add_argument("--out", required=True)
    c.add_argument("--trials", default="500,500,500,500,586")
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--plant-config", default=None)
    c.set_defaults(func=cmd_collect)

    f = sub.add_parser("fit", help="least-squares lifted model (monomial or plain)")
    f.add_argument("--data", required=True)
    f.add_argument("--out", required=True)
    f.add_argument("--kind", choices=["mbkm", "ssm"], default="mbkm")
    f.add_argument("--degree", type=int, default=2)
    f.add_argument("--position-only", action="store_true")
    f.add_argument("--val-fraction", type=float, default=0.2)
    f.set_defaults(func=cmd_fit)

    t = sub.add_parser("train", help="neural lifted model (two-stage)")
    t.add_argument("--data", required=True)
    t.add_argument("--out", required=True)
    t.add_argument("--variant", choices=["nink", "link"], default="nink")
    t.add_argument("--epochs", type=int, default=100)
    t.add_argument("--dec-epochs", type=int, default=60)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--lr-decay", type=float, default=0.99)
    t.add_argument("--r-loss", type=int, default=3)
    t.add_argument("--batch", type=int, default=8)
    t.add_argument("--n-lift", type=int, default=30)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--position-only", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="experiment protocols; nonzero exit on failed comparisons")
    e.add_argument("--models-dir", required=True)
    e.add_argument("--out", required=True)
    e.add_argument("--experiment", choices=["1", "2", "all"], default="all")
    e.add_argument("--data", default=None, help="dataset for held-out modeling RMSE")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--plant-config", default=None)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("serve", help="HTTP control service")
    s.add_argument("--models-dir", required=True)
    s.add_argument("--port", type=int, default=8000)
    s.add_argument("--host", default="127.0.0.1")
    s.add_argument("--pace-hz", type=float, default=20.0)
    s.add_argument("--ui-dir", default=None)
    s.add_argument("--plant-config", default=None)
    s.set_defaults(func=cmd_serve)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
