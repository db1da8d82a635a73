"""Collect the random-walk dataset, train all four pose models, and report
held-out one-step prediction RMSE per model.

Usage: python scripts/run_modeling.py [--out runs/modeling] [--seed 7]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from softkoopman.core import Normalizer
from softkoopman.edmd import Dictionary, fit_edmd
from softkoopman.experiments import modeling_report, write_report
from softkoopman.neural import TrainConfig, train, trial_split
from softkoopman.plant import PlantConfig, collect_random_walk


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/modeling")
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = PlantConfig()
    t0 = time.perf_counter()
    dataset = collect_random_walk(cfg, (500, 500, 500, 500, 586), seed=args.seed)
    dataset.save(out / "dataset.jsonl")
    print(f"collected {len(dataset)} samples in {time.perf_counter() - t0:.1f}s")

    X, U, _ = dataset.arrays()
    train_ids, val_ids = trial_split(dataset, 0.2)
    mask = np.isin(dataset.trial_ids(), train_ids)
    norm = Normalizer.fit(X[mask], U[mask])

    tc = TrainConfig(epochs=args.epochs, dec_epochs=60, lr=1e-3, lr_decay=0.99, seed=1)
    models = {}
    for variant, tag in (("nink", "NNKM"), ("link", "LNKM")):
        t0 = time.perf_counter()
        models[tag] = train(dataset, tc, variant)
        models[tag].save(out / f"{tag.lower()}_pose.json")
        print(f"trained {tag} in {time.perf_counter() - t0:.1f}s")
    models["MBKM"] = fit_edmd(dataset, Dictionary.monomial(3, 2), norm)
    models["SSM"] = fit_edmd(dataset, Dictionary.identity(3), norm)
    models["MBKM"].save(out / "mbkm_pose.json")
    models["SSM"].save(out / "ssm_pose.json")

    report = modeling_report(models, dataset, val_ids)
    write_report(out / "modeling.json", report)
    print(f"\nheld-out one-step RMSE (validation trial{val_ids}):")
    print(f"{'model':>6}  {'x':>7}  {'y':>7}  {'theta':>7}  {'mean':>7}")
    for name, row in report.items():
        per = row["per_dim"]
        print(f"{name:>6}  {per[0]:7.3f}  {per[1]:7.3f}  {per[2]:7.3f}  {row['mean']:7.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
