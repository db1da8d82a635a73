"""Interactive-position analog: six random reachable targets, open loop,
four models compared on Euclidean error statistics.

Usage: python scripts/run_experiment1.py [--out runs/exp1] [--seed 11]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from softkoopman.core import Normalizer
from softkoopman.edmd import Dictionary, fit_edmd
from softkoopman.experiments import run_experiment_1, write_report
from softkoopman.neural import TrainConfig, train, trial_split
from softkoopman.plant import PlantConfig, collect_random_walk


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/exp1")
    ap.add_argument("--seed", type=int, default=11)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=100)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = PlantConfig()
    dataset = collect_random_walk(cfg, (500, 500, 500, 500, 586), seed=args.data_seed)
    dataset = dataset.position_only()
    X, U, _ = dataset.arrays()
    mask = np.isin(dataset.trial_ids(), trial_split(dataset, 0.2)[0])
    norm = Normalizer.fit(X[mask], U[mask])

    tc = TrainConfig(epochs=args.epochs, dec_epochs=60, lr=1e-3, lr_decay=0.99, seed=1)
    models = {}
    for variant, tag in (("nink", "NNKM"), ("link", "LNKM")):
        t0 = time.perf_counter()
        models[tag] = train(dataset, tc, variant)
        print(f"trained {tag} in {time.perf_counter() - t0:.1f}s")
    models["MBKM"] = fit_edmd(dataset, Dictionary.monomial(2, 2), norm)
    models["SSM"] = fit_edmd(dataset, Dictionary.identity(2), norm)

    report = run_experiment_1(models, cfg, n_targets=6, seed=args.seed)
    write_report(out / "experiment1.json", report.to_json())
    s1, s2 = report.thresholds["sigma1"], report.thresholds["sigma2"]
    print(f"\nthresholds: sigma1 {s1:.2f} mm, sigma2 {s2:.2f} mm")
    print(f"{'method':>6}  {'AVG':>6}  {'STD':>6}  {'MAX':>6}  {'Acc(s1)':>8}  {'Acc(s2)':>8}")
    for row in report.rows:
        print(
            f"{row.method:>6}  {row.avg:6.2f}  {row.std:6.2f}  {row.max:6.2f}"
            f"  {row.acc['sigma1']:8.2%}  {row.acc['sigma2']:8.2%}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
