"""Atrium pose-task analog: five wall targets, eight trials each, steering
stage, five methods compared on position/orientation errors and time.

Usage: python scripts/run_experiment2.py [--out runs/exp2] [--seed 13]
"""

import argparse
import sys
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

import numpy as np

from softkoopman.core import Normalizer
from softkoopman.edmd import Dictionary, fit_edmd
from softkoopman.experiments import run_experiment_2, write_report
from softkoopman.neural import TrainConfig, train, trial_split
from softkoopman.pcc import calibrate
from softkoopman.plant import AtriumScenario, PlantConfig, collect_random_walk


def main() -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default="runs/exp2")
    ap.add_argument("--seed", type=int, default=13)
    ap.add_argument("--data-seed", type=int, default=7)
    ap.add_argument("--epochs", type=int, default=100)
    ap.add_argument("--trials-per-target", type=int, default=8)
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    cfg = PlantConfig()
    dataset = collect_random_walk(cfg, (500, 500, 500, 500, 586), seed=args.data_seed)
    X, U, _ = dataset.arrays()
    mask = np.isin(dataset.trial_ids(), trial_split(dataset, 0.2)[0])
    norm = Normalizer.fit(X[mask], U[mask])

    tc = TrainConfig(epochs=args.epochs, dec_epochs=60, lr=1e-3, lr_decay=0.99, seed=1)
    methods = {}
    for variant, tag in (("nink", "NNKM"), ("link", "LNKM")):
        t0 = time.perf_counter()
        methods[tag] = train(dataset, tc, variant)
        print(f"trained {tag} in {time.perf_counter() - t0:.1f}s")
    methods["MBKM"] = fit_edmd(dataset, Dictionary.monomial(3, 2), norm)
    methods["SSM"] = fit_edmd(dataset, Dictionary.identity(3), norm)
    methods["PCC"] = calibrate(cfg, seed=args.seed)

    scenario = AtriumScenario.build(cfg)
    print("targets:", [(round(t.x, 1), round(t.y, 1), round(t.theta, 1)) for t in scenario.targets])
    report = run_experiment_2(
        methods, cfg, scenario, trials_per_target=args.trials_per_target, seed=args.seed
    )
    write_report(out / "experiment2.json", report.to_json())
    report.write_trials_csv(out / "experiment2_trials.csv")
    print(f"\n{'method':>6}  {'AVGpos':>7}  {'STDpos':>7}  {'AVGori':>7}  {'STDori':>7}  {'Time(s)':>8}")
    for row in report.rows:
        print(
            f"{row.method:>6}  {row.avg_pos:7.2f}  {row.std_pos:7.2f}"
            f"  {row.avg_ori:7.2f}  {row.std_ori:7.2f}  {row.mean_time_s:8.1f}"
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
