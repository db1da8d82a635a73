"""Evaluation metrics: per-dimension RMSE, threshold accuracy, error stats.

Thresholds are fractions of the workspace ranges: per-dimension for the
state-accuracy metric, and of the (x, y) range diagonal for the Euclidean
distance metric.  The standard deviation is the population form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class ThresholdPolicy:
    """Threshold as a fraction ``p`` of the workspace ranges."""

    p: float
    ranges: np.ndarray

    def __post_init__(self) -> None:
        if self.p <= 0:
            raise ValueError("threshold fraction must be positive")
        object.__setattr__(self, "ranges", np.asarray(self.ranges, dtype=float))

    def per_dim_sigma(self) -> np.ndarray:
        return self.p * self.ranges

    def euclidean_sigma(self) -> float:
        return self.p * float(np.hypot(self.ranges[0], self.ranges[1]))


@dataclass
class MetricReport:
    rmse: np.ndarray | None = None            # per state dimension
    acc: dict = field(default_factory=dict)   # label -> per-dim accuracy array
    avg: float = 0.0                          # Euclidean distance stats
    std: float = 0.0
    max: float = 0.0
    acc_euclidean: dict = field(default_factory=dict)  # label -> fraction
    d_err: np.ndarray | None = None           # per-target position errors
    theta_err: np.ndarray | None = None       # per-target orientation errors
    sim_time_s: float = 0.0
    wall_time_s: float = 0.0

    def __post_init__(self) -> None:
        if self.std < 0 or self.max < self.avg - 1e-12:
            raise ValueError("inconsistent error statistics")

    def to_json(self) -> dict:
        return {
            "rmse": None if self.rmse is None else np.asarray(self.rmse).tolist(),
            "acc": {k: np.asarray(v).tolist() for k, v in self.acc.items()},
            "avg": self.avg,
            "std": self.std,
            "max": self.max,
            "acc_euclidean": dict(self.acc_euclidean),
            "d_err": None if self.d_err is None else np.asarray(self.d_err).tolist(),
            "theta_err": None
            if self.theta_err is None
            else np.asarray(self.theta_err).tolist(),
            "sim_time_s": self.sim_time_s,
            "wall_time_s": self.wall_time_s,
        }


def distance_stats(d: np.ndarray) -> tuple[float, float, float]:
    """(AVG, STD, MAX) of a set of Euclidean distance errors; population STD."""
    d = np.asarray(d, dtype=float)
    if d.size == 0:
        raise ValueError("empty error set")
    avg = float(np.mean(d))
    std = float(np.sqrt(np.mean((d - avg) ** 2)))
    return avg, std, float(np.max(d))


def compute_metrics(
    pred: np.ndarray,
    truth: np.ndarray,
    policies: dict[str, ThresholdPolicy] | None = None,
) -> MetricReport:
    """Compare equal-length state sequences.

    Per-dimension RMSE and threshold accuracy, plus Euclidean distance
    statistics over the first two (position) dimensions.
    """
    pred = np.atleast_2d(np.asarray(pred, dtype=float))
    truth = np.atleast_2d(np.asarray(truth, dtype=float))
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {truth.shape}")
    if pred.size == 0:
        raise ValueError("empty input")
    err = pred - truth
    rmse = np.sqrt(np.mean(err**2, axis=0))
    d = np.linalg.norm(err[:, :2], axis=1)
    avg, std, dmax = distance_stats(d)
    report = MetricReport(rmse=rmse, avg=avg, std=std, max=dmax, d_err=d)
    if policies:
        for label, pol in policies.items():
            sig = pol.per_dim_sigma()[: err.shape[1]]
            report.acc[label] = np.mean(np.abs(err) <= sig, axis=0)
            report.acc_euclidean[label] = float(np.mean(d <= pol.euclidean_sigma()))
    return report
