"""Shared domain types: robot state, control input, datasets, normalization.

Units are millimeters for positions, degrees for the tip angle and
kilopascals for chamber pressures.  Angles are converted to radians only
inside the modules that do trigonometry.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np


class DatasetError(ValueError):
    """Malformed dataset file or violated sample-chaining invariant."""


@dataclass(frozen=True)
class RobotState:
    """Planar tip pose of the catheter.

    ``theta`` is the tip tangent angle measured from the +y axis, positive
    toward +x, in degrees; it stays inside (-90, 90) so angle differences
    never need wrapping.  Position-only tasks leave ``theta`` as None.
    """

    x: float
    y: float
    theta: float | None = None

    def __post_init__(self) -> None:
        vals = [self.x, self.y] + ([] if self.theta is None else [self.theta])
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"non-finite robot state {vals}")
        if self.theta is not None and not (-90.0 < self.theta < 90.0):
            raise ValueError(f"tip angle {self.theta} deg outside (-90, 90)")

    @property
    def dim(self) -> int:
        return 2 if self.theta is None else 3

    def to_array(self) -> np.ndarray:
        if self.theta is None:
            return np.array([self.x, self.y], dtype=float)
        return np.array([self.x, self.y, self.theta], dtype=float)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "RobotState":
        arr = list(arr)
        if len(arr) == 2:
            return cls(float(arr[0]), float(arr[1]))
        if len(arr) == 3:
            return cls(float(arr[0]), float(arr[1]), float(arr[2]))
        raise ValueError(f"robot state needs 2 or 3 components, got {len(arr)}")

    def position_only(self) -> "RobotState":
        return RobotState(self.x, self.y)


@dataclass(frozen=True)
class ControlInput:
    """Two chamber pressures plus the translation-stage offset.

    ``stage`` is the absolute base translation along x in millimeters;
    ordinary pressure commands leave it at zero.  Pressure bounds are owned
    by the plant/controller configuration, so only finiteness is checked
    here; clamping happens where the bounds are known.
    """

    u1: float
    u2: float
    stage: float = 0.0

    def __post_init__(self) -> None:
        if not all(math.isfinite(v) for v in (self.u1, self.u2, self.stage)):
            raise ValueError("non-finite control input")

    def pressures(self) -> np.ndarray:
        return np.array([self.u1, self.u2], dtype=float)

    def clamped(self, u_min: float, u_max: float) -> tuple["ControlInput", bool]:
        c1 = min(max(self.u1, u_min), u_max)
        c2 = min(max(self.u2, u_min), u_max)
        saturated = (c1 != self.u1) or (c2 != self.u2)
        return ControlInput(c1, c2, self.stage), saturated

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> "ControlInput":
        arr = list(arr)
        if len(arr) == 2:
            return cls(float(arr[0]), float(arr[1]))
        if len(arr) == 3:
            return cls(float(arr[0]), float(arr[1]), float(arr[2]))
        raise ValueError(f"control input needs 2 or 3 components, got {len(arr)}")


@dataclass(frozen=True)
class Sample:
    """One transition (state, input, next state) inside a trial."""

    state: RobotState
    input: ControlInput
    next_state: RobotState
    trial_id: int


@dataclass
class Dataset:
    """Time-ordered transitions with explicit trial boundaries.

    Within a trial, consecutive samples chain: ``samples[k].next_state ==
    samples[k+1].state`` with exact float equality.  Trial ids are stored
    explicitly so shuffled minibatches can never fabricate a cross-trial
    transition.
    """

    samples: list[Sample]
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_trials(self) -> int:
        return len({s.trial_id for s in self.samples})

    @property
    def state_dim(self) -> int:
        return self.samples[0].state.dim if self.samples else 0

    def trials(self) -> dict[int, list[Sample]]:
        """Samples grouped by trial id, preserving order."""
        out: dict[int, list[Sample]] = {}
        for s in self.samples:
            out.setdefault(s.trial_id, []).append(s)
        return out

    def validate_chaining(self) -> None:
        for tid, chunk in self.trials().items():
            for k in range(len(chunk) - 1):
                a = chunk[k].next_state.to_array()
                b = chunk[k + 1].state.to_array()
                if a.shape != b.shape or not np.array_equal(a, b):
                    idx = self.samples.index(chunk[k + 1])
                    raise DatasetError(
                        f"chaining violated at sample {idx} (trial {tid}): "
                        f"next_state {a.tolist()} != state {b.tolist()}"
                    )

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(X, U, X_next) stacked float arrays; U holds the two pressures."""
        X = np.array([s.state.to_array() for s in self.samples])
        U = np.array([s.input.pressures() for s in self.samples])
        Xn = np.array([s.next_state.to_array() for s in self.samples])
        return X, U, Xn

    def trial_ids(self) -> np.ndarray:
        return np.array([s.trial_id for s in self.samples], dtype=int)

    def position_only(self) -> "Dataset":
        """Copy with theta dropped: the n=2 dataset for position tasks."""
        samples = [
            Sample(s.state.position_only(), s.input, s.next_state.position_only(), s.trial_id)
            for s in self.samples
        ]
        return Dataset(samples, dict(self.meta))

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with path.open("w") as fh:
            fh.write(json.dumps({"meta": self.meta}) + "\n")
            for s in self.samples:
                u = [s.input.u1, s.input.u2]
                if s.input.stage != 0.0:
                    u.append(s.input.stage)
                row = {
                    "trial": s.trial_id,
                    "x": s.state.to_array().tolist(),
                    "u": u,
                    "x_next": s.next_state.to_array().tolist(),
                }
                fh.write(json.dumps(row) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "Dataset":
        path = Path(path)
        meta: dict = {}
        samples: list[Sample] = []
        with path.open() as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                except json.JSONDecodeError as err:
                    raise DatasetError(f"{path}:{lineno}: malformed JSON ({err.msg})") from err
                if "meta" in row:
                    meta = row["meta"]
                    continue
                try:
                    samples.append(
                        Sample(
                            RobotState.from_array(row["x"]),
                            ControlInput.from_array(row["u"]),
                            RobotState.from_array(row["x_next"]),
                            int(row["trial"]),
                        )
                    )
                except (KeyError, ValueError) as err:
                    raise DatasetError(f"{path}:{lineno}: bad sample ({err})") from err
        ds = cls(samples, meta)
        ds.validate_chaining()
        return ds


@dataclass(frozen=True)
class Affine:
    """Per-dimension shift/scale for one vector kind (state or input)."""

    mean: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "scale", np.asarray(self.scale, dtype=float))
        if self.mean.shape != self.scale.shape:
            raise ValueError("mean and scale shapes differ")
        if not np.all(self.scale > 0):
            raise ValueError("scale must be positive in every dimension")

    @property
    def dim(self) -> int:
        return self.mean.shape[0]

    def normalize(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"vector dim {v.shape[-1]} != normalizer dim {self.dim}")
        return (v - self.mean) / self.scale

    def denormalize(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.dim:
            raise ValueError(f"vector dim {v.shape[-1]} != normalizer dim {self.dim}")
        return v * self.scale + self.mean

    @classmethod
    def identity(cls, dim: int) -> "Affine":
        return cls(np.zeros(dim), np.ones(dim))

    @classmethod
    def fit(cls, arr: np.ndarray, min_scale: float = 1e-9) -> "Affine":
        arr = np.asarray(arr, dtype=float)
        mean = arr.mean(axis=0)
        scale = np.maximum(arr.std(axis=0), min_scale)
        return cls(mean, scale)

    def to_json(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "Affine":
        return cls(np.array(obj["mean"]), np.array(obj["scale"]))


@dataclass(frozen=True)
class Normalizer:
    """Paired state/input affine maps used by every fitted model."""

    state: Affine
    input: Affine

    @classmethod
    def identity(cls, n: int, m: int) -> "Normalizer":
        return cls(Affine.identity(n), Affine.identity(m))

    @classmethod
    def fit(cls, X: np.ndarray, U: np.ndarray) -> "Normalizer":
        return cls(Affine.fit(X), Affine.fit(U))

    def to_json(self) -> dict:
        return {"state": self.state.to_json(), "input": self.input.to_json()}

    @classmethod
    def from_json(cls, obj: dict) -> "Normalizer":
        return cls(Affine.from_json(obj["state"]), Affine.from_json(obj["input"]))


def normalize(v: np.ndarray, affine: Affine) -> np.ndarray:
    """Componentwise (v - mean) / scale."""
    return affine.normalize(v)


def denormalize(v: np.ndarray, affine: Affine) -> np.ndarray:
    return affine.denormalize(v)
