"""Control run log shared by the lifted-space MPC and the PCC baseline.

Serialized as JSONL events so the evaluation harness and the HTTP service
consume the same records.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class StepRecord:
    step: int
    u_cmd: tuple[float, ...]
    x_believed: tuple[float, ...]
    x_true: tuple[float, ...]
    objective: float
    saturated: bool

    def to_json(self) -> dict:
        return {
            "step": self.step,
            "u_cmd": list(self.u_cmd),
            "x_believed": list(self.x_believed),
            "x_true": list(self.x_true),
            "objective": self.objective,
            "saturated": self.saturated,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "StepRecord":
        return cls(
            int(obj["step"]),
            tuple(obj["u_cmd"]),
            tuple(obj["x_believed"]),
            tuple(obj["x_true"]),
            float(obj["objective"]),
            bool(obj["saturated"]),
        )


@dataclass
class ControlLog:
    steps: list[StepRecord] = field(default_factory=list)
    converged: bool = False
    sim_time_s: float = 0.0
    wall_time_s: float = 0.0

    def __len__(self) -> int:
        return len(self.steps)

    def record(
        self,
        step: int,
        u_cmd: np.ndarray,
        x_believed: np.ndarray,
        x_true: np.ndarray,
        objective: float,
        saturated: bool,
    ) -> StepRecord:
        rec = StepRecord(
            step,
            tuple(float(v) for v in np.atleast_1d(u_cmd)),
            tuple(float(v) for v in np.atleast_1d(x_believed)),
            tuple(float(v) for v in np.atleast_1d(x_true)),
            float(objective),
            bool(saturated),
        )
        self.steps.append(rec)
        return rec

    @property
    def final_true(self) -> np.ndarray:
        return np.array(self.steps[-1].x_true)

    @property
    def final_believed(self) -> np.ndarray:
        return np.array(self.steps[-1].x_believed)

    @property
    def saturation_rate(self) -> float:
        if not self.steps:
            return 0.0
        return sum(s.saturated for s in self.steps) / len(self.steps)

    def save(self, path: str | Path) -> None:
        with Path(path).open("w") as fh:
            for rec in self.steps:
                fh.write(json.dumps(rec.to_json()) + "\n")
            fh.write(
                json.dumps(
                    {
                        "type": "summary",
                        "converged": self.converged,
                        "n_steps": len(self.steps),
                        "sim_time_s": self.sim_time_s,
                        "wall_time_s": self.wall_time_s,
                    }
                )
                + "\n"
            )

    @classmethod
    def load(cls, path: str | Path) -> "ControlLog":
        log = cls()
        with Path(path).open() as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                obj = json.loads(line)
                if obj.get("type") == "summary":
                    log.converged = bool(obj["converged"])
                    log.sim_time_s = float(obj["sim_time_s"])
                    log.wall_time_s = float(obj["wall_time_s"])
                else:
                    log.steps.append(StepRecord.from_json(obj))
        return log
