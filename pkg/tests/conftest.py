"""Shared fixtures: plant config, the full dataset, and a lazily trained
model zoo reused across the suite (training is the expensive part)."""

from __future__ import annotations

import time

import numpy as np
import pytest

from softkoopman.core import Normalizer
from softkoopman.edmd import Dictionary, fit_edmd
from softkoopman.neural import TrainConfig, train, trial_split
from softkoopman.plant import PlantConfig, collect_random_walk

TRIAL_LAYOUT = (500, 500, 500, 500, 586)
DATA_SEED = 7
ZOO_SEEDS = (1, 2, 3)


def pipeline_train_config(seed: int) -> TrainConfig:
    return TrainConfig(epochs=100, dec_epochs=60, lr=1e-3, lr_decay=0.99, seed=seed)


@pytest.fixture(scope="session")
def plant_cfg() -> PlantConfig:
    return PlantConfig()


@pytest.fixture(scope="session")
def dataset(plant_cfg):
    t0 = time.perf_counter()
    ds = collect_random_walk(plant_cfg, TRIAL_LAYOUT, seed=DATA_SEED)
    ds.meta["collect_time_s"] = time.perf_counter() - t0
    return ds


class ModelZoo:
    """Trains/fits models on first use and caches them for the session."""

    def __init__(self, dataset):
        self.full = dataset
        self.position = dataset.position_only()
        self._cache: dict = {}
        self.train_times: dict[str, float] = {}

    def _dataset(self, n: int):
        return self.position if n == 2 else self.full

    def normalizer(self, n: int) -> Normalizer:
        key = ("norm", n)
        if key not in self._cache:
            ds = self._dataset(n)
            X, U, _ = ds.arrays()
            train_ids, _ = trial_split(ds, 0.2)
            mask = np.isin(ds.trial_ids(), train_ids)
            self._cache[key] = Normalizer.fit(X[mask], U[mask])
        return self._cache[key]

    def neural(self, variant: str, n: int, seed: int):
        key = (variant, n, seed)
        if key not in self._cache:
            t0 = time.perf_counter()
            model = train(self._dataset(n), pipeline_train_config(seed), variant)
            self.train_times[f"{variant}_n{n}_s{seed}"] = time.perf_counter() - t0
            self._cache[key] = model
        return self._cache[key]

    def edmd(self, kind: str, n: int):
        key = (kind, n)
        if key not in self._cache:
            t0 = time.perf_counter()
            dictionary = (
                Dictionary.identity(n) if kind == "ssm" else Dictionary.monomial(n, 2)
            )
            self._cache[key] = fit_edmd(self._dataset(n), dictionary, self.normalizer(n))
            self.train_times[f"{kind}_n{n}"] = time.perf_counter() - t0
        return self._cache[key]

    def val_ids(self, n: int):
        return trial_split(self._dataset(n), 0.2)[1]


@pytest.fixture(scope="session")
def zoo(dataset) -> ModelZoo:
    return ModelZoo(dataset)
