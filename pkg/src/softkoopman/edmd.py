"""Dictionary-based lifted linear identification via least squares.

States are lifted through a fixed dictionary (monomials, or the identity
for the plain linear state-space baseline), rows [phi(x_i), u_i] are stacked
against [phi(x_i+), u_i], and the lifted transition operator is solved as a
single least-squares problem.  The state/input blocks of that operator give
the lifted dynamics matrices A and B; the projection back to the state is
exact because the dictionary keeps the raw coordinates first.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, Normalizer


class FitWarning(UserWarning):
    """Conditioning problems detected while fitting."""


@dataclass(frozen=True)
class Dictionary:
    """Ordered evaluation table of monomial observables.

    The first ``n_state`` entries are the raw coordinates, then the constant,
    then higher-degree monomials in graded lexicographic order, so the
    state projection is the left identity block.  Inputs are never lifted;
    they enter the dynamics linearly.
    """

    kind: str
    n_state: int
    degree: int
    include_input: bool = False
    exponents: tuple[tuple[int, ...], ...] = field(default=())

    def __post_init__(self) -> None:
        if self.kind not in ("monomial", "identity"):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.include_input:
            raise ValueError("input-lifting dictionaries are not supported")
        if not self.exponents:
            object.__setattr__(self, "exponents", self._build())
        for i in range(self.n_state):
            unit = tuple(1 if j == i else 0 for j in range(self.n_state))
            if self.exponents[i] != unit:
                raise ValueError("dictionary must start with the raw state coordinates")

    def _build(self) -> tuple[tuple[int, ...], ...]:
        n = self.n_state
        units = [tuple(1 if j == i else 0 for j in range(n)) for i in range(n)]
        if self.kind == "identity":
            return tuple(units)
        rows: list[tuple[int, ...]] = list(units)
        rows.append(tuple(0 for _ in range(n)))  # constant term
        for deg in range(2, self.degree + 1):
            rows.extend(sorted(_exponents_of_degree(n, deg), reverse=True))
        return tuple(rows)

    @property
    def size(self) -> int:
        return len(self.exponents)

    def lift(self, x: np.ndarray) -> np.ndarray:
        """Evaluate every monomial; works on (n,) or (K, n) arrays."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n_state:
            raise ValueError(f"state dim {x.shape[-1]} != dictionary dim {self.n_state}")
        E = np.array(self.exponents, dtype=float)
        if x.ndim == 1:
            return np.prod(x[None, :] ** E, axis=1)
        return np.prod(x[:, None, :] ** E[None, :, :], axis=2)

    def projection(self) -> np.ndarray:
        """C with x = C phi(x) exactly, shape (n_state, size)."""
        C = np.zeros((self.n_state, self.size))
        C[:, : self.n_state] = np.eye(self.n_state)
        return C

    @classmethod
    def identity(cls, n_state: int) -> "Dictionary":
        return cls("identity", n_state, degree=1)

    @classmethod
    def monomial(cls, n_state: int, degree: int) -> "Dictionary":
        if degree < 1:
            raise ValueError("monomial degree must be at least 1")
        return cls("monomial", n_state, degree)

    def to_json(self) -> dict:
        return {"kind": self.kind, "n_state": self.n_state, "degree": self.degree}

    @classmethod
    def from_json(cls, obj: dict) -> "Dictionary":
        return cls(obj["kind"], int(obj["n_state"]), int(obj["degree"]))


def _exponents_of_degree(n: int, deg: int) -> list[tuple[int, ...]]:
    if n == 1:
        return [(deg,)]
    out = []
    for first in range(deg, -1, -1):
        out.extend((first, *rest) for rest in _exponents_of_degree(n - 1, deg - first))
    return out


def monomial_count(n_vars: int, degree: int) -> int:
    """Number of monomials of total degree <= degree, constant included."""
    return math.comb(n_vars + degree, degree)


def lift(x: np.ndarray, d: Dictionary) -> np.ndarray:
    """Deterministic dictionary evaluation; first n components equal x."""
    return d.lift(x)


@dataclass
class LinearLiftedModel:
    """Identified lifted dynamics (A, B) with dictionary lift and projection.

    All internal quantities live in normalized coordinates; the public
    methods take and return physical units.
    """

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    dictionary: Dictionary
    normalizer: Normalizer
    cond: float = 0.0
    rank: int = 0

    def __post_init__(self) -> None:
        for mat in (self.A, self.B, self.C):
            if not np.all(np.isfinite(mat)):
                raise ValueError("non-finite entries in fitted model")

    @property
    def n(self) -> int:
        return self.dictionary.n_state

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def n_lift(self) -> int:
        return self.dictionary.size

    def lift(self, x: np.ndarray) -> np.ndarray:
        return self.dictionary.lift(self.normalizer.state.normalize(np.asarray(x, dtype=float)))

    def decode_state(self, gamma: np.ndarray) -> np.ndarray:
        return self.normalizer.state.denormalize(np.asarray(gamma, dtype=float) @ self.C.T)

    def encode_input(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return self.normalizer.input.normalize(np.asarray(u, dtype=float))

    def decode_input(self, x: np.ndarray, u_tilde: np.ndarray) -> np.ndarray:
        return self.normalizer.input.denormalize(np.asarray(u_tilde, dtype=float))

    def lifted_input_box(self, u_min: float, u_max: float) -> tuple[np.ndarray, np.ndarray]:
        lo = self.normalizer.input.normalize(np.full(self.m, u_min))
        hi = self.normalizer.input.normalize(np.full(self.m, u_max))
        return lo, hi

    def save(self, path: str | Path) -> None:
        obj = {
            "kind": "edmd",
            "dict": self.dictionary.to_json(),
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "normalizer": self.normalizer.to_json(),
            "cond": self.cond,
            "rank": self.rank,
        }
        Path(path).write_text(json.dumps(obj))

    @classmethod
    def load(cls, path: str | Path) -> "LinearLiftedModel":
        obj = json.loads(Path(path).read_text())
        if obj.get("kind") != "edmd":
            raise ValueError(f"not a lifted linear model checkpoint: {obj.get('kind')}")
        return cls(
            np.array(obj["A"]),
            np.array(obj["B"]),
            np.array(obj["C"]),
            Dictionary.from_json(obj["dict"]),
            Normalizer.from_json(obj["normalizer"]),
            float(obj.get("cond", 0.0)),
            int(obj.get("rank", 0)),
        )


def fit_edmd(
    data: Dataset | tuple[np.ndarray, np.ndarray, np.ndarray],
    dictionary: Dictionary,
    normalizer: Normalizer | None = None,
    ridge: float = 1e-8,
) -> LinearLiftedModel:
    """Least-squares fit of the lifted transition operator.

    Stacks rows [phi(x_i), u_i] into G and [phi(x_i+), u_i] into H, solves
    G K = H through an orthogonal-factorization least-squares solve (with an
    optional tiny ridge for conditioning), and extracts A and B from the
    state block of K.  Rank deficiency falls back to the pseudo-inverse
    solution and raises a conditioning warning.
    """
    if isinstance(data, Dataset):
        X, U, Xn = data.arrays()
    else:
        X, U, Xn = (np.asarray(a, dtype=float) for a in data)
        X = np.atleast_2d(X.T).T if X.ndim == 1 else X
        U = np.atleast_2d(U.T).T if U.ndim == 1 else U
        Xn = np.atleast_2d(Xn.T).T if Xn.ndim == 1 else Xn
    n = dictionary.n_state
    if X.shape[1] != n:
        raise ValueError(f"data state dim {X.shape[1]} != dictionary dim {n}")
    m = U.shape[1]
    N = dictionary.size
    if X.shape[0] < N + m:
        raise ValueError(f"need at least N+m={N + m} samples, got {X.shape[0]}")
    norm = normalizer or Normalizer.identity(n, m)

    Phi = dictionary.lift(norm.state.normalize(X))
    Phin = dictionary.lift(norm.state.normalize(Xn))
    Un = norm.input.normalize(U)
    G = np.hstack([Phi, Un])
    H = np.hstack([Phin, Un])
    if ridge > 0:
        Ga = np.vstack([G, math.sqrt(ridge) * np.eye(N + m)])
        Ha = np.vstack([H, np.zeros((N + m, N + m))])
    else:
        Ga, Ha = G, H
    K, _, rank, svals = np.linalg.lstsq(Ga, Ha, rcond=None)
    cond = float(svals[0] / svals[-1]) if svals[-1] > 0 else np.inf
    if rank < N + m or cond > 1e12:
        warnings.warn(
            f"lifted regression ill-conditioned (rank {rank}/{N + m}, cond {cond:.2e}); "
            "solved via pseudo-inverse",
            FitWarning,
            stacklevel=2,
        )
    A = K[:N, :N].T
    B = K[N:, :N].T
    return LinearLiftedModel(A, B, dictionary.projection(), dictionary, norm, cond, int(rank))


def predict(
    model: LinearLiftedModel,
    x0: np.ndarray,
    inputs: np.ndarray,
    relift: bool = False,
) -> np.ndarray:
    """Multi-step prediction; row 0 is the (exact) projection of x0.

    Propagation stays in the lifted space; ``relift`` re-encodes the decoded
    state every step instead (ablation only).
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    gamma = model.lift(np.asarray(x0, dtype=float))
    out = [model.decode_state(gamma)]
    for u in inputs:
        u_t = model.encode_input(None, u)
        gamma = model.A @ gamma + model.B @ u_t
        x = model.decode_state(gamma)
        out.append(x)
        if relift:
            gamma = model.lift(x)
    return np.array(out)
