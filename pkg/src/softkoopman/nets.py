"""Small feedforward networks with hand-rolled reverse-mode gradients.

Everything here is plain numpy: forward passes cache pre-activations, the
backward pass walks the cache in reverse and returns exact parameter and
input gradients.  The adaptive-moment optimizer updates parameter arrays
in place so layer objects can be shared with the optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

_ACT: dict[str, tuple[Callable, Callable]] = {
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
    "linear": (lambda z: z, lambda z: np.ones_like(z)),
}


@dataclass
class Layer:
    w: np.ndarray  # (out, in)
    b: np.ndarray  # (out,)
    act: str = "linear"

    def __post_init__(self) -> None:
        if self.act not in _ACT:
            raise ValueError(f"unknown activation {self.act!r}")
        if self.w.shape[0] != self.b.shape[0]:
            raise ValueError("bias size does not match layer width")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.b))):
            raise ValueError("non-finite layer parameters")


class Mlp:
    """Affine-then-activation stack; the final layer is always linear."""

    def __init__(self, layers: list[Layer]):
        if not layers:
            raise ValueError("empty network")
        for prev, nxt in zip(layers, layers[1:]):
            if nxt.w.shape[1] != prev.w.shape[0]:
                raise ValueError("layer dimensions do not chain")
        self.layers = layers

    @classmethod
    def create(
        cls,
        sizes: Sequence[int],
        rng: np.random.Generator,
        activation: str = "tanh",
    ) -> "Mlp":
        """Build from [in, hidden..., out] with uniform fan-in init."""
        if len(sizes) < 2:
            raise ValueError("need at least input and output sizes")
        layers = []
        for i, (fan_in, fan_out) in enumerate(zip(sizes, sizes[1:])):
            bound = 1.0 / np.sqrt(fan_in)
            act = activation if i < len(sizes) - 2 else "linear"
            layers.append(
                Layer(
                    rng.uniform(-bound, bound, (fan_out, fan_in)),
                    rng.uniform(-bound, bound, fan_out),
                    act,
                )
            )
        return cls(layers)

    @property
    def in_dim(self) -> int:
        return self.layers[0].w.shape[1]

    @property
    def out_dim(self) -> int:
        return self.layers[-1].w.shape[0]

    def parameters(self) -> list[np.ndarray]:
        out = []
        for layer in self.layers:
            out.extend([layer.w, layer.b])
        return out

    def forward(self, v: np.ndarray) -> np.ndarray:
        out, _ = self.forward_cached(v)
        return out

    def forward_cached(self, v: np.ndarray) -> tuple[np.ndarray, list]:
        """Forward pass keeping (input, pre-activation) per layer."""
        v = np.asarray(v, dtype=float)
        if v.shape[-1] != self.in_dim:
            raise ValueError(f"input dim {v.shape[-1]} != network dim {self.in_dim}")
        cache = []
        h = v
        for layer in self.layers:
            z = h @ layer.w.T + layer.b
            cache.append((h, z))
            h = _ACT[layer.act][0](z)
        return h, cache

    def backward(
        self, cache: list, grad_out: np.ndarray
    ) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
        """Exact reverse-mode pass.

        ``grad_out`` is dL/d(output) with the same shape as the forward
        output.  Returns (dL/d(input), [(dW, db) per layer]).
        """
        g = np.asarray(grad_out, dtype=float)
        grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(self.layers)
        for i in range(len(self.layers) - 1, -1, -1):
            h_in, z = cache[i]
            dz = g * _ACT[self.layers[i].act][1](z)
            if dz.ndim == 1:
                dw = np.outer(dz, h_in)
                db = dz.copy()
            else:
                dw = dz.T @ h_in
                db = dz.sum(axis=0)
            grads[i] = (dw, db)
            g = dz @ self.layers[i].w
        return g, grads

    def accumulate(
        self,
        grads: list[tuple[np.ndarray, np.ndarray]],
        into: list[np.ndarray],
        offset: int = 0,
    ) -> None:
        """Add per-layer (dW, db) into a flat parameter-gradient list."""
        for i, (dw, db) in enumerate(grads):
            into[offset + 2 * i] += dw
            into[offset + 2 * i + 1] += db

    def to_json(self) -> list[dict]:
        return [
            {"w": layer.w.tolist(), "b": layer.b.tolist(), "act": layer.act}
            for layer in self.layers
        ]

    @classmethod
    def from_json(cls, obj: list[dict]) -> "Mlp":
        return cls(
            [Layer(np.array(o["w"]), np.array(o["b"]), o["act"]) for o in obj]
        )


def mlp_forward(net: Mlp, v: np.ndarray) -> np.ndarray:
    return net.forward(v)


def mlp_backward(
    net: Mlp, v: np.ndarray, grad_out: np.ndarray
) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Gradients of sum(grad_out * net(v)) w.r.t. input and parameters."""
    _, cache = net.forward_cached(v)
    return net.backward(cache, grad_out)


class Adam:
    """Adaptive-moment gradient descent updating arrays in place."""

    def __init__(
        self,
        params: list[np.ndarray],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ):
        self.params = params
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


def finite_difference_probe(
    loss_fn: Callable[[], float],
    tensors: list[np.ndarray],
    grads: list[np.ndarray],
    n_probes: int = 64,
    h: float = 1e-5,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    Probes ``n_probes`` random scalar parameters across all tensors;
    ``loss_fn`` must read the live tensor values.
    """
    rng = rng or np.random.default_rng(0)
    sizes = np.array([t.size for t in tensors])
    cum = np.cumsum(sizes)
    worst = 0.0
    for flat_idx in rng.choice(int(cum[-1]), size=min(n_probes, int(cum[-1])), replace=False):
        ti = int(np.searchsorted(cum, flat_idx, side="right"))
        local = int(flat_idx - (cum[ti - 1] if ti else 0))
        t = tensors[ti]
        orig = t.flat[local]
        t.flat[local] = orig + h
        lp = loss_fn()
        t.flat[local] = orig - h
        lm = loss_fn()
        t.flat[local] = orig
        fd = (lp - lm) / (2 * h)
        an = grads[ti].flat[local]
        rel = abs(fd - an) / max(abs(fd) + abs(an), 1e-8)
        worst = max(worst, rel)
    return worst
