"""Neural lifted models: encoders, decoders and joint (A, B) training.

Two variants share one code path.  The nonlinear-input variant ("nink")
encodes the pair (state, input) into the lifted input, so actuation can
enter the dynamics nonlinearly; the linear-input variant ("link") feeds the
raw (normalized) input straight into B.  Training is two-stage: first the
state/input encoders and the lifted dynamics matrices are fitted end-to-end
on a multi-step lifted prediction loss, then the decoders are fitted with
the encoders frozen.  All gradients come from the hand-rolled reverse-mode
pass in ``nets``.

The lifted state is anchored: its first n components are the normalized
state itself and the encoder network supplies the remaining components.
A fully learned lifting makes the stage-one loss degenerate (a constant
state encoding compensated through the trainable input path is a global
minimum, and the output scale is a flat direction), whereas the anchored
form keeps the loss a genuine multi-step state prediction error while the
learned components add whatever nonlinear structure helps.  Decoding still
goes through a separate network, which outperforms the plain projection
once predictions leave the encoded manifold.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Dataset, Normalizer
from .nets import Adam, Mlp


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for both training stages.

    ``r_loss`` is the rollout length of the multi-step lifted loss;
    ``val_fraction`` selects whole trials for validation (never single
    samples, so no window ever crosses a trial boundary).
    """

    batch: int = 8
    lr: float = 1e-3
    lr_decay: float = 1.0
    dec_lr: float = 1e-3
    epochs: int = 200
    r_loss: int = 3
    seed: int = 0
    betas: tuple[float, float] = (0.9, 0.999)
    val_fraction: float = 0.2
    n_lift: int = 30
    enc_x_hidden: tuple[int, ...] = (128, 128)
    enc_u_hidden: tuple[int, ...] = (32, 32)
    dec_x_hidden: tuple[int, ...] = (128, 128)
    dec_u_hidden: tuple[int, ...] = (32, 32)
    activation: str = "tanh"
    dec_epochs: int | None = None

    def __post_init__(self) -> None:
        if self.batch < 1:
            raise ValueError("batch must be at least 1")
        if self.r_loss < 1:
            raise ValueError("r_loss must be at least 1")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("val_fraction must lie in (0, 1)")
        if self.n_lift < 1:
            raise ValueError("lifted dimension must be positive")


@dataclass
class NeuralKoopmanModel:
    """Lifted model with learned encoders/decoders around linear dynamics."""

    variant: str
    enc_x: Mlp
    A: np.ndarray
    B: np.ndarray
    normalizer: Normalizer
    dec_x: Mlp | None = None
    enc_u: Mlp | None = None
    dec_u: Mlp | None = None
    train_meta: dict = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.variant not in ("nink", "link"):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.variant == "link" and (self.enc_u is not None or self.dec_u is not None):
            raise ValueError("linear-input variant carries no input encoder/decoder")

    @property
    def n(self) -> int:
        return self.enc_x.in_dim

    @property
    def m(self) -> int:
        return self.B.shape[1]

    @property
    def n_lift(self) -> int:
        return self.A.shape[0]

    @property
    def n_extras(self) -> int:
        return self.enc_x.out_dim

    # --- lifted-model protocol (physical units at the boundary) ---

    def lift(self, x: np.ndarray) -> np.ndarray:
        x_n = self.normalizer.state.normalize(np.asarray(x, dtype=float))
        return np.concatenate([x_n, self.enc_x.forward(x_n)], axis=-1)

    def decode_state(self, gamma: np.ndarray) -> np.ndarray:
        if self.dec_x is None:
            raise ValueError("state decoder not trained yet")
        return self.normalizer.state.denormalize(self.dec_x.forward(gamma))

    def encode_input(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        u_n = self.normalizer.input.normalize(np.asarray(u, dtype=float))
        if self.variant == "link":
            return u_n
        x_n = self.normalizer.state.normalize(np.asarray(x, dtype=float))
        return self.enc_u.forward(np.concatenate([x_n, u_n], axis=-1))

    def decode_input(self, x: np.ndarray, u_tilde: np.ndarray) -> np.ndarray:
        if self.variant == "link":
            return self.normalizer.input.denormalize(np.asarray(u_tilde, dtype=float))
        if self.dec_u is None:
            raise ValueError("input decoder required for the nonlinear-input variant")
        x_n = self.normalizer.state.normalize(np.asarray(x, dtype=float))
        out = self.dec_u.forward(np.concatenate([x_n, np.asarray(u_tilde, dtype=float)], axis=-1))
        return self.normalizer.input.denormalize(out)

    def lifted_input_box(self, u_min: float, u_max: float):
        """Physical pressure box mapped into lifted-input coordinates.

        Only meaningful when the lifted input is an affine image of the
        physical input (linear-input variant); otherwise None and bounds are
        enforced after decoding.
        """
        if self.variant != "link":
            return None
        lo = self.normalizer.input.normalize(np.full(self.m, u_min))
        hi = self.normalizer.input.normalize(np.full(self.m, u_max))
        return lo, hi

    def predict(self, x0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        return nk_predict(self, x0, inputs)

    def save(self, path: str | Path) -> None:
        obj = {
            "kind": self.variant,
            "dims": {"n": self.n, "m": self.m, "N": self.n_lift},
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "enc_x": self.enc_x.to_json(),
            "dec_x": self.dec_x.to_json() if self.dec_x else None,
            "enc_u": self.enc_u.to_json() if self.enc_u else None,
            "dec_u": self.dec_u.to_json() if self.dec_u else None,
            "normalizer": self.normalizer.to_json(),
            "train_meta": self.train_meta,
        }
        Path(path).write_text(json.dumps(obj))

    @classmethod
    def load(cls, path: str | Path) -> "NeuralKoopmanModel":
        obj = json.loads(Path(path).read_text())
        if obj.get("kind") not in ("nink", "link"):
            raise ValueError(f"not a neural lifted-model checkpoint: {obj.get('kind')}")
        return cls(
            obj["kind"],
            Mlp.from_json(obj["enc_x"]),
            np.array(obj["A"]),
            np.array(obj["B"]),
            Normalizer.from_json(obj["normalizer"]),
            Mlp.from_json(obj["dec_x"]) if obj["dec_x"] else None,
            Mlp.from_json(obj["enc_u"]) if obj["enc_u"] else None,
            Mlp.from_json(obj["dec_u"]) if obj["dec_u"] else None,
            obj.get("train_meta", {}),
        )


def nk_predict(model: NeuralKoopmanModel, x0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
    """Open rollout; row 0 is the decoder round-trip of x0.

    The lifted state propagates without re-encoding; for the nonlinear-input
    variant the input encoder sees the decoded (not measured) state, which
    is all an open-loop controller has.
    """
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    gamma = model.lift(np.asarray(x0, dtype=float))
    out = [model.decode_state(gamma)]
    for u in inputs:
        u_t = model.encode_input(out[-1], u)
        gamma = model.A @ gamma + model.B @ u_t
        out.append(model.decode_state(gamma))
    return np.array(out)


# --- window extraction -------------------------------------------------


def trial_split(dataset: Dataset, val_fraction: float) -> tuple[list[int], list[int]]:
    """Whole-trial train/validation split; the last trials validate."""
    ids = sorted({s.trial_id for s in dataset.samples})
    n_val = max(1, round(val_fraction * len(ids)))
    if n_val >= len(ids):
        raise ValueError("validation split would consume every trial")
    return ids[:-n_val], ids[-n_val:]


def make_windows(
    dataset: Dataset, r: int, trial_ids: list[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """(states, inputs) windows of r transitions that never cross trials.

    states: (W, r+1, n), inputs: (W, r, m), raw physical units.
    """
    xs, us = [], []
    for tid, chunk in dataset.trials().items():
        if trial_ids is not None and tid not in trial_ids:
            continue
        states = np.array(
            [s.state.to_array() for s in chunk] + [chunk[-1].next_state.to_array()]
        )
        inputs = np.array([s.input.pressures() for s in chunk])
        for j in range(len(chunk) - r + 1):
            xs.append(states[j : j + r + 1])
            us.append(inputs[j : j + r])
    if not xs:
        raise ValueError(f"no windows of length {r} available")
    return np.array(xs), np.array(us)


# --- encoder stage ------------------------------------------------------


def _projection_init(net: Mlp, n: int, m: int, alpha: float = 0.1) -> None:
    """Overwrite an input-encoder so it computes ~(x, u) -> u at start.

    Routes each input channel through one hidden unit per layer in the
    near-linear region of tanh (scale ``alpha``), zeroing every other
    weight.  Starting the input encoder at the linear-input restriction
    removes the degenerate optimum where a constant state encoding is
    compensated entirely through the trainable input path.
    """
    prev_slots = list(range(n, n + m))  # u channels of the raw input
    for layer in net.layers[:-1]:
        w = np.zeros_like(layer.w)
        for j, src in enumerate(prev_slots):
            w[j, src] = alpha
        layer.w[:] = w
        layer.b[:] = 0.0
        prev_slots = list(range(m))
    w = np.zeros_like(net.layers[-1].w)
    depth = len(net.layers) - 1
    for j, src in enumerate(prev_slots):
        w[j, src] = alpha ** (-depth)
    net.layers[-1].w[:] = w
    net.layers[-1].b[:] = 0.0


def _init_partial(
    n: int, m: int, cfg: TrainConfig, variant: str, normalizer: Normalizer
) -> NeuralKoopmanModel:
    if cfg.n_lift < n:
        raise ValueError(f"lifted dimension {cfg.n_lift} below state dimension {n}")
    rng = np.random.default_rng(cfg.seed)
    enc_x = Mlp.create([n, *cfg.enc_x_hidden, cfg.n_lift - n], rng, cfg.activation)
    enc_u = None
    if variant == "nink":
        enc_u = Mlp.create([n + m, *cfg.enc_u_hidden, m], rng, cfg.activation)
        _projection_init(enc_u, n, m)
    # identity dynamics at init keep early rollouts bounded
    A = np.eye(cfg.n_lift)
    B = rng.uniform(-0.1, 0.1, (cfg.n_lift, m))
    return NeuralKoopmanModel(variant, enc_x, A, B, normalizer, enc_u=enc_u)


def rollout_loss(
    model: NeuralKoopmanModel, Xw: np.ndarray, Uw: np.ndarray
) -> tuple[float, dict]:
    """Multi-step lifted prediction loss on normalized windows.

    Lifts every state of the window (normalized state plus learned
    components), rolls the lifted dynamics forward from the window's first
    lifted state only, and averages the squared lifted error over the
    horizon.  Returns the loss and the forward caches needed by
    ``rollout_backward``.
    """
    B_, Rp1, n = Xw.shape
    R = Rp1 - 1
    m = Uw.shape[2]
    X_flat = Xw.reshape(B_ * Rp1, n)
    E_flat, cache_x = model.enc_x.forward_cached(X_flat)
    Z = np.concatenate([X_flat, E_flat], axis=1).reshape(B_, Rp1, model.n_lift)
    if model.variant == "nink":
        V = np.concatenate([Xw[:, :R, :], Uw], axis=2).reshape(B_ * R, n + m)
        Ut_flat, cache_u = model.enc_u.forward_cached(V)
        Ut = Ut_flat.reshape(B_, R, m)
    else:
        Ut, cache_u = Uw, None
    g = [Z[:, 0]]
    for k in range(R):
        g.append(g[k] @ model.A.T + Ut[:, k] @ model.B.T)
    err = [g[k] - Z[:, k] for k in range(1, R + 1)]
    loss = sum(float(np.sum(e * e)) for e in err) / (R * B_)
    ctx = {"Z": Z, "g": g, "Ut": Ut, "cache_x": cache_x, "cache_u": cache_u, "err": err}
    return loss, ctx


def rollout_backward(
    model: NeuralKoopmanModel, ctx: dict
) -> tuple[np.ndarray, np.ndarray, list, list | None]:
    """Gradients of ``rollout_loss`` w.r.t. A, B and both encoders."""
    Z, g, Ut, err = ctx["Z"], ctx["g"], ctx["Ut"], ctx["err"]
    B_, Rp1, N = Z.shape
    R = Rp1 - 1
    n = model.n
    scale = 2.0 / (R * B_)
    dA = np.zeros_like(model.A)
    dB = np.zeros_like(model.B)
    dZ = np.zeros_like(Z)
    dUt = np.zeros_like(Ut)
    dg = scale * err[R - 1]
    for k in range(R, 0, -1):
        dZ[:, k] = -scale * err[k - 1]
        dA += dg.T @ g[k - 1]
        dB += dg.T @ Ut[:, k - 1]
        dUt[:, k - 1] = dg @ model.B
        dg_prev = dg @ model.A
        if k - 1 >= 1:
            dg_prev = dg_prev + scale * err[k - 2]
        dg = dg_prev
    dZ[:, 0] = dg
    # the first n lifted components are the (fixed) normalized state, so
    # only the learned components backpropagate into the encoder
    _, grads_x = model.enc_x.backward(
        ctx["cache_x"], dZ.reshape(B_ * Rp1, N)[:, n:]
    )
    grads_u = None
    if model.variant == "nink":
        m = Ut.shape[2]
        _, grads_u = model.enc_u.backward(ctx["cache_u"], dUt.reshape(B_ * R, m))
    return dA, dB, grads_x, grads_u


def _fold_input_scale(model: NeuralKoopmanModel, Xn: np.ndarray, Un: np.ndarray) -> None:
    """Rescale the encoded input to unit variance, B absorbing the inverse.

    The encoded input trades scale freely against B during training; fixing
    it to unit variance keeps the input-decoder regression and the
    quadratic input cost of the controller sensibly scaled.  The transform
    is exact: every product B @ u_tilde is unchanged.
    """
    if model.variant != "nink":
        return
    Ut = model.enc_u.forward(np.concatenate([Xn, Un], axis=-1))
    t = np.maximum(Ut.std(axis=0), 1e-12)
    ulast = model.enc_u.layers[-1]
    ulast.w /= t[:, None]
    ulast.b /= t
    model.B[:] = model.B * t[None, :]


def train_encoder_stage(
    dataset: Dataset, cfg: TrainConfig, variant: str
) -> NeuralKoopmanModel:
    """Fit encoders and (A, B) end-to-end on the multi-step lifted loss."""
    train_ids, _ = trial_split(dataset, cfg.val_fraction)
    Xw, Uw = make_windows(dataset, cfg.r_loss, train_ids)
    X_flat = Xw.reshape(-1, Xw.shape[2])
    U_flat = Uw.reshape(-1, Uw.shape[2])
    normalizer = Normalizer.fit(X_flat, U_flat)
    n, m = Xw.shape[2], Uw.shape[2]
    model = _init_partial(n, m, cfg, variant, normalizer)

    Xn = normalizer.state.normalize(Xw)
    Un = normalizer.input.normalize(Uw)
    params = [model.A, model.B] + model.enc_x.parameters()
    if model.enc_u is not None:
        params += model.enc_u.parameters()
    opt = Adam(params, lr=cfg.lr, betas=cfg.betas)
    rng = np.random.default_rng(cfg.seed + 1)
    n_windows = Xn.shape[0]
    loss_curve = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_windows)
        total = 0.0
        for bi, start in enumerate(range(0, n_windows, cfg.batch)):
            idx = order[start : start + cfg.batch]
            loss, ctx = rollout_loss(model, Xn[idx], Un[idx])
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {bi}")
            dA, dB, gx, gu = rollout_backward(model, ctx)
            grads = [dA, dB]
            for dw, db in gx:
                grads += [dw, db]
            if gu is not None:
                for dw, db in gu:
                    grads += [dw, db]
            opt.step(grads)
            total += loss * len(idx)
        loss_curve.append(total / n_windows)
        opt.lr *= cfg.lr_decay
    _fold_input_scale(model, Xn[:, :-1, :].reshape(-1, n), Un.reshape(-1, m))
    model.train_meta = {
        "loss_curve": loss_curve,
        "r_loss": cfg.r_loss,
        "epochs": cfg.epochs,
        "seed": cfg.seed,
    }
    return model


# --- decoder stage ------------------------------------------------------


def _train_regressor(
    net: Mlp,
    inputs: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    epochs: int,
    seed: int,
) -> list[float]:
    """Minibatch MSE fit of one decoder network; returns the loss curve."""
    opt = Adam(net.parameters(), lr=cfg.dec_lr, betas=cfg.betas)
    rng = np.random.default_rng(seed)
    n_rows = inputs.shape[0]
    curve = []
    for epoch in range(epochs):
        order = rng.permutation(n_rows)
        total = 0.0
        for bi, start in enumerate(range(0, n_rows, cfg.batch)):
            idx = order[start : start + cfg.batch]
            out, cache = net.forward_cached(inputs[idx])
            err = out - targets[idx]
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite decoder loss at epoch {epoch}, batch {bi}")
            _, grads = net.backward(cache, (2.0 / err.size) * err)
            opt.step([g for pair in grads for g in pair])
            total += loss * len(idx)
        curve.append(total / n_rows)
    return curve


def train_decoder_stage(
    model: NeuralKoopmanModel, dataset: Dataset, cfg: TrainConfig
) -> NeuralKoopmanModel:
    """Fit the state decoder (and input decoder for the nonlinear variant).

    Encoder parameters and (A, B) stay frozen; the decoders regress the
    normalized state from its lifted image and the physical input from
    (state, lifted input) pairs.  Records reconstruction errors in physical
    units in ``train_meta``.
    """
    train_ids, _ = trial_split(dataset, cfg.val_fraction)
    X, U, _ = dataset.arrays()
    mask = np.isin(dataset.trial_ids(), train_ids)
    X, U = X[mask], U[mask]
    Xn = model.normalizer.state.normalize(X)
    Un = model.normalizer.input.normalize(U)
    gamma = np.concatenate([Xn, model.enc_x.forward(Xn)], axis=1)
    epochs = cfg.dec_epochs if cfg.dec_epochs is not None else cfg.epochs

    rng = np.random.default_rng(cfg.seed + 2)
    dec_x = Mlp.create([model.n_lift, *cfg.dec_x_hidden, model.n], rng, cfg.activation)
    curve_x = _train_regressor(dec_x, gamma, Xn, cfg, epochs, cfg.seed + 3)
    model.dec_x = dec_x
    recon = model.normalizer.state.denormalize(dec_x.forward(gamma))
    recon_rmse = np.sqrt(np.mean((recon - X) ** 2, axis=0))
    model.train_meta["recon_rmse"] = recon_rmse.tolist()
    model.train_meta["dec_loss_curve"] = curve_x

    if model.variant == "nink":
        Ut = model.enc_u.forward(np.concatenate([Xn, Un], axis=1))
        dec_u = Mlp.create([model.n + model.m, *cfg.dec_u_hidden, model.m], rng, cfg.activation)
        curve_u = _train_regressor(
            dec_u, np.concatenate([Xn, Ut], axis=1), Un, cfg, epochs, cfg.seed + 4
        )
        model.dec_u = dec_u
        back = model.normalizer.input.denormalize(
            dec_u.forward(np.concatenate([Xn, Ut], axis=1))
        )
        model.train_meta["input_roundtrip_mean"] = float(
            np.mean(np.linalg.norm(back - U, axis=1))
        )
        model.train_meta["dec_u_loss_curve"] = curve_u
    return model


def train(dataset: Dataset, cfg: TrainConfig, variant: str) -> NeuralKoopmanModel:
    """Both stages back to back."""
    t0 = time.perf_counter()
    model = train_encoder_stage(dataset, cfg, variant)
    model = train_decoder_stage(model, dataset, cfg)
    model.train_meta["train_time_s"] = time.perf_counter() - t0
    return model
