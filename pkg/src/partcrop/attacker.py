"""The attacker MLP family: build, forward, analytic backward, Adam, training.

The default net is Linear(in_dim, d) -> Linear(d, d/2) -> Linear(d/2, d/4)
-> Linear(d/4, 1) + sigmoid with d = 512, ReLU activations and no norm.
Variants rescale d (narrow 1024, wide 256, labels kept as published even
though they read swapped), drop a layer (shallow) or add one (deep).
The v2 flag switches to tanh + RMSNorm, which stays trainable where the
wide-and-relu configurations collapse.

Everything is hand-rolled numpy in f64 so the backward pass can be held
to finite-difference agreement; disks see f32.  grad() returns pure
binary-cross-entropy gradients; the loss-side L2 term is added to the
weight gradients inside adam_step so gradient checks stay exact.
"""

from __future__ import annotations

import copy
import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import NumericError, TrainSetupError, ValidationError
from .rng import derive_seed, generator
from .tensorio import read_tensor, write_tensor

VARIANTS = ("default", "narrow", "wide", "shallow", "deep")
ACTIVATIONS = ("relu", "tanh", "leaky_relu", "silu")
NORMS = ("none", "rmsnorm", "layernorm")
INIT_STD = 0.02
NORM_EPS = 1e-6
LEAKY_SLOPE = 0.01
PROB_CLIP = 1e-12


@dataclass(frozen=True)
class MlpSpec:
    """Architecture description; v2 forces (tanh, rmsnorm)."""

    in_dim: int
    d: int = 512
    variant: str = "default"
    activation: str = "relu"
    norm: str = "none"
    v2: bool = False

    def __post_init__(self):
        if self.v2:
            object.__setattr__(self, "activation", "tanh")
            object.__setattr__(self, "norm", "rmsnorm")
        if self.in_dim < 1:
            raise ValidationError(f"in_dim must be positive, got {self.in_dim}")
        if self.variant not in VARIANTS:
            raise ValidationError(f"unknown variant {self.variant!r}")
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        if self.norm not in NORMS:
            raise ValidationError(f"unknown norm {self.norm!r}")
        if self.width % 4 != 0:
            raise ValidationError(f"width {self.width} must be divisible by 4")

    @property
    def width(self) -> int:
        # narrow/wide replace the default width, labels as published
        if self.variant == "narrow":
            return 1024
        if self.variant == "wide":
            return 256
        return self.d

    def layer_dims(self) -> list[tuple[int, int]]:
        d = self.width
        if self.variant == "shallow":
            hidden = [(self.in_dim, d), (d, d // 4)]
        elif self.variant == "deep":
            hidden = [(self.in_dim, d), (d, d // 2), (d // 2, d // 2), (d // 2, d // 4)]
        else:
            hidden = [(self.in_dim, d), (d, d // 2), (d // 2, d // 4)]
        return hidden + [(hidden[-1][1], 1)]

    def to_json(self) -> dict:
        return {
            "in_dim": self.in_dim,
            "d": self.d,
            "variant": self.variant,
            "activation": self.activation,
            "norm": self.norm,
            "v2": self.v2,
        }

    @classmethod
    def from_json(cls, doc: dict) -> "MlpSpec":
        return cls(**doc)


@dataclass
class MlpParams:
    """Weights (fan_in x fan_out), biases, and one gain per normed layer."""

    spec: MlpSpec
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gains: list[np.ndarray]

    def n_hidden(self) -> int:
        return len(self.weights) - 1


@dataclass
class MlpGrads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    gains: list[np.ndarray]


def build(spec: MlpSpec, seed: int) -> MlpParams:
    """Weights i.i.d. N(0, 0.02^2), zero biases, unit gains."""
    g = generator(derive_seed(seed, "init"))
    dims = spec.layer_dims()
    weights = [INIT_STD * g.standard_normal(shape) for shape in dims]
    biases = [np.zeros(fan_out) for _, fan_out in dims]
    gains = []
    if spec.norm != "none":
        gains = [np.ones(fan_out) for _, fan_out in dims[:-1]]
    return MlpParams(spec, weights, biases, gains)


def rmsnorm(x: np.ndarray, gain: np.ndarray, eps: float = NORM_EPS) -> np.ndarray:
    """y_k = gain_k * x_k / sqrt(mean(x^2) + eps), row-wise for batches."""
    x = np.asarray(x, dtype=np.float64)
    ms = np.mean(np.square(x), axis=-1, keepdims=True)
    return gain * x / np.sqrt(ms + eps)


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return np.maximum(z, 0.0)
    if name == "tanh":
        return np.tanh(z)
    if name == "leaky_relu":
        return np.where(z > 0, z, LEAKY_SLOPE * z)
    sig = _sigmoid(z)
    return z * sig


def _act_grad(name: str, z: np.ndarray) -> np.ndarray:
    if name == "relu":
        return (z > 0).astype(np.float64)
    if name == "tanh":
        t = np.tanh(z)
        return 1.0 - t * t
    if name == "leaky_relu":
        return np.where(z > 0, 1.0, LEAKY_SLOPE)
    sig = _sigmoid(z)
    return sig * (1.0 + z * (1.0 - sig))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _norm_forward(spec: MlpSpec, z: np.ndarray, gain: np.ndarray):
    if spec.norm == "rmsnorm":
        ms = np.mean(np.square(z), axis=1, keepdims=True)
        r = np.sqrt(ms + NORM_EPS)
        return gain * z / r, (z, r)
    mu = z.mean(axis=1, keepdims=True)
    var = z.var(axis=1, keepdims=True)
    s = np.sqrt(var + NORM_EPS)
    xhat = (z - mu) / s
    return gain * xhat, (xhat, s)


def _norm_backward(spec: MlpSpec, dn: np.ndarray, gain: np.ndarray, cache):
    if spec.norm == "rmsnorm":
        z, r = cache
        width = z.shape[1]
        dgain = np.sum(dn * z / r, axis=0)
        inner = np.sum(dn * gain * z, axis=1, keepdims=True)
        dz = gain * dn / r - z * inner / (width * r**3)
        return dz, dgain
    xhat, s = cache
    dgain = np.sum(dn * xhat, axis=0)
    dxhat = dn * gain
    dz = (
        dxhat
        - dxhat.mean(axis=1, keepdims=True)
        - xhat * np.mean(dxhat * xhat, axis=1, keepdims=True)
    ) / s
    return dz, dgain


def _forward_batch(params: MlpParams, x: np.ndarray):
    """Logits plus per-layer caches for the backward pass."""
    spec = params.spec
    h = np.asarray(x, dtype=np.float64)
    if h.ndim != 2 or h.shape[1] != spec.in_dim:
        raise ValidationError(f"input shape {h.shape} does not match in_dim {spec.in_dim}")
    caches = []
    for i in range(params.n_hidden()):
        z = h @ params.weights[i] + params.biases[i]
        if spec.norm != "none":
            n, norm_cache = _norm_forward(spec, z, params.gains[i])
        else:
            n, norm_cache = z, None
        a = _act(spec.activation, n)
        caches.append((h, n, norm_cache))
        h = a
    logits = (h @ params.weights[-1] + params.biases[-1])[:, 0]
    caches.append((h, None, None))
    return logits, caches


def predict_prob(params: MlpParams, x: np.ndarray) -> np.ndarray:
    """Membership probabilities, clipped into the open interval (0,1)."""
    logits, _ = _forward_batch(params, np.atleast_2d(x))
    return np.clip(_sigmoid(logits), PROB_CLIP, 1.0 - PROB_CLIP)


def forward(params: MlpParams, x: np.ndarray) -> float:
    """Single-sample probability of membership."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ValidationError(f"forward expects a vector, got shape {x.shape}")
    return float(predict_prob(params, x[None, :])[0])


def _softplus(z: np.ndarray) -> np.ndarray:
    return np.maximum(z, 0.0) + np.log1p(np.exp(-np.abs(z)))


def grad(params: MlpParams, x: np.ndarray, y: np.ndarray) -> tuple[MlpGrads, float]:
    """Mean BCE loss over the batch and its exact analytic gradients.

    Loss per sample is softplus(z) - y*z, evaluated from logits so
    saturated predictions stay finite.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape[0] == 0:
        raise ValidationError("batch is empty")
    if y.shape != (x.shape[0],):
        raise ValidationError(f"labels shape {y.shape} does not match batch {x.shape[0]}")
    spec = params.spec
    logits, caches = _forward_batch(params, x)
    losses = _softplus(logits) - y * logits
    bad = ~np.isfinite(losses)
    if bad.any():
        raise NumericError(f"non-finite loss at sample {int(np.argmax(bad))}")
    loss = float(losses.mean())

    batch = x.shape[0]
    dz = (_sigmoid(logits) - y)[:, None] / batch

    grads = MlpGrads(
        weights=[None] * len(params.weights),
        biases=[None] * len(params.biases),
        gains=[None] * len(params.gains),
    )
    h_last = caches[-1][0]
    grads.weights[-1] = h_last.T @ dz
    grads.biases[-1] = dz.sum(axis=0)
    dh = dz @ params.weights[-1].T

    for i in range(params.n_hidden() - 1, -1, -1):
        h_prev, n, norm_cache = caches[i]
        dn = dh * _act_grad(spec.activation, n)
        if spec.norm != "none":
            dzi, dgain = _norm_backward(spec, dn, params.gains[i], norm_cache)
            grads.gains[i] = dgain
        else:
            dzi = dn
        grads.weights[i] = h_prev.T @ dzi
        grads.biases[i] = dzi.sum(axis=0)
        dh = dzi @ params.weights[i].T
    return grads, loss


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch: int = 100
    lr: float = 1e-3
    weight_decay: float = 5e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    threshold: float = 0.5

    def __post_init__(self):
        if self.batch < 2 or self.batch % 2 != 0:
            raise ValidationError(f"batch must be even and >= 2, got {self.batch}")
        if self.epochs < 1:
            raise ValidationError("epochs must be at least 1")
        if not 0.0 < self.lr:
            raise ValidationError("lr must be positive")


@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    t: int = 0


def init_adam(params: MlpParams) -> AdamState:
    tensors = params.weights + params.biases + params.gains
    return AdamState(
        m=[np.zeros_like(p) for p in tensors],
        v=[np.zeros_like(p) for p in tensors],
        t=0,
    )


def adam_step(
    params: MlpParams, grads: MlpGrads, state: AdamState, cfg: TrainConfig
) -> tuple[MlpParams, AdamState]:
    """One Adam update; L2 decay enters here, on weight matrices only."""
    new_params = MlpParams(
        params.spec,
        [w.copy() for w in params.weights],
        [b.copy() for b in params.biases],
        [g.copy() for g in params.gains],
    )
    new_state = AdamState([m.copy() for m in state.m], [v.copy() for v in state.v], state.t + 1)
    t = new_state.t

    n_w = len(params.weights)
    tensors = new_params.weights + new_params.biases + new_params.gains
    grad_list = list(grads.weights) + list(grads.biases) + list(grads.gains)
    for k, (p, gr) in enumerate(zip(tensors, grad_list)):
        if k < n_w:
            gr = gr + cfg.weight_decay * p
        m = new_state.m[k]
        v = new_state.v[k]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * gr
        v *= cfg.beta2
        v += (1 - cfg.beta2) * np.square(gr)
        m_hat = m / (1 - cfg.beta1**t)
        v_hat = v / (1 - cfg.beta2**t)
        p -= cfg.lr * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return new_params, new_state


class _Cycler:
    """Without-replacement draws from a class pool, reshuffled when spent."""

    def __init__(self, indices: np.ndarray, rng):
        self.indices = np.asarray(indices)
        self.rng = rng
        self.order = None
        self.pos = 0

    def reset(self):
        self.order = self.indices[self.rng.permutation(len(self.indices))]
        self.pos = 0

    def take(self, k: int) -> np.ndarray:
        out = []
        need = k
        while need > 0:
            if self.order is None or self.pos >= len(self.order):
                self.reset()
            got = self.order[self.pos : self.pos + need]
            out.append(got)
            self.pos += len(got)
            need -= len(got)
        return np.concatenate(out)


def epoch_batches(
    members: np.ndarray, nonmembers: np.ndarray, batch: int, rng
) -> list[np.ndarray]:
    """Index batches for one epoch: batch/2 of each class, members first.

    The larger pool is consumed once without replacement (remainder
    dropped); the smaller pool recycles through reshuffles.
    """
    half = batch // 2
    steps = max(len(members), len(nonmembers)) // half
    mem_pool = _Cycler(members, rng)
    non_pool = _Cycler(nonmembers, rng)
    mem_pool.reset()
    non_pool.reset()
    return [
        np.concatenate([mem_pool.take(half), non_pool.take(half)])
        for _ in range(steps)
    ]


def train(
    spec: MlpSpec, x: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> tuple[MlpParams, list[dict]]:
    """Balanced-batch Adam training; returns params and per-epoch history."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=bool)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValidationError(f"bad training set shapes {x.shape} vs {y.shape}")
    members = np.flatnonzero(y)
    nonmembers = np.flatnonzero(~y)
    half = cfg.batch // 2
    if len(members) < half or len(nonmembers) < half:
        raise TrainSetupError(
            f"need at least {half} samples per class, got "
            f"{len(members)} members and {len(nonmembers)} non-members"
        )

    params = build(spec, cfg.seed)
    state = init_adam(params)
    rng = generator(derive_seed(cfg.seed, "train"))
    history = []
    yf = y.astype(np.float64)
    for epoch in range(cfg.epochs):
        losses = []
        for batch_idx in epoch_batches(members, nonmembers, cfg.batch, rng):
            grads, loss = grad(params, x[batch_idx], yf[batch_idx])
            params, state = adam_step(params, grads, state, cfg)
            losses.append(loss)
        preds = predict_prob(params, x) >= cfg.threshold
        history.append(
            {
                "epoch": epoch,
                "loss": float(np.mean(losses)),
                "train_acc": float(np.mean(preds == y)),
            }
        )
    return params, history


def save_attacker(out_dir: str | Path, params: MlpParams) -> None:
    """Weights as PCTF tensors plus a JSON architecture record."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    doc = {"spec": params.spec.to_json(), "n_layers": len(params.weights)}
    (out_dir / "spec.json").write_text(json.dumps(doc, indent=2))
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        write_tensor(w.astype(np.float32), out_dir / f"w{i}.pctf")
        write_tensor(b.astype(np.float32)[None, :], out_dir / f"b{i}.pctf")
    for i, g in enumerate(params.gains):
        write_tensor(g.astype(np.float32)[None, :], out_dir / f"gain{i}.pctf")


def load_attacker(out_dir: str | Path) -> MlpParams:
    out_dir = Path(out_dir)
    doc = json.loads((out_dir / "spec.json").read_text())
    spec = MlpSpec.from_json(doc["spec"])
    weights, biases = [], []
    for i in range(doc["n_layers"]):
        weights.append(read_tensor(out_dir / f"w{i}.pctf").astype(np.float64))
        biases.append(read_tensor(out_dir / f"b{i}.pctf").astype(np.float64)[0])
    gains = []
    if spec.norm != "none":
        for i in range(doc["n_layers"] - 1):
            gains.append(read_tensor(out_dir / f"gain{i}.pctf").astype(np.float64)[0])
    return MlpParams(spec, weights, biases, gains)


def save_history(path: str | Path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss", "train_acc"])
        for row in history:
            writer.writerow([row["epoch"], f"{row['loss']:.10g}", f"{row['train_acc']:.10g}"])
