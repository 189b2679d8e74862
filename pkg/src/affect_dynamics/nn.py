"""Small numpy neural-network kit with hand-written backpropagation.

Each layer computes ``dropout(act(layernorm(x @ W + b)))``; layer norm and
dropout are optional per layer. Everything runs in float64.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DataError, DimensionMismatch, TapeMismatch

FORMAT_VERSION = 1
LN_EPS = 1e-10
ACTIVATIONS = ("linear", "relu", "sigmoid")


def make_rng(seed) -> np.random.Generator:
    return np.random.default_rng(seed)


def sigmoid(z):
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class Layer:
    W: np.ndarray
    b: np.ndarray
    activation: str = "linear"
    layernorm: bool = False
    dropout: float = 0.0
    gain: Optional[np.ndarray] = None
    shift: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.W = np.asarray(self.W, dtype=np.float64)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.layernorm:
            n = self.W.shape[1]
            self.gain = np.ones(n) if self.gain is None else np.asarray(self.gain, dtype=np.float64)
            self.shift = np.zeros(n) if self.shift is None else np.asarray(self.shift, dtype=np.float64)

    @property
    def dims(self):
        return self.W.shape

    def params(self):
        return [self.W, self.b] + ([self.gain, self.shift] if self.layernorm else [])


@dataclass
class DenseNet:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        for a, b in zip(self.layers, self.layers[1:]):
            if a.W.shape[1] != b.W.shape[0]:
                raise DimensionMismatch(f"layer output {a.W.shape[1]} does not feed input {b.W.shape[0]}")

    @classmethod
    def build(
        cls,
        dims: Sequence[int],
        rng: np.random.Generator,
        activations: Sequence[str],
        layernorm: Sequence[bool] = None,
        dropout: Sequence[float] = None,
    ) -> "DenseNet":
        n = len(dims) - 1
        layernorm = layernorm or [False] * n
        dropout = dropout or [0.0] * n
        layers = []
        for i in range(n):
            fan_in, fan_out = dims[i], dims[i + 1]
            scale = np.sqrt(2.0 / fan_in) if activations[i] == "relu" else np.sqrt(1.0 / fan_in)
            W = rng.normal(0.0, scale, size=(fan_in, fan_out))
            layers.append(Layer(W, np.zeros(fan_out), activations[i], layernorm[i], dropout[i]))
        return cls(layers)

    @property
    def in_dim(self):
        return self.layers[0].W.shape[0]

    @property
    def out_dim(self):
        return self.layers[-1].W.shape[1]

    @property
    def dims(self):
        return [self.in_dim] + [l.W.shape[1] for l in self.layers]

    def params(self):
        return [p for l in self.layers for p in l.params()]

    @property
    def n_params(self):
        return sum(p.size for p in self.params())

    def copy(self) -> "DenseNet":
        return DenseNet([
            Layer(l.W.copy(), l.b.copy(), l.activation, l.layernorm, l.dropout,
                  None if l.gain is None else l.gain.copy(), None if l.shift is None else l.shift.copy())
            for l in self.layers
        ])

    def to_dict(self, kind="dense"):
        return {
            "format_version": FORMAT_VERSION,
            "kind": kind,
            "layer_dims": self.dims,
            "flags": [{"activation": l.activation, "layernorm": l.layernorm, "dropout": l.dropout} for l in self.layers],
            "params": [p.ravel().tolist() for p in self.params()],
        }

    @classmethod
    def from_dict(cls, d) -> "DenseNet":
        if d.get("format_version") != FORMAT_VERSION:
            raise DataError(f"unsupported model format_version {d.get('format_version')!r}")
        dims = d["layer_dims"]
        flat = iter(d["params"])
        layers = []
        for i, flags in enumerate(d["flags"]):
            n_in, n_out = dims[i], dims[i + 1]
            W = np.array(next(flat), dtype=np.float64).reshape(n_in, n_out)
            b = np.array(next(flat), dtype=np.float64)
            gain = shift = None
            if flags["layernorm"]:
                gain = np.array(next(flat), dtype=np.float64)
                shift = np.array(next(flat), dtype=np.float64)
            layers.append(Layer(W, b, flags["activation"], flags["layernorm"], flags["dropout"], gain, shift))
        return cls(layers)

    def to_json(self, kind="dense") -> str:
        return json.dumps(self.to_dict(kind))

    @classmethod
    def from_json(cls, text: str) -> "DenseNet":
        return cls.from_dict(json.loads(text))


@dataclass
class Tape:
    net_id: int
    squeeze: bool
    records: list


def forward(net: DenseNet, x, train_mode: bool = False, rng: Optional[np.random.Generator] = None):
    """Run the net on one sample (1-D) or a batch (2-D); returns ``(output, tape)``."""
    x = np.asarray(x, dtype=np.float64)
    squeeze = x.ndim == 1
    h = x[None, :] if squeeze else x
    if h.shape[1] != net.in_dim:
        raise DimensionMismatch(f"input has {h.shape[1]} features, net expects {net.in_dim}")
    records = []
    for layer in net.layers:
        rec = {"x": h}
        z = h @ layer.W + layer.b
        if layer.layernorm:
            mu = z.mean(axis=1, keepdims=True)
            sigma = np.sqrt(z.var(axis=1, keepdims=True) + LN_EPS)
            xhat = (z - mu) / sigma
            rec["xhat"], rec["sigma"] = xhat, sigma
            z = layer.gain * xhat + layer.shift
        if layer.activation == "relu":
            a = np.maximum(z, 0.0)
        elif layer.activation == "sigmoid":
            a = sigmoid(z)
        else:
            a = z
        rec["z"], rec["a"] = z, a
        if train_mode and layer.dropout > 0.0:
            if rng is None:
                raise ValueError("train-mode dropout needs an rng")
            keep = 1.0 - layer.dropout
            mask = (rng.random(a.shape) < keep) / keep
            rec["mask"] = mask
            a = a * mask
        records.append(rec)
        h = a
    return (h[0] if squeeze else h), Tape(id(net), squeeze, records)


def backward(net: DenseNet, tape: Tape, loss_grad):
    """Backpropagate ``dL/doutput``; returns ``(param_grads, input_grad)``.

    ``param_grads`` is aligned with ``net.params()``.
    """
    if tape.net_id != id(net) or len(tape.records) != len(net.layers):
        raise TapeMismatch("tape was not produced by this network")
    g = np.asarray(loss_grad, dtype=np.float64)
    if tape.squeeze:
        g = g[None, :]
    if g.shape != tape.records[-1]["a"].shape:
        raise TapeMismatch(f"loss gradient shape {g.shape} does not match output {tape.records[-1]['a'].shape}")
    grads_rev = []
    for layer, rec in zip(reversed(net.layers), reversed(tape.records)):
        if "mask" in rec:
            g = g * rec["mask"]
        if layer.activation == "relu":
            g = g * (rec["z"] > 0)
        elif layer.activation == "sigmoid":
            g = g * rec["a"] * (1.0 - rec["a"])
        layer_grads = []
        if layer.layernorm:
            xhat = rec["xhat"]
            layer_grads = [(g * xhat).sum(axis=0), g.sum(axis=0)]
            dxhat = g * layer.gain
            g = (dxhat - dxhat.mean(axis=1, keepdims=True)
                 - xhat * (dxhat * xhat).mean(axis=1, keepdims=True)) / rec["sigma"]
        dW = rec["x"].T @ g
        db = g.sum(axis=0)
        g = g @ layer.W.T
        grads_rev.append([dW, db] + layer_grads)
    grads = [p for layer_grads in reversed(grads_rev) for p in layer_grads]
    return grads, (g[0] if tape.squeeze else g)


def mse(pred, target):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    pred = np.asarray(pred, dtype=np.float64)
    diff = pred - np.asarray(target, dtype=np.float64)
    return float(np.mean(diff**2)), 2.0 * diff / diff.size


@dataclass
class OptimState:
    lr: float
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.01
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)


class AdamW:
    """Adam with decoupled weight decay; updates parameters in place."""

    def __init__(self, params, lr=5e-4, betas=(0.9, 0.999), eps=1e-8, weight_decay=0.01):
        self.params = list(params)
        self.state = OptimState(lr, tuple(betas), eps, weight_decay,
                                m=[np.zeros_like(p) for p in self.params],
                                v=[np.zeros_like(p) for p in self.params])

    def step(self, grads):
        st = self.state
        if len(grads) != len(self.params):
            raise DimensionMismatch("gradient list does not match parameter list")
        st.step += 1
        b1, b2 = st.betas
        c1, c2 = 1.0 - b1**st.step, 1.0 - b2**st.step
        for p, g, m, v in zip(self.params, grads, st.m, st.v):
            if g.shape != p.shape:
                raise DimensionMismatch(f"gradient shape {g.shape} != parameter shape {p.shape}")
            p *= 1.0 - st.lr * st.weight_decay
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)


def relative_error(a, b) -> float:
    a, b = np.ravel(a), np.ravel(b)
    denom = np.linalg.norm(a) + np.linalg.norm(b)
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - b) / denom)


def numerical_gradient(f, params, eps=1e-5):
    """Central finite differences of scalar ``f()`` w.r.t. each array in ``params`` (perturbed in place)."""
    out = []
    for p in params:
        g = np.zeros_like(p)
        flat, gflat = p.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = f()
            flat[i] = orig - eps
            down = f()
            flat[i] = orig
            gflat[i] = (up - down) / (2.0 * eps)
        out.append(g)
    return out


def gradient_check(net: DenseNet, x, target, eps=1e-5, train_mode=False, seed=0):
    """Max over parameter arrays of the relative error between backprop and central differences.

    With ``train_mode`` the dropout masks are replayed from ``seed`` on every
    evaluation so the loss is a fixed smooth function of the parameters.
    """
    def loss():
        out, _ = forward(net, x, train_mode, make_rng(seed))
        return mse(out, target)[0]

    out, tape = forward(net, x, train_mode, make_rng(seed))
    analytic, _ = backward(net, tape, mse(out, target)[1])
    numeric = numerical_gradient(loss, net.params(), eps)
    return max(relative_error(a, n) for a, n in zip(analytic, numeric))
