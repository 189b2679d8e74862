"""Feed-forward forecaster of next-step affect change with per-user embeddings.

Each window covers the last ``history_len`` entries up to time t (oldest
first). Every step contributes::

    [present, v/4, a/2, dv_prev/8, da_prev/4, (text features), (10 cluster bits)]

where ``dv_prev``/``da_prev`` is the change into that entry (zero for a
user's first entry) and absent older steps are all zeros. The user's
embedding is appended after the steps. Targets are the raw changes from t
to t+1.
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import nn
from .clusters import ClusterLexicon, assign_entry
from .domain import Dataset, delta_between
from .errors import DataError, DimensionMismatch, InsufficientData, LayoutMismatch

BASE_STEP_FEATURES = ("present", "v", "a", "dv_prev", "da_prev")


class Target(str, enum.Enum):
    BOTH = "both"
    VALENCE = "valence"
    AROUSAL = "arousal"


@dataclass
class ForecasterConfig:
    target: Target = Target.BOTH
    history_len: int = 2
    use_text: bool = False
    use_clusters: bool = False
    user_emb_dim: int = 2
    hidden: tuple = (64, 32)
    dropout: float = 0.1
    lr: float = 5e-4
    weight_decay: float = 0.01
    batch_size: int = 32
    patience: int = 5
    max_epochs: int = 200
    val_fraction: float = 0.1
    seed: int = 0

    def __post_init__(self):
        self.target = Target(self.target)
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.history_len not in (1, 2, 3, 4):
            raise ValueError("history_len must be 1, 2, 3 or 4")
        if self.user_emb_dim < 1 or any(h < 1 for h in self.hidden):
            raise ValueError("dimensions must be positive")

    def to_dict(self):
        d = asdict(self)
        d["target"] = self.target.value
        d["hidden"] = list(self.hidden)
        return d


# Best no-text configurations per target.
BEST_VALENCE = dict(target="both", history_len=2, use_text=False, use_clusters=False, user_emb_dim=2)
BEST_AROUSAL = dict(target="arousal", history_len=1, use_text=False, use_clusters=False, user_emb_dim=4)


@dataclass(frozen=True)
class InputLayout:
    history_len: int
    feature_dim: int
    use_clusters: bool
    user_emb_dim: int

    @property
    def step_dim(self):
        return len(BASE_STEP_FEATURES) + self.feature_dim + (10 if self.use_clusters else 0)

    @property
    def window_dim(self):
        return self.history_len * self.step_dim

    @property
    def total(self):
        return self.window_dim + self.user_emb_dim


@dataclass
class WindowSample:
    user_id: str
    seq: int
    x: np.ndarray
    target: Optional[tuple] = None


def input_layout(cfg: ForecasterConfig, ds: Dataset) -> InputLayout:
    feature_dim = 0
    if cfg.use_text:
        if not ds.feature_dim:
            raise DataError("use_text needs entries with precomputed features")
        feature_dim = ds.feature_dim
    return InputLayout(cfg.history_len, feature_dim, cfg.use_clusters, cfg.user_emb_dim)


def _step_vector(entries, i, layout: InputLayout, lex):
    e = entries[i]
    if e.state is None:
        raise DataError(f"entry {e.user_id!r}/{e.seq} has no affect state")
    dv = da = 0
    if i > 0:
        d = delta_between(entries[i - 1].state, e.state)
        dv, da = d.dv, d.da
    parts = [[1.0, e.state.valence / 4.0, e.state.arousal / 2.0, dv / 8.0, da / 4.0]]
    if layout.feature_dim:
        if e.features is None or len(e.features) != layout.feature_dim:
            raise DataError(f"entry {e.user_id!r}/{e.seq} lacks {layout.feature_dim}-d features")
        parts.append(e.features)
    if layout.use_clusters:
        bits = e.clusters if e.clusters is not None else assign_entry(e, lex).bits
        parts.append(bits)
    return np.concatenate([np.asarray(p, dtype=np.float64) for p in parts])


def _windows(ds: Dataset, layout: InputLayout, with_targets: bool, lex=None):
    lex = lex or (ClusterLexicon.default() if layout.use_clusters else None)
    out = []
    for s in ds.series:
        entries = s.entries
        last = len(entries) - 1 if with_targets else len(entries)
        for t in range(last):
            x = np.zeros(layout.window_dim)
            for slot in range(layout.history_len):
                i = t - (layout.history_len - 1 - slot)
                if i >= 0:
                    x[slot * layout.step_dim:(slot + 1) * layout.step_dim] = _step_vector(entries, i, layout, lex)
            target = None
            if with_targets:
                target = delta_between(entries[t].state, entries[t + 1].state).as_tuple()
            out.append(WindowSample(s.user_id, entries[t].seq, x, target))
    return out


def build_windows(ds: Dataset, cfg: ForecasterConfig, lex=None) -> list:
    """One sample per consecutive labeled pair (t, t+1) within each user."""
    return _windows(ds, input_layout(cfg, ds), True, lex)


def _target_columns(target: Target):
    return {Target.BOTH: [0, 1], Target.VALENCE: [0], Target.AROUSAL: [1]}[target]


@dataclass
class ForecasterModel:
    net: nn.DenseNet
    user_embeddings: dict
    fallback_embedding: np.ndarray
    layout: InputLayout
    config: ForecasterConfig
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if self.net.in_dim != self.layout.total:
            raise LayoutMismatch(f"net input {self.net.in_dim} != layout total {self.layout.total}")
        for uid, emb in self.user_embeddings.items():
            if np.shape(emb) != (self.layout.user_emb_dim,):
                raise DimensionMismatch(f"embedding of {uid!r} has shape {np.shape(emb)}")

    def embedding(self, user_id):
        return self.user_embeddings.get(user_id, self.fallback_embedding)

    def to_dict(self):
        return {
            "format_version": nn.FORMAT_VERSION,
            "kind": "forecaster",
            "net": self.net.to_dict("forecaster_net"),
            "embeddings": {u: e.tolist() for u, e in self.user_embeddings.items()},
            "fallback_embedding": self.fallback_embedding.tolist(),
            "layout": asdict(self.layout),
            "config": self.config.to_dict(),
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "forecaster":
            raise DataError("not a forecaster model document")
        cfg = d["config"]
        return cls(
            nn.DenseNet.from_dict(d["net"]),
            {u: np.array(e, dtype=np.float64) for u, e in d["embeddings"].items()},
            np.array(d["fallback_embedding"], dtype=np.float64),
            InputLayout(**d["layout"]),
            ForecasterConfig(**cfg),
        )

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_net(cfg: ForecasterConfig, layout: InputLayout, rng) -> nn.DenseNet:
    n_out = len(_target_columns(cfg.target))
    dims = [layout.total, *cfg.hidden, n_out]
    n_hidden = len(cfg.hidden)
    return nn.DenseNet.build(
        dims, rng,
        activations=["relu"] * n_hidden + ["linear"],
        layernorm=[True] * n_hidden + [False],
        dropout=[cfg.dropout] * n_hidden + [0.0],
    )


def _loss_and_grads(net, E, X, U, Y, train, rng):
    inp = np.concatenate([X, E[U]], axis=1)
    out, tape = nn.forward(net, inp, train, rng)
    loss, g = nn.mse(out, Y)
    grads, dx = nn.backward(net, tape, g)
    dE = np.zeros_like(E)
    np.add.at(dE, U, dx[:, X.shape[1]:])
    return loss, grads, dE


def _val_loss(net, E, X, U, Y):
    out, _ = nn.forward(net, np.concatenate([X, E[U]], axis=1))
    return nn.mse(out, Y)[0]


def train_forecaster(ds: Dataset, cfg: ForecasterConfig = None, lex=None) -> ForecasterModel:
    """AdamW on MSE with a seeded 90/10 window split and early stopping on validation MSE."""
    cfg = cfg or ForecasterConfig()
    layout = input_layout(cfg, ds)
    windows = _windows(ds, layout, True, lex)
    if len(windows) < 2:
        raise InsufficientData(f"need at least 2 windows for a train/validation split, got {len(windows)}")
    rng = nn.make_rng(cfg.seed)
    users = sorted({w.user_id for w in windows})
    uidx = {u: i for i, u in enumerate(users)}
    X = np.stack([w.x for w in windows])
    U = np.array([uidx[w.user_id] for w in windows])
    Y = np.array([w.target for w in windows], dtype=np.float64)[:, _target_columns(cfg.target)]
    n_val = max(1, int(round(cfg.val_fraction * len(windows))))
    perm = rng.permutation(len(windows))
    val, tr = perm[:n_val], perm[n_val:]
    net = build_net(cfg, layout, rng)
    E = rng.normal(0.0, 0.1, size=(len(users), cfg.user_emb_dim))
    opt = nn.AdamW(net.params() + [E], lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_loss = _val_loss(net, E, X[val], U[val], Y[val])
    best = (net.copy(), E.copy())
    history = [best_loss]
    stale = 0
    for _ in range(cfg.max_epochs):
        order = tr[rng.permutation(len(tr))]
        for start in range(0, len(order), cfg.batch_size):
            b = order[start:start + cfg.batch_size]
            _, grads, dE = _loss_and_grads(net, E, X[b], U[b], Y[b], True, rng)
            opt.step(grads + [dE])
        loss = _val_loss(net, E, X[val], U[val], Y[val])
        history.append(loss)
        if loss < best_loss:
            best_loss, stale = loss, 0
            best = (net.copy(), E.copy())
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    net, E = best
    embeddings = {u: E[i].copy() for u, i in uidx.items()}
    model = ForecasterModel(net, embeddings, E.mean(axis=0), layout, cfg)
    model.history = history
    return model


def predict_window(m: ForecasterModel, w: WindowSample):
    """``(dv_hat, da_hat)``; the target not modelled by a single-target config is None."""
    if np.shape(w.x) != (m.layout.window_dim,):
        raise LayoutMismatch(f"window has {np.shape(w.x)} features, model expects {m.layout.window_dim}")
    out, _ = nn.forward(m.net, np.concatenate([w.x, m.embedding(w.user_id)]))
    cols = _target_columns(m.config.target)
    res = [None, None]
    for c, v in zip(cols, out):
        res[c] = float(v)
    return tuple(res)


predict_change = predict_window


def predict_dataset(m: ForecasterModel, ds: Dataset, with_successor_only: bool = True, lex=None) -> dict:
    """``{(user_id, seq_t): (dv_hat, da_hat)}`` for each entry t (by default only those with a successor)."""
    windows = _windows(ds, m.layout, False, lex)
    if with_successor_only:
        last = {s.user_id: s.entries[-1].seq for s in ds.series}
        windows = [w for w in windows if w.seq != last[w.user_id]]
    if not windows:
        return {}
    X = np.stack([w.x for w in windows])
    emb = np.stack([m.embedding(w.user_id) for w in windows])
    out, _ = nn.forward(m.net, np.concatenate([X, emb], axis=1))
    cols = _target_columns(m.config.target)
    preds = {}
    for w, row in zip(windows, out):
        res = [None, None]
        for c, v in zip(cols, row):
            res[c] = float(v)
        preds[(w.user_id, w.seq)] = tuple(res)
    return preds


def combine_predictions(valence_preds: dict, arousal_preds: dict) -> dict:
    """Take dv from one model and da from another (e.g. the two best configurations)."""
    return {k: (valence_preds[k][0], arousal_preds[k][1]) for k in valence_preds}
