"""Ridge-regression baselines for affect change.

``linear(prev)`` regresses each change target on the previous score of that
target; ``linear(features; prev)`` appends the entry's precomputed feature
vector. One ridge model is fitted per target.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .domain import Dataset
from .errors import DataError, DimensionMismatch, EmptyData, SingularSystem


@dataclass
class RidgeModel:
    weights: np.ndarray
    intercept: float
    lam: float

    def __post_init__(self):
        self.weights = np.atleast_1d(np.asarray(self.weights, dtype=np.float64))
        if self.lam < 0:
            raise ValueError("ridge lambda must be non-negative")


def fit_ridge(X, y, lam: float = 1.0) -> RidgeModel:
    """Closed-form ridge on centered data; the intercept is not penalized."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if len(X) == 0 or len(X) != len(y):
        raise EmptyData(f"ridge needs matching non-empty X and y, got {len(X)} rows and {len(y)} targets")
    if lam < 0:
        raise ValueError("ridge lambda must be non-negative")
    x_mean, y_mean = X.mean(axis=0), y.mean()
    Xc, yc = X - x_mean, y - y_mean
    A = Xc.T @ Xc + lam * np.eye(X.shape[1])
    if lam == 0 and np.linalg.matrix_rank(Xc) < X.shape[1]:
        raise SingularSystem("X is rank deficient and lambda is 0")
    w = np.linalg.solve(A, Xc.T @ yc)
    return RidgeModel(w, float(y_mean - x_mean @ w), lam)


def predict_ridge(m: RidgeModel, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1:] != m.weights.shape and not (x.ndim == 0 and m.weights.size == 1):
        raise DimensionMismatch(f"input dimension {x.shape} does not match {m.weights.shape}")
    out = x @ m.weights if x.ndim else x * m.weights[0]
    return out + m.intercept


def ridge_objective(w, intercept, X, y, lam):
    """Penalized squared error ``||y - Xw - b||^2 + lam ||w||^2``."""
    r = y - X @ w - intercept
    return float(r @ r + lam * w @ w)


@dataclass
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X):
        X = np.asarray(X, dtype=np.float64)
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def transform(self, X):
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


@dataclass
class ChangeBaseline:
    """Per-target ridge on standardized inputs."""

    use_features: bool
    lam: float
    models: dict = field(default_factory=dict)
    scalers: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "format_version": 1,
            "kind": "ridge_baseline",
            "use_features": self.use_features,
            "lambda": self.lam,
            "targets": {
                t: {"weights": m.weights.tolist(), "intercept": m.intercept,
                    "mean": self.scalers[t].mean.tolist(), "scale": self.scalers[t].scale.tolist()}
                for t, m in self.models.items()
            },
        }

    @classmethod
    def from_dict(cls, d):
        if d.get("kind") != "ridge_baseline":
            raise DataError("not a ridge baseline document")
        out = cls(d["use_features"], d["lambda"])
        for t, td in d["targets"].items():
            out.models[t] = RidgeModel(np.array(td["weights"]), td["intercept"], d["lambda"])
            out.scalers[t] = Standardizer(np.array(td["mean"]), np.array(td["scale"]))
        return out

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _inputs(entry, target, use_features):
    prev = float(entry.state.valence if target == "valence" else entry.state.arousal)
    if not use_features:
        return [prev]
    if entry.features is None:
        raise DataError(f"entry {entry.user_id!r}/{entry.seq} has no features for linear(features; prev)")
    return [prev, *entry.features]


def change_design(ds: Dataset, target: str, use_features: bool):
    """Rows for every consecutive labeled pair: inputs from entry t, target = change to t+1."""
    X, y, keys = [], [], []
    for s in ds.series:
        for cur, nxt in s.pairs():
            if cur.state is None or nxt.state is None:
                continue
            X.append(_inputs(cur, target, use_features))
            y.append(getattr(nxt.state, target) - getattr(cur.state, target))
            keys.append((cur.user_id, cur.seq))
    return np.array(X, dtype=np.float64).reshape(len(X), -1), np.array(y, dtype=np.float64), keys


def fit_change_baseline(ds: Dataset, use_features: bool = False, lam: float = 1.0) -> ChangeBaseline:
    out = ChangeBaseline(use_features, lam)
    for target in ("valence", "arousal"):
        X, y, _ = change_design(ds, target, use_features)
        if len(X) == 0:
            raise EmptyData("baseline needs at least one consecutive labeled pair")
        sc = Standardizer.fit(X)
        out.scalers[target] = sc
        out.models[target] = fit_ridge(sc.transform(X), y, lam)
    return out


def predict_changes(b: ChangeBaseline, ds: Dataset) -> dict:
    """``{(user_id, seq_t): (dv_hat, da_hat)}`` for every labeled entry, including each user's last."""
    out = {}
    for s in ds.series:
        for cur in s:
            if cur.state is None:
                continue
            preds = []
            for target in ("valence", "arousal"):
                x = b.scalers[target].transform(_inputs(cur, target, b.use_features))
                preds.append(float(predict_ridge(b.models[target], x)))
            out[(cur.user_id, cur.seq)] = tuple(preds)
    return out
