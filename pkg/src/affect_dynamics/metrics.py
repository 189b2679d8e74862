"""Correlation/MAE evaluation for affect assessment and affect-change forecasting.

Assessment reports within-user, between-user and composite scores per
target. The composite correlation averages Fisher z values and maps back with
tanh; the composite MAE is the plain mean of the within and between MAEs.
Transition reports combine per-user correlations the same way and pool the
MAE over all pairs, measured on the predicted next state clamped to the grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Mapping, Optional

import numpy as np

from .domain import AROUSAL_MAX, VALENCE_MAX, Dataset
from .errors import CoverageGap, DegenerateInput, EmptyInput, OutOfDomain

R_CLAMP = 1.0 - 1e-6
TARGETS = ("valence", "arousal")


def pearson(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DegenerateInput("pearson needs two 1-d vectors of equal length")
    if len(x) < 2:
        raise DegenerateInput("pearson needs at least two points")
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = dx @ dx, dy @ dy
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("pearson is undefined for a constant series")
    r = (dx @ dy) / math.sqrt(sxx * syy)
    return float(min(1.0, max(-1.0, r)))


def mae(pred, gold) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    gold = np.asarray(gold, dtype=np.float64)
    if pred.size == 0:
        raise EmptyInput("mae of empty vectors")
    if pred.shape != gold.shape:
        raise ValueError(f"shape mismatch {pred.shape} vs {gold.shape}")
    return float(np.mean(np.abs(pred - gold)))


def fisher_composite(rs) -> float:
    """tanh of the mean atanh; |r| at or beyond 1 is clamped to 1 - 1e-6.

    Equal inputs return their common value exactly (the mean in z-space is
    that value), so singletons and perfect scores pass through unchanged.
    """
    rs = [float(r) for r in rs]
    if not rs:
        raise EmptyInput("no correlations to combine")
    if any(math.isnan(r) or abs(r) > 1.0 for r in rs):
        raise OutOfDomain(f"correlations must lie in [-1, 1]: {rs}")
    if all(r == rs[0] for r in rs):
        return rs[0]
    z = [math.atanh(max(-R_CLAMP, min(R_CLAMP, r))) for r in rs]
    return math.tanh(math.fsum(z) / len(z))


def _try_pearson(x, y) -> Optional[float]:
    try:
        return pearson(x, y)
    except DegenerateInput:
        return None


def _nan_none(pair):
    return tuple(np.nan if v is None else float(v) for v in pair)


def _target_predicted(per_user, t) -> bool:
    """False when a target has no predictions at all (single-target models); partial gaps raise."""
    missing = [np.isnan(arr[:, t]) for arr in per_user]
    if all(m.all() for m in missing):
        return False
    if any(m.any() for m in missing):
        raise CoverageGap(f"predictions for {TARGETS[t]} are missing for some entries")
    return True


def _combine(values) -> Optional[float]:
    values = [v for v in values if v is not None]
    return fisher_composite(values) if values else None


@dataclass
class TargetScores:
    r_between: Optional[float] = None
    r_within: Optional[float] = None
    r_composite: Optional[float] = None
    mae_between: Optional[float] = None
    mae_within: Optional[float] = None
    mae_composite: Optional[float] = None
    n_users_scored: int = 0
    n_users_skipped: int = 0


@dataclass
class EvalReport:
    task: str
    valence: TargetScores = field(default_factory=TargetScores)
    arousal: TargetScores = field(default_factory=TargetScores)
    meta: dict = field(default_factory=dict)

    def to_dict(self):
        return {"task": self.task, "valence": asdict(self.valence), "arousal": asdict(self.arousal), "meta": self.meta}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_table(self) -> str:
        cols = ["r_between", "r_within", "r_composite", "mae_between", "mae_within", "mae_composite",
                "n_users_scored", "n_users_skipped"]
        if self.task == "transition":
            cols = ["r_within", "mae_within", "n_users_scored", "n_users_skipped"]
        rows = [["target"] + cols]
        for name in TARGETS:
            s = getattr(self, name)
            cells = [name]
            for c in cols:
                v = getattr(s, c)
                cells.append("-" if v is None else (str(v) if isinstance(v, int) else f"{v:.4f}"))
            rows.append(cells)
        widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
        lines = ["  ".join(cell.rjust(w) if i else cell.ljust(w) for i, (cell, w) in enumerate(zip(r, widths)))
                 for r in rows]
        return "\n".join(lines)


def evaluate_assessment(pred: Mapping, gold: Dataset) -> EvalReport:
    """Score per-entry predictions ``{(user_id, seq): (v_hat, a_hat)}`` against ``gold``."""
    report = EvalReport("assessment")
    per_user = []
    for s in gold.series:
        rows = []
        for e in s:
            if e.state is None:
                continue
            key = (e.user_id, e.seq)
            if key not in pred:
                raise CoverageGap(f"no prediction for user {e.user_id!r} seq {e.seq}")
            rows.append((*_nan_none(pred[key]), e.state.valence, e.state.arousal))
        if rows:
            per_user.append(np.array(rows, dtype=np.float64))
    if not per_user:
        raise EmptyInput("gold dataset has no labeled entries")
    for t, name in enumerate(TARGETS):
        if not _target_predicted(per_user, t):
            continue
        scores = getattr(report, name)
        within, maes = [], []
        for arr in per_user:
            p, g = arr[:, t], arr[:, 2 + t]
            maes.append(mae(p, g))
            r = _try_pearson(p, g) if len(arr) >= 2 else None
            if r is None:
                scores.n_users_skipped += 1
            else:
                scores.n_users_scored += 1
                within.append(r)
        means_p = np.array([arr[:, t].mean() for arr in per_user])
        means_g = np.array([arr[:, 2 + t].mean() for arr in per_user])
        scores.r_within = _combine(within)
        scores.r_between = _try_pearson(means_p, means_g) if len(per_user) >= 2 else None
        scores.r_composite = _combine([scores.r_within, scores.r_between])
        scores.mae_within = float(np.mean(maes))
        scores.mae_between = mae(means_p, means_g)
        scores.mae_composite = 0.5 * (scores.mae_within + scores.mae_between)
    return report


def evaluate_transition(pred: Mapping, gold: Dataset) -> EvalReport:
    """Score change predictions ``{(user_id, seq_t): (dv_hat, da_hat)}`` on every consecutive gold pair."""
    report = EvalReport("transition")
    per_user = []
    for s in gold.series:
        rows = []
        for cur, nxt in s.pairs():
            if cur.state is None or nxt.state is None:
                continue
            key = (cur.user_id, cur.seq)
            if key not in pred:
                raise CoverageGap(f"no change prediction for user {cur.user_id!r} seq {cur.seq}")
            rows.append((*_nan_none(pred[key]), cur.state.valence, cur.state.arousal,
                         nxt.state.valence, nxt.state.arousal))
        if rows:
            per_user.append(np.array(rows, dtype=np.float64))
    if not per_user:
        raise EmptyInput("gold dataset has no consecutive labeled pairs")
    bounds = (VALENCE_MAX, AROUSAL_MAX)
    for t, name in enumerate(TARGETS):
        if not _target_predicted(per_user, t):
            continue
        scores = getattr(report, name)
        within, errors = [], []
        for arr in per_user:
            d_hat, cur, nxt = arr[:, t], arr[:, 2 + t], arr[:, 4 + t]
            r = _try_pearson(d_hat, nxt - cur) if len(arr) >= 2 else None
            if r is None:
                scores.n_users_skipped += 1
            else:
                scores.n_users_scored += 1
                within.append(r)
            errors.append(np.abs(np.clip(cur + d_hat, 0, bounds[t]) - nxt))
        scores.r_within = _combine(within)
        scores.mae_within = float(np.mean(np.concatenate(errors)))
    return report
