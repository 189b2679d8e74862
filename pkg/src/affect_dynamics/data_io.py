"""JSONL dataset files, train/dev splits and a seeded synthetic generator."""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .clusters import ClusterLexicon
from .domain import AROUSAL_MAX, VALENCE_MAX, AffectState, Dataset, Entry, EntryKind, UserSeries
from .errors import AffectError, DataError, ParseError, SchemaViolation, TooSmall

ENTRY_KEYS = {"user_id", "seq", "kind", "text", "valence", "arousal", "features", "clusters"}
HEADER_KEYS = {"format", "version", "feature_dim"}
FORMAT_NAME = "affect-dataset"


def _entry_from_obj(obj, lineno, strict):
    if not isinstance(obj, dict):
        raise SchemaViolation("expected a JSON object", lineno)
    unknown = set(obj) - ENTRY_KEYS
    if unknown and strict:
        raise SchemaViolation(f"unknown keys {sorted(unknown)}", lineno)
    for key in ("user_id", "seq", "kind", "text"):
        if key not in obj:
            raise SchemaViolation(f"missing required key {key!r}", lineno)
    if not isinstance(obj["user_id"], str):
        raise SchemaViolation("user_id must be a string", lineno)
    if not isinstance(obj["seq"], int) or isinstance(obj["seq"], bool) or obj["seq"] < 0:
        raise SchemaViolation("seq must be a non-negative integer", lineno)
    if obj["kind"] not in {k.value for k in EntryKind}:
        raise SchemaViolation(f"kind must be 'essay' or 'feeling_words', got {obj['kind']!r}", lineno)
    if not isinstance(obj["text"], str):
        raise SchemaViolation("text must be a string", lineno)
    v, a = obj.get("valence"), obj.get("arousal")
    state = None
    if (v is None) != (a is None):
        raise SchemaViolation("valence and arousal must both be present or both absent", lineno)
    if v is not None:
        for name, val, hi in (("valence", v, VALENCE_MAX), ("arousal", a, AROUSAL_MAX)):
            if not isinstance(val, int) or isinstance(val, bool) or not 0 <= val <= hi:
                raise SchemaViolation(f"{name}={val!r} outside 0..{hi}", lineno)
        state = AffectState(v, a)
    features = obj.get("features")
    if features is not None:
        if not isinstance(features, list) or not all(
            isinstance(f, (int, float)) and not isinstance(f, bool) and math.isfinite(f) for f in features
        ):
            raise SchemaViolation("features must be a list of finite numbers", lineno)
    clusters = obj.get("clusters")
    if clusters is not None:
        if not isinstance(clusters, list) or len(clusters) != 10 or any(c not in (0, 1) for c in clusters):
            raise SchemaViolation("clusters must be a list of ten 0/1 values", lineno)
    return Entry(obj["user_id"], obj["seq"], obj["kind"], obj["text"], state, features, clusters)


def loads(text: str, strict: bool = False) -> Dataset:
    entries = []
    feature_dim = None
    dims_seen = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg}", lineno) from None
        if isinstance(obj, dict) and obj.get("format") == FORMAT_NAME:
            if entries:
                raise SchemaViolation("dataset header must be the first line", lineno)
            feature_dim = obj.get("feature_dim")
            continue
        e = _entry_from_obj(obj, lineno, strict)
        if e.features is not None:
            dim = len(e.features)
            expected = feature_dim if feature_dim is not None else dims_seen
            if expected is not None and dim != expected:
                raise SchemaViolation(f"features have dimension {dim}, expected {expected}", lineno)
            dims_seen = dim
        entries.append(e)
    try:
        return Dataset.from_entries(entries, feature_dim)
    except AffectError as exc:
        raise SchemaViolation(str(exc)) from None


def load(path, strict: bool = False) -> Dataset:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read(), strict)


def entry_to_obj(e: Entry) -> dict:
    obj = {"user_id": e.user_id, "seq": e.seq, "kind": e.kind.value, "text": e.text}
    if e.state is not None:
        obj["valence"], obj["arousal"] = e.state.valence, e.state.arousal
    if e.features is not None:
        obj["features"] = list(e.features)
    if e.clusters is not None:
        obj["clusters"] = list(e.clusters)
    return obj


def dumps(ds: Dataset) -> str:
    lines = []
    if ds.feature_dim is not None:
        lines.append(json.dumps({"format": FORMAT_NAME, "version": 1, "feature_dim": ds.feature_dim}))
    lines += [json.dumps(entry_to_obj(e), ensure_ascii=False) for e in ds.entries()]
    return "".join(line + "\n" for line in lines)


def save(ds: Dataset, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(ds))


# Rough (valence, arousal) location of each shipped cluster on the grid.
CLUSTER_PROTOTYPES = {
    "Happy / Joyful": (3.5, 1.0),
    "Energetic / Excited": (3.5, 2.0),
    "Calm / Content": (3.5, 0.0),
    "Grateful / Hopeful": (3.0, 1.0),
    "Neutral / Okay": (2.0, 1.0),
    "Tired / Sluggish": (1.0, 0.0),
    "Sad / Lonely": (0.5, 1.0),
    "Anxious / Worried": (0.5, 2.0),
    "Angry / Frustrated": (1.0, 1.7),
    "Unwell / Physical State": (1.0, 0.7),
}

ESSAY_TEMPLATES = (
    "Today I feel {0}. Work was busy and afterwards I was {1}.",
    "I woke up {0} this morning. By lunch I was {1} and a bit {2}.",
    "Long shift today. Mostly {0}, somewhat {1}.",
    "Spent the day at home feeling {0}. In the evening I felt {1}.",
)


@dataclass
class SynthConfig:
    n_users: int = 50
    entries_min: int = 10
    entries_max: int = 30
    seed: int = 0
    rho: float = 0.5
    noise: float = 0.5
    offset_scale: float = 1.0
    essay_fraction: float = 0.5
    feature_dim: int = 0
    unseen_user_fraction: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.rho <= 1.0:
            raise DataError("rho must lie in [0, 1]")
        if self.n_users < 1 or self.entries_min < 1 or self.entries_max < self.entries_min:
            raise DataError("user and entry counts must be positive with entries_min <= entries_max")
        if self.noise < 0 or self.offset_scale < 0 or self.feature_dim < 0:
            raise DataError("noise, offset_scale and feature_dim must be non-negative")
        if not 0.0 <= self.unseen_user_fraction < 1.0:
            raise DataError("unseen_user_fraction must lie in [0, 1)")


def _round_half_up(x):
    return int(math.floor(x + 0.5))


def _step(x, mu, rho, noise, rng, hi):
    return min(hi, max(0, _round_half_up(x + rho * (mu - x) + noise * rng.standard_normal())))


def _cluster_weights(state: AffectState, lex: ClusterLexicon):
    protos = [CLUSTER_PROTOTYPES.get(name) for name in lex.names]
    if any(p is None for p in protos):
        return np.full(len(protos), 1.0 / len(protos))
    d2 = np.array([((state.valence - pv) / 4.0) ** 2 + ((state.arousal - pa) / 2.0) ** 2 for pv, pa in protos])
    w = np.exp(-d2 / 0.05)
    return w / w.sum()


def _text_for(state, rng, lex, essay):
    n_words = int(rng.integers(2, 5))
    clusters = rng.choice(len(lex.names), size=n_words, replace=False, p=_cluster_weights(state, lex))
    words = [lex.keywords[c][int(rng.integers(len(lex.keywords[c])))] for c in clusters]
    if essay:
        template = ESSAY_TEMPLATES[int(rng.integers(len(ESSAY_TEMPLATES)))]
        return template.format(*(words + words)[:3])
    return ", ".join(w.capitalize() for w in words)


def synthesize(cfg: SynthConfig, lex: Optional[ClusterLexicon] = None) -> Dataset:
    """Mean-reverting integer affect series with feeling-word or essay texts.

    Per user, offsets ``mu_v``/``mu_a`` are drawn around the grid centre; the
    first state is uniform on the grid and each next level is
    ``clamp(round(x + rho * (mu - x) + noise * N(0, 1)))``. Users in the
    trailing ``unseen_user_fraction`` get ids prefixed ``new-``.
    """
    lex = lex or ClusterLexicon.default()
    rng = np.random.default_rng(cfg.seed)
    proj = rng.normal(size=(2 + len(lex.names), cfg.feature_dim)) if cfg.feature_dim else None
    n_new = int(round(cfg.unseen_user_fraction * cfg.n_users))
    width = len(str(cfg.n_users - 1))
    series = []
    for u in range(cfg.n_users):
        uid = f"{'new-' if u >= cfg.n_users - n_new else ''}u{u:0{width}d}"
        mu_v = min(4.0, max(0.0, 2.0 + cfg.offset_scale * rng.standard_normal()))
        mu_a = min(2.0, max(0.0, 1.0 + 0.5 * cfg.offset_scale * rng.standard_normal()))
        n = int(rng.integers(cfg.entries_min, cfg.entries_max + 1))
        v, a = int(rng.integers(0, 5)), int(rng.integers(0, 3))
        entries = []
        for t in range(n):
            if t:
                v = _step(v, mu_v, cfg.rho, cfg.noise, rng, VALENCE_MAX)
                a = _step(a, mu_a, cfg.rho, 0.5 * cfg.noise, rng, AROUSAL_MAX)
            state = AffectState(v, a)
            essay = bool(rng.random() < cfg.essay_fraction)
            text = _text_for(state, rng, lex, essay)
            features = None
            if proj is not None:
                w = _cluster_weights(state, lex)
                base = np.concatenate([[v / 4.0, a / 2.0], w])
                features = [round(float(f), 6) for f in base @ proj + 0.1 * rng.standard_normal(cfg.feature_dim)]
            kind = EntryKind.ESSAY if essay else EntryKind.FEELING_WORDS
            entries.append(Entry(uid, t, kind, text, state, features))
        series.append(UserSeries(uid, entries))
    return Dataset(series, cfg.feature_dim or None)


def synth_config_dict(cfg: SynthConfig):
    return asdict(cfg)


class SplitMode(str, enum.Enum):
    BY_USER = "by_user"
    WITHIN_USER = "within_user"


def split(ds: Dataset, dev_fraction: float, seed: int = 0, mode=SplitMode.BY_USER):
    """Return ``(train, dev)``.

    ``by_user`` holds out whole users chosen with ``seed``; ``within_user``
    holds out the chronological tail of every user (at least one entry of each
    user stays in train).
    """
    if not 0.0 < dev_fraction < 1.0:
        raise ValueError("dev_fraction must lie in (0, 1)")
    mode = SplitMode(mode)
    if mode is SplitMode.BY_USER:
        n = len(ds.series)
        if n < 2:
            raise TooSmall("a by-user split needs at least two users")
        n_dev = min(n - 1, max(1, _round_half_up(dev_fraction * n)))
        dev_idx = set(np.random.default_rng(seed).permutation(n)[:n_dev].tolist())
        train = [s for i, s in enumerate(ds.series) if i not in dev_idx]
        dev = [s for i, s in enumerate(ds.series) if i in dev_idx]
        return Dataset(train, ds.feature_dim), Dataset(dev, ds.feature_dim)
    train, dev = [], []
    for s in ds.series:
        n_dev = min(len(s) - 1, _round_half_up(dev_fraction * len(s)))
        cut = len(s) - n_dev
        train.append(UserSeries(s.user_id, s.entries[:cut]))
        if n_dev:
            dev.append(UserSeries(s.user_id, s.entries[cut:]))
    if not dev:
        raise TooSmall("no user has enough entries for a within-user dev tail")
    return Dataset(train, ds.feature_dim), Dataset(dev, ds.feature_dim)


def split_unseen(ds: Dataset):
    """Separate users generated as unseen (``new-`` prefix) from the rest."""
    seen = [s for s in ds.series if not s.user_id.startswith("new-")]
    new = [s for s in ds.series if s.user_id.startswith("new-")]
    return Dataset(seen, ds.feature_dim), Dataset(new, ds.feature_dim)
