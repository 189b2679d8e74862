"""Core value types: affect states, deltas, entries and datasets."""

from __future__ import annotations

import enum
import numbers
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

from .errors import DataError, OutOfRange

VALENCE_MAX = 4
AROUSAL_MAX = 2


def _as_int(x, name):
    if isinstance(x, bool) or not isinstance(x, numbers.Integral):
        raise OutOfRange(f"{name} must be an integer, got {x!r}")
    return int(x)


@dataclass(frozen=True, order=True)
class AffectState:
    valence: int
    arousal: int

    def __post_init__(self):
        object.__setattr__(self, "valence", _as_int(self.valence, "valence"))
        object.__setattr__(self, "arousal", _as_int(self.arousal, "arousal"))
        if not 0 <= self.valence <= VALENCE_MAX:
            raise OutOfRange(f"valence {self.valence!r} not in 0..{VALENCE_MAX}")
        if not 0 <= self.arousal <= AROUSAL_MAX:
            raise OutOfRange(f"arousal {self.arousal!r} not in 0..{AROUSAL_MAX}")

    def as_tuple(self):
        return (self.valence, self.arousal)


@dataclass(frozen=True)
class AffectDelta:
    dv: int
    da: int

    def __post_init__(self):
        object.__setattr__(self, "dv", _as_int(self.dv, "dv"))
        object.__setattr__(self, "da", _as_int(self.da, "da"))
        if not -VALENCE_MAX <= self.dv <= VALENCE_MAX:
            raise OutOfRange(f"dv {self.dv!r} not in -4..4")
        if not -AROUSAL_MAX <= self.da <= AROUSAL_MAX:
            raise OutOfRange(f"da {self.da!r} not in -2..2")

    def __neg__(self):
        return AffectDelta(-self.dv, -self.da)

    def as_tuple(self):
        return (self.dv, self.da)


def all_states() -> list[AffectState]:
    """The 15 grid cells, valence-major."""
    return [AffectState(v, a) for v in range(VALENCE_MAX + 1) for a in range(AROUSAL_MAX + 1)]


def delta_between(a: AffectState, b: AffectState) -> AffectDelta:
    return AffectDelta(b.valence - a.valence, b.arousal - a.arousal)


def apply_delta(s: AffectState, d: AffectDelta) -> AffectState:
    v, a = s.valence + d.dv, s.arousal + d.da
    if not (0 <= v <= VALENCE_MAX and 0 <= a <= AROUSAL_MAX):
        raise OutOfRange(f"{s.as_tuple()} + {d.as_tuple()} leaves the grid")
    return AffectState(v, a)


class EntryKind(str, enum.Enum):
    ESSAY = "essay"
    FEELING_WORDS = "feeling_words"


@dataclass(frozen=True)
class Entry:
    user_id: str
    seq: int
    kind: EntryKind
    text: str
    state: Optional[AffectState] = None
    features: Optional[tuple] = None
    clusters: Optional[tuple] = None

    def __post_init__(self):
        if not isinstance(self.seq, int) or self.seq < 0:
            raise DataError(f"seq must be a non-negative integer, got {self.seq!r}")
        object.__setattr__(self, "kind", EntryKind(self.kind))
        if self.features is not None:
            object.__setattr__(self, "features", tuple(float(f) for f in self.features))
        if self.clusters is not None:
            bits = tuple(int(c) for c in self.clusters)
            if len(bits) != 10 or any(b not in (0, 1) for b in bits):
                raise DataError("clusters must be 10 binary values")
            object.__setattr__(self, "clusters", bits)


@dataclass(frozen=True)
class UserSeries:
    user_id: str
    entries: tuple

    def __post_init__(self):
        entries = tuple(self.entries)
        object.__setattr__(self, "entries", entries)
        if not entries:
            raise DataError(f"user {self.user_id!r} has no entries")
        for e in entries:
            if e.user_id != self.user_id:
                raise DataError(f"entry of user {e.user_id!r} inside series {self.user_id!r}")
        for prev, cur in zip(entries, entries[1:]):
            if cur.seq <= prev.seq:
                raise DataError(f"user {self.user_id!r}: seq not strictly increasing at {cur.seq}")

    def __len__(self):
        return len(self.entries)

    def __iter__(self) -> Iterator[Entry]:
        return iter(self.entries)

    def pairs(self):
        """Consecutive (entry_t, entry_t+1) pairs."""
        return list(zip(self.entries, self.entries[1:]))


@dataclass(frozen=True)
class Dataset:
    series: tuple = ()
    feature_dim: Optional[int] = None

    def __post_init__(self):
        series = tuple(self.series)
        object.__setattr__(self, "series", series)
        ids = [s.user_id for s in series]
        if len(set(ids)) != len(ids):
            raise DataError("duplicate user ids in dataset")
        dims = {len(e.features) for s in series for e in s if e.features is not None}
        if len(dims) > 1:
            raise DataError(f"inconsistent feature dimensions {sorted(dims)}")
        if dims:
            (dim,) = dims
            if self.feature_dim is None:
                object.__setattr__(self, "feature_dim", dim)
            elif self.feature_dim != dim:
                raise DataError(f"features have dimension {dim}, header says {self.feature_dim}")

    @classmethod
    def from_entries(cls, entries: Sequence[Entry], feature_dim=None) -> "Dataset":
        """Group entries by user (first-appearance order) and sort by seq."""
        groups: dict = {}
        for e in entries:
            groups.setdefault(e.user_id, []).append(e)
        series = [UserSeries(uid, sorted(es, key=lambda e: e.seq)) for uid, es in groups.items()]
        return cls(series, feature_dim)

    def entries(self) -> list[Entry]:
        return [e for s in self.series for e in s]

    def user(self, user_id: str) -> UserSeries:
        for s in self.series:
            if s.user_id == user_id:
                return s
        raise KeyError(user_id)

    @property
    def user_ids(self):
        return [s.user_id for s in self.series]

    def __len__(self):
        return len(self.series)

    @property
    def n_entries(self):
        return sum(len(s) for s in self.series)

    def is_labeled(self):
        return all(e.state is not None for s in self.series for e in s)
