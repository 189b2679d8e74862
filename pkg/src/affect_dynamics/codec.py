"""Emotion label map and the binary state-vector layout used by the MaxEnt model.

A state vector is a concatenation of one-hot blocks followed by free latent
bits::

    assessment:  [valence(5) | arousal(3) | latent(L)]
    transition:  [valence(5) | arousal(3) | dv(9) | da(5) | latent(L)]
    free:        [latent(L)]

``free`` has no affect blocks at all; it exists for toy Ising models and
tests.
"""

from __future__ import annotations

import csv
import enum
import io
import itertools
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Iterator, Optional

import numpy as np

from .domain import AROUSAL_MAX, VALENCE_MAX, AffectDelta, AffectState, all_states
from .errors import BudgetExceeded, DataError, InvalidTransition, LayoutMismatch, UnknownLabel

N_VALENCE = VALENCE_MAX + 1
N_AROUSAL = AROUSAL_MAX + 1
N_DV = 2 * VALENCE_MAX + 1
N_DA = 2 * AROUSAL_MAX + 1

ENUMERATION_MAX_LENGTH = 32


def _normalize_label(label: str) -> str:
    return " ".join(label.split()).casefold()


class LabelMap:
    """Bijection between the 15 circumplex labels and the valence/arousal grid."""

    def __init__(self, pairs):
        pairs = [(str(label).strip(), state) for label, state in pairs]
        if len(pairs) != 15:
            raise DataError(f"label map needs exactly 15 entries, got {len(pairs)}")
        keys = [_normalize_label(label) for label, _ in pairs]
        if len(set(keys)) != 15:
            raise DataError("label map has duplicate labels")
        states = [s for _, s in pairs]
        if set(states) != set(all_states()):
            raise DataError("label map does not cover the 5x3 grid exactly once")
        self.pairs = tuple(pairs)
        self._by_label = dict(zip(keys, states))
        self._by_state = {s: label for label, s in pairs}

    @classmethod
    def from_csv(cls, source) -> "LabelMap":
        """Load from a path or an open text stream with columns label,valence,arousal."""
        if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
            with open(source, encoding="utf-8", newline="") as fh:
                return cls.from_csv(fh)
        reader = csv.DictReader(source)
        missing = {"label", "valence", "arousal"} - set(reader.fieldnames or ())
        if missing:
            raise DataError(f"label csv missing columns {sorted(missing)}")
        pairs = [(row["label"], AffectState(int(row["valence"]), int(row["arousal"]))) for row in reader]
        return cls(pairs)

    @classmethod
    def default(cls) -> "LabelMap":
        return _default_label_map()

    def label_to_state(self, label: str) -> AffectState:
        try:
            return self._by_label[_normalize_label(label)]
        except KeyError:
            raise UnknownLabel(f"unknown emotion label {label!r}") from None

    def state_to_label(self, s: AffectState) -> str:
        return self._by_state[s]

    @property
    def labels(self):
        return [label for label, _ in self.pairs]


@lru_cache(maxsize=None)
def _default_label_map():
    text = resources.files("affect_dynamics.data").joinpath("labels.csv").read_text(encoding="utf-8")
    return LabelMap.from_csv(io.StringIO(text))


def label_to_state(label: str, label_map: Optional[LabelMap] = None) -> AffectState:
    return (label_map or LabelMap.default()).label_to_state(label)


def state_to_label(s: AffectState, label_map: Optional[LabelMap] = None) -> str:
    return (label_map or LabelMap.default()).state_to_label(s)


class Mode(str, enum.Enum):
    ASSESSMENT = "assessment"
    TRANSITION = "transition"
    FREE = "free"


@dataclass(frozen=True)
class StateLayout:
    mode: Mode
    latent_bits: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.latent_bits < 0:
            raise LayoutMismatch("latent_bits must be >= 0")

    @property
    def affect_size(self) -> int:
        return {Mode.ASSESSMENT: 8, Mode.TRANSITION: 22, Mode.FREE: 0}[self.mode]

    @property
    def size(self) -> int:
        return self.affect_size + self.latent_bits

    @property
    def valence_block(self):
        return slice(0, 5)

    @property
    def arousal_block(self):
        return slice(5, 8)

    @property
    def dv_block(self):
        return slice(8, 17)

    @property
    def da_block(self):
        return slice(17, 22)

    @property
    def latent_block(self):
        return slice(self.affect_size, self.size)

    @property
    def n_valid(self) -> int:
        per = {Mode.ASSESSMENT: 15, Mode.TRANSITION: 225, Mode.FREE: 1}[self.mode]
        return per * 2**self.latent_bits


@dataclass(frozen=True, eq=False)
class StateVector:
    layout: StateLayout
    bits: np.ndarray

    def __eq__(self, other):
        return (
            isinstance(other, StateVector)
            and self.layout == other.layout
            and np.array_equal(self.bits, other.bits)
        )

    def __hash__(self):
        return hash((self.layout, self.bits.tobytes()))


def _one_hot(n, i):
    out = np.zeros(n, dtype=np.uint8)
    out[i] = 1
    return out


def encode(state: Optional[AffectState], delta: Optional[AffectDelta], latent, layout: StateLayout) -> StateVector:
    latent = np.asarray(latent if latent is not None else [], dtype=np.uint8).reshape(-1)
    if latent.size != layout.latent_bits:
        raise LayoutMismatch(f"latent has {latent.size} bits, layout expects {layout.latent_bits}")
    if np.any(latent > 1):
        raise LayoutMismatch("latent bits must be 0/1")
    if layout.mode is Mode.FREE:
        if state is not None or delta is not None:
            raise LayoutMismatch("free layout carries no affect blocks")
        return StateVector(layout, latent.copy())
    if state is None:
        raise LayoutMismatch("affect layouts need a state")
    parts = [_one_hot(N_VALENCE, state.valence), _one_hot(N_AROUSAL, state.arousal)]
    if layout.mode is Mode.TRANSITION:
        if delta is None:
            raise LayoutMismatch("transition layout needs a delta")
        if not (0 <= state.valence + delta.dv <= VALENCE_MAX and 0 <= state.arousal + delta.da <= AROUSAL_MAX):
            raise InvalidTransition(f"{state.as_tuple()} + {delta.as_tuple()} leaves the grid")
        parts += [_one_hot(N_DV, delta.dv + VALENCE_MAX), _one_hot(N_DA, delta.da + AROUSAL_MAX)]
    elif delta is not None:
        raise LayoutMismatch("assessment layout takes no delta")
    parts.append(latent)
    return StateVector(layout, np.concatenate(parts))


def _block_index(bits, block, name):
    seg = bits[block]
    if seg.sum() != 1:
        raise LayoutMismatch(f"{name} block is not one-hot: {seg.tolist()}")
    return int(np.argmax(seg))


def decode(x: StateVector):
    """Inverse of :func:`encode`: returns ``(state, delta, latent)``."""
    lay, bits = x.layout, np.asarray(x.bits)
    if bits.shape != (lay.size,):
        raise LayoutMismatch(f"vector length {bits.shape} does not match layout size {lay.size}")
    latent = bits[lay.latent_block].astype(np.uint8)
    if lay.mode is Mode.FREE:
        return None, None, latent
    state = AffectState(_block_index(bits, lay.valence_block, "valence"), _block_index(bits, lay.arousal_block, "arousal"))
    delta = None
    if lay.mode is Mode.TRANSITION:
        delta = AffectDelta(
            _block_index(bits, lay.dv_block, "dv") - VALENCE_MAX,
            _block_index(bits, lay.da_block, "da") - AROUSAL_MAX,
        )
    return state, delta, latent


def is_valid(x: StateVector) -> bool:
    try:
        state, delta, _ = decode(x)
    except (LayoutMismatch, InvalidTransition):
        return False
    if np.any((x.bits != 0) & (x.bits != 1)):
        return False
    if delta is not None:
        return 0 <= state.valence + delta.dv <= VALENCE_MAX and 0 <= state.arousal + delta.da <= AROUSAL_MAX
    return True


@lru_cache(maxsize=None)
def _affect_configs(mode: Mode):
    """One-hot affect blocks of every valid combination, plus the decoded integers.

    Returns ``(S, values)``: ``S`` is (K, affect_size) uint8 and ``values`` is
    (K, 2) for assessment [v, a] or (K, 4) for transition [v, a, dv, da].
    """
    if mode is Mode.FREE:
        return np.zeros((1, 0), dtype=np.uint8), np.zeros((1, 0), dtype=np.int64)
    rows, values = [], []
    for s in all_states():
        if mode is Mode.ASSESSMENT:
            rows.append(encode(s, None, [], StateLayout(mode)).bits)
            values.append(s.as_tuple())
            continue
        for dv in range(-s.valence, VALENCE_MAX - s.valence + 1):
            for da in range(-s.arousal, AROUSAL_MAX - s.arousal + 1):
                rows.append(encode(s, AffectDelta(dv, da), [], StateLayout(mode)).bits)
                values.append((s.valence, s.arousal, dv, da))
    S = np.array(rows, dtype=np.uint8)
    V = np.array(values, dtype=np.int64)
    S.flags.writeable = False
    V.flags.writeable = False
    return S, V


def affect_configs(layout: StateLayout):
    return _affect_configs(layout.mode)


@lru_cache(maxsize=8)
def _latent_configs(n_bits: int):
    idx = np.arange(2**n_bits, dtype=np.int64)
    shifts = np.arange(n_bits - 1, -1, -1, dtype=np.int64)
    Z = ((idx[:, None] >> shifts) & 1).astype(np.uint8)
    Z.flags.writeable = False
    return Z


def latent_configs(n_bits: int) -> np.ndarray:
    """All 2**n_bits latent assignments, in itertools.product([0, 1]) order."""
    return _latent_configs(n_bits)


def _check_budget(layout: StateLayout):
    if layout.size > ENUMERATION_MAX_LENGTH:
        raise BudgetExceeded(f"layout length {layout.size} exceeds enumeration limit {ENUMERATION_MAX_LENGTH}")


def enumerate_valid(layout: StateLayout) -> Iterator[StateVector]:
    """Yield every valid state vector once, affect-major then latent."""
    _check_budget(layout)
    S, _ = affect_configs(layout)
    for row in S:
        for z in itertools.product((0, 1), repeat=layout.latent_bits):
            yield StateVector(layout, np.concatenate([row, np.array(z, dtype=np.uint8)]))


def valid_matrix(layout: StateLayout) -> np.ndarray:
    """All valid vectors stacked as an (n_valid, size) uint8 array, same order as enumerate_valid."""
    _check_budget(layout)
    S, _ = affect_configs(layout)
    Z = latent_configs(layout.latent_bits)
    return np.concatenate([np.repeat(S, len(Z), axis=0), np.tile(Z, (len(S), 1))], axis=1)
