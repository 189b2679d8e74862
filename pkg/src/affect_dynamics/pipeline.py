"""Glue between datasets, the text latent and the MaxEnt model.

Assessment vectors pair each labeled entry's state with the latent code of
its own text. Transition vectors pair the state at t and the change to t+1
with the latent code of entry t's text. Entries without any lexicon hit have
no usable text and get an all-zero latent.
"""

from __future__ import annotations

from typing import Optional

import numpy as np

from .autoencoder import AeModel, encode_binary
from .clusters import ClusterLexicon, indicator_60
from .codec import Mode, StateLayout, encode
from .domain import Dataset, delta_between
from .errors import EmptyData, LayoutMismatch
from .maxent import FitConfig, MaxEntModel, fit, predict_assessment, transition_table


def indicator_matrix(ds: Dataset, lex: Optional[ClusterLexicon] = None) -> np.ndarray:
    """60-d keyword indicators for every entry, in dataset order."""
    lex = lex or ClusterLexicon.default()
    rows = [indicator_60(e.text, lex) for e in ds.entries()]
    return np.array(rows, dtype=np.float64).reshape(len(rows), 60)


def entry_latent(entry, n_bits: int, ae: Optional[AeModel], lex: ClusterLexicon) -> np.ndarray:
    if n_bits == 0:
        return np.zeros(0, dtype=np.uint8)
    if ae is None:
        raise LayoutMismatch(f"{n_bits} latent bits requested but no autoencoder given")
    if ae.latent_dim != n_bits:
        raise LayoutMismatch(f"autoencoder has {ae.latent_dim} latent bits, layout expects {n_bits}")
    ind = indicator_60(entry.text, lex)
    if not ind.any():
        return np.zeros(n_bits, dtype=np.uint8)
    return encode_binary(ae, ind.astype(np.float64))


def training_matrix(ds: Dataset, layout: StateLayout, ae: Optional[AeModel] = None,
                    lex: Optional[ClusterLexicon] = None) -> np.ndarray:
    lex = lex or ClusterLexicon.default()
    L = layout.latent_bits
    rows = []
    if layout.mode is Mode.ASSESSMENT:
        for e in ds.entries():
            if e.state is not None:
                rows.append(encode(e.state, None, entry_latent(e, L, ae, lex), layout).bits)
    elif layout.mode is Mode.TRANSITION:
        for s in ds.series:
            for cur, nxt in s.pairs():
                if cur.state is None or nxt.state is None:
                    continue
                d = delta_between(cur.state, nxt.state)
                rows.append(encode(cur.state, d, entry_latent(cur, L, ae, lex), layout).bits)
    else:
        for e in ds.entries():
            rows.append(encode(None, None, entry_latent(e, L, ae, lex), layout).bits)
    if not rows:
        raise EmptyData(f"dataset yields no {layout.mode.value} training vectors")
    return np.array(rows, dtype=np.uint8)


def train_maxent(ds: Dataset, mode, latent_bits: int = 0, ae: Optional[AeModel] = None,
                 lex: Optional[ClusterLexicon] = None, l2: float = 1e-3,
                 fit_cfg: Optional[FitConfig] = None) -> MaxEntModel:
    layout = StateLayout(Mode(mode), latent_bits)
    X = training_matrix(ds, layout, ae, lex)
    return fit(MaxEntModel.uniform(layout, l2), X, fit_cfg)


def maxent_predict_assessment(m: MaxEntModel, ds: Dataset, ae: Optional[AeModel] = None,
                              lex: Optional[ClusterLexicon] = None) -> dict:
    """``{(user_id, seq): (v_hat, a_hat)}`` for every entry, labeled or not."""
    lex = lex or ClusterLexicon.default()
    cache = {}
    out = {}
    for e in ds.entries():
        z = entry_latent(e, m.layout.latent_bits, ae, lex)
        key = z.tobytes()
        if key not in cache:
            cache[key] = predict_assessment(m, z)
        out[(e.user_id, e.seq)] = cache[key]
    return out


def maxent_predict_transition(m: MaxEntModel, ds: Dataset) -> dict:
    """``{(user_id, seq_t): (dv_hat, da_hat)}`` for every labeled entry."""
    table = transition_table(m)
    return {(e.user_id, e.seq): table[e.state.as_tuple()] for e in ds.entries() if e.state is not None}
