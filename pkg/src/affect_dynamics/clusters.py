"""Keyword lexicon that maps feeling words and essays onto 10 emotion clusters."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Sequence, Union

import numpy as np

from .errors import DataError, EmptyText, LexiconSizeMismatch

N_CLUSTERS = 10
N_SEED = 60

_NON_ALNUM = re.compile(r"[^0-9a-z]+")


def normalize(text: str) -> str:
    """Lowercase, replace every run of non-alphanumerics by one space, trim."""
    return _NON_ALNUM.sub(" ", text.lower()).strip()


def tokenize(text: str) -> list[str]:
    norm = normalize(text)
    return norm.split() if norm else []


def _count(keyword: str, tokens: list) -> int:
    """Occurrences of a (possibly multi-word) keyword as a run of whole tokens."""
    kt = keyword.split()
    n = len(kt)
    return sum(1 for i in range(len(tokens) - n + 1) if tokens[i:i + n] == kt)


@dataclass(frozen=True)
class ClusterVector:
    bits: tuple
    unmatched: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if len(self.bits) != N_CLUSTERS:
            raise DataError(f"cluster vector must have {N_CLUSTERS} bits")

    def as_array(self):
        return np.array(self.bits, dtype=np.uint8)


class ClusterLexicon:
    def __init__(self, clusters):
        clusters = [(str(name), [normalize(k) for k in kws]) for name, kws in clusters]
        if len(clusters) != N_CLUSTERS:
            raise DataError(f"lexicon must define exactly {N_CLUSTERS} clusters, got {len(clusters)}")
        names = [n for n, _ in clusters]
        if len(set(names)) != len(names):
            raise DataError("cluster names must be distinct")
        word_index = {}
        for cid, (name, kws) in enumerate(clusters):
            if not kws or any(not k for k in kws):
                raise DataError(f"cluster {name!r} has an empty keyword list or blank keyword")
            for k in kws:
                if k in word_index:
                    raise DataError(f"keyword {k!r} appears in more than one cluster")
                word_index[k] = cid
        self.names = tuple(names)
        self.keywords = tuple(tuple(kws) for _, kws in clusters)
        self.word_index = word_index
        self.seed_words = tuple(k for kws in self.keywords for k in kws)[:N_SEED]

    @classmethod
    def from_json(cls, source) -> "ClusterLexicon":
        try:
            if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
                with open(source, encoding="utf-8") as fh:
                    obj = json.load(fh)
            else:
                obj = json.load(source)
        except json.JSONDecodeError as exc:
            raise DataError(f"lexicon is not valid JSON: {exc.msg} (line {exc.lineno})") from None
        if not isinstance(obj, dict):
            raise DataError("lexicon file must be a JSON object of cluster name -> keywords")
        return cls(list(obj.items()))

    @classmethod
    def default(cls) -> "ClusterLexicon":
        return _default_lexicon()

    def to_json(self) -> str:
        return json.dumps(dict(zip(self.names, map(list, self.keywords))), indent=2)

    def cluster_of(self, keyword: str):
        return self.word_index.get(normalize(keyword))


@lru_cache(maxsize=None)
def _default_lexicon():
    with resources.files("affect_dynamics.data").joinpath("lexicon.json").open(encoding="utf-8") as fh:
        return ClusterLexicon.from_json(fh)


def _hits(text: str, keywords) -> list[int]:
    tokens = tokenize(text)
    return [_count(k, tokens) for k in keywords]


def assign_feeling_words(words: Sequence[str], lex: ClusterLexicon) -> ClusterVector:
    """Union of the clusters hit by each feeling word.

    An item that is itself a keyword maps to that keyword's cluster; otherwise
    any keyword found inside the item counts. Items with no hit are returned in
    ``unmatched``.
    """
    bits = [0] * N_CLUSTERS
    unmatched = []
    for word in words:
        cid = lex.cluster_of(word)
        if cid is not None:
            bits[cid] = 1
            continue
        tokens = tokenize(word)
        found = [lex.word_index[k] for k in lex.word_index if _count(k, tokens)]
        if not found:
            unmatched.append(word)
        for c in found:
            bits[c] = 1
    return ClusterVector(tuple(bits), tuple(unmatched))


def cluster_scores(text: str, lex: ClusterLexicon) -> np.ndarray:
    """Keyword-hit count per cluster."""
    tokens = tokenize(text)
    return np.array([sum(_count(k, tokens) for k in kws) for kws in lex.keywords], dtype=np.int64)


def assign_essay(text: str, lex: ClusterLexicon, min_k: int = 3, max_k: int = 4) -> ClusterVector:
    if not normalize(text):
        raise EmptyText("essay text is empty after normalization")
    scores = cluster_scores(text, lex)
    n_hit = int(np.count_nonzero(scores))
    if n_hit == 0:
        return ClusterVector((0,) * N_CLUSTERS)
    k = min(max_k, max(min_k, n_hit))
    # stable sort on -score keeps lower cluster ids first among ties
    order = np.argsort(-scores, kind="stable")
    chosen = [c for c in order[:k] if scores[c] > 0]
    bits = [0] * N_CLUSTERS
    for c in chosen:
        bits[c] = 1
    return ClusterVector(tuple(bits))


def split_feeling_words(text: str) -> list[str]:
    return [w.strip() for w in re.split(r"[,;\n]", text) if w.strip()]


def assign_entry(entry, lex: ClusterLexicon) -> ClusterVector:
    """Dispatch on entry kind; essays with no usable text map to all-zero."""
    if entry.kind.value == "feeling_words":
        return assign_feeling_words(split_feeling_words(entry.text), lex)
    if not normalize(entry.text):
        return ClusterVector((0,) * N_CLUSTERS)
    return assign_essay(entry.text, lex)


def indicator_60(words_or_text: Union[str, Sequence[str]], lex: ClusterLexicon) -> np.ndarray:
    """Presence of each of the 60 seed keywords."""
    if len(lex.seed_words) != N_SEED:
        raise LexiconSizeMismatch(f"lexicon has {len(lex.seed_words)} seed words, need {N_SEED}")
    text = words_or_text if isinstance(words_or_text, str) else " , ".join(words_or_text)
    return (np.array(_hits(text, lex.seed_words)) > 0).astype(np.uint8)
