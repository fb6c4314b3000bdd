"""Constrained positive-pair sampling from a click graph.

For each admissible query the heaviest items are paired up; a pair survives
only if both items share a sub-category, look alike under a reference
embedder (image and text), and share at least one core keyword.
"""
from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Protocol

import numpy as np

from .clickgraph import ClickGraph, ItemNode, QueryNode, top_items
from .errors import ValidationError
from .text import tokenize


@dataclass(frozen=True)
class SamplerConfig:
    core_vocab: frozenset[str]
    k_per_query: int = 4
    sim_threshold: float = 0.7
    min_query_words: int = 2
    # ablation switches; all on reproduces the full procedure
    use_query_filter: bool = True
    use_subcategory: bool = True
    use_similarity: bool = True
    use_keyword_overlap: bool = True

    def __post_init__(self):
        object.__setattr__(self, "core_vocab", frozenset(w.lower() for w in self.core_vocab))
        if not self.core_vocab:
            raise ValidationError("core_vocab must be non-empty")
        if not 0.0 <= self.sim_threshold <= 1.0:
            raise ValidationError(f"sim_threshold must be in [0, 1], got {self.sim_threshold}")
        if self.k_per_query < 1 or self.min_query_words < 1:
            raise ValidationError("k_per_query and min_query_words must be positive")


@dataclass(frozen=True, order=True)
class TrainingPair:
    trigger: str
    recall: str
    source_query: str = ""
    sub_category_id: str = ""

    def __post_init__(self):
        if self.trigger == self.recall:
            raise ValidationError(f"pair with identical trigger and recall {self.trigger!r}")


class ReferenceEmbedder(Protocol):
    """Deterministic unit-vector image/text embeddings for constraint checks."""

    def image_embed(self, item: ItemNode) -> np.ndarray: ...

    def text_embed(self, item: ItemNode) -> np.ndarray: ...


def _unit(x: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(x)
    return x / n if n >= 1e-12 else np.zeros_like(x)


class MeanFeatureEmbedder:
    """Normalized raw token means, used as both reference embeddings on synthetic data.

    ``features`` maps item id to an object with ``image_tokens`` and
    ``text_tokens`` arrays (e.g. :class:`~samestyle.encoder.ProductFeatures`).
    """

    def __init__(self, features: Mapping[str, object]):
        self._img = {k: _unit(np.asarray(f.image_tokens, dtype=np.float64).mean(axis=0)) for k, f in features.items()}
        self._txt = {k: _unit(np.asarray(f.text_tokens, dtype=np.float64).mean(axis=0)) for k, f in features.items()}

    def image_embed(self, item: ItemNode) -> np.ndarray:
        return self._img[item.item_id]

    def text_embed(self, item: ItemNode) -> np.ndarray:
        return self._txt[item.item_id]


def core_keywords(text, vocab) -> frozenset[str]:
    vocab = {w.lower() for w in vocab}
    return frozenset(w for w in tokenize(text) if w in vocab)


def item_core_keywords(item: ItemNode, vocab) -> frozenset[str]:
    return core_keywords(item.title + tuple(sorted(item.keywords)), vocab)


def query_admissible(query: QueryNode, config: SamplerConfig) -> bool:
    if not config.use_query_filter:
        return True
    words = tokenize(query.text)
    return len(words) >= config.min_query_words and bool(core_keywords(words, config.core_vocab))


def pair_admissible(a: ItemNode, b: ItemNode, ref: ReferenceEmbedder, config: SamplerConfig) -> bool:
    if config.use_subcategory and a.sub_category_id != b.sub_category_id:
        return False
    if config.use_similarity:
        if float(np.dot(ref.image_embed(a), ref.image_embed(b))) < config.sim_threshold:
            return False
        if float(np.dot(ref.text_embed(a), ref.text_embed(b))) < config.sim_threshold:
            return False
    if config.use_keyword_overlap:
        if not item_core_keywords(a, config.core_vocab) & item_core_keywords(b, config.core_vocab):
            return False
    return True


def sample_pairs(graph: ClickGraph, ref: ReferenceEmbedder, config: SamplerConfig) -> list[TrainingPair]:
    """Positive trigger/recall pairs, in query-id order, deduplicated on (trigger, recall).

    ``top_items`` already orders by weight descending with id tie-break, so
    the earlier item of each combination is the trigger.
    """
    out: list[TrainingPair] = []
    seen: set[tuple[str, str]] = set()
    for qid in sorted(graph.queries):
        if not query_admissible(graph.queries[qid], config):
            continue
        top = top_items(graph, qid, config.k_per_query)
        for trig, rec in combinations(top, 2):
            if (trig, rec) in seen:
                continue
            a, b = graph.items[trig], graph.items[rec]
            if pair_admissible(a, b, ref, config):
                seen.add((trig, rec))
                out.append(TrainingPair(trig, rec, qid, a.sub_category_id))
    return out
