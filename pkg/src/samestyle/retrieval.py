"""Flat embedding index, exact dot-product search and MRR / Recall@K evaluation."""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .encoder import EncoderParams, ProductFeatures, embed_catalog
from .errors import EmptyCatalog, EmptyList, EmptyTestSet, ShapeMismatch, UnknownId

RECALL_KS = (1, 5, 10, 20)


class RetrievalMode(enum.Enum):
    """Which trigger embedding queries which recall embedding."""

    TT = "tt"
    VV = "vv"
    MM = "mm"
    VM = "vm"
    TM = "tm"

    @property
    def trigger_side(self) -> str:
        return self.value[0]

    @property
    def recall_side(self) -> str:
        return self.value[1]

    @property
    def label(self) -> str:
        return f"{self.value[0]}-{self.value[1]}"


@dataclass(frozen=True)
class EmbeddingIndex:
    ids: tuple[str, ...]
    vectors: np.ndarray  # (M, d)
    modality: str = "m"

    def __post_init__(self):
        if len(set(self.ids)) != len(self.ids):
            raise ShapeMismatch("index ids must be unique")
        if self.vectors.shape[0] != len(self.ids):
            raise ShapeMismatch(f"{len(self.ids)} ids but {self.vectors.shape[0]} vectors")

    def __len__(self) -> int:
        return len(self.ids)

    def position(self, item_id: str) -> int:
        try:
            return self.ids.index(item_id)
        except ValueError:
            raise UnknownId(f"{item_id!r} not in index") from None


def index_from_embeddings(embeddings: Mapping[str, object], ids: Iterable[str], modality: str) -> EmbeddingIndex:
    ids = tuple(ids)
    if not ids:
        raise EmptyCatalog("cannot index an empty catalog")
    vecs = np.stack([getattr(embeddings[i], modality) for i in ids])
    return EmbeddingIndex(ids, vecs, modality)


def build_index(items: Sequence[ProductFeatures], params: EncoderParams, modality: str = "m") -> EmbeddingIndex:
    if modality not in ("m", "v", "t"):
        raise ShapeMismatch(f"modality must be one of m/v/t, got {modality!r}")
    if not items:
        raise EmptyCatalog("cannot index an empty catalog")
    embs = embed_catalog(list(items), params)
    return index_from_embeddings(embs, [p.item_id for p in items], modality)


def search(index: EmbeddingIndex, query: np.ndarray, k: int = 10) -> list[tuple[str, float]]:
    """Exhaustive top-k by dot product; equal scores are ordered by item id."""
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.vectors.shape[1],):
        raise ShapeMismatch(f"query shape {query.shape} does not match index dim {index.vectors.shape[1]}")
    scores = index.vectors @ query
    order = sorted(range(len(index.ids)), key=lambda i: (-scores[i], index.ids[i]))
    return [(index.ids[i], float(scores[i])) for i in order[:k]]


def mrr(ranks: Sequence[int]) -> float:
    ranks = list(ranks)
    if not ranks:
        raise EmptyList("mrr of an empty rank list")
    return float(np.mean([1.0 / r for r in ranks]))


def recall_at_k(ranks: Sequence[int], k: int) -> float:
    ranks = list(ranks)
    if not ranks:
        raise EmptyList("recall of an empty rank list")
    return sum(1 for r in ranks if r <= k) / len(ranks)


def chance_mrr(m: int) -> tuple[float, float]:
    """Mean and per-query std of reciprocal rank when the true item's rank is uniform on 1..m."""
    r = np.arange(1, m + 1, dtype=np.float64)
    mean = float(np.mean(1.0 / r))
    var = float(np.mean(1.0 / r**2)) - mean**2
    return mean, float(np.sqrt(max(var, 0.0)))


@dataclass
class EvalReport:
    mode: str
    mrr: float
    recall_at: dict[int, float]
    num_queries: int
    ranks: list[int] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "mrr": self.mrr,
            "recall_at": {str(k): v for k, v in sorted(self.recall_at.items())},
            "num_queries": self.num_queries,
        }


def pessimistic_rank(scores: np.ndarray, true_pos: int, exclude: Sequence[int] = ()) -> int:
    """1-based rank of ``true_pos``; tied candidates are all counted ahead of it."""
    live = np.ones(scores.shape[0], dtype=bool)
    for e in exclude:
        if e != true_pos:
            live[e] = False
    return int(np.sum(scores[live] >= scores[true_pos]))


def evaluate(
    pairs: Sequence,
    features: Mapping[str, ProductFeatures],
    params: EncoderParams,
    mode: RetrievalMode | str = RetrievalMode.MM,
    distractors: Iterable[str] = (),
    ks: Sequence[int] = RECALL_KS,
) -> EvalReport:
    """Rank each pair's recall item among the candidate pool using the trigger as query.

    The pool holds every recall item of ``pairs`` plus ``distractors``; the
    trigger itself is never a candidate for its own query.
    """
    mode = RetrievalMode(mode)
    pairs = list(pairs)
    if not pairs:
        raise EmptyTestSet("evaluate needs at least one pair")
    pool = sorted({p.recall for p in pairs} | set(distractors))
    needed = sorted(set(pool) | {p.trigger for p in pairs})
    missing = [i for i in needed if i not in features]
    if missing:
        raise UnknownId(f"no features for {missing[:5]}")
    embs = embed_catalog([features[i] for i in needed], params)
    index = index_from_embeddings(embs, pool, mode.recall_side)
    pos = {item: i for i, item in enumerate(index.ids)}

    ranks = []
    for p in pairs:
        q = getattr(embs[p.trigger], mode.trigger_side)
        scores = index.vectors @ q
        exclude = [pos[p.trigger]] if p.trigger in pos else []
        ranks.append(pessimistic_rank(scores, pos[p.recall], exclude))
    return EvalReport(
        mode=mode.value,
        mrr=mrr(ranks),
        recall_at={k: recall_at_k(ranks, k) for k in ks},
        num_queries=len(ranks),
        ranks=ranks,
    )


def format_table(reports: Mapping[str, EvalReport], ks: Sequence[int] = RECALL_KS) -> str:
    """Plain-text table: one row per method, columns MRR then R@K."""
    header = ["Method", "MRR"] + [f"R@{k}" for k in ks]
    rows = [[name, f"{r.mrr:.4f}"] + [f"{r.recall_at[k]:.4f}" for k in ks] for name, r in reports.items()]
    widths = [max(len(str(row[c])) for row in [header] + rows) for c in range(len(header))]
    fmt = lambda row: "  ".join(str(v).ljust(w) if c == 0 else str(v).rjust(w) for c, (v, w) in enumerate(zip(row, widths)))
    lines = [fmt(header), "-" * len(fmt(header))] + [fmt(r) for r in rows]
    return "\n".join(lines) + "\n"


def reports_to_json(reports: Mapping[str, EvalReport]) -> str:
    return json.dumps({name: r.to_dict() for name, r in reports.items()}, indent=2, sort_keys=True) + "\n"
