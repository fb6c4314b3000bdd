"""Weighted bipartite query-item click graph.

Raw behaviour events are aggregated per (query, item) into five click-level
counters, then collapsed into a single edge weight with one coefficient per
level.
"""
from __future__ import annotations

import enum
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import UnknownId, UnknownQuery, ValidationError
from .text import tokenize


class ClickLevel(enum.IntEnum):
    """Click depth, shallow to deep. Values index into count/lambda vectors."""

    PAGE_CLICK = 0
    ADD_TO_CART = 1
    CONTACT_SUPPLIER = 2
    ORDER = 3
    PAY = 4

    @property
    def code(self) -> str:
        return "casop"[self.value]

    @classmethod
    def from_code(cls, code: str) -> "ClickLevel":
        idx = "casop".find(code)
        if len(code) != 1 or idx < 0:
            raise ValidationError(f"unknown click level {code!r}; expected one of c|a|s|o|p")
        return cls(idx)


@dataclass(frozen=True)
class ClickRecord:
    query_id: str
    item_id: str
    level: ClickLevel
    count: int = 1

    def __post_init__(self):
        if self.count < 0:
            raise ValidationError(f"negative click count {self.count} for ({self.query_id}, {self.item_id})")
        object.__setattr__(self, "level", ClickLevel(self.level))


@dataclass(frozen=True)
class ClickCounts:
    cnt_c: int = 0
    cnt_a: int = 0
    cnt_s: int = 0
    cnt_o: int = 0
    cnt_p: int = 0

    def __post_init__(self):
        if min(self.as_tuple()) < 0:
            raise ValidationError(f"click counts must be >= 0, got {self.as_tuple()}")

    def as_tuple(self) -> tuple[int, int, int, int, int]:
        return (self.cnt_c, self.cnt_a, self.cnt_s, self.cnt_o, self.cnt_p)

    def __add__(self, other: "ClickCounts") -> "ClickCounts":
        return ClickCounts(*(x + y for x, y in zip(self.as_tuple(), other.as_tuple())))


@dataclass(frozen=True)
class LambdaWeights:
    """One non-negative coefficient per click level (monotonicity not required)."""

    values: tuple[float, float, float, float, float] = (1.0, 2.0, 2.0, 5.0, 5.0)

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != 5:
            raise ValidationError(f"need exactly 5 lambda weights, got {len(vals)}")
        if min(vals) < 0:
            raise ValidationError(f"lambda weights must be >= 0, got {vals}")
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class QueryNode:
    query_id: str
    text: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "text", tokenize(self.text))
        if not self.text:
            raise ValidationError(f"query {self.query_id} has empty text")


@dataclass(frozen=True)
class ItemNode:
    item_id: str
    title: tuple[str, ...]
    sub_category_id: str
    keywords: frozenset[str] = frozenset()
    brand: str = ""
    image_ref: str = ""

    def __post_init__(self):
        object.__setattr__(self, "title", tokenize(self.title))
        object.__setattr__(self, "keywords", frozenset(tokenize(sorted(self.keywords))))
        if not self.title:
            raise ValidationError(f"item {self.item_id} has empty title")
        if self.sub_category_id is None or str(self.sub_category_id) == "":
            raise ValidationError(f"item {self.item_id} has no sub_category_id")


@dataclass(frozen=True)
class ClickGraph:
    queries: Mapping[str, QueryNode]
    items: Mapping[str, ItemNode]
    edges: Mapping[tuple[str, str], float]
    _adjacency: Mapping[str, tuple[tuple[str, float], ...]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        adj = defaultdict(list)
        for (q, i), w in self.edges.items():
            if q not in self.queries:
                raise UnknownId(f"edge references unknown query {q!r}")
            if i not in self.items:
                raise UnknownId(f"edge references unknown item {i!r}")
            if not w > 0:
                raise ValidationError(f"edge ({q}, {i}) has non-positive weight {w}")
            adj[q].append((i, w))
        object.__setattr__(self, "_adjacency", {q: tuple(v) for q, v in adj.items()})

    def neighbors(self, query_id: str) -> tuple[tuple[str, float], ...]:
        if query_id not in self.queries:
            raise UnknownQuery(f"unknown query {query_id!r}")
        return self._adjacency.get(query_id, ())

    def weight(self, query_id: str, item_id: str) -> float:
        return self.edges.get((query_id, item_id), 0.0)


def edge_weight(counts: ClickCounts, lambdas: LambdaWeights = LambdaWeights()) -> float:
    """Weighted sum of per-level click counts."""
    total = 0.0
    for lam, cnt in zip(lambdas.values, counts.as_tuple()):
        total += lam * cnt
    return total


def aggregate_counts(records: Iterable[ClickRecord]) -> dict[tuple[str, str], ClickCounts]:
    acc: dict[tuple[str, str], list[int]] = defaultdict(lambda: [0] * 5)
    for r in records:
        if r.count == 0:
            continue
        acc[(r.query_id, r.item_id)][r.level] += r.count
    return {key: ClickCounts(*vals) for key, vals in acc.items()}


def build_graph(
    records: Iterable[ClickRecord],
    catalog: Iterable[ItemNode],
    queries: Iterable[QueryNode],
    lambdas: LambdaWeights = LambdaWeights(),
) -> ClickGraph:
    items = {it.item_id: it for it in catalog}
    qs = {q.query_id: q for q in queries}
    checked = []
    for r in records:
        if r.query_id not in qs:
            raise UnknownId(f"click record references unknown query {r.query_id!r}")
        if r.item_id not in items:
            raise UnknownId(f"click record references unknown item {r.item_id!r}")
        checked.append(r)
    edges = {}
    for key in sorted(counts := aggregate_counts(checked)):
        w = edge_weight(counts[key], lambdas)
        if w > 0:
            edges[key] = w
    return ClickGraph(queries=qs, items=items, edges=edges)


def top_items(graph: ClickGraph, query_id: str, k: int = 4) -> list[str]:
    """Heaviest ``k`` items clicked under a query; ties go to the smaller item id."""
    if k < 1:
        raise ValidationError(f"k must be positive, got {k}")
    ranked = sorted(graph.neighbors(query_id), key=lambda iw: (-iw[1], iw[0]))
    return [item for item, _ in ranked[:k]]
