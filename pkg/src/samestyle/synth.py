"""Synthetic catalogs with latent style ground truth, and click logs over them.

All randomness comes from ``numpy.random.default_rng(seed)`` (PCG64).

Every style owns a latent vector; image patches and title words are both
noisy copies of it, so the two modalities describe the same thing. Coarse to
fine::

    category      -> latent c ~ N(0, I); a few core keywords near c
    sub-category  -> c + subcat_spread * N(0, I)
    style         -> z = sub-category latent + style_spread * N(0, I)
                     image patch k = z + patch_spread * N(0, I)
                     title = one category core keyword, three attribute
                     words and a brand word, each z + word_spread * N(0, I)
    product       -> style prototype + noise_sigma * N(0, 1) per token
                     + one nuisance offset shared by all tokens of a modality,
                     confined to the first ``nuisance_dims`` input dims

Text token 0 is the [CLS] slot and stays zero in the data.

The click model runs ``clicks_per_query`` sessions per query. In each
session every on-style product walks the click funnel (page click, cart,
contact, order, pay) with the given continuation probabilities; with
probability ``contamination`` one off-style product also gets a (shallower)
funnel walk. Ambiguous one-word queries spread their clicks over every
product in the sub-category that shares the core keyword.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from itertools import combinations
from typing import Mapping, Sequence

import numpy as np

from .clickgraph import ClickLevel, ClickRecord, ItemNode, QueryNode
from .encoder import DESK_LAYOUT, ProductFeatures, TokenLayout
from .errors import ValidationError
from .sampler import TrainingPair

FILLER_WORDS = ("new", "cheap", "best", "quality", "wholesale", "custom", "hot", "sale", "style", "original")


@dataclass
class StyleSpec:
    style_id: str
    sub_category_id: str
    category_id: str
    image_prototype: np.ndarray
    text_prototype: np.ndarray
    core_keyword: str
    title_words: tuple[str, ...]
    brand: str


@dataclass
class SyntheticCatalog:
    products: list[ProductFeatures]
    styles: list[StyleSpec]
    vocab: dict[str, np.ndarray]
    core_vocab: frozenset[str]

    def by_id(self) -> dict[str, ProductFeatures]:
        return {p.item_id: p for p in self.products}

    def truth(self) -> dict[str, str]:
        return {p.item_id: p.style_id for p in self.products}

    def item_nodes(self) -> list[ItemNode]:
        return [to_item_node(p) for p in self.products]


def to_item_node(p: ProductFeatures) -> ItemNode:
    return ItemNode(
        item_id=p.item_id,
        title=p.title,
        sub_category_id=p.sub_category_id,
        keywords=frozenset(p.keywords),
        brand=p.brand,
        image_ref=p.item_id,
    )


@dataclass(frozen=True)
class BehaviorModel:
    level_probs: tuple[float, ...] = (1.0, 0.6, 0.5, 0.4, 0.5)
    contamination: float = 0.0
    clicks_per_query: int = 5
    off_style_probs: tuple[float, ...] = (1.0, 0.15, 0.1, 0.1, 0.1)
    ambiguous_rate: float = 0.0
    neighborhood_rate: float = 0.8

    def __post_init__(self):
        for p in self.level_probs + self.off_style_probs:
            if not 0.0 <= p <= 1.0:
                raise ValidationError(f"click probabilities must lie in [0, 1], got {p}")
        if len(self.level_probs) != 5 or len(self.off_style_probs) != 5:
            raise ValidationError("need one probability per click level")
        if not 0.0 <= self.contamination < 1.0:
            raise ValidationError("contamination must be in [0, 1)")
        if self.clicks_per_query < 1:
            raise ValidationError("clicks_per_query must be positive")


def gen_catalog(
    num_styles: int,
    suppliers_per_style: int,
    noise_sigma: float,
    seed: int = 0,
    *,
    layout: TokenLayout = DESK_LAYOUT,
    d_in: int = 8,
    styles_per_subcat: int = 5,
    subcats_per_category: int = 2,
    keywords_per_category: int = 2,
    subcat_spread: float = 0.3,
    style_spread: float = 0.5,
    patch_spread: float = 0.5,
    word_spread: float = 0.3,
    text_noise_sigma: float | None = None,
    text_informative: bool = True,
    injection_rate: float = 0.0,
    nuisance_sigma: float = 0.0,
    text_nuisance_sigma: float | None = None,
    nuisance_dims: int | None = None,
) -> SyntheticCatalog:
    if min(num_styles, suppliers_per_style) < 1 or noise_sigma < 0:
        raise ValidationError("num_styles and suppliers_per_style must be positive, noise_sigma >= 0")
    rng = np.random.default_rng(seed)
    n_img, n_txt = layout.n_img, layout.n_txt
    text_sigma = noise_sigma if text_noise_sigma is None else text_noise_sigma
    text_nuisance = nuisance_sigma if text_nuisance_sigma is None else text_nuisance_sigma
    nuisance_mask = np.zeros(d_in)
    nuisance_mask[: d_in // 2 if nuisance_dims is None else nuisance_dims] = 1.0
    n_sub = -(-num_styles // styles_per_subcat)
    n_cat = -(-n_sub // subcats_per_category)

    cat_latent = rng.normal(size=(n_cat, d_in))
    sub_latent = np.stack([cat_latent[s // subcats_per_category] for s in range(n_sub)])
    sub_latent = sub_latent + subcat_spread * rng.normal(size=sub_latent.shape)

    vocab: dict[str, np.ndarray] = {}
    cat_keywords = []
    for c in range(n_cat):
        kws = [f"kw{c}{chr(ord('a') + j)}" for j in range(keywords_per_category)]
        for w in kws:
            vocab[w] = cat_latent[c] + word_spread * rng.normal(size=d_in)
        cat_keywords.append(kws)
    for w in FILLER_WORDS:
        vocab[w] = rng.normal(size=d_in)

    styles = []
    for s in range(num_styles):
        sub = s // styles_per_subcat
        cat = sub // subcats_per_category
        z = sub_latent[sub] + style_spread * rng.normal(size=d_in)
        core = cat_keywords[cat][int(rng.integers(keywords_per_category))]
        brand = f"brand{s}"
        words = (core,) + tuple(f"attr{s}x{j}" for j in range(3)) + (brand,)
        for w in words[1:]:
            vocab[w] = z + word_spread * rng.normal(size=d_in)
        text = np.zeros((n_txt, d_in))
        for pos, w in enumerate(words[: n_txt - 1], start=1):
            text[pos] = vocab[w]
        styles.append(
            StyleSpec(
                style_id=f"style{s:03d}",
                sub_category_id=f"sub{sub:03d}",
                category_id=f"cat{cat:02d}",
                image_prototype=z + patch_spread * rng.normal(size=(n_img, d_in)),
                text_prototype=text,
                core_keyword=core,
                title_words=words,
                brand=brand,
            )
        )

    all_core = sorted({w for kws in cat_keywords for w in kws})
    raw = []
    for st in styles:
        for _ in range(suppliers_per_style):
            image = st.image_prototype + noise_sigma * rng.normal(size=(n_img, d_in))
            source = st if text_informative else styles[int(rng.integers(num_styles))]
            text = source.text_prototype + text_sigma * rng.normal(size=(n_txt, d_in))
            words = list(source.title_words)
            keywords = [source.core_keyword]
            if injection_rate > 0 and rng.random() < injection_rate:
                foreign = [w for w in all_core if w not in cat_keywords[int(st.category_id[3:])]] or all_core
                w = foreign[int(rng.integers(len(foreign)))]
                pos = 1 + int(rng.integers(1, min(len(words), n_txt - 1)))
                text[pos] = vocab[w] + text_sigma * rng.normal(size=d_in)
                words[pos - 1] = w
                keywords.append(w)
            if nuisance_sigma > 0:
                image = image + nuisance_sigma * nuisance_mask * rng.normal(size=d_in)
            if text_nuisance > 0:
                text = text + text_nuisance * nuisance_mask * rng.normal(size=d_in)
            text[0] = 0.0  # [CLS] slot
            raw.append((st, image, text, words, keywords))

    order = rng.permutation(len(raw))
    products = []
    for new_idx, old_idx in enumerate(order):
        st, image, text, words, keywords = raw[old_idx]
        products.append(
            ProductFeatures(
                item_id=f"item{new_idx:05d}",
                image_tokens=image,
                text_tokens=text,
                sub_category_id=st.sub_category_id,
                style_id=st.style_id,
                title=" ".join(words),
                keywords=tuple(keywords),
                brand=st.brand,
            )
        )
    products.sort(key=lambda p: p.item_id)
    return SyntheticCatalog(products, styles, vocab, frozenset(all_core))


def _funnel(rng, probs) -> int:
    """Depth reached (number of levels) walking the funnel from page click."""
    depth = 0
    for p in probs:
        if rng.random() < p:
            depth += 1
        else:
            break
    return depth


def gen_clicklog(
    catalog: SyntheticCatalog,
    behavior: BehaviorModel,
    num_queries: int,
    seed: int = 0,
) -> tuple[list[ClickRecord], list[QueryNode]]:
    if not catalog.products:
        raise ValidationError("catalog is empty")
    rng = np.random.default_rng(seed)
    style_by_id = {s.style_id: s for s in catalog.styles}
    members: dict[str, list[str]] = {}
    for p in catalog.products:
        members.setdefault(p.style_id, []).append(p.item_id)
    prods = catalog.by_id()
    all_ids = sorted(prods)
    style_ids = sorted(members)

    counts: Counter = Counter()
    queries = []
    for q in range(num_queries):
        qid = f"q{q:05d}"
        st = style_by_id[style_ids[int(rng.integers(len(style_ids)))]] if q >= len(style_ids) else style_by_id[style_ids[q]]
        if rng.random() < behavior.ambiguous_rate:
            text = st.core_keyword
            on = [
                i for i in all_ids
                if prods[i].sub_category_id == st.sub_category_id and st.core_keyword in prods[i].keywords
            ]
        else:
            attr = st.title_words[1 + int(rng.integers(3))]
            filler = FILLER_WORDS[int(rng.integers(len(FILLER_WORDS)))]
            text = f"{filler} {attr} {st.core_keyword}"
            on = sorted(members[st.style_id])
        queries.append(QueryNode(qid, text))
        on_set = set(on)
        same_cat = [i for i in all_ids if i not in on_set and style_by_id[prods[i].style_id].category_id == st.category_id]
        elsewhere = [i for i in all_ids if i not in on_set]

        for _ in range(behavior.clicks_per_query):
            for item in on:
                for level in range(_funnel(rng, behavior.level_probs)):
                    counts[(qid, item, level)] += 1
            if behavior.contamination > 0 and rng.random() < behavior.contamination:
                pool = same_cat if same_cat and rng.random() < behavior.neighborhood_rate else elsewhere
                if pool:
                    item = pool[int(rng.integers(len(pool)))]
                    for level in range(_funnel(rng, behavior.off_style_probs)):
                        counts[(qid, item, level)] += 1

    records = [ClickRecord(q, i, ClickLevel(lv), c) for (q, i, lv), c in sorted(counts.items())]
    return records, queries


def sampling_quality(pairs: Sequence[TrainingPair], truth: Mapping[str, str]) -> tuple[float, int]:
    """(precision, yield); an empty pair list counts as precision 1.0."""
    if not pairs:
        return 1.0, 0
    good = sum(1 for p in pairs if truth[p.trigger] == truth[p.recall])
    return good / len(pairs), len(pairs)


def style_pairs(products: Sequence[ProductFeatures]) -> list[TrainingPair]:
    """Every same-style product pair from ground truth, trigger = smaller item id."""
    groups: dict[str, list[ProductFeatures]] = {}
    for p in products:
        groups.setdefault(p.style_id, []).append(p)
    out = []
    for sid in sorted(groups):
        members = sorted(groups[sid], key=lambda p: p.item_id)
        for a, b in combinations(members, 2):
            out.append(TrainingPair(a.item_id, b.item_id, "", a.sub_category_id))
    return out


ADVERSARIAL_BEHAVIOR = BehaviorModel(contamination=0.3, ambiguous_rate=0.2)


def adversarial_benchmark(seed: int):
    """50 styles x 3 suppliers, 30% contamination, ambiguous queries and keyword injection."""
    cat = gen_catalog(50, 3, 0.05, seed, injection_rate=0.1)
    records, queries = gen_clicklog(cat, ADVERSARIAL_BEHAVIOR, 150, seed + 1)
    return cat, records, queries


DESK_CATALOG = dict(styles_per_subcat=10, nuisance_sigma=2.0, text_nuisance_sigma=1.5)


@dataclass(frozen=True)
class DeskBenchmark:
    catalog: SyntheticCatalog
    train_pairs: list[TrainingPair]
    test_pairs: list[TrainingPair]


def desk_benchmark(seed: int, num_styles: int = 50) -> DeskBenchmark:
    """Fine-tuning benchmark with held-out styles.

    ``2 * num_styles`` styles x 3 suppliers share one taxonomy. Even-numbered
    styles supply every same-style training pair; each odd-numbered style
    contributes one test pair, so evaluation needs generalisation to unseen
    products of unseen styles.
    """
    cat = gen_catalog(2 * num_styles, 3, 0.05, seed, **DESK_CATALOG)
    style_num = {p.item_id: int(p.style_id[len("style"):]) for p in cat.products}
    train, test, seen = [], [], set()
    for p in style_pairs(cat.products):
        s = style_num[p.trigger]
        if s % 2 == 0:
            train.append(p)
        elif s not in seen:
            seen.add(s)
            test.append(p)
    return DeskBenchmark(cat, train, test)
