"""Batch composition and the fine-tuning loop.

Batches hold pairs from a single sub-category, each pair from a different
style group, so every in-batch negative is a hard one.
"""
from __future__ import annotations

import hashlib
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import loss as L
from .encoder import EncoderParams, ProductFeatures, encode_tokens, stack_features
from .errors import EmptyTrainingSet, UnknownId, ValidationError
from .retrieval import RetrievalMode, evaluate
from .sampler import TrainingPair
from .tensorgrad import Tensor

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 16
    max_epochs: int = 5
    early_stop_patience: int = 1
    optimizer: str = "adam"  # "adam" or "sgd"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    seed: int = 0
    hidden_dim: int = 32
    embed_dim: int = 16
    val_fraction: float = 0.1
    loss_terms: tuple[str, ...] = L.LOSS_TERMS

    def __post_init__(self):
        if not self.learning_rate >= 0:  # 0 is allowed as a no-op run
            raise ValidationError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.batch_size < 2:
            raise ValidationError("batch_size must be >= 2 for in-batch negatives")
        if self.max_epochs < 1 or self.early_stop_patience < 1:
            raise ValidationError("max_epochs and early_stop_patience must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        object.__setattr__(self, "betas", tuple(self.betas))
        object.__setattr__(self, "loss_terms", tuple(self.loss_terms))


# Settings that converge on the small synthetic benchmarks in a few seconds.
# The production defaults above are tuned for a pre-trained backbone and
# barely move a randomly initialised encoder.
DESK_TRAIN = TrainConfig(learning_rate=1e-2, max_epochs=15, early_stop_patience=3)


@dataclass
class BatchPlan:
    batches: list[list[TrainingPair]]
    dropped: int = 0

    def violations(self, style_of: Callable[[TrainingPair], str]) -> int:
        bad = 0
        for batch in self.batches:
            if len({p.sub_category_id for p in batch}) > 1:
                bad += 1
            styles = [style_of(p) for p in batch]
            if len(set(styles)) != len(styles):
                bad += 1
        return bad


def style_groups_from_pairs(pairs: Sequence[TrainingPair]) -> dict[str, str]:
    """Connected components of the trigger-recall graph, labelled by smallest item id."""
    parent: dict[str, str] = {}

    def find(x):
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for p in pairs:
        a, b = find(p.trigger), find(p.recall)
        if a != b:
            parent[max(a, b)] = min(a, b)
    return {x: find(x) for x in parent}


def make_batches(
    pairs: Sequence[TrainingPair],
    style_of: Callable[[TrainingPair], str],
    batch_size: int,
    seed: int,
) -> BatchPlan:
    rng = np.random.default_rng(seed)
    by_sub: dict[str, list[TrainingPair]] = defaultdict(list)
    for p in pairs:
        by_sub[p.sub_category_id].append(p)

    batches: list[list[TrainingPair]] = []
    dropped = 0
    for sub in sorted(by_sub):
        group = by_sub[sub]
        remaining = [group[i] for i in rng.permutation(len(group))]
        while remaining:
            batch, styles, rest = [], set(), []
            for p in remaining:
                s = style_of(p)
                if len(batch) < batch_size and s not in styles:
                    batch.append(p)
                    styles.add(s)
                else:
                    rest.append(p)
            if len(batch) < 2:
                # only one style left in this sub-category: no negatives possible
                dropped += len(batch) + len(rest)
                break
            batches.append(batch)
            remaining = rest
    batches = [batches[i] for i in rng.permutation(len(batches))]
    if dropped:
        log.info("make_batches dropped %d pairs that could not form distinct-style batches", dropped)
    return BatchPlan(batches, dropped)


def validation_split(pairs: Sequence[TrainingPair], fraction: float = 0.1) -> tuple[list, list]:
    """Deterministic split on a hash of the trigger id."""
    train, val = [], []
    buckets = 1000
    cut = int(round(fraction * buckets))
    for p in pairs:
        h = int.from_bytes(hashlib.sha1(p.trigger.encode("utf-8")).digest()[:8], "big") % buckets
        (val if h < cut else train).append(p)
    return train, val


class Adam:
    def __init__(self, shapes, lr, betas=(0.9, 0.999), eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, betas[0], betas[1], eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, arrays, grads):
        self.t += 1
        c1 = 1.0 - self.b1**self.t
        c2 = 1.0 - self.b2**self.t
        for a, g, m, v in zip(arrays, grads, self.m, self.v):
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            a -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


class SGD:
    def __init__(self, shapes, lr, **_):
        self.lr = lr

    def step(self, arrays, grads):
        for a, g in zip(arrays, grads):
            a -= self.lr * g


@dataclass
class History:
    epochs: list[dict] = field(default_factory=list)
    batches: list[dict] = field(default_factory=list)
    initial_val_mrr: float = float("nan")
    best_epoch: int = 0
    dropped_pairs: int = 0

    @property
    def best_val_mrr(self) -> float:
        return max((e["val_mrr"] for e in self.epochs), default=float("nan"))


def _batch_loss(batch, features, arrays, loss_config, terms, baseline_mode):
    trig = [features[p.trigger] for p in batch]
    rec = [features[p.recall] for p in batch]
    img, txt = stack_features(trig + rec)
    leaves = [Tensor(a, requires_grad=True) for a in arrays]
    emb = encode_tokens(img, txt, leaves)
    n = len(batch)
    if baseline_mode is None:
        S = L.similarity_from_stacks(emb.m[:n], emb.v[:n], emb.t[:n], emb.m[n:])
        parts = L.total_loss(S, loss_config)
        obj = L.objective(parts, terms)
        record = parts.values()
    else:
        side = {"vv": "v", "tt": "t", "mm": "m"}[baseline_mode]
        e = getattr(emb, side)
        obj = L.baseline_hinge_loss(e[:n], e[n:], loss_config.alpha1)
        record = {"ppm": float("nan"), "pdc": float("nan"), "plc": float("nan"), "total": float(obj.data)}
    return obj, leaves, record


def batch_objective(batch, features, params: EncoderParams, loss_config=L.LossConfig(), terms=L.LOSS_TERMS) -> float:
    obj, _, _ = _batch_loss(batch, features, params.arrays(), loss_config, terms, None)
    return float(obj.data)


def _fit(pairs, features, config, loss_config, style_of, params, baseline_mode, val_pairs):
    pairs = list(pairs)
    if not pairs:
        raise EmptyTrainingSet("no training pairs")
    missing = sorted({i for p in pairs for i in (p.trigger, p.recall)} - set(features))
    if missing:
        raise UnknownId(f"no features for items {missing[:5]}")

    if val_pairs is None:
        train, val = validation_split(pairs, config.val_fraction)
        if not val:
            log.warning("validation split is empty; validating on the training pairs")
            val = train
    else:
        train, val = pairs, list(val_pairs)
    if not train:
        raise EmptyTrainingSet("validation split left no training pairs")

    if style_of is None:
        styles = {k: f.style_id for k, f in features.items() if f.style_id is not None}
        if all(p.trigger in styles for p in train):
            style_of = lambda p: styles[p.trigger]
        else:
            comp = style_groups_from_pairs(train)
            style_of = lambda p: comp[p.trigger]

    if params is None:
        d_in = features[train[0].trigger].d_in
        params = EncoderParams.init(d_in, config.hidden_dim, config.embed_dim, config.seed)
    arrays = [a.copy() for a in params.copy().arrays()]
    opt_cls = Adam if config.optimizer == "adam" else SGD
    opt = opt_cls([a.shape for a in arrays], config.learning_rate, betas=config.betas, eps=config.eps)
    val_mode = RetrievalMode(baseline_mode or "mm")

    def val_mrr(arrs):
        return evaluate(val, features, EncoderParams.from_arrays(arrs), val_mode).mrr

    history = History(initial_val_mrr=val_mrr(arrays))
    best = (-math.inf, 0, [a.copy() for a in arrays])
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        plan = make_batches(train, style_of, config.batch_size, config.seed * 1000003 + epoch)
        history.dropped_pairs = max(history.dropped_pairs, plan.dropped)
        if not plan.batches:
            raise EmptyTrainingSet("no batch satisfies the sub-category / distinct-style rule")
        sums = defaultdict(float)
        for b, batch in enumerate(plan.batches):
            obj, leaves, record = _batch_loss(batch, features, arrays, loss_config, config.loss_terms, baseline_mode)
            obj.backward()
            grads = [lf.grad if lf.grad is not None else np.zeros_like(lf.data) for lf in leaves]
            opt.step(arrays, grads)
            history.batches.append({"epoch": epoch, "batch": b, **record, "val_mrr": float("nan")})
            for k, v in record.items():
                sums[k] += v
        score = val_mrr(arrays)
        history.epochs.append(
            {"epoch": epoch, **{k: v / len(plan.batches) for k, v in sums.items()}, "val_mrr": score}
        )
        history.batches[-1]["val_mrr"] = score
        if score > best[0]:
            best = (score, epoch, [a.copy() for a in arrays])
            stale = 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break
    history.best_epoch = best[1]
    return EncoderParams.from_arrays(best[2]), history


def fit(
    pairs: Sequence[TrainingPair],
    features: Mapping[str, ProductFeatures],
    config: TrainConfig = TrainConfig(),
    loss_config: L.LossConfig = L.LossConfig(),
    style_of: Callable[[TrainingPair], str] | None = None,
    params: EncoderParams | None = None,
    val_pairs: Sequence[TrainingPair] | None = None,
) -> tuple[EncoderParams, History]:
    """Fine-tune the encoder with the combined contrastive objective.

    Validation MRR (multimodal-to-multimodal) is computed after each epoch;
    training stops once it fails to improve for ``early_stop_patience``
    epochs, and the parameters of the best epoch are returned. ``style_of``
    defaults to ground-truth ``style_id`` when every item carries one, else
    to connected components of the pair graph.
    """
    return _fit(pairs, features, config, loss_config, style_of, params, None, val_pairs)


def fit_baseline(
    pairs: Sequence[TrainingPair],
    features: Mapping[str, ProductFeatures],
    config: TrainConfig = TrainConfig(),
    mode: str = "vv",
    loss_config: L.LossConfig = L.LossConfig(),
    style_of: Callable[[TrainingPair], str] | None = None,
    params: EncoderParams | None = None,
    val_pairs: Sequence[TrainingPair] | None = None,
) -> tuple[EncoderParams, History]:
    """Same loop with a single-modality hinge loss (margin ``alpha1``).

    ``mode`` is ``"vv"`` (image only) or ``"tt"`` (text only); ``"mm"`` gives
    the multimodal-only hinge baseline. Validation uses the same mode.
    """
    mode = mode.replace("-", "")
    if mode not in ("vv", "tt", "mm"):
        raise ValidationError(f"baseline mode must be vv, tt or mm, got {mode!r}")
    return _fit(pairs, features, config, loss_config, style_of, params, mode, val_pairs)
