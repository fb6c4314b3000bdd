"""Contrastive loss unit: product matching, self-distinctiveness and locality consistency.

All functions accept either numpy arrays or :class:`~samestyle.tensorgrad.Tensor`
inputs and return tensors, so the same code serves evaluation and training.
Similarity matrices are indexed ``[trigger i, recall j]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensorgrad as tg
from .errors import DegenerateBatch, ShapeMismatch, ValidationError
from .tensorgrad import Tensor

LOSS_TERMS = ("ppm", "pdc", "plc")


@dataclass(frozen=True)
class LossConfig:
    alpha1: float = 0.3
    alpha2: float = 0.2
    alpha3: float = 0.05 ** 2
    plc_top_k: int = 10
    include_diagonal_pdc: bool = True
    include_diagonal_plc: bool = True

    def __post_init__(self):
        if min(self.alpha1, self.alpha2, self.alpha3) < 0:
            raise ValidationError("margins must be non-negative")
        if self.plc_top_k < 1:
            raise ValidationError("plc_top_k must be >= 1")


@dataclass
class SimilarityMatrices:
    mm: Tensor
    vm: Tensor
    tm: Tensor

    @property
    def n(self) -> int:
        return self.mm.shape[0]


@dataclass
class LossBreakdown:
    ppm: Tensor
    pdc: Tensor
    plc: Tensor
    total: Tensor

    def values(self) -> dict[str, float]:
        return {k: float(getattr(self, k).data) for k in ("ppm", "pdc", "plc", "total")}


def _matrix(x) -> Tensor:
    x = tg.as_tensor(x)
    if x.ndim != 2 or x.shape[0] != x.shape[1]:
        raise ShapeMismatch(f"expected a square similarity matrix, got {x.shape}")
    return x


def _check(S: SimilarityMatrices) -> int:
    n = S.mm.shape[0]
    for name in ("mm", "vm", "tm"):
        m = _matrix(getattr(S, name))
        if m.shape != (n, n):
            raise ShapeMismatch(f"S_{name} has shape {m.shape}, expected {(n, n)}")
    return n


def as_similarities(mm, vm, tm) -> SimilarityMatrices:
    S = SimilarityMatrices(_matrix(mm), _matrix(vm), _matrix(tm))
    _check(S)
    return S


def similarity_matrices(triggers, recalls) -> SimilarityMatrices:
    """Score every trigger embedding (m, v, t) against every recall multimodal embedding.

    ``triggers``/``recalls`` are either objects with ``m``, ``v``, ``t``
    attributes holding (N, d) stacks (e.g. encoder batch output) or
    sequences of per-product embedding triples.
    """
    return similarity_from_stacks(*_stacks(triggers), _stacks(recalls)[0])


def _stacks(embs):
    if hasattr(embs, "m"):
        return embs.m, embs.v, embs.t
    embs = list(embs)
    if not embs:
        raise ShapeMismatch("need at least one embedding triple")
    return tuple(np.stack([getattr(e, k) for e in embs]) for k in ("m", "v", "t"))


def similarity_from_stacks(trig_m, trig_v, trig_t, rec_m) -> SimilarityMatrices:
    trig_m, trig_v, trig_t, rec_m = (tg.as_tensor(x) for x in (trig_m, trig_v, trig_t, rec_m))
    shapes = {x.shape for x in (trig_m, trig_v, trig_t, rec_m)}
    if len(shapes) != 1 or trig_m.ndim != 2 or trig_m.shape[0] < 1:
        raise ShapeMismatch(f"embedding stacks must share one (N, d) shape, got {sorted(shapes)}")
    rT = rec_m.T
    return SimilarityMatrices(trig_m @ rT, trig_v @ rT, trig_t @ rT)


def identity_labels(n: int) -> np.ndarray:
    return np.eye(n)


def _ppm_channel(s: Tensor, margin: np.ndarray) -> Tensor:
    # margin + s_ij - s_ii, diagonal broadcast down rows
    d = tg.diag(s).reshape(s.shape[0], 1)
    return tg.hinge(s - d + margin)


def ppm_loss(S: SimilarityMatrices, y=None, alpha1: float = 0.3) -> Tensor:
    n = _check(S)
    y = identity_labels(n) if y is None else np.asarray(y, dtype=np.float64)
    if y.shape != (n, n):
        raise ShapeMismatch(f"label matrix shape {y.shape} does not match batch size {n}")
    margin = alpha1 * (1.0 - y)
    terms = _ppm_channel(S.mm, margin) + _ppm_channel(S.vm, margin) + _ppm_channel(S.tm, margin)
    return tg.scalar_mul(terms.sum(), 1.0 / (3.0 * n * n))


def pdc_loss(S: SimilarityMatrices, alpha2: float = 0.2, config: LossConfig | None = None) -> Tensor:
    n = _check(S)
    include_diag = True if config is None else config.include_diagonal_pdc
    dv = tg.diag(S.vm).reshape(n, 1)
    dt = tg.diag(S.tm).reshape(n, 1)
    terms = tg.hinge(S.mm - dv + alpha2) + tg.hinge(S.mm - dt + alpha2)
    if include_diag:
        return tg.scalar_mul(terms.sum(), 1.0 / (2.0 * n * n))
    if n == 1:
        raise DegenerateBatch("PDC without diagonal terms needs at least two pairs")
    off = 1.0 - np.eye(n)
    return tg.scalar_mul((terms * off).sum(), 1.0 / (2.0 * n * (n - 1)))


def plc_selection(S_tm: np.ndarray, top_k: int) -> np.ndarray:
    """0/1 mask choosing each row's ``top_k`` largest entries (ties to the lower column)."""
    S_tm = np.asarray(S_tm)
    n = S_tm.shape[0]
    k = min(top_k, S_tm.shape[1])
    mask = np.zeros_like(S_tm)
    for i in range(n):
        cols = np.lexsort((np.arange(S_tm.shape[1]), -S_tm[i]))[:k]
        mask[i, cols] = 1.0
    return mask


def plc_loss(S: SimilarityMatrices, alpha3: float = 0.0025, plc_top_k: int = 10, include_diagonal: bool = True) -> Tensor:
    """Tolerance-thresholded squared gaps between the three similarity channels.

    Only each trigger's ``plc_top_k`` columns by text-to-multimodal score are
    evaluated; the sum is averaged over the evaluated (i, j) terms.
    """
    n = _check(S)
    scores = S.tm.data.copy()
    if not include_diagonal:
        if n == 1:
            raise DegenerateBatch("PLC without diagonal terms needs at least two pairs")
        np.fill_diagonal(scores, -np.inf)
    k = min(plc_top_k, n if include_diagonal else n - 1)
    mask = plc_selection(scores, k)
    gaps = (
        tg.hinge(tg.square(S.vm - S.mm) - alpha3)
        + tg.hinge(tg.square(S.tm - S.mm) - alpha3)
        + tg.hinge(tg.square(S.vm - S.tm) - alpha3)
    )
    return tg.scalar_mul((gaps * mask).sum(), 1.0 / (3.0 * n * k))


def combine(ppm, pdc, plc) -> LossBreakdown:
    ppm, pdc, plc = tg.as_tensor(ppm), tg.as_tensor(pdc), tg.as_tensor(plc)
    total = tg.scalar_mul(ppm + pdc + plc, 1.0 / 3.0)
    return LossBreakdown(ppm, pdc, plc, total)


def total_loss(S: SimilarityMatrices, config: LossConfig = LossConfig(), y=None) -> LossBreakdown:
    return combine(
        ppm_loss(S, y, config.alpha1),
        pdc_loss(S, config.alpha2, config),
        plc_loss(S, config.alpha3, config.plc_top_k, config.include_diagonal_plc),
    )


def objective(breakdown: LossBreakdown, terms=LOSS_TERMS) -> Tensor:
    """Mean of the selected components; equals ``total`` when all three are chosen."""
    terms = tuple(terms)
    if not terms or any(t not in LOSS_TERMS for t in terms):
        raise ValidationError(f"loss terms must be a non-empty subset of {LOSS_TERMS}, got {terms}")
    if terms == LOSS_TERMS:
        return breakdown.total
    acc = getattr(breakdown, terms[0])
    for t in terms[1:]:
        acc = acc + getattr(breakdown, t)
    return tg.scalar_mul(acc, 1.0 / len(terms))


def baseline_hinge_loss(trigger, recall, margin: float = 0.3, y=None) -> Tensor:
    """Single-channel in-batch hinge loss used by the image-only and text-only baselines."""
    trigger, recall = tg.as_tensor(trigger), tg.as_tensor(recall)
    if trigger.ndim != 2 or trigger.shape != recall.shape:
        raise ShapeMismatch(f"trigger {trigger.shape} and recall {recall.shape} must be matching (N, d)")
    s = trigger @ recall.T
    n = s.shape[0]
    y = identity_labels(n) if y is None else np.asarray(y, dtype=np.float64)
    return tg.scalar_mul(_ppm_channel(s, margin * (1.0 - y)).sum(), 1.0 / (n * n))
