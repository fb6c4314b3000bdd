"""Toy multimodal encoder producing multimodal, visual and textual embeddings.

Each token (image patches first, then text positions) gets a modality tag
added, passes through a shared two-layer perceptron, and the last-layer
outputs are mean-pooled and L2-normalized. Text position 0 is the [CLS]
slot; its input is the learned ``cls`` vector rather than data.

Single-modality embeddings zero out the other modality and pool only over
the live positions. Because the perceptron acts per token, the masked
positions never touch the live outputs, so one forward pass yields all three
embeddings.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import tensorgrad as tg
from .errors import ShapeMismatch
from .tensorgrad import Tensor
from .text import tokenize


@dataclass(frozen=True)
class TokenLayout:
    """Token counts per product. ``n_txt`` includes the [CLS] slot at position 0."""

    n_img: int = 16
    n_txt: int = 51


LARGE_LAYOUT = TokenLayout(16, 51)
DESK_LAYOUT = TokenLayout(4, 7)


class MaskMode(enum.Enum):
    FULL = "full"
    IMAGE_ONLY = "image"
    TEXT_ONLY = "text"


@dataclass
class ProductFeatures:
    item_id: str
    image_tokens: np.ndarray
    text_tokens: np.ndarray
    sub_category_id: str = ""
    style_id: str | None = None
    # catalog metadata carried alongside the features
    title: str = ""
    keywords: tuple[str, ...] = ()
    brand: str = ""

    def __post_init__(self):
        self.image_tokens = np.asarray(self.image_tokens, dtype=np.float64)
        self.text_tokens = np.asarray(self.text_tokens, dtype=np.float64)
        if self.image_tokens.ndim != 2 or self.text_tokens.ndim != 2:
            raise ShapeMismatch(f"{self.item_id}: token arrays must be 2-D")
        if self.image_tokens.shape[1] != self.text_tokens.shape[1]:
            raise ShapeMismatch(
                f"{self.item_id}: image dim {self.image_tokens.shape[1]} != text dim {self.text_tokens.shape[1]}"
            )

    @property
    def layout(self) -> TokenLayout:
        return TokenLayout(self.image_tokens.shape[0], self.text_tokens.shape[0])

    @property
    def d_in(self) -> int:
        return self.image_tokens.shape[1]


PARAM_NAMES = ("W1", "b1", "W2", "b2", "tags", "cls")


@dataclass
class EncoderParams:
    W1: np.ndarray  # (d_h, d_in)
    b1: np.ndarray  # (d_h,)
    W2: np.ndarray  # (d_out, d_h)
    b2: np.ndarray  # (d_out,)
    tags: np.ndarray  # (2, d_in): row 0 image, row 1 text
    cls: np.ndarray  # (d_in,)

    def __post_init__(self):
        for name in PARAM_NAMES:
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        d_h, d_in = self.W1.shape
        d_out = self.W2.shape[0]
        expect = {"b1": (d_h,), "W2": (d_out, d_h), "b2": (d_out,), "tags": (2, d_in), "cls": (d_in,)}
        for name, shape in expect.items():
            if getattr(self, name).shape != shape:
                raise ShapeMismatch(f"{name} has shape {getattr(self, name).shape}, expected {shape}")

    @classmethod
    def init(cls, d_in: int, d_h: int, d_out: int, seed: int = 0) -> "EncoderParams":
        rng = np.random.default_rng(seed)
        return cls(
            W1=rng.normal(0.0, 1.0 / np.sqrt(d_in), (d_h, d_in)),
            b1=rng.normal(0.0, 0.1, d_h),
            W2=rng.normal(0.0, 1.0 / np.sqrt(d_h), (d_out, d_h)),
            b2=np.zeros(d_out),
            tags=rng.normal(0.0, 0.1, (2, d_in)),
            cls=rng.normal(0.0, 0.1, d_in),
        )

    @property
    def d_in(self) -> int:
        return self.W1.shape[1]

    @property
    def d_out(self) -> int:
        return self.W2.shape[0]

    def arrays(self) -> list[np.ndarray]:
        return [getattr(self, n) for n in PARAM_NAMES]

    @classmethod
    def from_arrays(cls, arrays: Sequence) -> "EncoderParams":
        return cls(*[np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64) for a in arrays])

    def copy(self) -> "EncoderParams":
        return EncoderParams.from_arrays([a.copy() for a in self.arrays()])

    def equals(self, other: "EncoderParams") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self.arrays(), other.arrays()))


@dataclass
class EmbeddingTriple:
    m: np.ndarray
    v: np.ndarray
    t: np.ndarray


@dataclass
class BatchEmbeddings:
    """Differentiable (B, d_out) embeddings for a stack of products."""

    m: Tensor
    v: Tensor
    t: Tensor

    def row(self, i: int) -> EmbeddingTriple:
        return EmbeddingTriple(self.m.data[i], self.v.data[i], self.t.data[i])


def stack_features(products: Sequence[ProductFeatures]) -> tuple[np.ndarray, np.ndarray]:
    img = np.stack([p.image_tokens for p in products])
    txt = np.stack([p.text_tokens for p in products])
    return img, txt


def _as_param_tensors(params) -> list[Tensor]:
    if isinstance(params, EncoderParams):
        return [Tensor(a) for a in params.arrays()]
    return [tg.as_tensor(p) for p in params]


def encode_tokens(image_tokens: np.ndarray, text_tokens: np.ndarray, params) -> BatchEmbeddings:
    """Forward pass over a batch of shape (B, n_img, d_in) and (B, n_txt, d_in).

    ``params`` is an :class:`EncoderParams` (no gradients) or a sequence of six
    tensors in ``PARAM_NAMES`` order (gradients flow into them).
    """
    W1, b1, W2, b2, tags, cls = _as_param_tensors(params)
    image_tokens = np.asarray(image_tokens, dtype=np.float64)
    text_tokens = np.asarray(text_tokens, dtype=np.float64)
    if image_tokens.ndim == 2:
        image_tokens, text_tokens = image_tokens[None], text_tokens[None]
    B, n_img, d_in = image_tokens.shape
    n_txt = text_tokens.shape[1]
    if text_tokens.shape[0] != B or text_tokens.shape[2] != d_in or W1.shape[1] != d_in:
        raise ShapeMismatch(
            f"token shapes {image_tokens.shape}/{text_tokens.shape} do not match encoder input dim {W1.shape[1]}"
        )
    if n_txt < 1:
        raise ShapeMismatch("text tokens need at least the [CLS] slot")

    x = np.concatenate([image_tokens, text_tokens], axis=1)
    x[:, n_img, :] = 0.0  # [CLS] slot is filled from params
    T = n_img + n_txt
    tag_select = np.zeros((T, 2))
    tag_select[:n_img, 0] = 1.0
    tag_select[n_img:, 1] = 1.0
    cls_select = np.zeros((T, 1))
    cls_select[n_img, 0] = 1.0

    inputs = Tensor(x) + tag_select @ tags + cls_select @ cls.reshape(1, d_in)
    hidden = tg.relu(inputs @ W1.T + b1)
    out = hidden @ W2.T + b2  # (B, T, d_out)

    m = tg.l2_normalize(out.mean(axis=1))
    v = tg.l2_normalize(out[:, :n_img, :].mean(axis=1))
    t = tg.l2_normalize(out[:, n_img:, :].mean(axis=1))
    return BatchEmbeddings(m, v, t)


def encode_batch(products: Sequence[ProductFeatures], params) -> BatchEmbeddings:
    img, txt = stack_features(products)
    return encode_tokens(img, txt, params)


def encode(p: ProductFeatures, params, mode: MaskMode = MaskMode.FULL) -> np.ndarray:
    emb = encode_batch([p], params)
    pick = {MaskMode.FULL: emb.m, MaskMode.IMAGE_ONLY: emb.v, MaskMode.TEXT_ONLY: emb.t}[MaskMode(mode)]
    return pick.data[0]


def embed_triple(p: ProductFeatures, params) -> EmbeddingTriple:
    return encode_batch([p], params).row(0)


def embed_catalog(products: Sequence[ProductFeatures], params, chunk: int = 512) -> dict[str, EmbeddingTriple]:
    out: dict[str, EmbeddingTriple] = {}
    for start in range(0, len(products), chunk):
        part = products[start:start + chunk]
        emb = encode_batch(part, params)
        for i, p in enumerate(part):
            out[p.item_id] = emb.row(i)
    return out


def text_tokens_from_words(words, vocab: Mapping[str, np.ndarray], n_txt: int, d_in: int) -> np.ndarray:
    """[CLS] slot, then one vector per word; unknown words and padding are zero."""
    tokens = np.zeros((n_txt, d_in))
    for pos, w in enumerate(tokenize(words)[: n_txt - 1], start=1):
        vec = vocab.get(w)
        if vec is not None:
            tokens[pos] = vec
    return tokens


def compose_query(image_source: ProductFeatures, text_override, vocab: Mapping[str, np.ndarray], params) -> np.ndarray:
    """Multimodal embedding of one product's image paired with replacement text.

    Lets a shopper keep a picture and steer attributes with words, e.g. a red
    dress image plus "white".
    """
    layout = image_source.layout
    tokens = text_tokens_from_words(text_override, vocab, layout.n_txt, image_source.d_in)
    probe = ProductFeatures(
        item_id=f"{image_source.item_id}+text",
        image_tokens=image_source.image_tokens,
        text_tokens=tokens,
        sub_category_id=image_source.sub_category_id,
    )
    return encode(probe, params, MaskMode.FULL)
