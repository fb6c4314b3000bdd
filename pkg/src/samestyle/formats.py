"""Readers and writers for the line-oriented files exchanged between pipeline steps.

Every writer can prepend a ``#`` provenance header; every reader skips
blank lines and lines starting with ``#``. Malformed input raises
:class:`~samestyle.errors.ValidationError` naming the file and line.

Files:

* clicks      ``query_id<TAB>item_id<TAB>level<TAB>count``, level in c|a|s|o|p
* catalog     JSON object per line: item_id, image_tokens, text_tokens, title,
              keywords, brand, sub_category_id, optional style_id
* queries     JSON object per line: query_id, text
* core vocab  one keyword per line
* vocab       JSON object per line: word, vector
* pairs       ``trigger_id<TAB>recall_id<TAB>query_id<TAB>sub_category_id``
* graph       ``query_id<TAB>item_id<TAB>weight<TAB>c<TAB>a<TAB>s<TAB>o<TAB>p``
* train log   TSV with columns epoch, batch, ppm, pdc, plc, total, val_mrr
* checkpoint  one JSON document
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .clickgraph import ClickCounts, ClickGraph, ClickLevel, ClickRecord, QueryNode
from .encoder import PARAM_NAMES, EncoderParams, ProductFeatures
from .errors import ValidationError
from .sampler import TrainingPair

CHECKPOINT_FORMAT = "samestyle-checkpoint"
CHECKPOINT_VERSION = 1
LOG_COLUMNS = ("epoch", "batch", "ppm", "pdc", "plc", "total", "val_mrr")


def _lines(path) -> Iterator[tuple[int, str]]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such file")
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.startswith("#"):
                continue
            yield lineno, line


def write_lines(path, lines: Iterable[str], header: str | None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        if header:
            fh.write(header.rstrip("\n") + "\n")
        for line in lines:
            fh.write(line + "\n")


def _json(path, lineno, line) -> dict:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{lineno}: invalid JSON ({e.msg})") from None
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}:{lineno}: expected a JSON object")
    return obj


def _fields(path, lineno, line, n) -> list[str]:
    parts = line.split("\t")
    if len(parts) != n:
        raise ValidationError(f"{path}:{lineno}: expected {n} tab-separated fields, got {len(parts)}")
    return parts


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


# clicks

def read_clicks(path) -> list[ClickRecord]:
    out = []
    for lineno, line in _lines(path):
        q, item, level, count = _fields(path, lineno, line, 4)
        try:
            out.append(ClickRecord(q, item, ClickLevel.from_code(level), int(count)))
        except (ValueError, ValidationError) as e:
            raise ValidationError(f"{path}:{lineno}: {e}") from None
    return out


def write_clicks(path, records: Iterable[ClickRecord], header: str | None = None) -> None:
    write_lines(path, (f"{r.query_id}\t{r.item_id}\t{r.level.code}\t{r.count}" for r in records), header)


# catalog and product features

def product_to_json(p: ProductFeatures) -> dict:
    obj = {
        "item_id": p.item_id,
        "image_tokens": p.image_tokens.tolist(),
        "text_tokens": p.text_tokens.tolist(),
        "title": p.title,
        "keywords": list(p.keywords),
        "brand": p.brand,
        "sub_category_id": p.sub_category_id,
    }
    if p.style_id is not None:
        obj["style_id"] = p.style_id
    return obj


def product_from_json(obj: Mapping) -> ProductFeatures:
    for key in ("item_id", "image_tokens", "text_tokens", "sub_category_id"):
        if key not in obj:
            raise ValidationError(f"missing field {key!r}")
    keywords = obj.get("keywords", [])
    if isinstance(keywords, str):
        keywords = keywords.split()
    try:
        img = np.asarray(obj["image_tokens"], dtype=np.float64)
        txt = np.asarray(obj["text_tokens"], dtype=np.float64)
    except (TypeError, ValueError):
        raise ValidationError("token arrays must be rectangular lists of numbers") from None
    if not (np.all(np.isfinite(img)) and np.all(np.isfinite(txt))):
        raise ValidationError("token arrays must be finite")
    return ProductFeatures(
        item_id=str(obj["item_id"]),
        image_tokens=img,
        text_tokens=txt,
        sub_category_id=str(obj["sub_category_id"]),
        style_id=obj.get("style_id"),
        title=str(obj.get("title", "")),
        keywords=tuple(str(k) for k in keywords),
        brand=str(obj.get("brand", "")),
    )


def read_catalog(path) -> list[ProductFeatures]:
    out, seen = [], set()
    for lineno, line in _lines(path):
        try:
            p = product_from_json(_json(path, lineno, line))
        except ValidationError as e:
            if str(e).startswith(f"{path}:"):
                raise
            raise ValidationError(f"{path}:{lineno}: {e}") from None
        if p.item_id in seen:
            raise ValidationError(f"{path}:{lineno}: duplicate item_id {p.item_id!r}")
        seen.add(p.item_id)
        out.append(p)
    return out


def write_catalog(path, products: Iterable[ProductFeatures], header: str | None = None) -> None:
    write_lines(path, (_dumps(product_to_json(p)) for p in products), header)


# queries

def read_queries(path) -> list[QueryNode]:
    out = []
    for lineno, line in _lines(path):
        obj = _json(path, lineno, line)
        if "query_id" not in obj or "text" not in obj:
            raise ValidationError(f"{path}:{lineno}: query needs 'query_id' and 'text'")
        try:
            out.append(QueryNode(str(obj["query_id"]), obj["text"]))
        except ValidationError as e:
            raise ValidationError(f"{path}:{lineno}: {e}") from None
    return out


def write_queries(path, queries: Iterable[QueryNode], header: str | None = None) -> None:
    write_lines(path, (_dumps({"query_id": q.query_id, "text": " ".join(q.text)}) for q in queries), header)


# vocabularies

def read_core_vocab(path) -> frozenset[str]:
    words = set()
    for lineno, line in _lines(path):
        w = line.strip()
        if len(w.split()) != 1:
            raise ValidationError(f"{path}:{lineno}: expected a single keyword, got {line!r}")
        words.add(w.lower())
    return frozenset(words)


def write_core_vocab(path, words: Iterable[str], header: str | None = None) -> None:
    write_lines(path, sorted(words), header)


def read_vocab(path) -> dict[str, np.ndarray]:
    out: dict[str, np.ndarray] = {}
    dim = None
    for lineno, line in _lines(path):
        obj = _json(path, lineno, line)
        try:
            word = str(obj["word"]).lower()
            vec = np.asarray(obj["vector"], dtype=np.float64)
        except (KeyError, TypeError, ValueError):
            raise ValidationError(f"{path}:{lineno}: vocab entry needs 'word' and a numeric 'vector'") from None
        if vec.ndim != 1 or (dim is not None and vec.shape[0] != dim):
            raise ValidationError(f"{path}:{lineno}: vector for {word!r} has shape {vec.shape}")
        dim = vec.shape[0]
        out[word] = vec
    return out


def write_vocab(path, vocab: Mapping[str, np.ndarray], header: str | None = None) -> None:
    write_lines(path, (_dumps({"word": w, "vector": np.asarray(vocab[w]).tolist()}) for w in sorted(vocab)), header)


# pairs and graph

def read_pairs(path) -> list[TrainingPair]:
    out = []
    for lineno, line in _lines(path):
        trig, rec, q, sub = _fields(path, lineno, line, 4)
        try:
            out.append(TrainingPair(trig, rec, q, sub))
        except ValidationError as e:
            raise ValidationError(f"{path}:{lineno}: {e}") from None
    return out


def write_pairs(path, pairs: Iterable[TrainingPair], header: str | None = None) -> None:
    write_lines(path, (f"{p.trigger}\t{p.recall}\t{p.source_query}\t{p.sub_category_id}" for p in pairs), header)


def write_graph(path, graph: ClickGraph, counts: Mapping[tuple[str, str], ClickCounts], header: str | None = None) -> None:
    def rows():
        for (q, i) in sorted(graph.edges):
            c = counts[(q, i)].as_tuple()
            yield "\t".join([q, i, repr(graph.edges[(q, i)])] + [str(x) for x in c])

    write_lines(path, rows(), header)


def read_graph_weights(path) -> dict[tuple[str, str], float]:
    out = {}
    for lineno, line in _lines(path):
        parts = _fields(path, lineno, line, 8)
        try:
            out[(parts[0], parts[1])] = float(parts[2])
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: weight is not a number") from None
    return out


# training artefacts

def _fmt(x: float) -> str:
    return "nan" if math.isnan(x) else repr(float(x))


def write_train_log(path, batches: Sequence[Mapping], header: str | None = None) -> None:
    rows = ["\t".join(LOG_COLUMNS)]
    for b in batches:
        rows.append("\t".join([str(b["epoch"]), str(b["batch"])] + [_fmt(b[k]) for k in LOG_COLUMNS[2:]]))
    write_lines(path, rows, header)


def read_train_log(path) -> list[dict]:
    out = []
    for lineno, line in _lines(path):
        parts = _fields(path, lineno, line, len(LOG_COLUMNS))
        if parts[0] == "epoch":
            continue
        try:
            out.append({"epoch": int(parts[0]), "batch": int(parts[1]), **{k: float(v) for k, v in zip(LOG_COLUMNS[2:], parts[2:])}})
        except ValueError:
            raise ValidationError(f"{path}:{lineno}: non-numeric log field") from None
    return out


def checkpoint_to_json(params: EncoderParams, meta: Mapping) -> str:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        **meta,
        "params": {name: getattr(params, name).tolist() for name in PARAM_NAMES},
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def write_checkpoint(path, params: EncoderParams, meta: Mapping) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint_to_json(params, meta), encoding="utf-8")


def read_checkpoint(path) -> tuple[EncoderParams, dict]:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such file")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(f"{path}: not a checkpoint file")
    if doc.get("version") != CHECKPOINT_VERSION:
        raise ValidationError(f"{path}: unsupported checkpoint version {doc.get('version')!r}")
    try:
        params = EncoderParams(**{name: np.asarray(doc["params"][name], dtype=np.float64) for name in PARAM_NAMES})
    except KeyError as e:
        raise ValidationError(f"{path}: missing parameter {e.args[0]!r}") from None
    meta = {k: v for k, v in doc.items() if k not in ("format", "version", "params")}
    return params, meta
