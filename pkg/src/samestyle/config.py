"""Pipeline configuration: one JSON document, relative paths resolved against its directory."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .clickgraph import LambdaWeights
from .errors import ValidationError
from .loss import LossConfig
from .retrieval import RECALL_KS, RetrievalMode
from .trainer import DESK_TRAIN, TrainConfig


@dataclass(frozen=True)
class Paths:
    catalog: str = "catalog.jsonl"
    queries: str = "queries.jsonl"
    clicks: str = "clicks.tsv"
    core_vocab: str = "core_vocab.txt"
    vocab: str = "vocab.jsonl"
    graph: str = "graph.tsv"
    pairs: str = "pairs.tsv"
    test_pairs: str = "test_pairs.tsv"
    checkpoint: str = "model.json"
    train_log: str = "train_log.tsv"
    report: str = "report.txt"


@dataclass(frozen=True)
class SynthSettings:
    num_styles: int = 40
    suppliers_per_style: int = 3
    noise_sigma: float = 0.05
    num_queries: int = 120
    styles_per_subcat: int = 10
    # the raw-feature similarity filter in `sample` rejects most pairs above ~1.0
    nuisance_sigma: float = 0.5
    text_nuisance_sigma: float = 0.5
    injection_rate: float = 0.0
    contamination: float = 0.0
    ambiguous_rate: float = 0.0


@dataclass(frozen=True)
class SamplerSettings:
    """Sampler knobs; the core vocabulary itself comes from ``paths.core_vocab``."""

    k_per_query: int = 4
    sim_threshold: float = 0.7
    min_query_words: int = 2
    use_query_filter: bool = True
    use_subcategory: bool = True
    use_similarity: bool = True
    use_keyword_overlap: bool = True


@dataclass(frozen=True)
class EvalSettings:
    modes: tuple[str, ...] = ("tt", "vv", "mm")
    ks: tuple[int, ...] = RECALL_KS
    catalog_distractors: bool = False
    # method label -> checkpoint path; empty means {"multimodal": paths.checkpoint}
    checkpoints: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "modes", tuple(RetrievalMode(m.replace("-", "")).value for m in self.modes))
        object.__setattr__(self, "ks", tuple(int(k) for k in self.ks))
        object.__setattr__(self, "checkpoints", dict(self.checkpoints))


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    paths: Paths = Paths()
    lambdas: LambdaWeights = LambdaWeights()
    synth: SynthSettings = SynthSettings()
    sampler: SamplerSettings = SamplerSettings()
    train: TrainConfig = DESK_TRAIN
    loss: LossConfig = LossConfig()
    eval: EvalSettings = EvalSettings()
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    def resolve(self, name: str) -> Path:
        p = Path(getattr(self.paths, name))
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d.pop("base_dir")
        d["lambdas"] = list(self.lambdas.values)
        return _plain(d)

    def digest(self) -> str:
        return hashlib.sha256(dump_config(self).encode("utf-8")).hexdigest()[:12]


def _plain(x):
    if isinstance(x, dict):
        return {k: _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    return x


_SECTIONS = {
    "paths": Paths,
    "synth": SynthSettings,
    "sampler": SamplerSettings,
    "train": TrainConfig,
    "loss": LossConfig,
    "eval": EvalSettings,
}


def _section(cls, data: Any, name: str):
    if not isinstance(data, dict):
        raise ValidationError(f"config section {name!r} must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ValidationError(f"unknown keys in {name!r}: {unknown}")
    base = DESK_TRAIN if cls is TrainConfig else cls()
    try:
        return dataclasses.replace(base, **data)
    except (TypeError, ValueError) as e:
        raise ValidationError(f"bad value in {name!r}: {e}") from None


def config_from_dict(data: Mapping, base_dir: Path | str = ".") -> PipelineConfig:
    if not isinstance(data, Mapping):
        raise ValidationError("config must be a JSON object")
    unknown = sorted(set(data) - {"seed", "lambdas", *_SECTIONS})
    if unknown:
        raise ValidationError(f"unknown config keys: {unknown}")
    kwargs: dict[str, Any] = {"base_dir": Path(base_dir)}
    if "seed" in data:
        if not isinstance(data["seed"], int) or isinstance(data["seed"], bool):
            raise ValidationError("seed must be an integer")
        kwargs["seed"] = data["seed"]
    if "lambdas" in data:
        try:
            kwargs["lambdas"] = LambdaWeights(tuple(data["lambdas"]))
        except (TypeError, ValueError) as e:
            raise ValidationError(f"bad lambdas: {e}") from None
    for name, cls in _SECTIONS.items():
        if name in data:
            kwargs[name] = _section(cls, data[name], name)
    return PipelineConfig(**kwargs)


def dump_config(cfg: PipelineConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def load_config(path: Path | str) -> PipelineConfig:
    path = Path(path)
    if not path.is_file():
        raise ValidationError(f"{path}: no such config file")
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise ValidationError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from None
    return config_from_dict(data, path.parent)
