"""Pipeline configuration: one JSON document with a section per stage.

Relative paths are resolved against the directory holding the config file.
Unknown keys are rejected so typos surface early.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .errors import ConfigError
from .generation.pool import GenerationConfig
from .retrieval import DEFAULT_DEPTH, Bm25Params
from .reward.encoder import EncoderConfig
from .reward.training import TrainingConfig

STRATEGIES = ("reward", "oracle", "random", "first", "mean")


@dataclass(frozen=True)
class DataPaths:
    passages: Path
    sessions_train: Path
    sessions_test: Path
    qrels: Path
    fixtures: Path | None = None
    template: Path | None = None
    vectors: Path | None = None


@dataclass(frozen=True)
class RetrievalSettings:
    k1: float = 0.9
    b: float = 0.4
    depth: int = DEFAULT_DEPTH
    dense_dimension: int = 256
    dense_seed: int = 0

    @property
    def bm25(self) -> Bm25Params:
        return Bm25Params(self.k1, self.b)


@dataclass(frozen=True)
class SelectionSettings:
    strategies: tuple[str, ...] = ("first", "oracle", "reward")
    budgets: tuple[int, ...] = (1, 2, 4, 8, 16)
    random_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "strategies", tuple(self.strategies))
        object.__setattr__(self, "budgets", tuple(int(b) for b in self.budgets))
        bad = [s for s in self.strategies if s not in STRATEGIES]
        if bad:
            raise ConfigError(f"selection.strategies: unknown {bad}; choose from {list(STRATEGIES)}")
        if list(self.budgets) != sorted(set(self.budgets)) or not self.budgets or self.budgets[0] < 1:
            raise ConfigError(f"selection.budgets must be ascending positive integers, got {list(self.budgets)}")


@dataclass(frozen=True)
class EvalSettings:
    retriever: str = "sparse"
    mrr_cutoff: int | None = None
    rel_threshold: int = 1

    def __post_init__(self) -> None:
        if self.retriever not in ("sparse", "dense"):
            raise ConfigError(f"eval.retriever must be 'sparse' or 'dense', got {self.retriever!r}")


@dataclass(frozen=True)
class PipelineConfig:
    data: DataPaths
    output_dir: Path
    retrieval: RetrievalSettings = field(default_factory=RetrievalSettings)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    selection: SelectionSettings = field(default_factory=SelectionSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)


def _section(cls, obj: Mapping[str, Any] | None, name: str):
    obj = dict(obj or {})
    if hasattr(cls, "from_dict"):
        try:
            return cls.from_dict(obj)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"config section {name!r}: {exc}") from exc
    unknown = set(obj) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"config section {name!r}: unknown keys {sorted(unknown)}")
    try:
        return cls(**obj)
    except TypeError as exc:
        raise ConfigError(f"config section {name!r}: {exc}") from exc


def parse_config(obj: Mapping[str, Any], base_dir: str | Path = ".") -> PipelineConfig:
    base = Path(base_dir)
    known = {"data", "output_dir", "retrieval", "generation", "encoder", "training", "selection", "eval"}
    unknown = set(obj) - known
    if unknown:
        raise ConfigError(f"unknown config sections {sorted(unknown)}")
    data = dict(obj.get("data") or {})
    required = ("passages", "sessions_train", "sessions_test", "qrels")
    missing = [k for k in required if k not in data]
    if missing:
        raise ConfigError(f"config 'data' is missing {missing}")
    extra = set(data) - set(DataPaths.__dataclass_fields__)
    if extra:
        raise ConfigError(f"config section 'data': unknown keys {sorted(extra)}")
    paths = DataPaths(**{k: (base / v if v is not None else None) for k, v in data.items()})
    return PipelineConfig(
        data=paths,
        output_dir=base / obj.get("output_dir", "run"),
        retrieval=_section(RetrievalSettings, obj.get("retrieval"), "retrieval"),
        generation=_section(GenerationConfig, obj.get("generation"), "generation"),
        encoder=_section(EncoderConfig, obj.get("encoder"), "encoder"),
        training=_section(TrainingConfig, obj.get("training"), "training"),
        selection=_section(SelectionSettings, obj.get("selection"), "selection"),
        eval=_section(EvalSettings, obj.get("eval"), "eval"),
    )


def load_config(path: str | Path) -> PipelineConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(obj, path.parent)
