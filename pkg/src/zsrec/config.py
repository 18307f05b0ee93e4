"""Run configuration: flat `key = value` file, overridden by command-line flags."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path
from typing import IO, Any, Mapping

from .bpr import BprConfig, BprError
from .dataset import DatasetConfig, DatasetError


class ConfigError(ValueError):
    pass


SCORERS = ("ngram", "remote", "random", "popularity", "bpr")


def _ints(v: str) -> tuple[int, ...]:
    return tuple(int(x) for x in str(v).replace(",", " ").split())


def _floats(v: str) -> tuple[float, ...]:
    return tuple(float(x) for x in str(v).replace(",", " ").split())


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {v!r}")


@dataclass
class RunConfig:
    # paths
    ratings: str | None = None
    movies: str | None = None
    corpus: str | None = None
    out_dir: str = "runs/default"
    model_path: str | None = None
    templates_file: str | None = None
    # dataset protocol
    pos_threshold: float = 4.0
    neg_threshold: float = 2.5
    min_pos: int = 21
    min_neg: int = 4
    test_fraction: float = 0.2
    context_size: int = 5
    num_neg_candidates: int = 4
    foreign_articles: bool = False
    seed: int = 0
    # scoring
    scorer: str = "ngram"
    template: str = "ENUM"
    per_token: bool = False
    ngram_order: int = 3
    ngram_weights: tuple[float, ...] = (0.1, 0.3, 0.6)
    ngram_unk_mass: float = 1.0
    endpoint: str | None = None
    model_id: str = "gpt2"
    timeout: float = 30.0
    max_retries: int = 3
    max_batch_size: int = 32
    max_concurrent: int = 4
    strict: bool = True
    workers: int = 1
    # sweeps
    sweep: str | None = None
    sizes: tuple[int, ...] = (0, 1, 2, 3, 5, 10, 15, 20)
    user_counts: tuple[int, ...] = (10, 25, 50, 100, 250, 500, 1000, 2173)
    templates: tuple[str, ...] = ("ENUM", "MOVIES_LIKE", "SIMILAR_TO", "IF_YOU_LIKE")
    # bpr
    bpr_d: int = 10
    bpr_lr: float = 0.001
    bpr_epochs: int = 100
    bpr_reg: float = 0.01
    bpr_init_scale: float = 0.01
    # mining
    top_k: int = 50
    min_title_tokens: int = 2
    corpus_column: int | None = None
    corpus_delimiter: str = ","
    n_min: int = 3
    n_max: int = 6
    # generation
    max_tokens: int = 40

    def dataset_config(self) -> DatasetConfig:
        try:
            return DatasetConfig(
                pos_threshold=self.pos_threshold,
                neg_threshold=self.neg_threshold,
                min_pos=self.min_pos,
                min_neg=self.min_neg,
                test_fraction=self.test_fraction,
                context_size=self.context_size,
                num_neg_candidates=self.num_neg_candidates,
                seed=self.seed,
                foreign_articles=self.foreign_articles,
            )
        except DatasetError as exc:
            raise ConfigError(str(exc)) from None

    def bpr_config(self) -> BprConfig:
        try:
            return BprConfig(
                d=self.bpr_d,
                learning_rate=self.bpr_lr,
                epochs=self.bpr_epochs,
                reg_lambda=self.bpr_reg,
                init_scale=self.bpr_init_scale,
                seed=self.seed,
            )
        except BprError as exc:
            raise ConfigError(str(exc)) from None

    def validate(self) -> None:
        if self.scorer not in SCORERS:
            raise ConfigError(f"scorer must be one of {', '.join(SCORERS)}")
        if self.sweep not in (None, "context", "templates", "users"):
            raise ConfigError("sweep must be context, templates or users")
        if self.top_k < 0:
            raise ConfigError("top_k must be >= 0")
        self.dataset_config()
        self.bpr_config()

    def resolved(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(f"{x:g}" if isinstance(x, float) else str(x) for x in v)
            lines.append(f"{f.name} = {'' if v is None else v}")
        return "\n".join(lines) + "\n"


_CONVERTERS: dict[str, Any] = {}
for _f in fields(RunConfig):
    t = str(_f.type)
    if "tuple[int" in t:
        _CONVERTERS[_f.name] = _ints
    elif "tuple[float" in t:
        _CONVERTERS[_f.name] = _floats
    elif "tuple[str" in t:
        _CONVERTERS[_f.name] = lambda v: tuple(x for x in str(v).replace(",", " ").split())
    elif t.startswith("bool"):
        _CONVERTERS[_f.name] = _bool
    elif t.startswith("int"):
        _CONVERTERS[_f.name] = int
    elif t.startswith("float"):
        _CONVERTERS[_f.name] = float
    else:
        _CONVERTERS[_f.name] = str
    if t.endswith("| None"):
        _CONVERTERS[_f.name] = (lambda conv: lambda v: None if v in (None, "", "None") else conv(v))(_CONVERTERS[_f.name])


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"config line {line_no}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.replace("-", "_")
        if key not in _CONVERTERS:
            raise ConfigError(f"config line {line_no}: unknown key {key!r}")
        out[key] = value.strip('"').strip("'") if value[:1] in "\"'" else value
    return out


def build_config(file_values: Mapping[str, Any] = (), overrides: Mapping[str, Any] = ()) -> RunConfig:
    """File values first, then non-None overrides (command-line flags)."""
    cfg = RunConfig()
    merged = dict(file_values)
    merged.update({k: v for k, v in dict(overrides).items() if v is not None})
    updates = {}
    for key, value in merged.items():
        if key not in _CONVERTERS:
            raise ConfigError(f"unknown config key {key!r}")
        try:
            updates[key] = value if isinstance(value, (tuple, bool)) else _CONVERTERS[key](value)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{key}: {exc}") from None
    cfg = dataclasses.replace(cfg, **updates)
    cfg.validate()
    return cfg


def load_config(fh: IO[str] | None, overrides: Mapping[str, Any] = ()) -> RunConfig:
    return build_config(parse_config_text(fh.read()) if fh is not None else {}, overrides)


def require_paths(cfg: RunConfig, *names: str) -> dict[str, Path]:
    out = {}
    for name in names:
        value = getattr(cfg, name)
        if not value:
            raise ConfigError(f"missing required path: {name}")
        p = Path(value)
        if not p.exists():
            raise FileNotFoundError(f"{name}: no such file: {p}")
        out[name] = p
    return out
