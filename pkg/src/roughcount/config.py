"""Experiment configuration: a small dotted-key grammar over plain text.

One `section.key = value` assignment per line; `#` starts a comment; blank
lines are ignored. Values are coerced by the type of the corresponding
default (int, float, bool, string, or comma-separated list). Unknown keys
are rejected with file and line diagnostics, so typos cannot silently fall
back to defaults. `config_to_text` renders the fully-resolved form that
every report embeds.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .errors import ConfigError


@dataclass
class DatasetConfig:
    kind: str = "synthetic"            # synthetic | container | embeddings
    container: str = ""                # input container path for non-synthetic kinds
    size: int = 6000                   # total samples, train + test
    test_size: int = 1000
    count_min: int = 0
    count_max: int = 299
    input_dim: int = 128
    noise_scale: float = 1.0
    objects: int = 8
    seed: int = 0


@dataclass
class RoughConfig:
    error_pct: float = 0.05
    experts: int = 10
    seed: int = 1


@dataclass
class TextConfig:
    dim: int = 64
    seed: int = 7
    template: str = "The number of people in the photo is approximately {number}"


@dataclass
class LossSection:
    temperature: float = 0.07
    stage_weights: tuple[float, ...] = (1.0, 1.0, 1.0)
    multi_positive_mask: bool = False


@dataclass
class TrainSection:
    batch_size: int = 128
    learning_rate: float = 3e-3
    epochs: int = 60
    optimizer: str = "adam"
    lr_schedule: str = "cosine"
    hidden_dim: int = 512
    seed: int = 2


@dataclass
class DecodeSection:
    modes: tuple[str, ...] = ("flat", "progressive", "progressive+adapter")
    range_max: int = 1000
    query_noise_sigma: float = 0.0
    noise_seed: int = 3
    prompts: str = ""                  # prompt container path for embeddings datasets


@dataclass
class AdapterSection:
    capacity: int = 3000
    delta: float = 0.14
    mix_lambda: float = 0.1
    seed: int = 4


@dataclass
class MetricsSection:
    # interior band edges; bands are [0,e1), [e1,e2), ..., [en,inf)
    band_edges: tuple[float, ...] = (100.0, 200.0, 300.0, 500.0, 800.0)


@dataclass
class OutputSection:
    format: str = "structured-text"    # structured-text | csv


@dataclass
class ExperimentConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    rough: RoughConfig = field(default_factory=RoughConfig)
    text: TextConfig = field(default_factory=TextConfig)
    loss: LossSection = field(default_factory=LossSection)
    train: TrainSection = field(default_factory=TrainSection)
    decode: DecodeSection = field(default_factory=DecodeSection)
    adapter: AdapterSection = field(default_factory=AdapterSection)
    metrics: MetricsSection = field(default_factory=MetricsSection)
    output: OutputSection = field(default_factory=OutputSection)

    def bands(self) -> tuple[tuple[float, float | None], ...]:
        edges = (0.0,) + tuple(self.metrics.band_edges)
        out = [(lo, hi) for lo, hi in zip(edges, edges[1:])]
        out.append((edges[-1], None))
        return tuple(out)

    def with_seed(self, seed: int) -> "ExperimentConfig":
        """Rebase every stream seed on one master seed (CLI --seed override)."""
        return replace(
            self,
            dataset=replace(self.dataset, seed=seed),
            rough=replace(self.rough, seed=seed + 1),
            train=replace(self.train, seed=seed + 2),
            decode=replace(self.decode, noise_seed=seed + 3),
            adapter=replace(self.adapter, seed=seed + 4),
        )


def _coerce(raw: str, default, where: str):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{where}: expected a boolean, got {raw!r}")
    if isinstance(default, int):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected an integer, got {raw!r}") from exc
    if isinstance(default, float):
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected a number, got {raw!r}") from exc
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if default and isinstance(default[0], str) or not default:
            return tuple(parts)
        try:
            return tuple(float(p) for p in parts)
        except ValueError as exc:
            raise ConfigError(f"{where}: expected a comma-separated number list, got {raw!r}") from exc
    return raw


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    sections = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "#" in stripped:
            stripped = stripped[: stripped.index("#")].strip()
            if not stripped:
                continue
        if "=" not in stripped:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        key, _, raw = stripped.partition("=")
        key = key.strip()
        raw = raw.strip()
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} lacks a section prefix")
        section_name, _, field_name = key.partition(".")
        section = sections.get(section_name)
        if section is None:
            raise ConfigError(f"{source}:{lineno}: unknown section {section_name!r}")
        names = {f.name for f in fields(section)}
        if field_name not in names:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        default = getattr(section, field_name)
        setattr(section, field_name, _coerce(raw, default, f"{source}:{lineno}"))
    _validate(cfg, source)
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return parse_config_text(path.read_text(), source=str(path))


def _validate(cfg: ExperimentConfig, source: str):
    if cfg.dataset.kind not in ("synthetic", "container", "embeddings"):
        raise ConfigError(f"{source}: dataset.kind must be synthetic, container, or embeddings")
    if cfg.dataset.kind != "synthetic" and not cfg.dataset.container:
        raise ConfigError(f"{source}: dataset.kind={cfg.dataset.kind} needs dataset.container")
    if not 0 < cfg.dataset.test_size:
        raise ConfigError(f"{source}: dataset.test_size must be positive")
    if cfg.dataset.kind == "synthetic" and cfg.dataset.test_size >= cfg.dataset.size:
        raise ConfigError(f"{source}: dataset.test_size must be below dataset.size")
    for mode in cfg.decode.modes:
        if mode not in ("flat", "progressive", "progressive+adapter"):
            raise ConfigError(f"{source}: unknown decode mode {mode!r}")
    if cfg.output.format not in ("structured-text", "csv"):
        raise ConfigError(f"{source}: output.format must be structured-text or csv")
    if cfg.dataset.kind == "embeddings" and not cfg.decode.prompts:
        raise ConfigError(f"{source}: embeddings datasets need decode.prompts")


def _format_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(_format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def config_to_text(cfg: ExperimentConfig) -> str:
    """Canonical resolved rendering; parses back to an equal config."""
    lines = []
    for section_field in fields(cfg):
        section = getattr(cfg, section_field.name)
        for f in fields(section):
            lines.append(f"{section_field.name}.{f.name} = {_format_value(getattr(section, f.name))}")
    return "\n".join(lines) + "\n"
