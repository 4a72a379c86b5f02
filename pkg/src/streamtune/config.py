"""``key = value`` experiment configuration files."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

from .harness import ConfigError, RunConfig, expand_grid

PATH_KEYS = ("dataset", "vocabulary", "embeddings", "output_dir")
LIST_KEYS = ("sampling_method", "loss_kind", "sample_size")

_INT_KEYS = {
    "stream_length", "buffer_size", "trigger_point", "repetitions", "master_seed", "hash_dim", "out_dim",
    "epochs", "batch_size", "warmup_steps", "ctl_negative_ratio", "checkpoint_every", "unk_piece_count",
}
_FLOAT_KEYS = {"svm_lambda", "peak_lr", "margin"}
_BOOL_KEYS = {"record_timing"}


@dataclass
class ExperimentConfig:
    dataset: Path
    vocabulary: Path
    output_dir: Path
    embeddings: Optional[Path] = None
    unk_piece_count: int = 2
    methods: list = field(default_factory=lambda: ["random"])
    losses: list = field(default_factory=lambda: ["BATL"])
    sample_sizes: list = field(default_factory=lambda: [500])
    base: RunConfig = field(default_factory=RunConfig)

    def grid(self) -> list[RunConfig]:
        return expand_grid(self.base, self.methods, self.losses, self.sample_sizes)

    def resolved_lines(self) -> list[str]:
        """The fully resolved configuration, one ``key = value`` per line."""
        lines = [
            f"dataset = {self.dataset}",
            f"vocabulary = {self.vocabulary}",
            f"embeddings = {self.embeddings if self.embeddings is not None else ''}",
            f"output_dir = {self.output_dir}",
            f"unk_piece_count = {self.unk_piece_count}",
            f"sampling_method = {','.join(self.methods)}",
            f"loss_kind = {','.join(self.losses)}",
            f"sample_size = {','.join(str(n) for n in self.sample_sizes)}",
        ]
        for f in fields(RunConfig):
            if f.name in LIST_KEYS:
                continue
            value = getattr(self.base, f.name)
            lines.append(f"{f.name} = {'' if value is None else str(value).lower() if isinstance(value, bool) else value}")
        return lines


def _convert(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    if key in _BOOL_KEYS:
        lowered = raw.lower()
        if lowered in ("true", "yes", "1", "on"):
            return True
        if lowered in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    return raw


def parse_config(text: str, base_dir: Path = Path(".")) -> ExperimentConfig:
    values: dict = {}
    run_keys = {f.name for f in fields(RunConfig)}
    known = run_keys | set(PATH_KEYS) | {"unk_piece_count"}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = raw

    missing = [k for k in ("dataset", "vocabulary", "output_dir") if not values.get(k)]
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(missing)}")

    def path(key):
        p = Path(values[key])
        return p if p.is_absolute() else base_dir / p

    cfg = ExperimentConfig(path("dataset"), path("vocabulary"), path("output_dir"))
    if values.get("embeddings"):
        cfg.embeddings = path("embeddings")
    if "unk_piece_count" in values:
        cfg.unk_piece_count = _convert("unk_piece_count", values["unk_piece_count"])

    def listed(key):
        return [item.strip() for item in values[key].split(",") if item.strip()]

    if "sampling_method" in values:
        cfg.methods = listed("sampling_method")
    if "loss_kind" in values:
        cfg.losses = listed("loss_kind")
    if "sample_size" in values:
        try:
            cfg.sample_sizes = [int(n) for n in listed("sample_size")]
        except ValueError:
            raise ConfigError(f"sample_size: cannot parse {values['sample_size']!r}") from None
    for key in ("sampling_method", "loss_kind", "sample_size"):
        if key in values and not listed(key):
            raise ConfigError(f"{key}: empty list")

    overrides = {}
    for key in run_keys - set(LIST_KEYS):
        if key in values and values[key] != "":
            overrides[key] = _convert(key, values[key])
    overrides.setdefault("dataset_name", cfg.dataset.stem)
    cfg.base = replace(RunConfig(), **overrides)
    for run in cfg.grid():
        run.validate()
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, path.parent)
