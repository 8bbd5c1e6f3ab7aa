"""Run configuration: one YAML file with a block per pipeline stage.

Every field has a default, so an empty file is a valid config.  Unknown
keys are rejected.  :func:`dump_config` writes the canonical form, which
parses back to an equal :class:`RunConfig`.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import yaml


class ConfigError(ValueError):
    """The configuration file is malformed or names unknown settings."""


@dataclass
class DatasetConfig:
    source: str = "synthetic"  # synthetic | csv
    csv_dir: str | None = None  # directory written by `synth` (or same layout)
    n_subjects: int = 8
    duration: float = 200.0
    sample_rate: float = 50.0
    harmonics: int = 8
    noise_std: float = 0.3
    train_fraction: float = 0.7
    owner: int = 0
    seed: int = 0


@dataclass
class PreprocessConfig:
    window_len: int = 32
    hop: int = 8
    fft_len: int = 32
    freq_bins_kept: int = 11
    frames_kept: int = 42
    log_floor: float = -10.0
    window: str = "hann"
    image_hop: int = 30


@dataclass
class ModelConfig:
    arch: str = "lenet4"
    seed: int = 0


@dataclass
class LossBlock:
    mode: str = "joint"
    margin: float = 1.5
    alpha: float = 0.1


@dataclass
class TrainBlock:
    lr: float = 0.01
    batch_size: int = 20
    epochs: int = 200
    R: int | None = 256  # None means r^2 (every owner pair)
    target_loss: float | None = 0.05
    seed: int = 0
    defense: bool = False
    defense_segments: int = 40


@dataclass
class TransferBlock:
    source_checkpoint: str | None = None
    k: int = 3
    baseline: bool = True
    source_subjects: int = 16
    source_R: int = 512
    source_epochs: int = 12


@dataclass
class FusionBlock:
    alpha: float = 0.01
    beta: float = 0.01
    mu: float | None = None
    sigma_sq: float = 0.25
    k: int = 5
    max_observations: int = 50
    use_sigma: bool = False
    T: int = 3
    sessions: int = 50


@dataclass
class NoiseBlock:
    kind: str = "gaussian"
    moving_window: int | None = None
    std_scale: float = 0.3  # fraction of the moving std; strong enough to fingerprint, mild for steps
    sinusoid_freq: float | None = None
    sinusoid_amp_ratio: float = 0.1
    seed: int = 0


@dataclass
class ThreatBlock:
    kinds: list = field(default_factory=lambda: ["passive", "active"])
    denoisers: list = field(default_factory=lambda: ["none", "tv", "gaussian_filter"])
    batch_sizes: list = field(default_factory=lambda: [1, 4, 8, 16, 32])
    trials: int = 200
    spatial_k: int = 8
    attack_subjects: int = 50
    attack_duration: float = 40.0
    seed: int = 0
    noise: NoiseBlock = field(default_factory=NoiseBlock)


@dataclass
class RunConfig:
    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    preprocessing: PreprocessConfig = field(default_factory=PreprocessConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    loss: LossBlock = field(default_factory=LossBlock)
    train: TrainBlock = field(default_factory=TrainBlock)
    transfer: TransferBlock = field(default_factory=TransferBlock)
    fusion: FusionBlock = field(default_factory=FusionBlock)
    threat: ThreatBlock = field(default_factory=ThreatBlock)

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with every seed field set to ``seed``."""
        out = from_dict(to_dict(self))
        for block in (out.dataset, out.model, out.train, out.threat, out.threat.noise):
            block.seed = int(seed)
        return out


def _coerce(value, default, where):
    # numbers written without a decimal point still count as floats
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if isinstance(default, float) and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if isinstance(default, list) and not isinstance(value, list):
        raise ConfigError(f"{where}: expected a list, got {value!r}")
    return value


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'}: expected a mapping, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    obj = cls()
    for name, value in data.items():
        path = f"{where}.{name}" if where else name
        current = getattr(obj, name)
        if dataclasses.is_dataclass(current):
            value = _build(type(current), value, path)
        elif value is not None and current is not None:
            value = _coerce(value, current, path)
        setattr(obj, name, value)
    return obj


def from_dict(data) -> RunConfig:
    return _build(RunConfig, data, "")


def to_dict(cfg) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path=None) -> RunConfig:
    """Parse a YAML config file; ``None`` gives the defaults."""
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def parse_config(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return from_dict(data)


def dump_config(cfg: RunConfig) -> str:
    """Canonical YAML: sorted keys, block style."""
    return yaml.safe_dump(to_dict(cfg), sort_keys=True, default_flow_style=False)
