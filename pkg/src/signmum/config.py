"""Run configuration: profiles, YAML loading, env overrides, hashing.

Configs are strict: unknown keys, type mismatches and out-of-range values are
all collected and reported together in one ConfigError rather than one at a
time. Environment variables can override only paths and the seed.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import yaml

from .backbone.model import OBJECTIVES, BackboneConfig, EncoderConfig
from .backbone.pretrain import PretrainConfig
from .downstream.classifier import FinetuneConfig
from .errors import ConfigError
from .mum.masking import MASK_CASES
from .tokenizer.baselines import SeparateVQConfig
from .tokenizer.model import TokenizerConfig
from .tokenizer.train import TokenizerTrainConfig

TOKENIZER_KINDS = ("kmeans", "separate_vq", "coupled")
PRETRAINING_MODES = ("none", "rmask_regress", "rmask_token", "mum_regress", "mum_token")

ENV_SEED = "SIGNMUM_SEED"
ENV_OUT = "SIGNMUM_OUT"
ENV_TRAIN = "SIGNMUM_TRAIN"
ENV_EVAL = "SIGNMUM_EVAL"


@dataclass(frozen=True)
class ModelConfig:
    hand_codes: int = 1000
    body_codes: int = 500
    code_dim: int = 512
    tokenizer_hidden: int = 512
    tokenizer_trunk: int = 256
    betas: tuple = (0.1, 1.0, 0.9)
    model_dim: int = 1536
    layers: int = 6
    heads: int = 8
    ffn_dim: int = 2048
    dropout: float = 0.1
    seq_len: int = 32
    mask_ratio: float = 0.5
    mask_case: str = "both"
    objective: str = "token"
    tokenizer_kind: str = "coupled"
    head_hidden: Optional[int] = None


@dataclass(frozen=True)
class ScheduleConfig:
    tokenizer_epochs: int = 40
    tokenizer_batch: int = 256
    tokenizer_lr: float = 1e-3
    warmup_samples: int = 1024
    pretrain_epochs: int = 100
    pretrain_batch: int = 64
    pretrain_lr: float = 1e-4
    weight_decay: float = 0.01
    warmup_epochs: int = 6
    finetune_epochs: int = 40
    finetune_batch: int = 64
    finetune_lr: float = 1e-4
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 10
    samples_per_class: int = 20
    length: int = 48
    prototypes_per_class: int = 2
    noise_sigma: float = 0.01


@dataclass(frozen=True)
class DataConfig:
    train_path: Optional[str] = None
    eval_path: Optional[str] = None
    out_dir: str = "runs"
    seed: int = 0
    test_fraction: float = 0.25
    labeled_per_class: Optional[int] = None


@dataclass(frozen=True)
class GridConfig:
    tokenizer_kinds: tuple = ("coupled",)
    mask_cases: tuple = ("both",)
    alphas: tuple = (0.5,)
    data_fractions: tuple = (1.0,)
    pretraining: tuple = ("mum_token",)


@dataclass(frozen=True)
class RunConfig:
    profile: str = "full"
    model: ModelConfig = field(default_factory=ModelConfig)
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)
    data: DataConfig = field(default_factory=DataConfig)
    grid: GridConfig = field(default_factory=GridConfig)

    def to_dict(self) -> dict:
        return asdict(self)


# Small shapes and short schedules for fast, fully-deterministic checks.
_TEST_OVERLAY = {
    "model": {
        "hand_codes": 32,
        "body_codes": 32,
        "code_dim": 32,
        "tokenizer_hidden": 64,
        "tokenizer_trunk": 48,
        "model_dim": 96,
        "layers": 2,
        "heads": 8,
        "ffn_dim": 128,
        "dropout": 0.0,
        "seq_len": 8,
    },
    "schedule": {
        "tokenizer_epochs": 150,
        "tokenizer_batch": 32,
        "warmup_samples": 256,
        "pretrain_epochs": 120,
        "pretrain_batch": 8,
        "pretrain_lr": 1e-3,
        "warmup_epochs": 6,
        "finetune_epochs": 60,
        "finetune_batch": 8,
        "finetune_lr": 3e-3,
        "lr_step_epochs": 75,
    },
    "synth": {
        "num_classes": 4,
        "samples_per_class": 8,
        "length": 8,
        "prototypes_per_class": 1,
        "noise_sigma": 0.01,
    },
}

PROFILES = {"full": {}, "test": _TEST_OVERLAY}

_SECTIONS = {
    "model": ModelConfig,
    "schedule": ScheduleConfig,
    "synth": SynthConfig,
    "data": DataConfig,
    "grid": GridConfig,
}

_TUPLE_FIELDS = {
    ("model", "betas"),
    ("grid", "tokenizer_kinds"),
    ("grid", "mask_cases"),
    ("grid", "alphas"),
    ("grid", "data_fractions"),
    ("grid", "pretraining"),
}


_OPTIONAL_FIELDS = {
    ("model", "head_hidden"): int,
    ("data", "train_path"): str,
    ("data", "eval_path"): str,
    ("data", "labeled_per_class"): int,
}

_FLOAT_FIELDS = {
    "tokenizer_lr", "pretrain_lr", "finetune_lr", "lr_gamma", "weight_decay",
    "dropout", "mask_ratio", "noise_sigma", "test_fraction",
}


def _coerce(section: str, name: str, value, violations: list):
    """Type-check one field; returns (ok, value) with tuples normalized."""
    if (section, name) in _TUPLE_FIELDS:
        if not isinstance(value, (list, tuple)):
            violations.append(f"{section}.{name}: expected a list, got {type(value).__name__}")
            return False, None
        return True, tuple(value)
    if (section, name) in _OPTIONAL_FIELDS:
        base = _OPTIONAL_FIELDS[(section, name)]
        if value is None or (isinstance(value, base) and not isinstance(value, bool)):
            return True, value
        violations.append(
            f"{section}.{name}: expected {base.__name__} or null, got {type(value).__name__}"
        )
        return False, None
    if isinstance(value, bool):
        violations.append(f"{section}.{name}: unexpected boolean")
        return False, None
    if name in _FLOAT_FIELDS:
        if not isinstance(value, (int, float)):
            violations.append(f"{section}.{name}: expected a number, got {type(value).__name__}")
            return False, None
        return True, float(value)
    expected = str if name in ("mask_case", "objective", "tokenizer_kind", "out_dir") else int
    if not isinstance(value, expected):
        violations.append(
            f"{section}.{name}: expected {expected.__name__}, got {type(value).__name__}"
        )
        return False, None
    return True, value


def _section_values(section: str, data: dict, violations: list) -> dict:
    cls = _SECTIONS[section]
    known = {f.name for f in fields(cls)}
    values = {}
    for key, value in data.items():
        if key not in known:
            violations.append(f"{section}.{key}: unknown key")
            continue
        ok, coerced = _coerce(section, key, value, violations)
        if ok:
            values[key] = coerced
    return values


def _validate(config: RunConfig, violations: list) -> None:
    m, s, sy, d, g = config.model, config.schedule, config.synth, config.data, config.grid
    if m.hand_codes < 1 or m.body_codes < 1:
        violations.append("model: codebook sizes must be at least 1")
    if min(m.code_dim, m.tokenizer_hidden, m.tokenizer_trunk) < 1:
        violations.append("model: tokenizer widths must be at least 1")
    if len(m.betas) != 3 or any(b < 0 for b in m.betas):
        violations.append("model.betas: expected three non-negative weights")
    if m.model_dim % 3:
        violations.append(f"model.model_dim: {m.model_dim} is not divisible by 3")
    if m.heads < 1 or m.model_dim % m.heads:
        violations.append(f"model.model_dim: {m.model_dim} is not divisible by heads {m.heads}")
    if m.layers < 1 or m.ffn_dim < 1 or m.seq_len < 1:
        violations.append("model: layers, ffn_dim and seq_len must be at least 1")
    if not 0.0 <= m.dropout < 1.0:
        violations.append("model.dropout: must lie in [0, 1)")
    if not 0.0 <= m.mask_ratio <= 1.0:
        violations.append("model.mask_ratio: must lie in [0, 1]")
    if m.mask_case not in MASK_CASES:
        violations.append(f"model.mask_case: {m.mask_case!r} not in {MASK_CASES}")
    if m.objective not in OBJECTIVES:
        violations.append(f"model.objective: {m.objective!r} not in {OBJECTIVES}")
    if m.tokenizer_kind not in TOKENIZER_KINDS:
        violations.append(f"model.tokenizer_kind: {m.tokenizer_kind!r} not in {TOKENIZER_KINDS}")
    if m.head_hidden is not None and m.head_hidden < 1:
        violations.append("model.head_hidden: must be at least 1 when given")

    for name in (
        "tokenizer_epochs", "tokenizer_batch", "warmup_samples", "pretrain_epochs",
        "pretrain_batch", "warmup_epochs", "finetune_epochs", "finetune_batch",
        "lr_step_epochs",
    ):
        if getattr(s, name) < 1:
            violations.append(f"schedule.{name}: must be at least 1")
    for name in ("tokenizer_lr", "pretrain_lr", "finetune_lr"):
        if getattr(s, name) <= 0:
            violations.append(f"schedule.{name}: must be positive")
    if not 0 < s.lr_gamma <= 1:
        violations.append("schedule.lr_gamma: must lie in (0, 1]")
    if s.weight_decay < 0:
        violations.append("schedule.weight_decay: must be non-negative")

    if sy.num_classes < 1 or sy.samples_per_class < 1 or sy.length < 1:
        violations.append("synth: num_classes, samples_per_class and length must be at least 1")
    if sy.prototypes_per_class < 1:
        violations.append("synth.prototypes_per_class: must be at least 1")
    if sy.noise_sigma < 0:
        violations.append("synth.noise_sigma: must be non-negative")

    if not 0.0 < d.test_fraction < 1.0:
        violations.append("data.test_fraction: must lie in (0, 1)")
    if d.labeled_per_class is not None and d.labeled_per_class < 1:
        violations.append("data.labeled_per_class: must be at least 1 when given")

    for kind in g.tokenizer_kinds:
        if kind not in TOKENIZER_KINDS:
            violations.append(f"grid.tokenizer_kinds: {kind!r} not in {TOKENIZER_KINDS}")
    for case in g.mask_cases:
        if case != "none" and case not in MASK_CASES:
            violations.append(f"grid.mask_cases: {case!r} not in {('none',) + MASK_CASES}")
    for alpha in g.alphas:
        if not isinstance(alpha, (int, float)) or not 0.0 <= alpha <= 1.0:
            violations.append(f"grid.alphas: {alpha!r} must lie in [0, 1]")
    for frac in g.data_fractions:
        if not isinstance(frac, (int, float)) or not 0.0 <= frac <= 1.0:
            violations.append(f"grid.data_fractions: {frac!r} must lie in [0, 1]")
    for mode in g.pretraining:
        if mode not in PRETRAINING_MODES:
            violations.append(f"grid.pretraining: {mode!r} not in {PRETRAINING_MODES}")


def _merge(profile_name: str, file_data: dict, violations: list) -> RunConfig:
    overlay = PROFILES[profile_name]
    sections = {}
    for section, cls in _SECTIONS.items():
        values = dict(overlay.get(section, {}))
        values.update(_section_values(section, file_data.get(section, {}), violations))
        try:
            sections[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            violations.append(f"{section}: {exc}")
            sections[section] = cls()
    return RunConfig(profile=profile_name, **sections)


def _apply_env(config: RunConfig, violations: list) -> RunConfig:
    updates = {}
    seed_text = os.environ.get(ENV_SEED)
    if seed_text is not None:
        try:
            updates["seed"] = int(seed_text)
        except ValueError:
            violations.append(f"{ENV_SEED}: {seed_text!r} is not an integer")
    if os.environ.get(ENV_OUT):
        updates["out_dir"] = os.environ[ENV_OUT]
    if os.environ.get(ENV_TRAIN):
        updates["train_path"] = os.environ[ENV_TRAIN]
    if os.environ.get(ENV_EVAL):
        updates["eval_path"] = os.environ[ENV_EVAL]
    if not updates:
        return config
    data = {**asdict(config.data), **updates}
    return RunConfig(
        profile=config.profile,
        model=config.model,
        schedule=config.schedule,
        synth=config.synth,
        data=DataConfig(**data),
        grid=config.grid,
    )


def load_config(
    path=None,
    profile: Optional[str] = None,
    seed: Optional[int] = None,
    out_dir: Optional[str] = None,
) -> RunConfig:
    """Build a RunConfig from an optional YAML file plus overrides.

    Precedence, lowest to highest: profile defaults, file values,
    SIGNMUM_* environment variables, explicit arguments.
    """
    violations: list[str] = []
    file_data = {}
    if path is not None:
        text = Path(path).read_text()
        try:
            loaded = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError([f"{path}: invalid YAML: {exc}"]) from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError([f"{path}: top level must be a mapping"])
        file_data = loaded

    profile_name = profile or file_data.get("profile", "full")
    if profile_name not in PROFILES:
        raise ConfigError(
            [f"profile: {profile_name!r} not in {tuple(sorted(PROFILES))}"]
        )
    for key, value in file_data.items():
        if key == "profile":
            continue
        if key not in _SECTIONS:
            violations.append(f"{key}: unknown section")
        elif not isinstance(value, dict):
            violations.append(f"{key}: expected a mapping")
    file_sections = {
        k: v for k, v in file_data.items() if k in _SECTIONS and isinstance(v, dict)
    }

    config = _merge(profile_name, file_sections, violations)
    config = _apply_env(config, violations)
    if seed is not None or out_dir is not None:
        data = asdict(config.data)
        if seed is not None:
            data["seed"] = seed
        if out_dir is not None:
            data["out_dir"] = out_dir
        config = RunConfig(
            profile=config.profile,
            model=config.model,
            schedule=config.schedule,
            synth=config.synth,
            data=DataConfig(**data),
            grid=config.grid,
        )
    _validate(config, violations)
    if violations:
        raise ConfigError(violations)
    return config


def config_hash(config: RunConfig) -> str:
    """sha256 of the canonical JSON form; stable across field order."""
    canonical = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def tokenizer_model_config(config: RunConfig) -> TokenizerConfig:
    m = config.model
    return TokenizerConfig(
        hand_codes=m.hand_codes,
        body_codes=m.body_codes,
        code_dim=m.code_dim,
        hidden_dim=m.tokenizer_hidden,
        trunk_dim=m.tokenizer_trunk,
        betas=tuple(m.betas),
    )


def tokenizer_train_config(config: RunConfig) -> TokenizerTrainConfig:
    s = config.schedule
    return TokenizerTrainConfig(
        model=tokenizer_model_config(config),
        epochs=s.tokenizer_epochs,
        batch_size=s.tokenizer_batch,
        lr=s.tokenizer_lr,
        lr_step_epochs=s.lr_step_epochs,
        lr_gamma=s.lr_gamma,
        warmup_samples=s.warmup_samples,
    )


def baseline_vq_config(config: RunConfig) -> SeparateVQConfig:
    m, s = config.model, config.schedule
    return SeparateVQConfig(
        code_dim=m.code_dim,
        hidden_dim=m.tokenizer_hidden,
        epochs=s.tokenizer_epochs,
        batch_size=s.tokenizer_batch,
        lr=s.tokenizer_lr,
        lr_step_epochs=s.lr_step_epochs,
        lr_gamma=s.lr_gamma,
    )


def backbone_config(
    config: RunConfig,
    mask_ratio: Optional[float] = None,
    mask_case: Optional[str] = None,
    objective: Optional[str] = None,
) -> BackboneConfig:
    m = config.model
    return BackboneConfig(
        encoder=EncoderConfig(
            model_dim=m.model_dim,
            layers=m.layers,
            heads=m.heads,
            ffn_dim=m.ffn_dim,
            dropout=m.dropout,
        ),
        hand_codes=m.hand_codes,
        body_codes=m.body_codes,
        seq_len=m.seq_len,
        mask_ratio=m.mask_ratio if mask_ratio is None else mask_ratio,
        mask_case=m.mask_case if mask_case is None else mask_case,
        objective=m.objective if objective is None else objective,
    )


def pretrain_train_config(config: RunConfig, **backbone_overrides) -> PretrainConfig:
    s = config.schedule
    return PretrainConfig(
        backbone=backbone_config(config, **backbone_overrides),
        epochs=s.pretrain_epochs,
        batch_size=s.pretrain_batch,
        lr=s.pretrain_lr,
        weight_decay=s.weight_decay,
        warmup_epochs=s.warmup_epochs,
    )


def finetune_train_config(config: RunConfig, **backbone_overrides) -> FinetuneConfig:
    s = config.schedule
    return FinetuneConfig(
        backbone=backbone_config(config, **backbone_overrides),
        epochs=s.finetune_epochs,
        batch_size=s.finetune_batch,
        lr=s.finetune_lr,
        lr_step_epochs=s.lr_step_epochs,
        lr_gamma=s.lr_gamma,
        head_hidden=config.model.head_hidden,
    )
