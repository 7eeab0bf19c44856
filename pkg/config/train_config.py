"""
Experiment configuration (TrainConfig) and the key=value config file format.

Config file example::

    # desk benchmark, smaller TSSN
    epochs=20
    tssn.channels=16,32
    tssn.num_blocks=2
    fusion.alpha_loss=0.5

Dotted keys address nested sections, comma separated values fill list/tuple fields.
"""
from __future__ import annotations

import typing
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from config.errors import ConfigError

AblationMode = Literal[
    "dual_geo_ot",
    "dual_cross_attn",
    "dual_concat",
    "tssn_only",
    "ftde_only",
    "global_norm",
]

ABLATION_MODES: Tuple[str, ...] = typing.get_args(AblationMode)

# Row labels used in ablation.csv, worded like the published tables
MODE_LABELS: Dict[str, str] = {
    "dual_geo_ot": "Dual-stream + Geo-OT",
    "dual_cross_attn": "Dual-stream + Cross-Attention",
    "dual_concat": "Dual-stream + Concatenation",
    "tssn_only": "TSSN only (Morphology)",
    "ftde_only": "FTDE only (Trajectory)",
    "global_norm": "Global Normalization",
}


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetConfig(_Section):
    source: Literal["synthetic", "manifest"] = "synthetic"
    train_manifest: Optional[Path] = None
    test_manifest: Optional[Path] = None
    # synthetic grid: class_id = shape_index * len(trajectories) + traj_index
    shapes: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    trajectories: List[int] = Field(default_factory=lambda: [0, 1])
    train_per_class: int = Field(40, ge=1)
    test_per_class: int = Field(10, ge=1)
    duration_frames: int = Field(40, ge=2)
    noise_sigma: float = Field(0.02, ge=0.0)
    dims: int = Field(2, ge=2, le=3)

    @model_validator(mode="after")
    def _check_source(self) -> "DatasetConfig":
        if self.source == "manifest" and self.train_manifest is None:
            raise ValueError("dataset.source=manifest requires dataset.train_manifest")
        if len(set(self.shapes)) != len(self.shapes) or len(set(self.trajectories)) != len(self.trajectories):
            raise ValueError("dataset.shapes and dataset.trajectories must not repeat ids")
        return self

    @property
    def num_synthetic_classes(self) -> int:
        return len(self.shapes) * len(self.trajectories)


class AugmentConfig(_Section):
    enabled: bool = True
    rotation_max_rad: float = Field(0.15, ge=0.0)
    scale_range: Tuple[float, float] = (0.9, 1.1)
    noise_sigma: float = Field(0.01, ge=0.0)
    time_stretch_range: Tuple[float, float] = (0.8, 1.2)


class TssnConfig(_Section):
    k: int = Field(4, ge=1, le=20)
    num_blocks: int = Field(3, ge=1)
    channels: List[int] = Field(default_factory=lambda: [32, 64, 128])
    temporal_kernel: int = Field(3, ge=1)
    lstm_hidden: int = Field(64, ge=1)
    attn_heads: int = Field(4, ge=1)
    out_dim: int = Field(64, ge=1)
    activation: Literal["relu", "tanh"] = "relu"

    @model_validator(mode="after")
    def _check_blocks(self) -> "TssnConfig":
        if len(self.channels) != self.num_blocks:
            raise ValueError(
                f"tssn.channels has {len(self.channels)} entries but tssn.num_blocks={self.num_blocks}"
            )
        if (2 * self.lstm_hidden) % self.attn_heads:
            raise ValueError("tssn.attn_heads must divide 2 * tssn.lstm_hidden")
        return self


class FtdeConfig(_Section):
    conv_channels: List[int] = Field(default_factory=lambda: [32, 64])
    conv_kernels: List[int] = Field(default_factory=lambda: [3, 3])
    lstm_hidden: int = Field(32, ge=1)
    out_dim: int = Field(64, ge=1)
    activation: Literal["relu", "tanh"] = "relu"
    # "bilstm": energy scales the BiLSTM output; "conv": energy scales the ST-Conv output
    modulate: Literal["bilstm", "conv"] = "bilstm"

    @model_validator(mode="after")
    def _check_stack(self) -> "FtdeConfig":
        if len(self.conv_channels) != len(self.conv_kernels):
            raise ValueError("ftde.conv_channels and ftde.conv_kernels must have equal length")
        if any(k < 1 for k in self.conv_kernels):
            raise ValueError("ftde.conv_kernels must all be >= 1")
        return self


class FinslerConfig(_Section):
    phi_hidden: int = Field(32, ge=1)
    alpha_init: float = Field(1.0, gt=0.0)
    epsilon_energy: float = Field(1e-6, gt=0.0)


class FusionConfig(_Section):
    attn_heads: int = Field(4, ge=1)
    epsilon_ot: float = Field(0.1, gt=0.0)
    max_sinkhorn_iters: int = Field(200, ge=1)
    sinkhorn_tol: float = Field(1e-6, gt=0.0)
    lambda_time: float = Field(0.1, ge=0.0)
    lambda_feat: float = Field(1.0, ge=0.0)
    proj_dim: int = Field(32, ge=1)
    alpha_loss: float = Field(0.5, ge=0.0)
    num_classes: int = Field(10, ge=2)
    residual: bool = True

    @model_validator(mode="after")
    def _check_weights(self) -> "FusionConfig":
        if self.lambda_feat + self.lambda_time <= 0:
            raise ValueError("fusion.lambda_feat + fusion.lambda_time must be > 0")
        return self


class ScheduleConfig(_Section):
    lr_max: float = Field(3e-3, gt=0.0)
    lr_min: float = Field(1e-5, ge=0.0)

    @model_validator(mode="after")
    def _check_order(self) -> "ScheduleConfig":
        if self.lr_min > self.lr_max:
            raise ValueError("schedule.lr_min must not exceed schedule.lr_max")
        return self


class OptimizerConfig(_Section):
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    weight_decay: float = Field(0.01, ge=0.0)


class TrainConfig(_Section):
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    tssn: TssnConfig = Field(default_factory=TssnConfig)
    ftde: FtdeConfig = Field(default_factory=FtdeConfig)
    finsler: FinslerConfig = Field(default_factory=FinslerConfig)
    fusion: FusionConfig = Field(default_factory=FusionConfig)
    schedule: ScheduleConfig = Field(default_factory=ScheduleConfig)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)

    mode: AblationMode = "dual_geo_ot"
    batch_size: int = Field(16, ge=1)
    eval_batch_size: int = Field(64, ge=1)
    epochs: int = Field(30, ge=0)
    # stop once an epoch ends with at least this train accuracy (percent)
    stop_train_accuracy: Optional[float] = Field(None, gt=0.0, le=100.0)
    seed: int = Field(0, ge=0)
    # ε of the facial semantic frame
    epsilon: float = Field(1e-6, gt=0.0)
    dropout: float = Field(0.1, ge=0.0, lt=1.0)
    ablation_seeds: List[int] = Field(default_factory=lambda: [0, 1, 2])
    robustness_rates: List[float] = Field(default_factory=lambda: [0.0, 0.05, 0.10, 0.15])
    dropout_pattern: Literal["random", "burst"] = "random"

    @field_validator("robustness_rates")
    @classmethod
    def _check_rates(cls, rates: List[float]) -> List[float]:
        for rate in rates:
            if not 0.0 <= rate < 1.0:
                raise ValueError(f"robustness rate {rate} outside [0, 1)")
        return rates

    @model_validator(mode="after")
    def _check_classes(self) -> "TrainConfig":
        if self.dataset.source == "synthetic":
            expected = self.dataset.num_synthetic_classes
            if self.fusion.num_classes != expected:
                raise ValueError(
                    f"fusion.num_classes={self.fusion.num_classes} but the synthetic grid has "
                    f"{expected} classes"
                )
        return self

    def with_overrides(self, **updates: Any) -> "TrainConfig":
        """Return a validated copy with top-level fields replaced."""
        data = self.model_dump()
        data.update(updates)
        return TrainConfig.model_validate(data)


def _field_annotation(model_cls: type, dotted: List[str]) -> Any:
    annotation: Any = model_cls
    for part in dotted:
        fields = getattr(annotation, "model_fields", None)
        if fields is None or part not in fields:
            raise ConfigError(f"Unknown config key: {'.'.join(dotted)}")
        annotation = fields[part].annotation
    return annotation


def _is_sequence_annotation(annotation: Any) -> bool:
    origin = typing.get_origin(annotation)
    if origin is typing.Union:
        return any(_is_sequence_annotation(arg) for arg in typing.get_args(annotation))
    return origin in (list, tuple)


def parse_config_text(text: str) -> Dict[str, Any]:
    """Parse key=value lines into the nested dict TrainConfig expects."""
    tree: Dict[str, Any] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {raw_line!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        dotted = key.split(".")
        annotation = _field_annotation(TrainConfig, dotted)

        parsed: Any = value
        if _is_sequence_annotation(annotation):
            parsed = [item.strip() for item in value.split(",") if item.strip()]

        node = tree
        for part in dotted[:-1]:
            node = node.setdefault(part, {})
        node[dotted[-1]] = parsed
    return tree


def load_config(path: Optional[Path] = None, **overrides: Any) -> TrainConfig:
    """
    Load a TrainConfig from a key=value file (or defaults when path is None).

    Args:
        path: config file path
        overrides: top-level fields applied after the file (e.g. seed from --seed)

    Returns:
        validated TrainConfig
    """
    tree: Dict[str, Any] = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        tree = parse_config_text(text)
    tree.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig.model_validate(tree)
    except ValidationError as e:
        raise ConfigError(str(e)) from e


def config_to_text(config: TrainConfig) -> str:
    """Render a TrainConfig back into the key=value format (sorted keys)."""
    lines: List[str] = []

    def walk(prefix: str, value: Any) -> None:
        if isinstance(value, dict):
            for key in sorted(value):
                walk(f"{prefix}.{key}" if prefix else key, value[key])
            return
        if value is None:
            return
        if isinstance(value, (list, tuple)):
            lines.append(f"{prefix}={','.join(str(v) for v in value)}")
        else:
            lines.append(f"{prefix}={value}")

    walk("", config.model_dump(mode="json"))
    return "\n".join(lines) + "\n"
