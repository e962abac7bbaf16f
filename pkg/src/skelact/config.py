"""Model and training hyperparameters, presets, and config file I/O.

The config file is a JSON object whose keys mirror :class:`ModelConfig`
field names exactly; unknown keys are rejected.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace

from .data import ConfigError

__all__ = ["ModelConfig", "PRESETS", "load_config", "save_config"]

FUSION_WEIGHT_TOL = 1e-9


@dataclass
class ModelConfig:
    """Everything that determines a model's shape and its training run."""

    num_joints: int
    num_classes: int
    seq_len: int
    embed_dim: int = 16
    rrn_iterations: int = 3
    attention_dim: int = 32
    lstm_widths: tuple[int, ...] = (32, 32)
    joint_weight: float = 0.5
    line_weight: float = 0.5
    optimizer: str = "adam"
    learning_rate: float = 1e-3
    lr_decay_factor: float = 0.1
    plateau_patience: int = 5
    batch_size: int = 8
    epochs: int = 50
    rng_seed: int = 0
    hip_reference_indices: tuple[int, ...] = (0,)

    def __post_init__(self):
        self.lstm_widths = tuple(int(w) for w in self.lstm_widths)
        self.hip_reference_indices = tuple(
            int(i) for i in self.hip_reference_indices
        )
        self.validate()

    @property
    def num_lstm_layers(self) -> int:
        return len(self.lstm_widths)

    def validate(self) -> None:
        checks = [
            (self.num_joints >= 2, f"num_joints must be >= 2, got {self.num_joints}"),
            (self.num_classes >= 2, f"num_classes must be >= 2, got {self.num_classes}"),
            (self.seq_len >= 1, f"seq_len must be >= 1, got {self.seq_len}"),
            (self.embed_dim >= 1, f"embed_dim must be >= 1, got {self.embed_dim}"),
            (self.rrn_iterations >= 1,
             f"rrn_iterations must be >= 1, got {self.rrn_iterations}"),
            (self.attention_dim >= 1,
             f"attention_dim must be >= 1, got {self.attention_dim}"),
            (len(self.lstm_widths) >= 1, "lstm_widths must be nonempty"),
            (all(w >= 1 for w in self.lstm_widths),
             f"lstm widths must be positive, got {self.lstm_widths}"),
            (self.joint_weight >= 0.0 and self.line_weight >= 0.0,
             "fusion weights must be nonnegative"),
            (abs(self.joint_weight + self.line_weight - 1.0) <= FUSION_WEIGHT_TOL,
             f"fusion weights must sum to 1, got "
             f"{self.joint_weight} + {self.line_weight}"),
            (self.optimizer in ("sgd", "adam"),
             f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}"),
            (self.learning_rate > 0.0,
             f"learning_rate must be positive, got {self.learning_rate}"),
            (0.0 < self.lr_decay_factor <= 1.0,
             f"lr_decay_factor must be in (0, 1], got {self.lr_decay_factor}"),
            (self.plateau_patience >= 1,
             f"plateau_patience must be >= 1, got {self.plateau_patience}"),
            (self.batch_size >= 1, f"batch_size must be >= 1, got {self.batch_size}"),
            (self.epochs >= 0, f"epochs must be >= 0, got {self.epochs}"),
            (len(self.hip_reference_indices) >= 1,
             "hip_reference_indices must be nonempty"),
            (all(0 <= i < self.num_joints for i in self.hip_reference_indices),
             f"hip_reference_indices {self.hip_reference_indices} out of "
             f"range for {self.num_joints} joints"),
        ]
        for ok, message in checks:
            if not ok:
                raise ConfigError(message)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lstm_widths"] = list(self.lstm_widths)
        d["hip_reference_indices"] = list(self.hip_reference_indices)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        missing = {"num_joints", "num_classes", "seq_len"} - set(d)
        if missing:
            raise ConfigError(f"missing required config keys: {sorted(missing)}")
        return cls(**d)


def load_config(path) -> ModelConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc.msg}") from exc
    if not isinstance(d, dict):
        raise ConfigError("config file must hold a JSON object")
    return ModelConfig.from_dict(d)


def save_config(path, config: ModelConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")


def _preset(**kwargs) -> ModelConfig:
    return ModelConfig(**kwargs)


# Full-scale defaults per dataset. The middle LSTM width is the per-dataset
# knob; the first layer follows the middle width and the top layer is always
# 512. The 5-joint hip reference set of the 25-joint preset covers the
# spine-base/spine-mid/hips/spine-shoulder region and, like everything else
# here, is configurable per dataset.
PRESETS: dict[str, ModelConfig] = {
    "ntu-rgbd": _preset(
        num_joints=25, num_classes=60, seq_len=100, embed_dim=50,
        rrn_iterations=5, attention_dim=256, lstm_widths=(512, 512, 512),
        optimizer="sgd", learning_rate=0.01, lr_decay_factor=0.1,
        plateau_patience=5, hip_reference_indices=(0, 1, 12, 16, 20),
    ),
    "florence-3d": _preset(
        num_joints=15, num_classes=9, seq_len=25, embed_dim=20,
        rrn_iterations=5, attention_dim=256, lstm_widths=(256, 256, 512),
        optimizer="adam", learning_rate=1e-3,
    ),
    "msr-action3d": _preset(
        num_joints=20, num_classes=20, seq_len=20, embed_dim=20,
        rrn_iterations=5, attention_dim=256, lstm_widths=(256, 256, 512),
        optimizer="adam", learning_rate=1e-3,
    ),
}


def tiny_config(**overrides) -> ModelConfig:
    """Small configuration suited to gradient checking and quick tests."""
    base = dict(
        num_joints=4, num_classes=3, seq_len=3, embed_dim=6,
        rrn_iterations=2, attention_dim=8, lstm_widths=(8, 8),
        batch_size=4, epochs=5, rng_seed=0,
    )
    base.update(overrides)
    return ModelConfig(**base)
