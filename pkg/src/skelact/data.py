"""Skeleton sequence parsing, normalization, geometry, and synthetic data.

A skeleton frame is a ``(J, 3)`` float64 array of joint coordinates; a
sequence is a stack of frames plus a class label. The on-disk format is
UTF-8 JSON Lines, one sequence per line::

    {"label": <int>, "frames": [[[x, y, z], ...J entries], ...]}

Writers emit joints in fixed skeleton order; readers reject ragged frames.
All randomness is driven by explicit seeds, so every function here is pure.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigError",
    "DatasetFormatError",
    "DatasetSpec",
    "SkeletonSequence",
    "normalize_frame",
    "normalize_sequence",
    "compute_lines",
    "sequence_lines",
    "fix_length",
    "load_dataset",
    "save_dataset",
    "class_template",
    "generate_synthetic",
]


class ConfigError(ValueError):
    """Invalid configuration value."""


class DatasetFormatError(ValueError):
    """Dataset file violates the JSON-lines skeleton format."""


@dataclass(frozen=True)
class DatasetSpec:
    """Static facts about a dataset's skeleton layout and label space."""

    num_joints: int
    num_classes: int
    hip_reference_indices: tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.num_joints < 2:
            raise ConfigError(f"num_joints must be >= 2, got {self.num_joints}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        refs = tuple(int(i) for i in self.hip_reference_indices)
        if not refs:
            raise ConfigError("hip_reference_indices must be nonempty")
        for i in refs:
            if not (0 <= i < self.num_joints):
                raise ConfigError(
                    f"hip reference index {i} out of range for "
                    f"{self.num_joints} joints"
                )
        object.__setattr__(self, "hip_reference_indices", refs)


@dataclass
class SkeletonSequence:
    """An ordered stack of frames ``(n_frames, J, 3)`` and a class label."""

    frames: np.ndarray
    label: int

    def __post_init__(self):
        self.frames = np.ascontiguousarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 3 or self.frames.shape[2] != 3:
            raise DatasetFormatError(
                f"frames must have shape (n, J, 3), got {self.frames.shape}"
            )

    @property
    def num_frames(self) -> int:
        return self.frames.shape[0]


def normalize_frame(frame: np.ndarray, spec: DatasetSpec) -> np.ndarray:
    """Translate a frame so the mean of the hip-reference joints is the origin."""
    frame = np.asarray(frame, dtype=np.float64)
    if frame.shape != (spec.num_joints, 3):
        raise DatasetFormatError(
            f"expected frame shape ({spec.num_joints}, 3), got {frame.shape}"
        )
    center = frame[list(spec.hip_reference_indices)].mean(axis=0)
    return frame - center


def normalize_sequence(frames: np.ndarray, spec: DatasetSpec) -> np.ndarray:
    """Hip-center every frame of a ``(n, J, 3)`` stack.

    All-zero padding frames stay exactly zero because their reference mean
    is already the origin.
    """
    frames = np.asarray(frames, dtype=np.float64)
    centers = frames[:, list(spec.hip_reference_indices), :].mean(axis=1)
    return frames - centers[:, None, :]


def compute_lines(frame: np.ndarray) -> np.ndarray:
    """Pairwise-difference features for one frame.

    Row ``i`` is the concatenation of ``c_i - c_j`` over all ``j != i`` in
    ascending ``j`` order (the self pair is omitted), so each row has
    ``3 * (J - 1)`` entries. Translation-invariant and antisymmetric:
    the block of row ``i`` toward ``j`` is the negation of row ``j``'s
    block toward ``i``.
    """
    frame = np.asarray(frame, dtype=np.float64)
    j = frame.shape[0]
    if j < 2:
        raise ValueError(f"line features need at least 2 joints, got {j}")
    diff = frame[:, None, :] - frame[None, :, :]
    keep = ~np.eye(j, dtype=bool)
    return diff[keep].reshape(j, (j - 1) * 3)


def sequence_lines(frames: np.ndarray) -> np.ndarray:
    """Apply :func:`compute_lines` to every frame of a ``(T, J, 3)`` stack."""
    return np.stack([compute_lines(f) for f in frames])


def fix_length(seq: SkeletonSequence, target_len: int, rng) -> SkeletonSequence:
    """Pad or subsample a sequence to exactly ``target_len`` frames.

    Shorter sequences keep their frames followed by all-zero padding frames;
    longer ones keep a uniformly random subset of frame indices in ascending
    order (temporal order preserved). Exactly-``target_len`` input is
    returned unchanged.
    """
    if target_len <= 0:
        raise ConfigError(f"target length must be positive, got {target_len}")
    if seq.num_frames == 0:
        raise ValueError("cannot length-fix an empty sequence")
    n = seq.num_frames
    if n == target_len:
        return seq
    if n < target_len:
        pad = np.zeros((target_len - n,) + seq.frames.shape[1:])
        return SkeletonSequence(np.concatenate([seq.frames, pad]), seq.label)
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    keep = np.sort(gen.choice(n, size=target_len, replace=False))
    return SkeletonSequence(seq.frames[keep], seq.label)


# ---------------------------------------------------------------------------
# JSON-lines I/O
# ---------------------------------------------------------------------------

def _parse_line(obj, lineno: int, spec: DatasetSpec) -> SkeletonSequence:
    if not isinstance(obj, dict) or "label" not in obj or "frames" not in obj:
        raise DatasetFormatError(
            f"line {lineno}: expected an object with 'label' and 'frames'"
        )
    label = obj["label"]
    if not isinstance(label, int) or isinstance(label, bool):
        raise DatasetFormatError(f"line {lineno}: label must be an integer")
    if not (0 <= label < spec.num_classes):
        raise DatasetFormatError(
            f"line {lineno}: label {label} out of range "
            f"[0, {spec.num_classes})"
        )
    raw = obj["frames"]
    if not isinstance(raw, list) or not raw:
        raise DatasetFormatError(f"line {lineno}: frames must be a nonempty list")
    for t, fr in enumerate(raw):
        if not isinstance(fr, list) or len(fr) != spec.num_joints:
            found = len(fr) if isinstance(fr, list) else type(fr).__name__
            raise DatasetFormatError(
                f"line {lineno}: frame {t} has {found} joints, "
                f"expected {spec.num_joints}"
            )
        for jt in fr:
            if not isinstance(jt, list) or len(jt) != 3:
                raise DatasetFormatError(
                    f"line {lineno}: frame {t} has a joint without exactly "
                    "3 coordinates"
                )
    frames = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(frames).all():
        raise DatasetFormatError(f"line {lineno}: non-finite coordinate")
    return SkeletonSequence(frames, label)


def load_dataset(path, spec: DatasetSpec) -> list[SkeletonSequence]:
    """Read and validate a JSON-lines skeleton dataset, preserving order."""
    sequences = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetFormatError(
                    f"line {lineno}: invalid JSON ({exc.msg})"
                ) from exc
            sequences.append(_parse_line(obj, lineno, spec))
    return sequences


def save_dataset(path, sequences: list[SkeletonSequence]) -> None:
    """Write sequences as JSON lines; exact float round-trip with
    :func:`load_dataset`."""
    with open(path, "w", encoding="utf-8") as fh:
        for seq in sequences:
            fh.write(json.dumps(
                {"label": int(seq.label), "frames": seq.frames.tolist()}
            ))
            fh.write("\n")


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

_BASE_SPACING = 0.3
_OSC_AMPLITUDE = 1.0


def class_template(label: int, n_frames: int, num_joints: int) -> np.ndarray:
    """Noise-free trajectory for one class: a resting chain of joints with
    joint ``label % J`` oscillating along axis ``label % 3`` at a
    class-specific frequency."""
    base = np.zeros((num_joints, 3))
    base[:, 0] = _BASE_SPACING * np.arange(num_joints)
    base[:, 1] = 0.1 * (np.arange(num_joints) % 2)
    frames = np.repeat(base[None, :, :], n_frames, axis=0)
    joint = label % num_joints
    axis = label % 3
    omega = 2.0 * np.pi * (label + 1) / 16.0
    frames[:, joint, axis] += _OSC_AMPLITUDE * np.sin(omega * np.arange(n_frames))
    return frames


def generate_synthetic(
    num_classes: int,
    samples_per_class: int,
    num_joints: int,
    frame_range: tuple[int, int],
    rng_seed: int,
    noise_scale: float = 0.01,
) -> list[SkeletonSequence]:
    """Labeled synthetic sequences, deterministic given the seed.

    Each sample is its class template plus Gaussian noise on every joint,
    with the frame count drawn uniformly from ``frame_range`` (inclusive)
    so both the padding and the subsampling path of :func:`fix_length` get
    exercised downstream.
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    if num_joints < 2:
        raise ConfigError(f"need at least 2 joints, got {num_joints}")
    lo, hi = int(frame_range[0]), int(frame_range[1])
    if lo < 1 or hi < lo:
        raise ConfigError(f"invalid frame range ({lo}, {hi})")
    gen = np.random.default_rng(rng_seed)
    sequences = []
    for label in range(num_classes):
        for _ in range(samples_per_class):
            n_frames = int(gen.integers(lo, hi + 1))
            frames = class_template(label, n_frames, num_joints)
            if noise_scale > 0:
                frames = frames + gen.normal(
                    0.0, noise_scale, size=frames.shape
                )
            sequences.append(SkeletonSequence(frames, label))
    return sequences
