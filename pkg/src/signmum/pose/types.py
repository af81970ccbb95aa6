"""Data model for pose triplet sequences.

Coordinates are stored as float64. Normalized units live in per-part crop
space, so every valid part lies inside the unit square; invalid parts are
zero-filled. Instances are immutable after construction (arrays are marked
read-only) and safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

BODY_JOINTS = 7
HAND_JOINTS = 21


@dataclass(frozen=True)
class PoseLayout:
    """Joint layout of raw detector frames: body rows first, then left and right hand."""

    body_joints: int = BODY_JOINTS
    left_joints: int = HAND_JOINTS
    right_joints: int = HAND_JOINTS

    @property
    def total_joints(self) -> int:
        return self.body_joints + self.left_joints + self.right_joints

    def split(self, rows: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Split stacked joint rows into (body, left, right) views."""
        b = self.body_joints
        m = b + self.left_joints
        return rows[:b], rows[b:m], rows[m:]


DEFAULT_LAYOUT = PoseLayout()


class PartValid(NamedTuple):
    body: bool
    left: bool
    right: bool


ALL_PARTS_VALID = PartValid(True, True, True)


def _frozen_array(values, shape: tuple[int, ...], name: str) -> np.ndarray:
    arr = np.array(values, dtype=np.float64, copy=True)
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RawPoseFrame:
    """One detector frame: joints of (x, y, confidence) in pixel space."""

    joints: np.ndarray
    layout: PoseLayout = DEFAULT_LAYOUT

    def __post_init__(self):
        joints = _frozen_array(self.joints, (self.layout.total_joints, 3), "joints")
        if not np.isfinite(joints[:, :2]).all():
            raise ValueError("joint coordinates must be finite")
        conf = joints[:, 2]
        if not (np.isfinite(conf).all() and (conf >= 0.0).all() and (conf <= 1.0).all()):
            raise ValueError("confidences must lie in [0, 1]")
        object.__setattr__(self, "joints", joints)

    def split_parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.layout.split(self.joints)


@dataclass(frozen=True)
class PoseTripletUnit:
    """Normalized per-frame triple of body, left-hand and right-hand keypoints.

    Args:
        body: (7, 2) array in [0, 1].
        left: (21, 2) array in [0, 1].
        right: (21, 2) array in [0, 1].
        part_valid: per-part flags; an invalid part must be zero-filled.
    """

    body: np.ndarray
    left: np.ndarray
    right: np.ndarray
    part_valid: PartValid = ALL_PARTS_VALID

    def __post_init__(self):
        valid = PartValid(*self.part_valid)
        object.__setattr__(self, "part_valid", valid)
        shapes = {
            "body": (BODY_JOINTS, 2),
            "left": (HAND_JOINTS, 2),
            "right": (HAND_JOINTS, 2),
        }
        for name, shape in shapes.items():
            arr = _frozen_array(getattr(self, name), shape, name)
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} coordinates must be finite")
            if getattr(valid, name):
                if arr.min() < 0.0 or arr.max() > 1.0:
                    raise ValueError(f"{name} coordinates must lie in [0, 1]")
            elif np.count_nonzero(arr):
                raise ValueError(f"invalid part {name!r} must be zero-filled")
            object.__setattr__(self, name, arr)


class PartArrays(NamedTuple):
    """Stacked per-part views of a sequence; valid columns are (body, left, right)."""

    body: np.ndarray   # (T, 7, 2)
    left: np.ndarray   # (T, 21, 2)
    right: np.ndarray  # (T, 21, 2)
    valid: np.ndarray  # (T, 3) bool


@dataclass(frozen=True)
class PoseSequence:
    """A labeled or unlabeled sequence of pose triplet units."""

    frames: tuple[PoseTripletUnit, ...]
    sample_id: str
    label: Optional[int] = None

    def __post_init__(self):
        frames = tuple(self.frames)
        if not frames:
            raise ValueError("a pose sequence needs at least one frame")
        object.__setattr__(self, "frames", frames)
        object.__setattr__(self, "sample_id", str(self.sample_id))
        if self.label is not None:
            object.__setattr__(self, "label", int(self.label))

    def __len__(self) -> int:
        return len(self.frames)

    def part_arrays(self) -> PartArrays:
        body = np.stack([f.body for f in self.frames])
        left = np.stack([f.left for f in self.frames])
        right = np.stack([f.right for f in self.frames])
        valid = np.array([list(f.part_valid) for f in self.frames], dtype=bool)
        return PartArrays(body, left, right, valid)


def sequence_from_arrays(
    body: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
    valid: Optional[np.ndarray] = None,
    sample_id: str = "",
    label: Optional[int] = None,
) -> PoseSequence:
    """Build a PoseSequence from stacked (T, joints, 2) part arrays."""
    frames = []
    for t in range(body.shape[0]):
        flags = ALL_PARTS_VALID if valid is None else PartValid(*(bool(v) for v in valid[t]))
        frames.append(PoseTripletUnit(body[t], left[t], right[t], flags))
    return PoseSequence(tuple(frames), sample_id=sample_id, label=label)


@dataclass(frozen=True)
class PoseDataset:
    """A collection of pose sequences plus class metadata.

    num_classes may be 0 for unlabeled corpora. When class names are omitted
    they are synthesized as ``class_000`` style placeholders.
    """

    sequences: tuple[PoseSequence, ...]
    num_classes: int = 0
    vocabulary: tuple[str, ...] = ()

    def __post_init__(self):
        sequences = tuple(self.sequences)
        object.__setattr__(self, "sequences", sequences)
        if self.num_classes < 0:
            raise ValueError("num_classes must be non-negative")
        vocabulary = tuple(str(v) for v in self.vocabulary)
        if vocabulary and len(vocabulary) != self.num_classes:
            raise ValueError(
                f"vocabulary has {len(vocabulary)} names but num_classes is {self.num_classes}"
            )
        if not vocabulary and self.num_classes:
            vocabulary = tuple(f"class_{i:03d}" for i in range(self.num_classes))
        object.__setattr__(self, "vocabulary", vocabulary)
        for seq in sequences:
            if seq.label is None:
                continue
            if self.num_classes == 0 or not 0 <= seq.label < self.num_classes:
                raise ValueError(
                    f"sample {seq.sample_id!r} has label {seq.label} outside "
                    f"[0, {self.num_classes})"
                )

    def __len__(self) -> int:
        return len(self.sequences)

    @property
    def labeled(self) -> bool:
        return bool(self.sequences) and all(s.label is not None for s in self.sequences)

    def labels(self) -> np.ndarray:
        if not self.labeled:
            raise ValueError("dataset is not fully labeled")
        return np.array([s.label for s in self.sequences], dtype=np.int64)
