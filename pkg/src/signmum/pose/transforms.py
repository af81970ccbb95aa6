"""Geometric and sampling transforms over pose frames, sequences and datasets.

Every randomized transform here is a pure function of (input, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .types import (
    PartValid,
    PoseDataset,
    PoseSequence,
    PoseTripletUnit,
    RawPoseFrame,
    sequence_from_arrays,
)


def _normalize_part(xyc: np.ndarray, conf_threshold: float, margin: float):
    """Map one part's pixel keypoints into its expanded-crop unit square.

    Joints at or above the confidence threshold define the bounding box; the
    box is expanded by ``margin`` per side of its longer edge and the mapping
    is aspect-preserving, so the result is invariant to translation and
    uniform scaling of the raw coordinates. Low-confidence joints are still
    carried through the same affine map. A part with no confident joint is
    zero-filled and flagged invalid.
    """
    xy = xyc[:, :2]
    keep = xyc[:, 2] >= conf_threshold
    if not keep.any():
        return np.zeros_like(xy), False
    sel = xy[keep]
    lo = sel.min(axis=0)
    hi = sel.max(axis=0)
    side = float((hi - lo).max())
    if side <= 0.0:
        side = 1.0  # degenerate box: treat as a unit pixel window
    expanded = side * (1.0 + 2.0 * margin)
    origin = (lo + hi) / 2.0 - expanded / 2.0
    out = (xy - origin) / expanded
    return np.clip(out, 0.0, 1.0), True


def crop_and_rescale(
    frame: RawPoseFrame,
    conf_threshold: float = 0.3,
    margin: float = 0.2,
) -> PoseTripletUnit:
    """Crop each part around its confident joints and rescale to [0, 1]^2.

    Args:
        frame: raw detector frame in pixel space.
        conf_threshold: joints with confidence >= this value define the box.
        margin: box expansion per side, as a fraction of the box size.

    Returns:
        Normalized PoseTripletUnit with per-part validity flags.
    """
    body_xyc, left_xyc, right_xyc = frame.split_parts()
    body, body_ok = _normalize_part(body_xyc, conf_threshold, margin)
    left, left_ok = _normalize_part(left_xyc, conf_threshold, margin)
    right, right_ok = _normalize_part(right_xyc, conf_threshold, margin)
    return PoseTripletUnit(body, left, right, PartValid(body_ok, left_ok, right_ok))


def sample_frames(seq: PoseSequence, num_frames: int, mode: str = "center", seed: int = 0) -> PoseSequence:
    """Sample a fixed-length frame subset from a sequence.

    Sequences shorter than ``num_frames`` are padded by repeating the last
    frame. ``center`` picks a deterministic centered uniform stride; ``random``
    picks a sorted random index subset without replacement.
    """
    if num_frames < 1:
        raise ValueError("num_frames must be at least 1")
    length = len(seq)
    if length < num_frames:
        indices = list(range(length)) + [length - 1] * (num_frames - length)
    elif mode == "center":
        indices = [int(math.floor((i + 0.5) * length / num_frames)) for i in range(num_frames)]
    elif mode == "random":
        rng = np.random.default_rng(seed)
        indices = sorted(int(i) for i in rng.choice(length, size=num_frames, replace=False))
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    frames = tuple(seq.frames[i] for i in indices)
    return PoseSequence(frames, sample_id=seq.sample_id, label=seq.label)


@dataclass(frozen=True)
class JitterParams:
    """Bounds for label-preserving augmentation.

    One affine jitter (uniform scale, rotation about the crop center,
    translation) is drawn per sequence; Gaussian noise is drawn per joint.
    """

    scale: float = 0.1
    rotation_deg: float = 10.0
    translation: float = 0.05
    noise_sigma: float = 0.01


def perturb(seq: PoseSequence, seed: int, params: JitterParams = JitterParams()) -> PoseSequence:
    """Apply one random affine jitter plus per-joint noise to a sequence.

    The transform is written in delta form, so all-zero bounds reproduce the
    input bit-exactly. Outputs are clamped to [0, 1]; invalid parts stay
    zero-filled.
    """
    rng = np.random.default_rng(seed)
    s = rng.uniform(1.0 - params.scale, 1.0 + params.scale)
    theta = math.radians(rng.uniform(-params.rotation_deg, params.rotation_deg))
    shift = rng.uniform(-params.translation, params.translation, size=2)
    # (s*R - I) applied about the crop center (0.5, 0.5)
    a = s * math.cos(theta) - 1.0
    b = s * math.sin(theta)

    arrays = seq.part_arrays()
    moved = []
    for part in (arrays.body, arrays.left, arrays.right):
        noise = rng.normal(0.0, params.noise_sigma, size=part.shape)
        cx = part[..., 0] - 0.5
        cy = part[..., 1] - 0.5
        dx = a * cx - b * cy + shift[0] + noise[..., 0]
        dy = b * cx + a * cy + shift[1] + noise[..., 1]
        out = np.stack([part[..., 0] + dx, part[..., 1] + dy], axis=-1)
        moved.append(np.clip(out, 0.0, 1.0))
    body, left, right = moved
    body[~arrays.valid[:, 0]] = 0.0
    left[~arrays.valid[:, 1]] = 0.0
    right[~arrays.valid[:, 2]] = 0.0
    return sequence_from_arrays(
        body, left, right, arrays.valid, sample_id=seq.sample_id, label=seq.label
    )


def _grouped_indices(dataset: PoseDataset) -> dict:
    groups: dict = {}
    for i, seq in enumerate(dataset.sequences):
        groups.setdefault(seq.label, []).append(i)
    return groups


def split_dataset(dataset: PoseDataset, test_fraction: float, seed: int = 0):
    """Deterministic stratified train/test split.

    When the dataset is labeled the split is per class and keeps at least one
    training sample per class. Returns (train, test).
    """
    if not 0.0 <= test_fraction < 1.0:
        raise ValueError("test_fraction must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    test_idx: list = []
    for _, indices in sorted(_grouped_indices(dataset).items(), key=lambda kv: (kv[0] is None, kv[0])):
        order = rng.permutation(len(indices))
        n_test = min(int(test_fraction * len(indices)), len(indices) - 1)
        test_idx.extend(indices[j] for j in order[:n_test])
    test_set = set(test_idx)
    train_seqs = tuple(s for i, s in enumerate(dataset.sequences) if i not in test_set)
    test_seqs = tuple(s for i, s in enumerate(dataset.sequences) if i in test_set)
    train = replace(dataset, sequences=train_seqs)
    test = replace(dataset, sequences=test_seqs)
    return train, test


def take_per_class(dataset: PoseDataset, per_class: int, seed: int = 0) -> PoseDataset:
    """Keep a fixed number of randomly chosen samples for every class."""
    if not dataset.labeled:
        raise ValueError("take_per_class needs a fully labeled dataset")
    rng = np.random.default_rng(seed)
    keep: list = []
    for label, indices in sorted(_grouped_indices(dataset).items()):
        if len(indices) < per_class:
            raise ValueError(f"class {label} has only {len(indices)} samples, need {per_class}")
        order = rng.permutation(len(indices))
        keep.extend(indices[j] for j in order[:per_class])
    keep_set = set(keep)
    return replace(
        dataset, sequences=tuple(s for i, s in enumerate(dataset.sequences) if i in keep_set)
    )


def subsample_fraction(dataset: PoseDataset, fraction: float, seed: int = 0) -> PoseDataset:
    """Keep a fraction of the sequences (stratified when labels are present)."""
    if not 0.0 <= fraction <= 1.0:
        raise ValueError("fraction must lie in [0, 1]")
    if fraction == 1.0:
        return dataset
    rng = np.random.default_rng(seed)
    keep: list = []
    for _, indices in sorted(_grouped_indices(dataset).items(), key=lambda kv: (kv[0] is None, kv[0])):
        order = rng.permutation(len(indices))
        n_keep = int(round(fraction * len(indices)))
        keep.extend(indices[j] for j in order[:n_keep])
    keep_set = set(keep)
    return replace(
        dataset, sequences=tuple(s for i, s in enumerate(dataset.sequences) if i in keep_set)
    )
