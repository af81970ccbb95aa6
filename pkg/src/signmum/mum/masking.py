"""Mask plan sampling and application for masked-unit pretraining.

Frame indices are 0-based throughout. A plan first picks floor(ratio * T)
distinct frames, then draws a per-part pattern for each masked frame
according to the masking case:

* ``both``: each of (left, right, body) masks independently with
  probability 0.5; an all-unmasked pattern is redrawn, which makes the
  conditional per-part rate 4/7.
* ``hand_only``: body never masks; at least one hand masks per frame.
* ``body_only``: body always masks; hands never do.
* ``all_parts``: every masked frame masks all three parts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

MASK_CASES = ("both", "hand_only", "body_only", "all_parts")


@dataclass(frozen=True)
class MaskPlan:
    """Which frames mask which parts; the part sets jointly cover masked_frames."""

    seq_len: int
    masked_frames: tuple[int, ...]
    left: frozenset
    right: frozenset
    body: frozenset

    def __post_init__(self):
        frames = tuple(sorted(int(t) for t in self.masked_frames))
        if len(set(frames)) != len(frames):
            raise ValueError("masked_frames must be distinct")
        if frames and not (0 <= frames[0] and frames[-1] < self.seq_len):
            raise ValueError(f"masked frame index outside [0, {self.seq_len})")
        left = frozenset(int(t) for t in self.left)
        right = frozenset(int(t) for t in self.right)
        body = frozenset(int(t) for t in self.body)
        if left | right | body != set(frames):
            raise ValueError("part sets must cover exactly the masked frames")
        object.__setattr__(self, "masked_frames", frames)
        object.__setattr__(self, "left", left)
        object.__setattr__(self, "right", right)
        object.__setattr__(self, "body", body)

    def __len__(self) -> int:
        return len(self.masked_frames)

    @property
    def part_positions(self) -> int:
        """Count of masked (frame, part) pairs."""
        return len(self.left) + len(self.right) + len(self.body)


def _part_pattern(rng: np.random.Generator, case: str) -> tuple[bool, bool, bool]:
    if case == "all_parts":
        return True, True, True
    if case == "body_only":
        return False, False, True
    if case == "hand_only":
        while True:
            l, r = rng.random(2) < 0.5
            if l or r:
                return bool(l), bool(r), False
    while True:  # both
        l, r, b = rng.random(3) < 0.5
        if l or r or b:
            return bool(l), bool(r), bool(b)


def sample_mask(seq_len: int, ratio: float, seed: int, case: str = "both") -> MaskPlan:
    """Draw a mask plan; a pure function of (seq_len, ratio, seed, case).

    floor() of ratio * seq_len frames are masked, with a tiny tolerance so
    binary rounding cannot drop a frame when the product is integral.
    """
    if seq_len < 1:
        raise ValueError("seq_len must be at least 1")
    if not 0.0 <= ratio <= 1.0:
        raise ValueError("mask ratio must lie in [0, 1]")
    if case not in MASK_CASES:
        raise ValueError(f"unknown mask case {case!r}; expected one of {MASK_CASES}")
    count = int(math.floor(ratio * seq_len + 1e-9))
    rng = np.random.default_rng(seed)
    if count:
        frames = sorted(int(t) for t in rng.choice(seq_len, size=count, replace=False))
    else:
        frames = []
    left, right, body = set(), set(), set()
    for t in frames:
        l, r, b = _part_pattern(rng, case)
        if l:
            left.add(t)
        if r:
            right.add(t)
        if b:
            body.add(t)
    return MaskPlan(seq_len, tuple(frames), frozenset(left), frozenset(right), frozenset(body))


def apply_mask(
    embeddings,
    plan: MaskPlan,
    mask_token: torch.Tensor,
    temporal: torch.Tensor,
) -> torch.Tensor:
    """Replace masked part slices with the mask token, then add temporal encoding.

    Args:
        embeddings: (T, D) tensor, or a list of UnitEmbedding.
        plan: mask plan with seq_len T.
        mask_token: learnable vector of width D/3.
        temporal: (T, D) temporal encoding table.

    Returns:
        (T, D) tensor ready for the sequence encoder.
    """
    if isinstance(embeddings, (list, tuple)):
        rows = [torch.as_tensor(e.concat(), dtype=mask_token.dtype) for e in embeddings]
        x = torch.stack(rows)
    else:
        x = embeddings
    if x.dim() != 2:
        raise ValueError(f"embeddings must be (T, D), got shape {tuple(x.shape)}")
    seq_len, dim = x.shape
    if plan.seq_len != seq_len:
        raise ValueError(f"plan covers {plan.seq_len} frames but embeddings have {seq_len}")
    if dim % 3:
        raise ValueError("embedding width must be divisible by 3")
    part = dim // 3
    if mask_token.shape != (part,):
        raise ValueError(f"mask token must have shape ({part},), got {tuple(mask_token.shape)}")
    if temporal.shape != (seq_len, dim):
        raise ValueError(
            f"temporal table must have shape ({seq_len}, {dim}), got {tuple(temporal.shape)}"
        )

    out = x.clone()
    slices = {
        "left": slice(0, part),
        "right": slice(part, 2 * part),
        "body": slice(2 * part, dim),
    }
    for name, sl in slices.items():
        for t in getattr(plan, name):
            out[t, sl] = mask_token
    return out + temporal
