"""Bidirectional Transformer backbone, token prediction heads and the
masked-unit loss."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
import torch
from torch import nn

from ..mum.embedding import PoseEmbedding, temporal_encoding
from ..mum.masking import MASK_CASES, MaskPlan, apply_mask
from ..tokenizer.model import BODY_INPUT, HAND_INPUT, TokenTriplet

OBJECTIVES = ("token", "regress")


@dataclass(frozen=True)
class EncoderConfig:
    """Shape of the pre-activation Transformer encoder."""

    model_dim: int = 1536
    layers: int = 6
    heads: int = 8
    ffn_dim: int = 2048
    dropout: float = 0.1

    def __post_init__(self):
        problems = []
        if self.model_dim % 3:
            problems.append(f"model_dim {self.model_dim} must be divisible by 3")
        if self.heads < 1 or self.model_dim % self.heads:
            problems.append(f"model_dim {self.model_dim} must be divisible by heads {self.heads}")
        if self.layers < 1:
            problems.append("layers must be at least 1")
        if self.ffn_dim < 1:
            problems.append("ffn_dim must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            problems.append("dropout must lie in [0, 1)")
        if problems:
            raise ValueError("; ".join(problems))

    @property
    def part_dim(self) -> int:
        return self.model_dim // 3


class SequenceEncoder(nn.Module):
    """Stack of pre-activation bidirectional self-attention blocks.

    Without a positional signal the stack is permutation-equivariant over
    frames; order information enters only through the temporal encoding added
    upstream.
    """

    def __init__(self, config: EncoderConfig):
        super().__init__()
        self.config = config
        layer = nn.TransformerEncoderLayer(
            d_model=config.model_dim,
            nhead=config.heads,
            dim_feedforward=config.ffn_dim,
            dropout=config.dropout,
            activation="gelu",
            batch_first=True,
            norm_first=True,
        )
        self.blocks = nn.TransformerEncoder(
            layer,
            num_layers=config.layers,
            norm=nn.LayerNorm(config.model_dim),
            enable_nested_tensor=False,
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if x.shape[-1] != self.config.model_dim:
            raise ValueError(
                f"expected width {self.config.model_dim}, got {x.shape[-1]}"
            )
        squeeze = x.dim() == 2
        if squeeze:
            x = x.unsqueeze(0)
        out = self.blocks(x)
        return out.squeeze(0) if squeeze else out


def encode_sequence(inputs, encoder: SequenceEncoder) -> torch.Tensor:
    """Deterministic encoding of (T, D) or (B, T, D) inputs (dropout off)."""
    x = inputs if isinstance(inputs, torch.Tensor) else torch.as_tensor(np.asarray(inputs))
    was_training = encoder.training
    encoder.eval()
    try:
        with torch.no_grad():
            return encoder(x)
    finally:
        if was_training:
            encoder.train()


class PredictionHeads(nn.Module):
    """Linear codeword classifiers; one shared for both hands, one for body."""

    def __init__(self, part_dim: int, hand_codes: int, body_codes: int):
        super().__init__()
        self.part_dim = part_dim
        self.hand = nn.Linear(part_dim, hand_codes)
        self.body = nn.Linear(part_dim, body_codes)


class RegressionHeads(nn.Module):
    """Linear keypoint regressors for the masked-coordinate ablation."""

    def __init__(self, part_dim: int):
        super().__init__()
        self.hand = nn.Linear(part_dim, HAND_INPUT)
        self.body = nn.Linear(part_dim, BODY_INPUT)


class TokenProbabilities(NamedTuple):
    left: torch.Tensor
    right: torch.Tensor
    body: torch.Tensor


def split_parts(features: torch.Tensor, part_dim: int):
    """Slice encoder output into (left, right, body) part features."""
    if features.shape[-1] != 3 * part_dim:
        raise ValueError(f"expected width {3 * part_dim}, got {features.shape[-1]}")
    return (
        features[..., :part_dim],
        features[..., part_dim:2 * part_dim],
        features[..., 2 * part_dim:],
    )


def predict_tokens(features: torch.Tensor, heads: PredictionHeads) -> TokenProbabilities:
    """Per-frame codeword distributions from encoder output.

    The hand head is applied to both hand slices; rows are softmax-normalized.
    """
    f_l, f_r, f_b = split_parts(features, heads.part_dim)
    return TokenProbabilities(
        torch.softmax(heads.hand(f_l), dim=-1),
        torch.softmax(heads.hand(f_r), dim=-1),
        torch.softmax(heads.body(f_b), dim=-1),
    )


def _label_arrays(pseudo_labels) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(pseudo_labels, (list, tuple)) and pseudo_labels and isinstance(
        pseudo_labels[0], TokenTriplet
    ):
        k_l = np.array([t.k_l for t in pseudo_labels])
        k_r = np.array([t.k_r for t in pseudo_labels])
        k_b = np.array([t.k_b for t in pseudo_labels])
        return k_l, k_r, k_b
    k_l, k_r, k_b = pseudo_labels
    return np.asarray(k_l), np.asarray(k_r), np.asarray(k_b)


def masked_nll(probabilities: TokenProbabilities, pseudo_labels, plan: MaskPlan):
    """Sum of -log p at masked part-positions, plus the position count."""
    k_l, k_r, k_b = _label_arrays(pseudo_labels)
    total = None
    count = 0
    for probs, labels, positions in (
        (probabilities.left, k_l, plan.left),
        (probabilities.right, k_r, plan.right),
        (probabilities.body, k_b, plan.body),
    ):
        if not positions:
            continue
        idx = sorted(positions)
        picked = probs[idx, labels[idx]]
        tiny = torch.finfo(picked.dtype).tiny
        term = -torch.log(picked.clamp(min=tiny)).sum()
        total = term if total is None else total + term
        count += len(idx)
    return total, count


def mum_loss(probabilities: TokenProbabilities, pseudo_labels, plan: MaskPlan) -> torch.Tensor:
    """Mean negative log-likelihood of pseudo-labels over masked part-positions.

    Only masked positions contribute; predictions and labels at unmasked
    positions cannot change the value. An empty plan yields 0 with a warning.
    """
    total, count = masked_nll(probabilities, pseudo_labels, plan)
    if count == 0:
        warnings.warn("mask plan is empty; masked-unit loss is 0", RuntimeWarning)
        return torch.zeros((), dtype=probabilities.left.dtype)
    return total / count


@dataclass(frozen=True)
class BackboneConfig:
    """Everything needed to rebuild the pretraining model."""

    encoder: EncoderConfig = EncoderConfig()
    hand_codes: int = 1000
    body_codes: int = 500
    seq_len: int = 32
    mask_ratio: float = 0.5
    mask_case: str = "both"
    objective: str = "token"

    def __post_init__(self):
        problems = []
        if self.hand_codes < 1 or self.body_codes < 1:
            problems.append("codebook sizes must be at least 1")
        if self.seq_len < 1:
            problems.append("seq_len must be at least 1")
        if not 0.0 <= self.mask_ratio <= 1.0:
            problems.append("mask_ratio must lie in [0, 1]")
        if self.mask_case not in MASK_CASES:
            problems.append(f"mask_case must be one of {MASK_CASES}")
        if self.objective not in OBJECTIVES:
            problems.append(f"objective must be one of {OBJECTIVES}")
        if problems:
            raise ValueError("; ".join(problems))

    def to_dict(self) -> dict:
        from dataclasses import asdict

        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "BackboneConfig":
        data = dict(data)
        data["encoder"] = EncoderConfig(**data["encoder"])
        return cls(**data)


class PretrainedModel(nn.Module):
    """Pose embedding + mask token + Transformer encoder + prediction heads."""

    type_tag = "backbone/pretrained"

    def __init__(self, config: BackboneConfig, meta: Optional[dict] = None):
        super().__init__()
        self.config = config
        part_dim = config.encoder.part_dim
        self.embedding = PoseEmbedding(part_dim)
        self.mask_token = nn.Parameter(torch.randn(part_dim) * 0.02)
        self.encoder = SequenceEncoder(config.encoder)
        self.heads = PredictionHeads(part_dim, config.hand_codes, config.body_codes)
        self.regression_heads = RegressionHeads(part_dim)
        self.meta = dict(meta or {})

    def _dtype(self) -> torch.dtype:
        return self.mask_token.dtype

    def embed(self, left: torch.Tensor, right: torch.Tensor, body: torch.Tensor) -> torch.Tensor:
        return self.embedding(left, right, body)

    def forward_features(
        self,
        left: torch.Tensor,
        right: torch.Tensor,
        body: torch.Tensor,
        plans: Optional[list] = None,
    ) -> torch.Tensor:
        """Embed, optionally mask, add temporal encoding, and encode.

        With ``plans=None`` the mask token is never touched; this is the
        fine-tuning and inference path.
        """
        emb = self.embed(left, right, body)
        squeeze = emb.dim() == 2
        if squeeze:
            emb = emb.unsqueeze(0)
        seq_len = emb.shape[1]
        temporal = temporal_encoding(
            seq_len, emb.shape[2], dtype=emb.dtype, device=emb.device
        )
        if plans is None:
            x = emb + temporal
        else:
            if len(plans) != emb.shape[0]:
                raise ValueError(f"{len(plans)} plans for a batch of {emb.shape[0]}")
            x = torch.stack([
                apply_mask(emb[i], plans[i], self.mask_token, temporal)
                for i in range(emb.shape[0])
            ])
        out = self.encoder(x)
        return out.squeeze(0) if squeeze else out

    def export_checkpoint(self):
        tensors = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        return self.type_tag, self.config.to_dict(), dict(self.meta), tensors

    @classmethod
    def from_checkpoint(cls, config: dict, tensors: dict, meta: dict) -> "PretrainedModel":
        model = cls(BackboneConfig.from_dict(config), meta)
        model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
        return model
