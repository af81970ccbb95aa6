"""Coupled discrete autoencoder over pose triplet units.

Per-part MLP encoders (weights shared between the two hands) feed a small
shared trunk whose context re-enters every per-part latent head; that trunk
is what couples the three parts. Latents are quantized against two codebooks
(one shared hand codebook, one body codebook) by nearest Euclidean codeword,
and a mirrored decoder reconstructs the keypoints. Reconstruction gradients
reach the encoder through a straight-through estimator; codewords are updated
only by the codebook alignment term.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import torch
from torch import nn

from ..pose.types import BODY_JOINTS, HAND_JOINTS, PoseSequence, PoseTripletUnit

HAND_INPUT = HAND_JOINTS * 2
BODY_INPUT = BODY_JOINTS * 2

DEFAULT_BETAS = (0.1, 1.0, 0.9)


@dataclass(frozen=True)
class TokenizerConfig:
    """Sizes and loss weights for the coupled tokenizer.

    betas weight (body reconstruction, codebook alignment, commitment) in the
    training objective; hand reconstruction has unit weight.
    """

    hand_codes: int = 1000
    body_codes: int = 500
    code_dim: int = 512
    hidden_dim: int = 512
    trunk_dim: int = 256
    betas: tuple[float, float, float] = DEFAULT_BETAS

    def __post_init__(self):
        for name in ("hand_codes", "body_codes", "code_dim", "hidden_dim", "trunk_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if len(self.betas) != 3:
            raise ValueError("betas must have exactly three entries")
        object.__setattr__(self, "betas", tuple(float(b) for b in self.betas))


@dataclass(frozen=True)
class LatentTriplet:
    """Continuous or quantized latent vectors for (left, right, body)."""

    z_l: np.ndarray
    z_r: np.ndarray
    z_b: np.ndarray

    def __post_init__(self):
        for name in ("z_l", "z_r", "z_b"):
            arr = np.asarray(getattr(self, name), dtype=np.float64)
            if arr.ndim != 1:
                raise ValueError(f"{name} must be a vector, got shape {arr.shape}")
            if not np.isfinite(arr).all():
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, arr)
        if not len(self.z_l) == len(self.z_r) == len(self.z_b):
            raise ValueError("latent parts must share one dimension")


@dataclass(frozen=True)
class TokenTriplet:
    """Codeword indices for (left hand, right hand, body); 0-based."""

    k_l: int
    k_r: int
    k_b: int

    def __post_init__(self):
        for name in ("k_l", "k_r", "k_b"):
            value = int(getattr(self, name))
            if value < 0:
                raise ValueError(f"{name} must be non-negative")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class LossBreakdown:
    """Tokenizer loss terms; ``total`` recombines them with the beta weights."""

    hand_recon: object
    body_recon: object
    codebook_term: object
    commitment_term: object
    total: object
    betas: tuple[float, float, float]

    @classmethod
    def compose(cls, hand_recon, body_recon, codebook_term, commitment_term, betas):
        b1, b2, b3 = betas
        total = hand_recon + b1 * body_recon + b2 * codebook_term + b3 * commitment_term
        return cls(hand_recon, body_recon, codebook_term, commitment_term, total, tuple(betas))

    def as_floats(self) -> dict:
        return {
            "hand_recon": float(self.hand_recon),
            "body_recon": float(self.body_recon),
            "codebook_term": float(self.codebook_term),
            "commitment_term": float(self.commitment_term),
            "total": float(self.total),
        }


class Codebook(nn.Module):
    """A table of codewords plus lifetime usage tallies.

    Nearest-codeword search runs in float64 regardless of the parameter dtype
    and resolves exact distance ties to the lowest index.
    """

    def __init__(self, num_codes: int, dim: int):
        super().__init__()
        if num_codes < 1:
            raise ValueError("a codebook needs at least one codeword")
        if dim < 1:
            raise ValueError("codeword dimension must be at least 1")
        self.codewords = nn.Parameter(torch.randn(num_codes, dim) * 0.1)
        self.register_buffer("usage_counts", torch.zeros(num_codes, dtype=torch.int64))

    def __len__(self) -> int:
        return self.codewords.shape[0]

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]

    def nearest(self, z: torch.Tensor) -> torch.Tensor:
        """Indices of the nearest codewords for a (batch, dim) latent block."""
        if z.shape[-1] != self.dim:
            raise ValueError(f"latent dim {z.shape[-1]} does not match codeword dim {self.dim}")
        flat = z.detach().reshape(-1, self.dim).to(torch.float64)
        codes = self.codewords.detach().to(torch.float64)
        chunks = []
        for start in range(0, flat.shape[0], 256):
            block = flat[start:start + 256]
            dist = ((block[:, None, :] - codes[None, :, :]) ** 2).sum(dim=-1)
            chunks.append(torch.argmin(dist, dim=1))
        indices = torch.cat(chunks) if chunks else torch.zeros(0, dtype=torch.int64)
        return indices.reshape(z.shape[:-1])

    def lookup(self, indices: torch.Tensor) -> torch.Tensor:
        return self.codewords[indices]

    def tally(self, indices: torch.Tensor) -> None:
        counts = torch.bincount(indices.reshape(-1), minlength=len(self))
        self.usage_counts += counts.to(self.usage_counts.dtype)


def _feature_mlp(in_dim: int, hidden_dim: int) -> nn.Sequential:
    return nn.Sequential(
        nn.Linear(in_dim, hidden_dim),
        nn.GELU(),
        nn.Linear(hidden_dim, hidden_dim),
        nn.GELU(),
    )


def straight_through(z: torch.Tensor, z_q: torch.Tensor) -> torch.Tensor:
    """Quantized values in the forward pass, identity gradient in the backward."""
    return z + (z_q - z).detach()


class CoupledTokenizer(nn.Module):
    """Discrete tokenizer mapping pose triplet units to codeword triples."""

    type_tag = "tokenizer/coupled"

    def __init__(self, config: TokenizerConfig = TokenizerConfig()):
        super().__init__()
        self.config = config
        h, trunk, code = config.hidden_dim, config.trunk_dim, config.code_dim
        self.hand_encoder = _feature_mlp(HAND_INPUT, h)
        self.body_encoder = _feature_mlp(BODY_INPUT, h)
        self.encoder_trunk = nn.Sequential(nn.Linear(3 * h, trunk), nn.GELU())
        self.hand_latent_head = nn.Linear(h + trunk, code)
        self.body_latent_head = nn.Linear(h + trunk, code)
        self.hand_codebook = Codebook(config.hand_codes, code)
        self.body_codebook = Codebook(config.body_codes, code)
        self.hand_decoder = _feature_mlp(code, h)
        self.body_decoder = _feature_mlp(code, h)
        self.decoder_trunk = nn.Sequential(nn.Linear(3 * h, trunk), nn.GELU())
        self.hand_output_head = nn.Linear(h + trunk, HAND_INPUT)
        self.body_output_head = nn.Linear(h + trunk, BODY_INPUT)
        self._frozen = False

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "CoupledTokenizer":
        self.requires_grad_(False)
        self.eval()
        self._frozen = True
        return self

    def _dtype(self) -> torch.dtype:
        return self.hand_latent_head.weight.dtype

    def encode_parts(self, left: torch.Tensor, right: torch.Tensor, body: torch.Tensor):
        """Encode batched parts into latent vectors (z_l, z_r, z_b)."""
        hl = self.hand_encoder(left.reshape(left.shape[0], -1))
        hr = self.hand_encoder(right.reshape(right.shape[0], -1))
        hb = self.body_encoder(body.reshape(body.shape[0], -1))
        g = self.encoder_trunk(torch.cat([hl, hr, hb], dim=-1))
        z_l = self.hand_latent_head(torch.cat([hl, g], dim=-1))
        z_r = self.hand_latent_head(torch.cat([hr, g], dim=-1))
        z_b = self.body_latent_head(torch.cat([hb, g], dim=-1))
        return z_l, z_r, z_b

    def decode_parts(self, q_l: torch.Tensor, q_r: torch.Tensor, q_b: torch.Tensor):
        """Decode quantized latents back to keypoints (left, right, body)."""
        ul = self.hand_decoder(q_l)
        ur = self.hand_decoder(q_r)
        ub = self.body_decoder(q_b)
        g = self.decoder_trunk(torch.cat([ul, ur, ub], dim=-1))
        left = self.hand_output_head(torch.cat([ul, g], dim=-1))
        right = self.hand_output_head(torch.cat([ur, g], dim=-1))
        body = self.body_output_head(torch.cat([ub, g], dim=-1))
        return (
            left.reshape(-1, HAND_JOINTS, 2),
            right.reshape(-1, HAND_JOINTS, 2),
            body.reshape(-1, BODY_JOINTS, 2),
        )

    def training_forward(self, left: torch.Tensor, right: torch.Tensor, body: torch.Tensor) -> dict:
        """Full encode/quantize/decode pass with straight-through gradients."""
        z_l, z_r, z_b = self.encode_parts(left, right, body)
        k_l = self.hand_codebook.nearest(z_l)
        k_r = self.hand_codebook.nearest(z_r)
        k_b = self.body_codebook.nearest(z_b)
        q_l = self.hand_codebook.lookup(k_l)
        q_r = self.hand_codebook.lookup(k_r)
        q_b = self.body_codebook.lookup(k_b)
        recon_l, recon_r, recon_b = self.decode_parts(
            straight_through(z_l, q_l),
            straight_through(z_r, q_r),
            straight_through(z_b, q_b),
        )
        return {
            "z": (z_l, z_r, z_b),
            "indices": (k_l, k_r, k_b),
            "quantized": (q_l, q_r, q_b),
            "recon": (recon_l, recon_r, recon_b),
        }

    def tokenize_arrays(self, left: np.ndarray, right: np.ndarray, body: np.ndarray):
        """Tokenize stacked (T, joints, 2) arrays into three index arrays."""
        dtype = self._dtype()
        with torch.no_grad():
            z_l, z_r, z_b = self.encode_parts(
                torch.as_tensor(left, dtype=dtype),
                torch.as_tensor(right, dtype=dtype),
                torch.as_tensor(body, dtype=dtype),
            )
            k_l = self.hand_codebook.nearest(z_l)
            k_r = self.hand_codebook.nearest(z_r)
            k_b = self.body_codebook.nearest(z_b)
        return k_l.numpy(), k_r.numpy(), k_b.numpy()

    def export_checkpoint(self):
        from dataclasses import asdict

        tensors = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        return self.type_tag, asdict(self.config), {"frozen": self._frozen}, tensors

    @classmethod
    def from_checkpoint(cls, config: dict, tensors: dict, meta: dict) -> "CoupledTokenizer":
        cfg = dict(config)
        cfg["betas"] = tuple(cfg.get("betas", DEFAULT_BETAS))
        model = cls(TokenizerConfig(**cfg))
        model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
        if meta.get("frozen"):
            model.freeze()
        return model


def _unit_tensors(unit: PoseTripletUnit, dtype: torch.dtype):
    # unit arrays are read-only; copy before bridging into torch
    left = torch.as_tensor(unit.left.copy(), dtype=dtype).reshape(1, HAND_JOINTS, 2)
    right = torch.as_tensor(unit.right.copy(), dtype=dtype).reshape(1, HAND_JOINTS, 2)
    body = torch.as_tensor(unit.body.copy(), dtype=dtype).reshape(1, BODY_JOINTS, 2)
    return left, right, body


def encode(unit: PoseTripletUnit, model: CoupledTokenizer) -> LatentTriplet:
    """Encode one pose triplet unit into continuous latent vectors."""
    left, right, body = _unit_tensors(unit, model._dtype())
    with torch.no_grad():
        z_l, z_r, z_b = model.encode_parts(left, right, body)
    return LatentTriplet(z_l[0].numpy(), z_r[0].numpy(), z_b[0].numpy())


def quantize(latent: LatentTriplet, model: CoupledTokenizer):
    """Replace each latent with its nearest codeword.

    Both hands share the hand codebook. Returns (TokenTriplet, LatentTriplet).
    """
    dtype = model._dtype()
    if len(latent.z_l) != model.config.code_dim:
        raise ValueError(
            f"latent dim {len(latent.z_l)} does not match codeword dim {model.config.code_dim}"
        )
    with torch.no_grad():
        z_l = torch.as_tensor(latent.z_l, dtype=dtype).reshape(1, -1)
        z_r = torch.as_tensor(latent.z_r, dtype=dtype).reshape(1, -1)
        z_b = torch.as_tensor(latent.z_b, dtype=dtype).reshape(1, -1)
        k_l = model.hand_codebook.nearest(z_l)
        k_r = model.hand_codebook.nearest(z_r)
        k_b = model.body_codebook.nearest(z_b)
        q_l = model.hand_codebook.lookup(k_l)
        q_r = model.hand_codebook.lookup(k_r)
        q_b = model.body_codebook.lookup(k_b)
    tokens = TokenTriplet(int(k_l[0]), int(k_r[0]), int(k_b[0]))
    return tokens, LatentTriplet(q_l[0].numpy(), q_r[0].numpy(), q_b[0].numpy())


def decode(quantized: LatentTriplet, model: CoupledTokenizer) -> PoseTripletUnit:
    """Decode quantized latents into a normalized pose triplet unit."""
    dtype = model._dtype()
    with torch.no_grad():
        left, right, body = model.decode_parts(
            torch.as_tensor(quantized.z_l, dtype=dtype).reshape(1, -1),
            torch.as_tensor(quantized.z_r, dtype=dtype).reshape(1, -1),
            torch.as_tensor(quantized.z_b, dtype=dtype).reshape(1, -1),
        )
    def clip(t: torch.Tensor) -> np.ndarray:
        return np.clip(t[0].numpy().astype(np.float64), 0.0, 1.0)

    return PoseTripletUnit(clip(body), clip(left), clip(right))


def _part_triple(value, dtype: Optional[torch.dtype] = None):
    """Normalize a unit-like argument to (left, right, body) torch tensors."""
    if isinstance(value, PoseTripletUnit):
        parts = (value.left, value.right, value.body)
    elif isinstance(value, LatentTriplet):
        parts = (value.z_l, value.z_r, value.z_b)
    elif isinstance(value, (tuple, list)) and len(value) == 3:
        parts = tuple(value)
    else:
        raise ValueError(f"expected a unit, latent triplet or 3-tuple, got {type(value).__name__}")
    out = []
    for p in parts:
        if isinstance(p, torch.Tensor):
            t = p
        else:
            arr = np.asarray(p)
            if not arr.flags.writeable:
                arr = arr.copy()
            t = torch.as_tensor(arr, dtype=dtype or torch.float64)
        out.append(t)
    return tuple(out)


def dvae_loss(unit, recon, z, z_q, betas: tuple[float, float, float] = DEFAULT_BETAS) -> LossBreakdown:
    """Tokenizer objective over one unit or a batch of units.

    All four terms are mean squared errors over their elements. Gradient
    contract: the codebook term detaches the encoder side and trains only the
    codewords; the commitment term detaches the codewords and trains only the
    encoder; reconstruction terms reach the encoder through the
    straight-through estimator used to build ``recon`` and never touch the
    codewords.

    Args:
        unit: target keypoints (PoseTripletUnit or (left, right, body) tensors).
        recon: reconstructed keypoints in the same layout.
        z: continuous latents (LatentTriplet or (z_l, z_r, z_b) tensors).
        z_q: quantized latents in the same layout.
        betas: weights for (body recon, codebook term, commitment term).

    Returns:
        LossBreakdown whose ``total`` recombines the terms exactly.
    """
    if len(betas) != 3:
        raise ValueError("betas must have exactly three entries")
    t_left, t_right, t_body = _part_triple(unit)
    r_left, r_right, r_body = _part_triple(recon)
    z_l, z_r, z_b = _part_triple(z)
    q_l, q_r, q_b = _part_triple(z_q)
    pairs = [
        (t_left, r_left), (t_right, r_right), (t_body, r_body),
        (z_l, q_l), (z_r, q_r), (z_b, q_b),
    ]
    for a, b in pairs:
        if a.shape != b.shape:
            raise ValueError(f"shape mismatch {tuple(a.shape)} vs {tuple(b.shape)}")

    mse = torch.nn.functional.mse_loss
    hand_recon = mse(r_left, t_left) + mse(r_right, t_right)
    body_recon = mse(r_body, t_body)
    z_cat = torch.cat([z_l.reshape(-1), z_r.reshape(-1), z_b.reshape(-1)])
    q_cat = torch.cat([q_l.reshape(-1), q_r.reshape(-1), q_b.reshape(-1)])
    codebook_term = mse(q_cat, z_cat.detach())
    commitment_term = mse(z_cat, q_cat.detach())
    return LossBreakdown.compose(hand_recon, body_recon, codebook_term, commitment_term, betas)


def tokenize_sequence(seq: PoseSequence, model) -> list[TokenTriplet]:
    """Tokenize every frame of a sequence with a frozen tokenizer."""
    if not getattr(model, "frozen", False):
        raise RuntimeError("tokenizer must be frozen before tokenization")
    arrays = seq.part_arrays()
    k_l, k_r, k_b = model.tokenize_arrays(arrays.left, arrays.right, arrays.body)
    return [TokenTriplet(int(a), int(b), int(c)) for a, b, c in zip(k_l, k_r, k_b)]
