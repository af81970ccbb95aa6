"""Training loop for the coupled tokenizer."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import DatasetError, TrainingDivergedError
from ..pose.types import PoseDataset
from .model import Codebook, CoupledTokenizer, TokenizerConfig, dvae_loss


@dataclass(frozen=True)
class TokenizerTrainConfig:
    model: TokenizerConfig = TokenizerConfig()
    epochs: int = 40
    batch_size: int = 256
    lr: float = 1e-3
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1
    warmup_samples: int = 1024

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.lr <= 0 or self.lr_step_epochs < 1 or not 0 < self.lr_gamma <= 1:
            raise ValueError("invalid learning-rate schedule")


def dataset_part_tensors(dataset: PoseDataset, dtype: torch.dtype = torch.float32):
    """Stack every frame of a dataset into (left, right, body) tensors."""
    if not len(dataset):
        raise DatasetError("cannot train a tokenizer on an empty dataset")
    lefts, rights, bodies = [], [], []
    for seq in dataset.sequences:
        arrays = seq.part_arrays()
        lefts.append(arrays.left)
        rights.append(arrays.right)
        bodies.append(arrays.body)
    left = torch.as_tensor(np.concatenate(lefts), dtype=dtype)
    right = torch.as_tensor(np.concatenate(rights), dtype=dtype)
    body = torch.as_tensor(np.concatenate(bodies), dtype=dtype)
    return left, right, body


def _warmup_codebooks(model, left, right, body, rng, warmup_samples):
    """Seed codewords from encoder outputs so early training has live codes."""
    n = left.shape[0]
    take = min(n, warmup_samples)
    pick = rng.choice(n, size=take, replace=False)
    with torch.no_grad():
        z_l, z_r, z_b = model.encode_parts(left[pick], right[pick], body[pick])
        hand_pool = torch.cat([z_l, z_r], dim=0)
        hand_rows = rng.integers(hand_pool.shape[0], size=len(model.hand_codebook))
        body_rows = rng.integers(z_b.shape[0], size=len(model.body_codebook))
        model.hand_codebook.codewords.copy_(hand_pool[hand_rows])
        model.body_codebook.codewords.copy_(z_b[body_rows])


def _reinit_dead_codes(codebook: Codebook, used: np.ndarray, pool: torch.Tensor, rng) -> int:
    dead = np.flatnonzero(~used)
    if dead.size == 0:
        return 0
    rows = rng.integers(pool.shape[0], size=dead.size)
    with torch.no_grad():
        codebook.codewords[torch.as_tensor(dead)] = pool[torch.as_tensor(rows)]
    return int(dead.size)


def train_tokenizer(
    dataset: PoseDataset,
    config: TokenizerTrainConfig = TokenizerTrainConfig(),
    seed: int = 0,
) -> CoupledTokenizer:
    """Train a coupled tokenizer on every frame of a dataset.

    Codebooks are initialized from encoder outputs on a warmup batch, and any
    codeword unused for a full epoch is reinitialized to a random encoder
    output. The per-epoch log (loss terms, learning rate, dead-code count) is
    attached to the returned model as ``train_log``.
    """
    torch.manual_seed(seed)
    model = CoupledTokenizer(config.model)
    left, right, body = dataset_part_tensors(dataset)
    rng = np.random.default_rng([seed, 1])
    _warmup_codebooks(model, left, right, body, rng, config.warmup_samples)

    optimizer = torch.optim.Adam(model.parameters(), lr=config.lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.lr_step_epochs, gamma=config.lr_gamma
    )
    n = left.shape[0]
    batches = max(1, math.ceil(n / config.batch_size))
    log = []
    for epoch in range(config.epochs):
        lr_now = optimizer.param_groups[0]["lr"]
        order = rng.permutation(n)
        hand_used = np.zeros(len(model.hand_codebook), dtype=bool)
        body_used = np.zeros(len(model.body_codebook), dtype=bool)
        epoch_terms = {"loss": 0.0, "hand_recon": 0.0, "body_recon": 0.0}
        for b in range(batches):
            idx = torch.as_tensor(order[b * config.batch_size:(b + 1) * config.batch_size])
            out = model.training_forward(left[idx], right[idx], body[idx])
            breakdown = dvae_loss(
                (left[idx], right[idx], body[idx]),
                out["recon"],
                out["z"],
                out["quantized"],
                config.model.betas,
            )
            total = breakdown.total
            if not torch.isfinite(total):
                raise TrainingDivergedError(
                    f"tokenizer loss became non-finite at epoch {epoch}: {breakdown.as_floats()}"
                )
            optimizer.zero_grad()
            total.backward()
            optimizer.step()

            k_l, k_r, k_b = out["indices"]
            hand_used[k_l.numpy()] = True
            hand_used[k_r.numpy()] = True
            body_used[k_b.numpy()] = True
            model.hand_codebook.tally(torch.cat([k_l, k_r]))
            model.body_codebook.tally(k_b)
            epoch_terms["loss"] += float(total.detach())
            epoch_terms["hand_recon"] += float(breakdown.hand_recon.detach())
            epoch_terms["body_recon"] += float(breakdown.body_recon.detach())

        with torch.no_grad():
            probe = torch.as_tensor(rng.choice(n, size=min(n, 512), replace=False))
            z_l, z_r, z_b = model.encode_parts(left[probe], right[probe], body[probe])
            hand_pool = torch.cat([z_l, z_r], dim=0)
        dead_hand = _reinit_dead_codes(model.hand_codebook, hand_used, hand_pool, rng)
        dead_body = _reinit_dead_codes(model.body_codebook, body_used, z_b, rng)

        log.append({
            "epoch": epoch,
            "split": "tokenizer",
            "loss": epoch_terms["loss"] / batches,
            "hand_recon": epoch_terms["hand_recon"] / batches,
            "body_recon": epoch_terms["body_recon"] / batches,
            "lr": lr_now,
            "dead_hand_codes": dead_hand,
            "dead_body_codes": dead_body,
            "masked_positions": 0,
        })
        scheduler.step()

    model.train_log = log
    return model


def reconstruction_rms(model, dataset: PoseDataset) -> float:
    """Root-mean-square per-coordinate error of decode(quantize(encode(x)))."""
    left, right, body = dataset_part_tensors(dataset, dtype=model._dtype())
    with torch.no_grad():
        z_l, z_r, z_b = model.encode_parts(left, right, body)
        q_l = model.hand_codebook.lookup(model.hand_codebook.nearest(z_l))
        q_r = model.hand_codebook.lookup(model.hand_codebook.nearest(z_r))
        q_b = model.body_codebook.lookup(model.body_codebook.nearest(z_b))
        r_l, r_r, r_b = model.decode_parts(q_l, q_r, q_b)
        r_l = r_l.clamp(0.0, 1.0)
        r_r = r_r.clamp(0.0, 1.0)
        r_b = r_b.clamp(0.0, 1.0)
        sq = torch.cat([
            ((r_l - left) ** 2).reshape(-1),
            ((r_r - right) ** 2).reshape(-1),
            ((r_b - body) ** 2).reshape(-1),
        ])
        return float(torch.sqrt(sq.mean()))
