"""Masked-unit pretraining of the Transformer backbone.

The tokenizer stays frozen throughout; it only supplies pseudo-labels. Mask
plans and frame subsets are redrawn every epoch, approximating an expectation
over masked sets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from ..errors import DatasetError, DependencyError, TrainingDivergedError
from ..mum.masking import sample_mask
from ..pose.transforms import sample_frames
from ..pose.types import PoseDataset
from .model import BackboneConfig, PretrainedModel, masked_nll, predict_tokens, split_parts


@dataclass(frozen=True)
class PretrainConfig:
    backbone: BackboneConfig = BackboneConfig()
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4
    weight_decay: float = 0.01
    warmup_epochs: int = 6

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be at least 1")
        if self.lr <= 0 or self.weight_decay < 0 or self.warmup_epochs < 1:
            raise ValueError("invalid optimizer settings")


def _lr_factor(epoch: int, warmup: int, total: int) -> float:
    """Linear warmup to 1.0, then linear decay toward 0."""
    if epoch < warmup:
        return (epoch + 1) / warmup
    if total <= warmup:
        return 1.0
    return (total - epoch) / (total - warmup)


def _stack_sampled(dataset: PoseDataset, indices, seq_len: int, mode: str, seeds, dtype):
    """Sample frames for a batch of sequences and stack per-part tensors."""
    lefts, rights, bodies = [], [], []
    for j, i in enumerate(indices):
        seed = int(seeds[j]) if seeds is not None else 0
        seq = sample_frames(dataset.sequences[i], seq_len, mode=mode, seed=seed)
        arrays = seq.part_arrays()
        lefts.append(arrays.left)
        rights.append(arrays.right)
        bodies.append(arrays.body)
    left = torch.as_tensor(np.stack(lefts), dtype=dtype)
    right = torch.as_tensor(np.stack(rights), dtype=dtype)
    body = torch.as_tensor(np.stack(bodies), dtype=dtype)
    return left, right, body


def _regression_losses(model, features, plans, left, right, body):
    """Masked-coordinate regression: sum of squared-error means and count."""
    f_l, f_r, f_b = split_parts(features, model.config.encoder.part_dim)
    pred_l = model.regression_heads.hand(f_l)
    pred_r = model.regression_heads.hand(f_r)
    pred_b = model.regression_heads.body(f_b)
    total = None
    count = 0
    for pred, target, attr in (
        (pred_l, left, "left"), (pred_r, right, "right"), (pred_b, body, "body")
    ):
        for i, plan in enumerate(plans):
            positions = sorted(getattr(plan, attr))
            if not positions:
                continue
            flat_target = target[i, positions].reshape(len(positions), -1)
            term = ((pred[i, positions] - flat_target) ** 2).mean(dim=-1).sum()
            total = term if total is None else total + term
            count += len(positions)
    return total, count


def pretrain(
    dataset: PoseDataset,
    tokenizer,
    config: PretrainConfig = PretrainConfig(),
    seed: int = 0,
) -> PretrainedModel:
    """Pretrain a backbone with the masked-unit objective.

    Args:
        dataset: pose sequences; labels are ignored.
        tokenizer: frozen tokenizer supplying pseudo-labels. May be None for
            the ``regress`` objective, which never consults it.
        config: model shape and schedule.
        seed: controls initialization, frame sampling and mask plans.

    Returns:
        PretrainedModel with its per-epoch ``train_log`` attached.
    """
    if not len(dataset):
        raise DatasetError("cannot pretrain on an empty dataset")
    objective = config.backbone.objective
    if objective == "token":
        if tokenizer is None:
            raise DependencyError("token-objective pretraining needs a tokenizer")
        if not getattr(tokenizer, "frozen", False):
            raise DependencyError("tokenizer must be frozen before pretraining")

    torch.manual_seed(seed)
    model = PretrainedModel(
        config.backbone,
        meta={
            "seed": seed,
            "mask_ratio": config.backbone.mask_ratio,
            "mask_case": config.backbone.mask_case,
            "objective": objective,
            "epochs": config.epochs,
            "lr": config.lr,
            "weight_decay": config.weight_decay,
            "warmup_epochs": config.warmup_epochs,
        },
    )
    optimizer = torch.optim.AdamW(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay, betas=(0.9, 0.999)
    )
    scheduler = torch.optim.lr_scheduler.LambdaLR(
        optimizer, lambda e: _lr_factor(e, config.warmup_epochs, config.epochs)
    )

    n = len(dataset)
    seq_len = config.backbone.seq_len
    batches = max(1, math.ceil(n / config.batch_size))
    dtype = model._dtype()
    log = []
    for epoch in range(config.epochs):
        lr_now = optimizer.param_groups[0]["lr"]
        rng = np.random.default_rng([seed, 11, epoch])
        order = rng.permutation(n)
        frame_seeds = rng.integers(2**31 - 1, size=n)
        mask_seeds = rng.integers(2**31 - 1, size=n)
        epoch_nll = 0.0
        epoch_positions = 0
        for b in range(batches):
            members = order[b * config.batch_size:(b + 1) * config.batch_size]
            left, right, body = _stack_sampled(
                dataset, members, seq_len, "random", frame_seeds[members], dtype
            )
            plans = [
                sample_mask(
                    seq_len, config.backbone.mask_ratio, int(mask_seeds[i]),
                    config.backbone.mask_case,
                )
                for i in members
            ]
            features = model.forward_features(left, right, body, plans)
            if objective == "token":
                total = None
                count = 0
                for j in range(len(members)):
                    k_l, k_r, k_b = tokenizer.tokenize_arrays(
                        left[j].numpy(), right[j].numpy(), body[j].numpy()
                    )
                    probs = predict_tokens(features[j], model.heads)
                    nll, c = masked_nll(probs, (k_l, k_r, k_b), plans[j])
                    if c:
                        total = nll if total is None else total + nll
                        count += c
            else:
                total, count = _regression_losses(model, features, plans, left, right, body)

            if count == 0:
                continue
            loss = total / count
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"pretraining loss became non-finite at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_nll += float(total.detach())
            epoch_positions += count

        log.append({
            "epoch": epoch,
            "split": "pretrain",
            "loss": epoch_nll / max(1, epoch_positions),
            "lr": lr_now,
            "masked_positions": epoch_positions,
        })
        scheduler.step()

    model.train_log = log
    return model


def evaluate_masked_loss(
    model: PretrainedModel,
    dataset: PoseDataset,
    tokenizer,
    seed: int = 0,
) -> float:
    """Masked-unit loss per masked position with dropout off and fixed plans."""
    if not len(dataset):
        raise DatasetError("cannot evaluate on an empty dataset")
    was_training = model.training
    model.eval()
    cfg = model.config
    rng = np.random.default_rng([seed, 13])
    mask_seeds = rng.integers(2**31 - 1, size=len(dataset))
    total = 0.0
    count = 0
    try:
        with torch.no_grad():
            for i in range(len(dataset)):
                left, right, body = _stack_sampled(
                    dataset, [i], cfg.seq_len, "center", None, model._dtype()
                )
                plan = sample_mask(cfg.seq_len, cfg.mask_ratio, int(mask_seeds[i]), cfg.mask_case)
                if plan.part_positions == 0:
                    continue
                features = model.forward_features(left, right, body, [plan])
                k_l, k_r, k_b = tokenizer.tokenize_arrays(
                    left[0].numpy(), right[0].numpy(), body[0].numpy()
                )
                probs = predict_tokens(features[0], model.heads)
                nll, c = masked_nll(probs, (k_l, k_r, k_b), plan)
                total += float(nll)
                count += c
    finally:
        if was_training:
            model.train()
    if count == 0:
        return 0.0
    return total / count
