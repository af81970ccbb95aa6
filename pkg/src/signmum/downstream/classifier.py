"""Isolated sign classification on top of a pretrained sequence encoder.

The classifier keeps only the pose embedding and the Transformer stack; it has
no mask token, so pretraining-style masking is structurally impossible here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import torch
from torch import nn
from torch.nn import functional as F

from ..backbone.model import BackboneConfig, PretrainedModel, SequenceEncoder
from ..errors import DatasetError, TrainingDivergedError
from ..mum.embedding import PoseEmbedding, temporal_encoding
from ..pose.transforms import JitterParams, perturb, sample_frames
from ..pose.types import PoseDataset, PoseSequence


@dataclass(frozen=True)
class FinetuneConfig:
    backbone: BackboneConfig = BackboneConfig()
    epochs: int = 40
    batch_size: int = 64
    lr: float = 1e-4
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1
    weight_decay: float = 0.0
    head_hidden: Optional[int] = None
    augment: JitterParams = field(default_factory=JitterParams)

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr_step_epochs < 1:
            raise ValueError("epochs, batch_size and lr_step_epochs must be at least 1")
        if self.lr <= 0 or not 0 < self.lr_gamma <= 1 or self.weight_decay < 0:
            raise ValueError("invalid optimizer settings")
        if self.head_hidden is not None and self.head_hidden < 1:
            raise ValueError("head_hidden must be at least 1 when given")


class ClassifierModel(nn.Module):
    """Embedding + encoder + mean pooling over time + a two-layer head."""

    type_tag = "downstream/classifier"

    def __init__(
        self,
        config: BackboneConfig,
        num_classes: int,
        head_hidden: Optional[int] = None,
        meta: Optional[dict] = None,
    ):
        super().__init__()
        if num_classes < 2:
            raise ValueError("classification needs at least 2 classes")
        part_dim = config.encoder.part_dim
        model_dim = config.encoder.model_dim
        hidden = head_hidden if head_hidden is not None else model_dim // 2
        self.config = config
        self.num_classes = num_classes
        self.head_hidden = hidden
        self.embedding = PoseEmbedding(part_dim)
        self.encoder = SequenceEncoder(config.encoder)
        self.head = nn.Sequential(
            nn.Linear(model_dim, hidden), nn.GELU(), nn.Linear(hidden, num_classes)
        )
        self.meta = dict(meta or {})

    @classmethod
    def from_pretrained(
        cls,
        pretrained: PretrainedModel,
        num_classes: int,
        head_hidden: Optional[int] = None,
    ) -> "ClassifierModel":
        """Initialize the embedding and encoder from a pretrained backbone."""
        model = cls(
            pretrained.config, num_classes, head_hidden, meta={"init": "pretrained"}
        )
        model.embedding.load_state_dict(pretrained.embedding.state_dict())
        model.encoder.load_state_dict(pretrained.encoder.state_dict())
        return model

    def _dtype(self) -> torch.dtype:
        return self.head[0].weight.dtype

    def forward(self, left: torch.Tensor, right: torch.Tensor, body: torch.Tensor) -> torch.Tensor:
        """Class logits for a batch; inputs are (B, T, J, 2) part arrays."""
        emb = self.embedding(left, right, body)
        squeeze = emb.dim() == 2
        if squeeze:
            emb = emb.unsqueeze(0)
        temporal = temporal_encoding(
            emb.shape[1], emb.shape[2], dtype=emb.dtype, device=emb.device
        )
        features = self.encoder(emb + temporal)
        logits = self.head(features.mean(dim=1))
        return logits.squeeze(0) if squeeze else logits

    def export_checkpoint(self):
        config = {
            "backbone": self.config.to_dict(),
            "num_classes": self.num_classes,
            "head_hidden": self.head_hidden,
        }
        tensors = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        return self.type_tag, config, dict(self.meta), tensors

    @classmethod
    def from_checkpoint(cls, config: dict, tensors: dict, meta: dict) -> "ClassifierModel":
        model = cls(
            BackboneConfig.from_dict(config["backbone"]),
            config["num_classes"],
            config["head_hidden"],
            meta,
        )
        model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
        return model


def _stack_parts(sequences, dtype):
    lefts, rights, bodies = [], [], []
    for seq in sequences:
        arrays = seq.part_arrays()
        lefts.append(arrays.left)
        rights.append(arrays.right)
        bodies.append(arrays.body)
    return (
        torch.as_tensor(np.stack(lefts), dtype=dtype),
        torch.as_tensor(np.stack(rights), dtype=dtype),
        torch.as_tensor(np.stack(bodies), dtype=dtype),
    )


def finetune(
    dataset: PoseDataset,
    pretrained: Optional[PretrainedModel],
    config: FinetuneConfig = FinetuneConfig(),
    seed: int = 0,
) -> ClassifierModel:
    """Train a classifier, warm-started from a pretrained backbone if given.

    Each epoch re-jitters every sequence and draws a fresh random frame
    subset, so no two epochs see identical inputs.
    """
    if not len(dataset):
        raise DatasetError("cannot fine-tune on an empty dataset")
    if not dataset.labeled:
        raise DatasetError("fine-tuning requires a labeled dataset")

    torch.manual_seed(seed)
    if pretrained is not None:
        model = ClassifierModel.from_pretrained(
            pretrained, dataset.num_classes, config.head_hidden
        )
    else:
        model = ClassifierModel(
            config.backbone, dataset.num_classes, config.head_hidden,
            meta={"init": "scratch"},
        )
    model.meta.update({"seed": seed, "num_classes": dataset.num_classes})

    optimizer = torch.optim.Adam(
        model.parameters(), lr=config.lr, weight_decay=config.weight_decay
    )
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.lr_step_epochs, gamma=config.lr_gamma
    )

    n = len(dataset)
    labels = torch.as_tensor(dataset.labels(), dtype=torch.long)
    seq_len = config.backbone.seq_len
    batches = max(1, math.ceil(n / config.batch_size))
    log = []
    for epoch in range(config.epochs):
        lr_now = optimizer.param_groups[0]["lr"]
        rng = np.random.default_rng([seed, 19, epoch])
        order = rng.permutation(n)
        aug_seeds = rng.integers(2**31 - 1, size=n)
        frame_seeds = rng.integers(2**31 - 1, size=n)
        epoch_loss = 0.0
        epoch_hits = 0
        for b in range(batches):
            members = order[b * config.batch_size:(b + 1) * config.batch_size]
            views = []
            for i in members:
                seq = perturb(dataset.sequences[i], int(aug_seeds[i]), config.augment)
                views.append(sample_frames(seq, seq_len, "random", int(frame_seeds[i])))
            left, right, body = _stack_parts(views, model._dtype())
            logits = model(left, right, body)
            loss = F.cross_entropy(logits, labels[members])
            if not torch.isfinite(loss):
                raise TrainingDivergedError(
                    f"fine-tuning loss became non-finite at epoch {epoch}"
                )
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += float(loss.detach()) * len(members)
            epoch_hits += int((logits.argmax(dim=-1) == labels[members]).sum())
        log.append({
            "epoch": epoch,
            "split": "finetune",
            "loss": epoch_loss / n,
            "accuracy": epoch_hits / n,
            "lr": lr_now,
            "masked_positions": 0,
        })
        scheduler.step()

    model.train_log = log
    return model


def classify(seq: PoseSequence, model: ClassifierModel) -> np.ndarray:
    """Class scores (softmax probabilities) for one sequence.

    Frames are center-sampled and no augmentation is applied, so the output
    is deterministic for a fixed model.
    """
    sampled = sample_frames(seq, model.config.seq_len, "center")
    left, right, body = _stack_parts([sampled], model._dtype())
    was_training = model.training
    model.eval()
    try:
        with torch.no_grad():
            logits = model(left, right, body)[0]
            scores = torch.softmax(logits, dim=-1)
    finally:
        if was_training:
            model.train()
    return scores.numpy().astype(np.float64)


def score_dataset(dataset: PoseDataset, model: ClassifierModel):
    """Scores for every sequence: (ids, labels, scores) with scores (N, C)."""
    ids = [seq.sample_id for seq in dataset.sequences]
    scores = np.stack([classify(seq, model) for seq in dataset.sequences])
    labels = np.asarray(dataset.labels()) if dataset.labeled else None
    return ids, labels, scores
