"""Baseline tokenizers: k-means centers and decoupled per-part autoencoders.

Both expose the same tokenization contract as the coupled tokenizer (shared
hand codebook, separate body codebook, nearest-codeword assignment with ties
to the lowest index) so they can be swapped into the pretraining pipeline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..errors import DatasetError, TrainingDivergedError
from ..pose.types import PoseDataset
from .model import BODY_INPUT, HAND_INPUT, Codebook, straight_through
from .train import dataset_part_tensors

BASELINE_KINDS = ("kmeans", "separate_vq")


@dataclass(frozen=True)
class SeparateVQConfig:
    """Schedule and sizes for the decoupled per-part autoencoder baseline."""

    code_dim: int = 512
    hidden_dim: int = 512
    codebook_weight: float = 1.0
    commitment_weight: float = 0.9
    epochs: int = 40
    batch_size: int = 256
    lr: float = 1e-3
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1


class KMeansTokenizer(nn.Module):
    """Tokenizer whose codewords are k-means centers over raw keypoints."""

    type_tag = "tokenizer/kmeans"

    def __init__(self, hand_centers: np.ndarray, body_centers: np.ndarray):
        super().__init__()
        self.hand_codebook = Codebook(hand_centers.shape[0], HAND_INPUT)
        self.body_codebook = Codebook(body_centers.shape[0], BODY_INPUT)
        with torch.no_grad():
            self.hand_codebook.codewords.copy_(torch.as_tensor(hand_centers, dtype=torch.float32))
            self.body_codebook.codewords.copy_(torch.as_tensor(body_centers, dtype=torch.float32))
        self.requires_grad_(False)

    @property
    def frozen(self) -> bool:
        return True

    def freeze(self) -> "KMeansTokenizer":
        return self

    def tokenize_arrays(self, left: np.ndarray, right: np.ndarray, body: np.ndarray):
        def flat(a):
            return torch.as_tensor(np.asarray(a).reshape(len(a), -1), dtype=torch.float32)

        with torch.no_grad():
            k_l = self.hand_codebook.nearest(flat(left))
            k_r = self.hand_codebook.nearest(flat(right))
            k_b = self.body_codebook.nearest(flat(body))
        return k_l.numpy(), k_r.numpy(), k_b.numpy()

    def export_checkpoint(self):
        tensors = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        config = {
            "hand_codes": len(self.hand_codebook),
            "body_codes": len(self.body_codebook),
        }
        return self.type_tag, config, {}, tensors

    @classmethod
    def from_checkpoint(cls, config: dict, tensors: dict, meta: dict) -> "KMeansTokenizer":
        model = cls(
            np.zeros((config["hand_codes"], HAND_INPUT), dtype=np.float32),
            np.zeros((config["body_codes"], BODY_INPUT), dtype=np.float32),
        )
        model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
        return model


class PartAutoencoder(nn.Module):
    """Single-part discrete autoencoder used by the decoupled baseline."""

    def __init__(self, in_dim: int, num_codes: int, code_dim: int, hidden_dim: int):
        super().__init__()
        self.encoder = nn.Sequential(
            nn.Linear(in_dim, hidden_dim), nn.GELU(), nn.Linear(hidden_dim, code_dim)
        )
        self.codebook = Codebook(num_codes, code_dim)
        self.decoder = nn.Sequential(
            nn.Linear(code_dim, hidden_dim), nn.GELU(), nn.Linear(hidden_dim, in_dim)
        )

    def forward(self, x: torch.Tensor):
        z = self.encoder(x)
        k = self.codebook.nearest(z)
        q = self.codebook.lookup(k)
        recon = self.decoder(straight_through(z, q))
        return z, k, q, recon


class SeparateVQTokenizer(nn.Module):
    """Two independent per-part autoencoders with no shared trunk."""

    type_tag = "tokenizer/separate-vq"

    def __init__(self, hand_codes: int, body_codes: int, config: SeparateVQConfig):
        super().__init__()
        self.config = config
        self.hand_vae = PartAutoencoder(HAND_INPUT, hand_codes, config.code_dim, config.hidden_dim)
        self.body_vae = PartAutoencoder(BODY_INPUT, body_codes, config.code_dim, config.hidden_dim)
        self._frozen = False

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> "SeparateVQTokenizer":
        self.requires_grad_(False)
        self.eval()
        self._frozen = True
        return self

    @property
    def hand_codebook(self) -> Codebook:
        return self.hand_vae.codebook

    @property
    def body_codebook(self) -> Codebook:
        return self.body_vae.codebook

    def tokenize_arrays(self, left: np.ndarray, right: np.ndarray, body: np.ndarray):
        def encode(vae, arr):
            x = torch.as_tensor(np.asarray(arr).reshape(len(arr), -1), dtype=torch.float32)
            return vae.codebook.nearest(vae.encoder(x))

        with torch.no_grad():
            k_l = encode(self.hand_vae, left)
            k_r = encode(self.hand_vae, right)
            k_b = encode(self.body_vae, body)
        return k_l.numpy(), k_r.numpy(), k_b.numpy()

    def export_checkpoint(self):
        from dataclasses import asdict

        tensors = {k: v.detach().cpu().numpy() for k, v in self.state_dict().items()}
        config = {
            "hand_codes": len(self.hand_codebook),
            "body_codes": len(self.body_codebook),
            "vq": asdict(self.config),
        }
        return self.type_tag, config, {"frozen": self._frozen}, tensors

    @classmethod
    def from_checkpoint(cls, config: dict, tensors: dict, meta: dict) -> "SeparateVQTokenizer":
        model = cls(config["hand_codes"], config["body_codes"], SeparateVQConfig(**config["vq"]))
        model.load_state_dict({k: torch.as_tensor(v) for k, v in tensors.items()})
        if meta.get("frozen"):
            model.freeze()
        return model


def _fit_kmeans(dataset: PoseDataset, sizes: tuple[int, int], seed: int) -> KMeansTokenizer:
    from sklearn.cluster import KMeans

    left, right, body = dataset_part_tensors(dataset, dtype=torch.float64)
    hand_points = torch.cat([left, right]).reshape(-1, HAND_INPUT).numpy()
    body_points = body.reshape(-1, BODY_INPUT).numpy()
    for name, points, k in (("hand", hand_points, sizes[0]), ("body", body_points, sizes[1])):
        distinct = np.unique(points, axis=0).shape[0]
        if distinct < k:
            raise DatasetError(
                f"{name} clustering needs at least {k} distinct poses, found {distinct}"
            )
    hand_centers = KMeans(n_clusters=sizes[0], random_state=seed, n_init=4).fit(hand_points)
    body_centers = KMeans(n_clusters=sizes[1], random_state=seed, n_init=4).fit(body_points)
    return KMeansTokenizer(hand_centers.cluster_centers_, body_centers.cluster_centers_)


def _train_part_vae(vae: PartAutoencoder, data: torch.Tensor, config: SeparateVQConfig, rng) -> None:
    optimizer = torch.optim.Adam(vae.parameters(), lr=config.lr)
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.lr_step_epochs, gamma=config.lr_gamma
    )
    n = data.shape[0]
    with torch.no_grad():
        z = vae.encoder(data[rng.choice(n, size=min(n, 1024), replace=False)])
        rows = rng.integers(z.shape[0], size=len(vae.codebook))
        vae.codebook.codewords.copy_(z[rows])
    batches = max(1, math.ceil(n / config.batch_size))
    mse = torch.nn.functional.mse_loss
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        used = np.zeros(len(vae.codebook), dtype=bool)
        for b in range(batches):
            idx = torch.as_tensor(order[b * config.batch_size:(b + 1) * config.batch_size])
            x = data[idx]
            z, k, q, recon = vae(x)
            loss = (
                mse(recon, x)
                + config.codebook_weight * mse(q, z.detach())
                + config.commitment_weight * mse(z, q.detach())
            )
            if not torch.isfinite(loss):
                raise TrainingDivergedError(f"baseline autoencoder diverged at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            used[k.numpy()] = True
            vae.codebook.tally(k)
        dead = np.flatnonzero(~used)
        if dead.size:
            with torch.no_grad():
                z = vae.encoder(data[rng.choice(n, size=min(n, 512), replace=False)])
                rows = rng.integers(z.shape[0], size=dead.size)
                vae.codebook.codewords[torch.as_tensor(dead)] = z[torch.as_tensor(rows)]
        scheduler.step()


def fit_baseline_tokenizer(
    dataset: PoseDataset,
    kind: str,
    sizes: tuple[int, int] = (1000, 500),
    seed: int = 0,
    config: SeparateVQConfig = SeparateVQConfig(),
):
    """Fit a baseline tokenizer of the requested kind.

    Args:
        dataset: pose dataset whose frames are the training points.
        kind: ``kmeans`` or ``separate_vq``.
        sizes: (hand codebook size, body codebook size).
        seed: controls clustering restarts / training order.
        config: schedule for the ``separate_vq`` kind; ignored for k-means.
    """
    if kind not in BASELINE_KINDS:
        raise ValueError(f"unknown baseline kind {kind!r}; expected one of {BASELINE_KINDS}")
    if not len(dataset):
        raise DatasetError("cannot fit a tokenizer on an empty dataset")
    if kind == "kmeans":
        return _fit_kmeans(dataset, sizes, seed)

    torch.manual_seed(seed)
    model = SeparateVQTokenizer(sizes[0], sizes[1], config)
    left, right, body = dataset_part_tensors(dataset)
    rng = np.random.default_rng([seed, 2])
    hand_data = torch.cat([left, right]).reshape(-1, HAND_INPUT)
    _train_part_vae(model.hand_vae, hand_data, config, rng)
    _train_part_vae(model.body_vae, body.reshape(-1, BODY_INPUT), config, rng)
    return model
