"""Per-part graph-convolutional pose embedding and temporal encoding.

Each part is embedded by a two-layer graph convolution over its skeleton and
mean-pooled to a vector of one third of the model width. Part embeddings are
concatenated in (left, right, body) order; that slice order is shared with
mask application and the prediction heads. Parts never mix here, so the
cross-part Jacobian blocks are exactly zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from ..pose.types import BODY_JOINTS, HAND_JOINTS, PoseTripletUnit

# Wrist-rooted five-finger chains, 21 nodes.
HAND_EDGES = (
    (0, 1), (1, 2), (2, 3), (3, 4),
    (0, 5), (5, 6), (6, 7), (7, 8),
    (0, 9), (9, 10), (10, 11), (11, 12),
    (0, 13), (13, 14), (14, 15), (15, 16),
    (0, 17), (17, 18), (18, 19), (19, 20),
)

# Upper body: 0 nose, 1/2 shoulders, 3/4 elbows, 5/6 wrists.
BODY_EDGES = ((0, 1), (0, 2), (1, 2), (1, 3), (3, 5), (2, 4), (4, 6))


def normalized_adjacency(num_nodes: int, edges) -> torch.Tensor:
    """Symmetric-normalized adjacency with self loops: D^-1/2 (A + I) D^-1/2."""
    adj = np.eye(num_nodes, dtype=np.float64)
    for i, j in edges:
        adj[i, j] = 1.0
        adj[j, i] = 1.0
    deg = adj.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    normalized = adj * inv_sqrt[:, None] * inv_sqrt[None, :]
    return torch.as_tensor(normalized, dtype=torch.float32)


class GraphConv(nn.Module):
    def __init__(self, in_dim: int, out_dim: int):
        super().__init__()
        self.linear = nn.Linear(in_dim, out_dim)

    def forward(self, adjacency: torch.Tensor, x: torch.Tensor) -> torch.Tensor:
        return self.linear(torch.matmul(adjacency, x))


class PartGraphEncoder(nn.Module):
    """Two graph-convolution layers over one part, mean-pooled to a vector."""

    def __init__(self, num_joints: int, edges, out_dim: int):
        super().__init__()
        self.register_buffer("adjacency", normalized_adjacency(num_joints, edges))
        self.conv1 = GraphConv(2, out_dim)
        self.conv2 = GraphConv(out_dim, out_dim)
        self.act = nn.GELU()

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(..., J, 2) keypoints -> (..., out_dim) pooled part feature."""
        h = self.act(self.conv1(self.adjacency, x))
        h = self.conv2(self.adjacency, h)
        return h.mean(dim=-2)


class PoseEmbedding(nn.Module):
    """Embed pose triplet units into model space.

    The hand encoder is shared between left and right hands; the body has its
    own encoder. Output is the concatenation (left, right, body), each slice
    ``part_dim`` wide.
    """

    def __init__(self, part_dim: int):
        super().__init__()
        if part_dim < 1:
            raise ValueError("part_dim must be at least 1")
        self.part_dim = part_dim
        self.hand_graph = PartGraphEncoder(HAND_JOINTS, HAND_EDGES, part_dim)
        self.body_graph = PartGraphEncoder(BODY_JOINTS, BODY_EDGES, part_dim)

    @property
    def model_dim(self) -> int:
        return 3 * self.part_dim

    def forward(self, left: torch.Tensor, right: torch.Tensor, body: torch.Tensor) -> torch.Tensor:
        f_l = self.hand_graph(left)
        f_r = self.hand_graph(right)
        f_b = self.body_graph(body)
        return torch.cat([f_l, f_r, f_b], dim=-1)


@dataclass(frozen=True)
class UnitEmbedding:
    """Per-part embedding of one frame, each slice part_dim wide."""

    f_l: np.ndarray
    f_r: np.ndarray
    f_b: np.ndarray

    def concat(self) -> np.ndarray:
        return np.concatenate([self.f_l, self.f_r, self.f_b])


def embed_unit(unit: PoseTripletUnit, embedding: PoseEmbedding) -> UnitEmbedding:
    """Embed a single pose triplet unit."""
    dtype = embedding.hand_graph.conv1.linear.weight.dtype
    with torch.no_grad():
        out = embedding(
            torch.as_tensor(unit.left.copy(), dtype=dtype),
            torch.as_tensor(unit.right.copy(), dtype=dtype),
            torch.as_tensor(unit.body.copy(), dtype=dtype),
        )
    parts = out.numpy()
    d = embedding.part_dim
    return UnitEmbedding(parts[:d].copy(), parts[d:2 * d].copy(), parts[2 * d:].copy())


def temporal_encoding(
    length: int,
    dim: int,
    dtype: torch.dtype = torch.float32,
    device=None,
) -> torch.Tensor:
    """Sinusoidal position table of shape (length, dim).

    Even dims carry sin(t / 10000^(2i/dim)), odd dims the matching cosine, so
    position 0 encodes as (0, 1, 0, 1, ...). All values lie in [-1, 1].
    """
    if length < 1:
        raise ValueError("length must be at least 1")
    if dim < 2 or dim % 2:
        raise ValueError("dim must be a positive even number")
    position = np.arange(length, dtype=np.float64)[:, None]
    freq = np.exp(-math.log(10000.0) * np.arange(0, dim, 2, dtype=np.float64) / dim)
    table = np.zeros((length, dim), dtype=np.float64)
    table[:, 0::2] = np.sin(position * freq)
    table[:, 1::2] = np.cos(position * freq)
    return torch.as_tensor(table, dtype=dtype, device=device)
