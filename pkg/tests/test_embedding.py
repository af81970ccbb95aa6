import math

import numpy as np
import pytest
import torch

from signmum.mum.embedding import (
    BODY_EDGES,
    HAND_EDGES,
    PoseEmbedding,
    UnitEmbedding,
    embed_unit,
    normalized_adjacency,
    temporal_encoding,
)
from signmum.pose.types import BODY_JOINTS, HAND_JOINTS, PartValid, PoseTripletUnit


def test_edge_sets():
    assert len(HAND_EDGES) == 20
    assert len(BODY_EDGES) == 7
    # every hand node is reachable: chains cover nodes 0..20
    nodes = {n for e in HAND_EDGES for n in e}
    assert nodes == set(range(21))
    assert {n for e in BODY_EDGES for n in e} == set(range(7))


def test_normalized_adjacency_oracle():
    """Independent numpy computation of D^-1/2 (A + I) D^-1/2 for the body graph."""
    adj = np.eye(7)
    for i, j in BODY_EDGES:
        adj[i, j] = adj[j, i] = 1.0
    deg = adj.sum(1)
    expected = adj / np.sqrt(np.outer(deg, deg))
    got = normalized_adjacency(7, BODY_EDGES)
    assert got.dtype == torch.float32
    assert np.allclose(got.numpy(), expected, atol=1e-7)
    # rows of an isolated-free graph with self loops are nonzero
    assert (got.sum(1) > 0).all()


def test_embedding_output_layout():
    torch.manual_seed(0)
    emb = PoseEmbedding(part_dim=8)
    assert emb.model_dim == 24
    left = torch.randn(5, 21, 2)
    right = torch.randn(5, 21, 2)
    body = torch.randn(5, 7, 2)
    out = emb(left, right, body)
    assert out.shape == (5, 24)


def test_default_width_yields_1536():
    emb = PoseEmbedding(part_dim=512)
    assert emb.model_dim == 1536


def test_shared_hand_weights():
    torch.manual_seed(1)
    emb = PoseEmbedding(part_dim=6)
    hand = torch.randn(3, 21, 2)
    out = emb(hand, hand.clone(), torch.randn(3, 7, 2))
    assert torch.equal(out[:, :6], out[:, 6:12])


def test_part_isolation_bitwise():
    """Changing body keypoints must leave both hand slices bit-identical."""
    torch.manual_seed(2)
    emb = PoseEmbedding(part_dim=6)
    left = torch.randn(4, 21, 2)
    right = torch.randn(4, 21, 2)
    out_a = emb(left, right, torch.randn(4, 7, 2))
    out_b = emb(left, right, torch.randn(4, 7, 2))
    assert torch.equal(out_a[:, :12], out_b[:, :12])
    assert not torch.equal(out_a[:, 12:], out_b[:, 12:])


def test_cross_part_jacobian_exactly_zero():
    torch.manual_seed(3)
    emb = PoseEmbedding(part_dim=4).double()
    left = torch.randn(21, 2, dtype=torch.float64, requires_grad=True)
    right = torch.randn(21, 2, dtype=torch.float64, requires_grad=True)
    body = torch.randn(7, 2, dtype=torch.float64, requires_grad=True)
    jac = torch.autograd.functional.jacobian(lambda l, r, b: emb(l, r, b), (left, right, body))
    d = emb.part_dim
    # left slice depends only on left input, and so on
    assert torch.count_nonzero(jac[0][d:]) == 0
    assert torch.count_nonzero(jac[1][:d]) == 0
    assert torch.count_nonzero(jac[1][2 * d:]) == 0
    assert torch.count_nonzero(jac[2][:2 * d]) == 0
    assert torch.count_nonzero(jac[0][:d]) > 0
    assert torch.count_nonzero(jac[2][2 * d:]) > 0


def test_embed_unit_matches_module():
    torch.manual_seed(4)
    emb = PoseEmbedding(part_dim=5)
    rng = np.random.default_rng(5)
    unit = PoseTripletUnit(
        body=rng.random((BODY_JOINTS, 2)),
        left=rng.random((HAND_JOINTS, 2)),
        right=rng.random((HAND_JOINTS, 2)),
        part_valid=PartValid(True, True, True),
    )
    ue = embed_unit(unit, emb)
    assert isinstance(ue, UnitEmbedding)
    direct = emb(
        torch.as_tensor(unit.left.copy(), dtype=torch.float32),
        torch.as_tensor(unit.right.copy(), dtype=torch.float32),
        torch.as_tensor(unit.body.copy(), dtype=torch.float32),
    ).detach().numpy()
    assert np.allclose(ue.concat(), direct, atol=1e-7)
    assert ue.f_l.shape == (5,)


def test_temporal_encoding_position_zero():
    table = temporal_encoding(4, 8)
    assert table.shape == (4, 8)
    assert torch.equal(table[0], torch.tensor([0.0, 1.0] * 4))


def test_temporal_encoding_closed_form():
    dim, t = 12, 7
    table = temporal_encoding(16, dim, dtype=torch.float64).numpy()
    for i in range(dim // 2):
        angle = t * math.exp(-math.log(10000.0) * (2 * i) / dim)
        assert table[t, 2 * i] == pytest.approx(math.sin(angle), abs=1e-12)
        assert table[t, 2 * i + 1] == pytest.approx(math.cos(angle), abs=1e-12)


def test_temporal_encoding_bounded_and_distinct():
    table = temporal_encoding(64, 16)
    assert table.min() >= -1.0 and table.max() <= 1.0
    # rows differ between positions
    assert not torch.equal(table[3], table[4])


def test_temporal_encoding_validation():
    with pytest.raises(ValueError):
        temporal_encoding(0, 8)
    with pytest.raises(ValueError):
        temporal_encoding(4, 7)
    with pytest.raises(ValueError):
        temporal_encoding(4, 0)
