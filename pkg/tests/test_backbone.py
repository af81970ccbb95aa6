import math

import numpy as np
import pytest
import torch

from signmum.backbone.model import (
    BackboneConfig,
    EncoderConfig,
    PredictionHeads,
    PretrainedModel,
    RegressionHeads,
    SequenceEncoder,
    encode_sequence,
    masked_nll,
    mum_loss,
    predict_tokens,
    split_parts,
)
from signmum.mum.masking import sample_mask
from signmum.tokenizer.model import TokenTriplet

SMALL_ENC = EncoderConfig(model_dim=24, layers=2, heads=4, ffn_dim=48, dropout=0.0)


def small_backbone(**overrides):
    kwargs = dict(encoder=SMALL_ENC, hand_codes=16, body_codes=8,
                  seq_len=8, mask_ratio=0.5, mask_case="both", objective="token")
    kwargs.update(overrides)
    return BackboneConfig(**kwargs)


def test_encoder_config_defaults():
    cfg = EncoderConfig()
    assert (cfg.model_dim, cfg.layers, cfg.heads, cfg.ffn_dim) == (1536, 6, 8, 2048)
    assert cfg.part_dim == 512


def test_encoder_config_collects_violations():
    with pytest.raises(ValueError) as err:
        EncoderConfig(model_dim=100, layers=0, heads=7)
    message = str(err.value)
    assert "model_dim" in message
    assert "layers" in message
    # width must split into three equal part slices and across heads
    assert "divisible" in message


def test_encoder_shapes():
    torch.manual_seed(0)
    enc = SequenceEncoder(SMALL_ENC)
    for t in (1, 8, 32):
        out = enc(torch.randn(t, 24))
        assert out.shape == (t, 24)
    batched = enc(torch.randn(3, 8, 24))
    assert batched.shape == (3, 8, 24)


def test_encoder_bidirectional_context():
    """Changing a late frame must move early-frame features (no causal mask)."""
    torch.manual_seed(1)
    enc = SequenceEncoder(SMALL_ENC).eval()
    x = torch.randn(6, 24)
    y = x.clone()
    # a constant shift would sit in LayerNorm's null space; move one coordinate
    y[5, 3] += 1.0
    with torch.no_grad():
        a, b = enc(x), enc(y)
    assert not torch.allclose(a[0], b[0])


def test_encoder_permutation_equivariance():
    """Without temporal encodings the encoder commutes with frame permutation."""
    torch.manual_seed(2)
    enc = SequenceEncoder(SMALL_ENC).double().eval()
    x = torch.randn(7, 24, dtype=torch.float64)
    perm = torch.tensor([3, 0, 6, 1, 5, 2, 4])
    with torch.no_grad():
        direct = enc(x)[perm]
        permuted = enc(x[perm])
    assert torch.allclose(direct, permuted, atol=1e-10)


def test_encode_sequence_no_grad():
    torch.manual_seed(3)
    enc = SequenceEncoder(SMALL_ENC)
    out = encode_sequence(torch.randn(4, 24), enc)
    assert not out.requires_grad


def test_split_parts_layout():
    x = torch.arange(24.0).reshape(2, 12)
    l, r, b = split_parts(x, 4)
    assert torch.equal(l, x[:, :4])
    assert torch.equal(r, x[:, 4:8])
    assert torch.equal(b, x[:, 8:])
    with pytest.raises(ValueError):
        split_parts(x, 5)


def test_predict_tokens_rows_normalized():
    torch.manual_seed(4)
    heads = PredictionHeads(part_dim=8, hand_codes=16, body_codes=8)
    probs = predict_tokens(torch.randn(5, 24), heads)
    assert probs.left.shape == (5, 16)
    assert probs.body.shape == (5, 8)
    for p in probs:
        assert torch.allclose(p.sum(-1), torch.ones(5), atol=1e-6)
        assert (p >= 0).all()


def test_prediction_heads_shared_for_hands():
    torch.manual_seed(5)
    heads = PredictionHeads(part_dim=8, hand_codes=16, body_codes=8)
    f = torch.randn(3, 8)
    features = torch.cat([f, f, torch.randn(3, 8)], dim=-1)
    probs = predict_tokens(features, heads)
    assert torch.equal(probs.left, probs.right)


def test_regression_heads_shapes():
    torch.manual_seed(6)
    heads = RegressionHeads(part_dim=8)
    x = torch.randn(4, 8)
    assert heads.hand(x).shape == (4, 42)
    assert heads.body(x).shape == (4, 14)


def uniform_probs(t, hand_codes, body_codes):
    return type(predict_tokens(torch.zeros(1, 24),
                               PredictionHeads(8, hand_codes, body_codes)))(
        torch.full((t, hand_codes), 1.0 / hand_codes, dtype=torch.float64),
        torch.full((t, hand_codes), 1.0 / hand_codes, dtype=torch.float64),
        torch.full((t, body_codes), 1.0 / body_codes, dtype=torch.float64),
    )


def test_masked_nll_counts_and_value():
    t = 8
    probs = uniform_probs(t, 16, 8)
    labels = (np.zeros(t, dtype=int), np.zeros(t, dtype=int), np.zeros(t, dtype=int))
    plan = sample_mask(t, 0.5, seed=1, case="all_parts")
    total, count = masked_nll(probs, labels, plan)
    assert count == 3 * len(plan)
    expected = len(plan) * (2 * math.log(16.0) + math.log(8.0))
    assert float(total) == pytest.approx(expected, rel=1e-12)


def test_mum_loss_ignores_unmasked_labels():
    torch.manual_seed(7)
    t = 10
    with torch.no_grad():
        probs = predict_tokens(torch.randn(t, 24), PredictionHeads(8, 16, 8))
    probs = type(probs)(probs.left.double(), probs.right.double(), probs.body.double())
    plan = sample_mask(t, 0.3, seed=2, case="both")
    rng = np.random.default_rng(3)
    labels = [rng.integers(0, 16, t), rng.integers(0, 16, t), rng.integers(0, 8, t)]
    base = mum_loss(probs, tuple(labels), plan)

    masked = set(plan.masked_frames)
    changed = [arr.copy() for arr in labels]
    for f in range(t):
        if f not in masked:
            changed[0][f] = (changed[0][f] + 5) % 16
            changed[2][f] = (changed[2][f] + 3) % 8
    again = mum_loss(probs, tuple(changed), plan)
    assert float(base) == float(again)


def test_mum_loss_accepts_token_triplets():
    t = 6
    probs = uniform_probs(t, 16, 8)
    triplets = [TokenTriplet(1, 2, 3) for _ in range(t)]
    plan = sample_mask(t, 0.5, seed=4, case="all_parts")
    loss = mum_loss(probs, triplets, plan)
    expected = (2 * math.log(16.0) + math.log(8.0)) / 3.0
    assert float(loss) == pytest.approx(expected, rel=1e-12)


def test_mum_loss_empty_plan_warns_and_short_circuits():
    probs = uniform_probs(4, 16, 8)
    labels = (np.zeros(4, dtype=int),) * 3
    plan = sample_mask(4, 0.0, seed=0)
    with pytest.warns(RuntimeWarning):
        loss = mum_loss(probs, labels, plan)
    assert float(loss) == 0.0
    # constant zero carries no graph, so nothing can receive gradient
    assert not loss.requires_grad


def test_backbone_config_roundtrip():
    cfg = small_backbone(mask_case="hand_only", objective="regress")
    back = BackboneConfig.from_dict(cfg.to_dict())
    assert back == cfg


def test_backbone_config_validation():
    with pytest.raises(ValueError):
        small_backbone(mask_ratio=1.5)
    with pytest.raises(ValueError):
        small_backbone(mask_case="legs")
    with pytest.raises(ValueError):
        small_backbone(objective="contrastive")


def test_pretrained_model_forward_paths():
    torch.manual_seed(8)
    model = PretrainedModel(small_backbone()).eval()
    left = torch.rand(2, 8, 21, 2)
    right = torch.rand(2, 8, 21, 2)
    body = torch.rand(2, 8, 7, 2)
    with torch.no_grad():
        feats = model.forward_features(left, right, body)
    assert feats.shape == (2, 8, 24)

    plans = [sample_mask(8, 0.5, seed=s, case="both") for s in range(2)]
    with torch.no_grad():
        masked = model.forward_features(left, right, body, plans=plans)
    assert masked.shape == (2, 8, 24)
    assert not torch.allclose(feats, masked)

    # single-sequence convenience path
    with torch.no_grad():
        single = model.forward_features(left[0], right[0], body[0])
    assert torch.allclose(single, feats[0], atol=1e-6)


def test_mask_token_untouched_without_plans():
    torch.manual_seed(9)
    model = PretrainedModel(small_backbone())
    left = torch.rand(1, 8, 21, 2)
    right = torch.rand(1, 8, 21, 2)
    body = torch.rand(1, 8, 7, 2)
    out = model.forward_features(left, right, body)
    out.sum().backward()
    assert model.mask_token.grad is None
    # with plans the token participates
    model.zero_grad()
    plans = [sample_mask(8, 0.5, seed=0, case="both")]
    out = model.forward_features(left, right, body, plans=plans)
    out.sum().backward()
    assert model.mask_token.grad is not None
    assert model.mask_token.grad.abs().sum() > 0


def test_plan_batch_length_checked():
    torch.manual_seed(10)
    model = PretrainedModel(small_backbone())
    with pytest.raises(ValueError):
        model.forward_features(torch.rand(2, 8, 21, 2), torch.rand(2, 8, 21, 2),
                               torch.rand(2, 8, 7, 2),
                               plans=[sample_mask(8, 0.5, seed=0)])
