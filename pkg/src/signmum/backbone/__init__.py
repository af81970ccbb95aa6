from .model import (
    OBJECTIVES,
    BackboneConfig,
    EncoderConfig,
    PredictionHeads,
    PretrainedModel,
    RegressionHeads,
    SequenceEncoder,
    TokenProbabilities,
    encode_sequence,
    masked_nll,
    mum_loss,
    predict_tokens,
    split_parts,
)
from .pretrain import PretrainConfig, evaluate_masked_loss, pretrain

__all__ = [
    "OBJECTIVES",
    "BackboneConfig",
    "EncoderConfig",
    "PredictionHeads",
    "PretrainedModel",
    "RegressionHeads",
    "SequenceEncoder",
    "TokenProbabilities",
    "encode_sequence",
    "masked_nll",
    "mum_loss",
    "predict_tokens",
    "split_parts",
    "PretrainConfig",
    "evaluate_masked_loss",
    "pretrain",
]
