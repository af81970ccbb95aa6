from .baselines import (
    BASELINE_KINDS,
    KMeansTokenizer,
    SeparateVQConfig,
    SeparateVQTokenizer,
    fit_baseline_tokenizer,
)
from .model import (
    DEFAULT_BETAS,
    Codebook,
    CoupledTokenizer,
    LatentTriplet,
    LossBreakdown,
    TokenTriplet,
    TokenizerConfig,
    decode,
    dvae_loss,
    encode,
    quantize,
    straight_through,
    tokenize_sequence,
)
from .train import TokenizerTrainConfig, reconstruction_rms, train_tokenizer

__all__ = [
    "BASELINE_KINDS",
    "Codebook",
    "CoupledTokenizer",
    "DEFAULT_BETAS",
    "KMeansTokenizer",
    "LatentTriplet",
    "LossBreakdown",
    "SeparateVQConfig",
    "SeparateVQTokenizer",
    "TokenTriplet",
    "TokenizerConfig",
    "TokenizerTrainConfig",
    "decode",
    "dvae_loss",
    "encode",
    "fit_baseline_tokenizer",
    "quantize",
    "reconstruction_rms",
    "straight_through",
    "tokenize_sequence",
    "train_tokenizer",
]
