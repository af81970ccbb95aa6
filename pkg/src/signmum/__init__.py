"""Self-supervised pretraining for pose-based isolated sign language recognition.

The pipeline couples a discrete tokenizer over per-frame pose triplet units
(body, left hand, right hand) with masked-unit pretraining of a bidirectional
Transformer encoder, then fine-tunes the encoder for sign classification.
"""

__version__ = "0.1.0"
