from .embedding import (
    BODY_EDGES,
    HAND_EDGES,
    PartGraphEncoder,
    PoseEmbedding,
    UnitEmbedding,
    embed_unit,
    normalized_adjacency,
    temporal_encoding,
)
from .masking import MASK_CASES, MaskPlan, apply_mask, sample_mask

__all__ = [
    "BODY_EDGES",
    "HAND_EDGES",
    "MASK_CASES",
    "MaskPlan",
    "PartGraphEncoder",
    "PoseEmbedding",
    "UnitEmbedding",
    "apply_mask",
    "embed_unit",
    "normalized_adjacency",
    "sample_mask",
    "temporal_encoding",
]
