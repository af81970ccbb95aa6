"""Late fusion of per-sample class scores from two models."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DatasetError, SchemaError


def stable_softmax(scores: np.ndarray) -> np.ndarray:
    """Row-wise softmax computed after subtracting the row max."""
    x = np.asarray(scores, dtype=np.float64)
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def late_fuse(a: np.ndarray, b: np.ndarray, weights=(1.0, 1.0), normalize: bool = True):
    """Weighted combination of two score matrices of identical shape.

    With ``normalize`` each matrix is softmax-normalized per row first, which
    makes the result invariant to per-model score offsets. Without it the raw
    scores are summed, which preserves calibrated probability inputs.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"score shapes differ: {a.shape} vs {b.shape}")
    w_a, w_b = float(weights[0]), float(weights[1])
    if normalize:
        a = stable_softmax(a)
        b = stable_softmax(b)
    return w_a * a + w_b * b


def write_scores(path, ids, scores) -> None:
    """One JSON object per line: {"id": ..., "scores": [...]}."""
    scores = np.asarray(scores, dtype=np.float64)
    if len(ids) != scores.shape[0]:
        raise ValueError(f"{len(ids)} ids for {scores.shape[0]} score rows")
    with open(path, "w") as fh:
        for sample_id, row in zip(ids, scores):
            fh.write(json.dumps({"id": str(sample_id), "scores": row.tolist()}) + "\n")


def load_scores(path):
    """Read a score file back as (ids, scores)."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"score file not found: {path}")
    ids = []
    rows = []
    width = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"line {lineno}: invalid JSON: {exc}") from exc
        if not isinstance(record, dict) or "id" not in record or "scores" not in record:
            raise SchemaError(f"line {lineno}: expected keys 'id' and 'scores'")
        row = np.asarray(record["scores"], dtype=np.float64)
        if row.ndim != 1 or not np.isfinite(row).all():
            raise SchemaError(f"line {lineno}: scores must be a finite 1-D list")
        if width is None:
            width = row.shape[0]
        elif row.shape[0] != width:
            raise SchemaError(
                f"line {lineno}: expected {width} scores, got {row.shape[0]}"
            )
        ids.append(str(record["id"]))
        rows.append(row)
    if not rows:
        raise DatasetError(f"score file is empty: {path}")
    return ids, np.stack(rows)


def fuse_score_files(path_a, path_b, weights=(1.0, 1.0), normalize: bool = True):
    """Fuse two score files after aligning rows by sample id.

    The files must cover exactly the same ids, each exactly once; rows of the
    second file are reordered to match the first.
    """
    ids_a, scores_a = load_scores(path_a)
    ids_b, scores_b = load_scores(path_b)
    if len(set(ids_a)) != len(ids_a) or len(set(ids_b)) != len(ids_b):
        raise DatasetError("score files contain duplicate ids")
    if set(ids_a) != set(ids_b):
        missing = sorted(set(ids_a) ^ set(ids_b))[:5]
        raise DatasetError(f"score files cover different ids (e.g. {missing})")
    position = {sample_id: i for i, sample_id in enumerate(ids_b)}
    reordered = scores_b[[position[sample_id] for sample_id in ids_a]]
    return ids_a, late_fuse(scores_a, reordered, weights, normalize)
