import json

import numpy as np
import pytest

from signmum.downstream.fusion import (
    fuse_score_files,
    late_fuse,
    load_scores,
    stable_softmax,
    write_scores,
)
from signmum.errors import DatasetError, SchemaError


def test_stable_softmax_rows_sum_to_one():
    rng = np.random.default_rng(0)
    probs = stable_softmax(rng.normal(size=(6, 4)) * 10)
    assert probs.shape == (6, 4)
    assert np.all(probs > 0)
    assert probs.sum(axis=-1) == pytest.approx(np.ones(6))


def test_stable_softmax_handles_large_logits():
    probs = stable_softmax(np.array([[1000.0, 999.0, 998.0]]))
    assert np.isfinite(probs).all()
    assert probs[0, 0] > probs[0, 1] > probs[0, 2]


def test_stable_softmax_shift_invariant():
    row = np.array([[0.3, -1.2, 2.5]])
    assert stable_softmax(row + 17.0) == pytest.approx(stable_softmax(row))


def test_fusion_can_flip_the_decision():
    # each model alone picks an extreme class; their agreement on the
    # runner-up wins after fusion
    a = np.array([[2.0, 1.9, 0.0]])
    b = np.array([[0.0, 1.9, 2.0]])
    assert np.argmax(a) == 0
    assert np.argmax(b) == 2
    fused = late_fuse(a, b)
    assert np.argmax(fused) == 1


def test_fusion_symmetric_with_equal_weights():
    rng = np.random.default_rng(1)
    a = rng.normal(size=(5, 3))
    b = rng.normal(size=(5, 3))
    assert late_fuse(a, b) == pytest.approx(late_fuse(b, a))


def test_fusion_weights_scale_contributions():
    a = np.array([[1.0, 0.0]])
    b = np.array([[0.0, 1.0]])
    fused = late_fuse(a, b, weights=(3.0, 1.0), normalize=False)
    assert fused.tolist() == [[3.0, 1.0]]


def test_fusion_without_normalize_sums_raw_scores():
    a = np.array([[0.2, 0.8], [0.5, 0.5]])
    b = np.array([[0.4, 0.6], [0.9, 0.1]])
    assert np.array_equal(late_fuse(a, b, normalize=False), a + b)


def test_fusion_rejects_shape_mismatch():
    with pytest.raises(ValueError, match="differ"):
        late_fuse(np.zeros((2, 3)), np.zeros((2, 4)))


def test_write_and_load_roundtrip(tmp_path):
    path = tmp_path / "scores.jsonl"
    ids = ["a", "b", "c"]
    scores = np.array([[0.1, 0.9], [0.5, 0.5], [0.7, 0.3]])
    write_scores(path, ids, scores)
    loaded_ids, loaded = load_scores(path)
    assert loaded_ids == ids
    assert np.array_equal(loaded, scores)


def test_write_scores_checks_row_count(tmp_path):
    with pytest.raises(ValueError, match="ids"):
        write_scores(tmp_path / "x.jsonl", ["a"], np.zeros((2, 3)))


def test_load_scores_missing_and_empty(tmp_path):
    with pytest.raises(DatasetError, match="not found"):
        load_scores(tmp_path / "nope.jsonl")
    empty = tmp_path / "empty.jsonl"
    empty.write_text("\n\n")
    with pytest.raises(DatasetError, match="empty"):
        load_scores(empty)


def test_load_scores_malformed_line(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"id": "a", "scores": [0.1, 0.9]}\nnot json\n')
    with pytest.raises(SchemaError, match="line 2"):
        load_scores(path)


def test_load_scores_missing_keys(tmp_path):
    path = tmp_path / "keys.jsonl"
    path.write_text('{"id": "a"}\n')
    with pytest.raises(SchemaError, match="scores"):
        load_scores(path)


def test_load_scores_nonfinite(tmp_path):
    path = tmp_path / "nan.jsonl"
    path.write_text('{"id": "a", "scores": [0.1, null]}\n')
    with pytest.raises(SchemaError, match="finite"):
        load_scores(path)


def test_load_scores_width_mismatch(tmp_path):
    path = tmp_path / "width.jsonl"
    path.write_text(
        '{"id": "a", "scores": [0.1, 0.9]}\n{"id": "b", "scores": [0.2]}\n'
    )
    with pytest.raises(SchemaError, match="expected 2 scores, got 1"):
        load_scores(path)


def test_fuse_score_files_aligns_by_id(tmp_path):
    path_a = tmp_path / "a.jsonl"
    path_b = tmp_path / "b.jsonl"
    write_scores(path_a, ["s1", "s2"], np.array([[1.0, 0.0], [0.0, 1.0]]))
    # second file lists the same samples in the opposite order
    write_scores(path_b, ["s2", "s1"], np.array([[0.0, 2.0], [2.0, 0.0]]))
    ids, fused = fuse_score_files(path_a, path_b, normalize=False)
    assert ids == ["s1", "s2"]
    assert np.array_equal(fused, np.array([[3.0, 0.0], [0.0, 3.0]]))


def test_fuse_score_files_duplicate_id(tmp_path):
    path_a = tmp_path / "a.jsonl"
    path_b = tmp_path / "b.jsonl"
    with open(path_a, "w") as fh:
        fh.write(json.dumps({"id": "s1", "scores": [0.5, 0.5]}) + "\n")
        fh.write(json.dumps({"id": "s1", "scores": [0.5, 0.5]}) + "\n")
    write_scores(path_b, ["s1", "s2"], np.zeros((2, 2)))
    with pytest.raises(DatasetError, match="duplicate"):
        fuse_score_files(path_a, path_b)


def test_fuse_score_files_id_mismatch(tmp_path):
    path_a = tmp_path / "a.jsonl"
    path_b = tmp_path / "b.jsonl"
    write_scores(path_a, ["s1", "s2"], np.zeros((2, 2)))
    write_scores(path_b, ["s1", "s3"], np.zeros((2, 2)))
    with pytest.raises(DatasetError, match="different ids"):
        fuse_score_files(path_a, path_b)
