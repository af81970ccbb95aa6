import dataclasses
import json
import re
from pathlib import Path

import pytest

from signmum.checkpoint import load_checkpoint
from signmum.cli import _make_run_dir, run_command
from signmum.config import ENV_EVAL, ENV_OUT, ENV_SEED, ENV_TRAIN, load_config
from signmum.errors import (
    CheckpointIntegrityError,
    ConfigError,
    DatasetError,
    DependencyError,
    SchemaError,
    TrainingDivergedError,
)
from signmum.pose.io import load_pose_dataset, write_pose_dataset
from signmum.pose.types import PoseDataset

MICRO_YAML = """\
model:
  hand_codes: 8
  body_codes: 6
  code_dim: 8
  tokenizer_hidden: 12
  tokenizer_trunk: 10
  model_dim: 24
  layers: 1
  heads: 4
  ffn_dim: 32
  dropout: 0.0
  seq_len: 6
schedule:
  tokenizer_epochs: 2
  tokenizer_batch: 64
  warmup_samples: 64
  pretrain_epochs: 2
  pretrain_batch: 8
  warmup_epochs: 1
  finetune_epochs: 2
  finetune_batch: 16
synth:
  num_classes: 2
  samples_per_class: 6
  length: 8
"""


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in (ENV_SEED, ENV_OUT, ENV_TRAIN, ENV_EVAL):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def micro_yaml(tmp_path):
    path = tmp_path / "micro.yaml"
    path.write_text(MICRO_YAML + f"data:\n  out_dir: {tmp_path / 'runs'}\n")
    return str(path)


def last_line(capsys) -> str:
    return capsys.readouterr().out.strip().splitlines()[-1]


def test_no_subcommand_prints_help(capsys):
    assert run_command([]) == 2
    assert "stage" in capsys.readouterr().out


def test_exit_code_mapping(monkeypatch, capsys):
    import signmum.cli as cli

    cases = [
        (ConfigError(["bad"]), 2),
        (DependencyError("missing artifact"), 3),
        (SchemaError("bad record"), 4),
        (DatasetError("empty"), 4),
        (CheckpointIntegrityError("corrupt"), 5),
        (TrainingDivergedError("nan"), 6),
        (RuntimeError("surprise"), 1),
    ]
    for exc, expected in cases:
        def handler(args, exc=exc):
            raise exc

        monkeypatch.setattr(cli, "_cmd_synth", handler)
        assert run_command(["synth"]) == expected
        capsys.readouterr()


def test_invalid_config_exits_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("model:\n  hand_codes: 0\n")
    assert run_command(["synth", "--config", str(bad)]) == 2
    assert "error:" in capsys.readouterr().err


def test_run_dir_naming_and_collision(tmp_path, monkeypatch):
    monkeypatch.setattr("signmum.cli.time.strftime", lambda fmt: "20260101-000000")
    config = load_config(out_dir=str(tmp_path / "runs"))
    first = _make_run_dir("synth", config)
    second = _make_run_dir("synth", config)
    assert re.fullmatch(r"synth-[0-9a-f]{8}-20260101-000000", first.name)
    assert second.name == first.name + "-1"
    saved = json.loads((first / "config.json").read_text())
    assert saved["data"]["out_dir"] == str(tmp_path / "runs")


def test_full_pipeline(micro_yaml, tmp_path, monkeypatch, capsys):
    # synth
    assert run_command(["synth", "--config", micro_yaml, "--seed", "0"]) == 0
    synth_dir = Path(last_line(capsys))
    assert synth_dir.name.startswith("synth-")
    train_path = synth_dir / "train.jsonl"
    eval_path = synth_dir / "eval.jsonl"
    assert train_path.exists() and eval_path.exists()
    full = load_pose_dataset(synth_dir / "dataset.jsonl")
    assert len(full) == 12
    log = [json.loads(l) for l in (synth_dir / "log.jsonl").read_text().splitlines()]
    assert log[0]["stage"] == "synth"
    assert log[0]["train"] + log[0]["eval"] == 12

    monkeypatch.setenv(ENV_TRAIN, str(train_path))
    monkeypatch.setenv(ENV_EVAL, str(eval_path))

    # tokenizer
    assert run_command(["tokenizer", "--config", micro_yaml]) == 0
    tok_ckpt = Path(last_line(capsys))
    assert tok_ckpt.name == "tokenizer.ckpt"
    tokenizer = load_checkpoint(tok_ckpt, expected_type="tokenizer/coupled")
    assert tokenizer.frozen

    # tokenize
    assert run_command([
        "tokenize", "--config", micro_yaml,
        "--checkpoint", str(tok_ckpt), "--data", str(eval_path),
    ]) == 0
    tokens_path = Path(last_line(capsys))
    eval_set = load_pose_dataset(eval_path)
    records = [json.loads(l) for l in tokens_path.read_text().splitlines()]
    assert [r["id"] for r in records] == [s.sample_id for s in eval_set.sequences]
    for record, seq in zip(records, eval_set.sequences):
        assert len(record["tokens"]) == len(seq)
        for k_l, k_r, k_b in record["tokens"]:
            assert 0 <= k_l < 8 and 0 <= k_r < 8 and 0 <= k_b < 6

    # pretrain without a tokenizer checkpoint fails with a dependency error
    assert run_command(["pretrain", "--config", micro_yaml]) == 3

    assert run_command([
        "pretrain", "--config", micro_yaml, "--tokenizer", str(tok_ckpt),
    ]) == 0
    backbone_ckpt = Path(last_line(capsys))
    assert backbone_ckpt.name == "backbone.ckpt"
    pretrain_log = [
        json.loads(l)
        for l in (backbone_ckpt.parent / "log.jsonl").read_text().splitlines()
    ]
    assert len(pretrain_log) == 2
    assert pretrain_log[0]["split"] == "pretrain"

    # finetune from the pretrained encoder
    assert run_command([
        "finetune", "--config", micro_yaml, "--backbone", str(backbone_ckpt),
    ]) == 0
    cls_ckpt = Path(last_line(capsys))
    classifier = load_checkpoint(cls_ckpt, expected_type="downstream/classifier")
    assert classifier.meta["init"] == "pretrained"

    # evaluate twice; reports must match bit for bit
    assert run_command([
        "evaluate", "--config", micro_yaml,
        "--classifier", str(cls_ckpt), "--data", str(eval_path),
    ]) == 0
    out = capsys.readouterr().out
    assert "per-instance" in out
    eval_dirs = sorted((tmp_path / "runs").glob("evaluate-*"))
    first_metrics = (eval_dirs[-1] / "metrics.json").read_text()
    scores_path = eval_dirs[-1] / "scores.jsonl"
    assert scores_path.exists()

    assert run_command([
        "evaluate", "--config", micro_yaml,
        "--classifier", str(cls_ckpt), "--data", str(eval_path),
    ]) == 0
    capsys.readouterr()
    eval_dirs = sorted((tmp_path / "runs").glob("evaluate-*"))
    assert (eval_dirs[-1] / "metrics.json").read_text() == first_metrics

    # fuse the model's scores with themselves; ranking must be preserved
    assert run_command([
        "fuse", "--config", micro_yaml,
        "--scores-a", str(scores_path), "--scores-b", str(scores_path),
        "--data", str(eval_path),
    ]) == 0
    fused_path = Path(last_line(capsys))
    fused = [json.loads(l) for l in fused_path.read_text().splitlines()]
    assert [r["id"] for r in fused] == [r["id"] for r in records]
    fuse_metrics = json.loads((fused_path.parent / "metrics.json").read_text())
    original = json.loads(first_metrics)
    assert fuse_metrics["per_instance_top1"] == original["per_instance_top1"]


def test_finetune_from_scratch(micro_yaml, capsys):
    assert run_command(["finetune", "--config", micro_yaml]) == 0
    classifier = load_checkpoint(Path(last_line(capsys)))
    assert classifier.meta["init"] == "scratch"


def test_evaluate_missing_checkpoint(micro_yaml, tmp_path, capsys):
    rc = run_command([
        "evaluate", "--config", micro_yaml,
        "--classifier", str(tmp_path / "absent.ckpt"),
    ])
    assert rc == 5
    assert "not found" in capsys.readouterr().err


def test_tokenize_missing_data(micro_yaml, tmp_path, capsys):
    assert run_command(["synth", "--config", micro_yaml]) == 0
    synth_dir = Path(last_line(capsys))
    assert run_command(["tokenizer", "--config", micro_yaml]) == 0
    tok_ckpt = Path(last_line(capsys))
    rc = run_command([
        "tokenize", "--config", micro_yaml,
        "--checkpoint", str(tok_ckpt), "--data", str(tmp_path / "absent.jsonl"),
    ])
    assert rc == 4


def test_evaluate_unlabeled_data_fails(micro_yaml, tmp_path, capsys):
    assert run_command(["finetune", "--config", micro_yaml]) == 0
    cls_ckpt = Path(last_line(capsys))
    from signmum.pose.synth import synth_generate

    ds = synth_generate(2, 2, 8, seed=0)
    bare = PoseDataset(
        sequences=tuple(dataclasses.replace(s, label=None) for s in ds.sequences),
        num_classes=0,
    )
    data = tmp_path / "bare.jsonl"
    write_pose_dataset(bare, data)
    rc = run_command([
        "evaluate", "--config", micro_yaml,
        "--classifier", str(cls_ckpt), "--data", str(data),
    ])
    assert rc == 4
    assert "label" in capsys.readouterr().err


def test_fuse_mismatched_ids(micro_yaml, tmp_path, capsys):
    import numpy as np

    from signmum.downstream.fusion import write_scores

    a = tmp_path / "a.jsonl"
    b = tmp_path / "b.jsonl"
    write_scores(a, ["s1", "s2"], np.zeros((2, 2)))
    write_scores(b, ["s1", "s3"], np.zeros((2, 2)))
    rc = run_command([
        "fuse", "--config", micro_yaml, "--scores-a", str(a), "--scores-b", str(b),
    ])
    assert rc == 4


def test_grid_single_cell(micro_yaml, tmp_path, capsys):
    assert run_command(["grid", "--config", micro_yaml]) == 0
    out = capsys.readouterr().out
    grid_dirs = sorted((tmp_path / "runs").glob("grid-*"))
    assert grid_dirs
    results = json.loads((grid_dirs[-1] / "grid_results.json").read_text())
    assert len(results) == 1
    assert results[0]["status"] == "ok"
    assert "tokenizer_kind" in out
    log = [
        json.loads(l)
        for l in (grid_dirs[-1] / "log.jsonl").read_text().splitlines()
    ]
    assert log[0]["stage"] == "grid"
    assert "point" in log[0]
    assert log[-1]["rows"] == 1
    assert log[-1]["failed"] == 0


def test_seed_flag_changes_synth_output(micro_yaml, capsys):
    assert run_command(["synth", "--config", micro_yaml, "--seed", "1"]) == 0
    dir_a = Path(last_line(capsys))
    assert run_command(["synth", "--config", micro_yaml, "--seed", "1"]) == 0
    dir_b = Path(last_line(capsys))
    assert run_command(["synth", "--config", micro_yaml, "--seed", "2"]) == 0
    dir_c = Path(last_line(capsys))
    same = (dir_a / "dataset.jsonl").read_text() == (dir_b / "dataset.jsonl").read_text()
    different = (dir_a / "dataset.jsonl").read_text() != (dir_c / "dataset.jsonl").read_text()
    assert same and different
