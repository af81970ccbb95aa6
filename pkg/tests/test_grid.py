import json

import pytest

from signmum.config import load_config
from signmum.grid import (
    GRID_AXES,
    format_grid_table,
    grid_points,
    pretraining_plan,
    run_grid,
    run_pipeline,
    write_grid_outputs,
)

MICRO_BASE = """\
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


def micro_config(tmp_path, grid_section=""):
    path = tmp_path / "grid.yaml"
    path.write_text(MICRO_BASE + grid_section)
    return load_config(path)


def test_grid_points_full_product(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  tokenizer_kinds: [coupled, kmeans]\n"
        "  mask_cases: [both, hand_only]\n"
        "  alphas: [0.25, 0.5]\n"
        "  data_fractions: [0.5, 1.0]\n"
        "  pretraining: [mum_token, none]\n"
    ))
    points = grid_points(config)
    assert len(points) == 2 ** 5
    assert all(set(p) == set(GRID_AXES) for p in points)
    assert len({tuple(p[a] for a in GRID_AXES) for p in points}) == 32
    # itertools.product order: last axis varies fastest
    assert points[0]["pretraining"] == "mum_token"
    assert points[1]["pretraining"] == "none"


def test_pretraining_plan_mapping():
    assert pretraining_plan("none", "both", 0.5) is None
    assert pretraining_plan("mum_token", "none", 0.5) is None
    assert pretraining_plan("mum_token", "both", 0.0) is None
    assert pretraining_plan("mum_token", "hand_only", 0.5) == ("token", "hand_only")
    assert pretraining_plan("mum_regress", "both", 0.5) == ("regress", "both")
    # random-mask modes always mask whole frames
    assert pretraining_plan("rmask_token", "hand_only", 0.5) == ("token", "all_parts")
    assert pretraining_plan("rmask_regress", "both", 0.5) == ("regress", "all_parts")


def test_mask_case_axis(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  mask_cases: [none, hand_only, body_only, both]\n"
    ))
    rows = run_grid(config)
    assert len(rows) == 4
    assert [r["mask_case"] for r in rows] == ["none", "hand_only", "body_only", "both"]
    assert all(r["status"] == "ok" for r in rows)
    by_case = {r["mask_case"]: r for r in rows}
    # the none case degenerates to plain supervised training
    assert by_case["none"]["effective_pretraining"] == "none"
    assert by_case["none"]["pretrain_loss"] is None
    for case in ("hand_only", "body_only", "both"):
        assert by_case[case]["effective_pretraining"] == "mum_token"
        assert by_case[case]["pretrain_loss"] is not None
    for row in rows:
        assert 0.0 <= row["per_instance_top1"] <= 100.0
        assert row["eval_size"] > 0


def test_data_fraction_axis(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  data_fractions: [0.0, 0.25, 0.5, 0.75, 1.0]\n"
    ))
    rows = run_grid(config)
    assert len(rows) == 5
    assert [r["data_fraction"] for r in rows] == [0.0, 0.25, 0.5, 0.75, 1.0]
    assert all(r["status"] == "ok" for r in rows)
    # a zero fraction leaves nothing to pretrain on
    assert rows[0]["effective_pretraining"] == "none"
    assert all(r["effective_pretraining"] == "mum_token" for r in rows[1:])


def test_tokenizer_kind_axis(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  tokenizer_kinds: [coupled, kmeans, separate_vq]\n"
    ))
    rows = run_grid(config)
    assert [r["tokenizer_kind"] for r in rows] == ["coupled", "kmeans", "separate_vq"]
    assert all(r["status"] == "ok" for r in rows)


def test_pretraining_mode_axis(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  pretraining: [none, rmask_regress, mum_regress, mum_token]\n"
    ))
    rows = run_grid(config)
    assert len(rows) == 4
    assert all(r["status"] == "ok" for r in rows)
    assert rows[0]["effective_pretraining"] == "none"
    # regression objectives run without any tokenizer
    assert rows[1]["pretrain_loss"] is not None
    assert rows[2]["pretrain_loss"] is not None


def test_failed_cell_recorded_and_sweep_continues(tmp_path, monkeypatch):
    import signmum.grid as grid_module

    config = micro_config(tmp_path, (
        "grid:\n"
        "  mask_cases: [hand_only, both]\n"
    ))
    real = grid_module.run_pipeline

    def flaky(config, **kwargs):
        if kwargs.get("mask_case") == "hand_only":
            raise RuntimeError("injected failure")
        return real(config, **kwargs)

    monkeypatch.setattr(grid_module, "run_pipeline", flaky)
    rows = grid_module.run_grid(config)
    assert len(rows) == 2
    assert rows[0]["status"] == "failed"
    assert "injected failure" in rows[0]["error"]
    assert "RuntimeError" in rows[0]["error"]
    assert "traceback" in rows[0]
    assert rows[1]["status"] == "ok"


def test_grid_rerun_is_deterministic(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  mask_cases: [both]\n"
        "  pretraining: [mum_token, none]\n"
    ))
    first = run_grid(config)
    second = run_grid(config)
    assert first == second


def test_progress_callback_sees_every_point(tmp_path):
    config = micro_config(tmp_path, (
        "grid:\n"
        "  alphas: [0.25, 0.5]\n"
    ))
    seen = []
    run_grid(config, progress=seen.append)
    assert seen == grid_points(config)


def test_run_pipeline_row_fields(tmp_path):
    config = micro_config(tmp_path)
    result = run_pipeline(config)
    row = result.row
    assert row["status"] == "ok"
    assert row["pretraining"] == "mum_token"
    assert row["tokenizer_kind"] == "coupled"
    assert row["seed"] == 0
    assert result.tokenizer is not None
    assert result.pretrained is not None
    assert result.classifier is not None
    assert set(result.metrics) >= {"per_instance_top1", "per_class_top1", "confusion"}


def test_labeled_per_class_limits_finetune_set(tmp_path):
    config = micro_config(
        tmp_path,
        "data:\n  labeled_per_class: 2\n"
        "grid:\n  pretraining: [none]\n",
    )
    result = run_pipeline(config, pretraining="none")
    assert result.row["train_size"] == 4


def test_write_grid_outputs(tmp_path):
    config = micro_config(tmp_path, "grid:\n  pretraining: [none]\n")
    rows = run_grid(config)
    out = tmp_path / "out"
    outputs = write_grid_outputs(rows, out)
    assert set(outputs) == {"json", "table"}
    results = json.loads((out / "grid_results.json").read_text())
    assert len(results) == 1
    assert "traceback" not in results[0]
    table = (out / "grid_table.txt").read_text()
    assert "tokenizer_kind" in table and "status" in table
    assert "ok" in table


def test_write_grid_outputs_plot(tmp_path):
    config = micro_config(tmp_path, "grid:\n  pretraining: [none]\n")
    rows = run_grid(config)
    out = tmp_path / "plotted"
    outputs = write_grid_outputs(rows, out, plot=True)
    plot_path = out / "grid_top1.png"
    assert outputs["plot"] == str(plot_path)
    assert plot_path.stat().st_size > 0


def test_format_grid_table_handles_missing_values():
    table = format_grid_table([
        {"tokenizer_kind": None, "mask_case": "both", "alpha": 0.5,
         "data_fraction": 1.0, "pretraining": "none", "status": "failed",
         "per_instance_top1": None, "per_class_top1": None},
    ])
    lines = table.splitlines()
    assert len(lines) == 2
    assert "failed" in lines[1]
    assert "-" in lines[1]
