"""End-to-end pipeline and the ablation grid built on top of it.

Grid axes: tokenizer kind, mask case, mask ratio, pretraining data fraction,
and pretraining mode (which masking/objective combination, or none). One
failed cell is recorded and does not stop the sweep.
"""

from __future__ import annotations

import itertools
import json
import traceback
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .backbone.pretrain import pretrain
from .checkpoint import state_hash
from .config import (
    RunConfig,
    baseline_vq_config,
    finetune_train_config,
    pretrain_train_config,
    tokenizer_train_config,
)
from .downstream.classifier import finetune
from .downstream.metrics import evaluate
from .errors import DependencyError
from .pose.io import load_pose_dataset
from .pose.synth import synth_generate
from .pose.transforms import split_dataset, subsample_fraction, take_per_class
from .tokenizer.baselines import fit_baseline_tokenizer
from .tokenizer.train import train_tokenizer

GRID_AXES = ("tokenizer_kind", "mask_case", "alpha", "data_fraction", "pretraining")


def resolve_datasets(config: RunConfig):
    """Training and evaluation datasets from files or the synthesizer."""
    d = config.data
    if d.train_path:
        train = load_pose_dataset(d.train_path)
        if d.eval_path:
            return train, load_pose_dataset(d.eval_path)
        return split_dataset(train, d.test_fraction, seed=d.seed)
    full = synth_generate(
        config.synth.num_classes,
        config.synth.samples_per_class,
        config.synth.length,
        config.synth.prototypes_per_class,
        config.synth.noise_sigma,
        seed=d.seed,
    )
    return split_dataset(full, d.test_fraction, seed=d.seed)


def build_tokenizer(train_set, config: RunConfig, kind: Optional[str] = None, seed: int = 0):
    """Train (or fit) a tokenizer of the requested kind and freeze it."""
    kind = kind or config.model.tokenizer_kind
    sizes = (config.model.hand_codes, config.model.body_codes)
    if kind == "coupled":
        tokenizer = train_tokenizer(train_set, tokenizer_train_config(config), seed=seed)
    elif kind in ("kmeans", "separate_vq"):
        tokenizer = fit_baseline_tokenizer(
            train_set, kind, sizes, seed=seed, config=baseline_vq_config(config)
        )
    else:
        raise ValueError(f"unknown tokenizer kind {kind!r}")
    if not tokenizer.frozen:
        tokenizer.freeze()
    return tokenizer


def pretraining_plan(mode: str, mask_case: str, alpha: float):
    """Map a pretraining mode to (objective, mask_case) or None to skip.

    Random-mask modes always mask every part of a chosen frame; masked-unit
    modes use the requested part pattern. A zero ratio, a ``none`` case or
    mode means no pretraining.
    """
    if mode == "none" or mask_case == "none" or alpha == 0.0:
        return None
    objective = "token" if mode.endswith("_token") else "regress"
    case = "all_parts" if mode.startswith("rmask") else mask_case
    return objective, case


@dataclass(frozen=True)
class PipelineResult:
    metrics: dict
    row: dict
    tokenizer: object
    pretrained: object
    classifier: object


def run_pipeline(
    config: RunConfig,
    tokenizer_kind: Optional[str] = None,
    mask_case: Optional[str] = None,
    alpha: Optional[float] = None,
    data_fraction: float = 1.0,
    pretraining: str = "mum_token",
) -> PipelineResult:
    """Synthesize/load data, train the stack and evaluate the classifier."""
    seed = config.data.seed
    kind = tokenizer_kind or config.model.tokenizer_kind
    case = mask_case if mask_case is not None else config.model.mask_case
    ratio = alpha if alpha is not None else config.model.mask_ratio

    train_set, eval_set = resolve_datasets(config)
    plan = pretraining_plan(pretraining, case, ratio)
    if plan is not None and data_fraction == 0.0:
        plan = None

    tokenizer = None
    pretrained = None
    pretrain_loss = None
    if plan is not None:
        objective, resolved_case = plan
        if objective == "token":
            tokenizer = build_tokenizer(train_set, config, kind, seed)
        pretrain_set = (
            subsample_fraction(train_set, data_fraction, seed=seed)
            if data_fraction < 1.0 else train_set
        )
        frozen_hash = state_hash(tokenizer) if tokenizer is not None else None
        pretrained = pretrain(
            pretrain_set,
            tokenizer,
            pretrain_train_config(
                config, mask_ratio=ratio, mask_case=resolved_case, objective=objective
            ),
            seed=seed,
        )
        if frozen_hash is not None and state_hash(tokenizer) != frozen_hash:
            raise DependencyError("tokenizer state changed during pretraining")
        pretrain_loss = pretrained.train_log[-1]["loss"] if pretrained.train_log else None

    labeled = train_set
    if config.data.labeled_per_class is not None:
        labeled = take_per_class(train_set, config.data.labeled_per_class, seed=seed)
    classifier = finetune(labeled, pretrained, finetune_train_config(config), seed=seed)
    report = evaluate(eval_set, classifier)

    row = {
        "tokenizer_kind": kind if plan is not None and plan[0] == "token" else None,
        "mask_case": case,
        "alpha": ratio,
        "data_fraction": data_fraction,
        "pretraining": pretraining if plan is not None else "none",
        "status": "ok",
        "error": None,
        "per_instance_top1": report.per_instance_top1,
        "per_instance_top5": report.per_instance_top5,
        "per_class_top1": report.per_class_top1,
        "per_class_top5": report.per_class_top5,
        "pretrain_loss": pretrain_loss,
        "finetune_loss": classifier.train_log[-1]["loss"],
        "train_size": len(labeled),
        "eval_size": len(eval_set),
        "seed": seed,
    }
    return PipelineResult(
        metrics=report.to_dict(),
        row=row,
        tokenizer=tokenizer,
        pretrained=pretrained,
        classifier=classifier,
    )


def grid_points(config: RunConfig):
    g = config.grid
    return [
        dict(zip(GRID_AXES, combo))
        for combo in itertools.product(
            g.tokenizer_kinds, g.mask_cases, g.alphas, g.data_fractions, g.pretraining
        )
    ]


def run_grid(config: RunConfig, progress=None) -> list[dict]:
    """Run every grid cell; failures are recorded, not raised."""
    rows = []
    for point in grid_points(config):
        if progress is not None:
            progress(point)
        try:
            result = run_pipeline(
                config,
                tokenizer_kind=point["tokenizer_kind"],
                mask_case=point["mask_case"],
                alpha=point["alpha"],
                data_fraction=point["data_fraction"],
                pretraining=point["pretraining"],
            )
            row = dict(result.row)
            # Report the cell under its requested axes even when the
            # pipeline degenerated to no pretraining.
            row.update(point)
            row["effective_pretraining"] = result.row["pretraining"]
            rows.append(row)
        except Exception as exc:
            row = dict(point)
            row.update({
                "status": "failed",
                "error": f"{type(exc).__name__}: {exc}",
                "traceback": traceback.format_exc(),
            })
            rows.append(row)
    return rows


_TABLE_COLUMNS = (
    "tokenizer_kind", "mask_case", "alpha", "data_fraction", "pretraining",
    "status", "per_instance_top1", "per_class_top1",
)


def format_grid_table(rows: list[dict]) -> str:
    widths = {c: max(len(c), 10) for c in _TABLE_COLUMNS}
    def fmt(row, column):
        value = row.get(column)
        if value is None:
            return "-"
        if isinstance(value, float):
            return f"{value:.2f}"
        return str(value)
    lines = ["  ".join(c.ljust(widths[c]) for c in _TABLE_COLUMNS)]
    for row in rows:
        lines.append("  ".join(fmt(row, c).ljust(widths[c]) for c in _TABLE_COLUMNS))
    return "\n".join(lines)


def write_grid_outputs(rows: list[dict], out_dir, plot: bool = False) -> dict:
    """Write grid results as JSON and a text table, optionally a bar chart."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / "grid_results.json"
    slim = [{k: v for k, v in row.items() if k != "traceback"} for row in rows]
    json_path.write_text(json.dumps(slim, indent=2) + "\n")
    table_path = out_dir / "grid_table.txt"
    table_path.write_text(format_grid_table(rows) + "\n")
    outputs = {"json": str(json_path), "table": str(table_path)}
    if plot:
        outputs["plot"] = str(_plot_grid(rows, out_dir / "grid_top1.png"))
    return outputs


def _plot_grid(rows: list[dict], path: Path) -> Path:
    try:
        import matplotlib
        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError as exc:
        raise DependencyError(f"plotting requires matplotlib: {exc}") from exc
    ok = [r for r in rows if r.get("status") == "ok"]
    labels = [
        f"{r['pretraining']}/{r['mask_case']}/a{r['alpha']}/f{r['data_fraction']}"
        for r in ok
    ]
    values = [r["per_instance_top1"] for r in ok]
    fig, ax = plt.subplots(figsize=(max(6, len(ok) * 0.6), 4))
    ax.bar(range(len(ok)), values)
    ax.set_xticks(range(len(ok)))
    ax.set_xticklabels(labels, rotation=60, ha="right", fontsize=7)
    ax.set_ylabel("per-instance top-1 (%)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
