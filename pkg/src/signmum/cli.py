"""Command-line entry point.

Every stage writes into its own run directory
``<out_dir>/<stage>-<confighash8>-<timestamp>`` containing the resolved
config, a JSONL training/event log, and any artifacts (datasets,
checkpoints, score files, metric reports).
"""

from __future__ import annotations

import argparse
import json
import sys
import time
import traceback
from pathlib import Path

from .backbone.pretrain import pretrain
from .checkpoint import load_checkpoint, save_checkpoint
from .config import RunConfig, config_hash, load_config, pretrain_train_config, finetune_train_config
from .downstream.classifier import finetune, score_dataset
from .downstream.fusion import fuse_score_files, write_scores
from .downstream.metrics import compute_metrics
from .errors import (
    CheckpointError,
    ConfigError,
    DatasetError,
    DependencyError,
    SchemaError,
    TrainingDivergedError,
)
from .grid import build_tokenizer, pretraining_plan, resolve_datasets, run_grid, write_grid_outputs
from .pose.io import load_pose_dataset, write_pose_dataset
from .pose.synth import synth_generate
from .pose.transforms import split_dataset
from .tokenizer.model import tokenize_sequence

EXIT_CODES = (
    (ConfigError, 2),
    (DependencyError, 3),
    ((SchemaError, DatasetError), 4),
    (CheckpointError, 5),
    (TrainingDivergedError, 6),
)


def _make_run_dir(stage: str, config: RunConfig) -> Path:
    base = Path(config.data.out_dir)
    stamp = time.strftime("%Y%m%d-%H%M%S")
    short = config_hash(config)[:8]
    path = base / f"{stage}-{short}-{stamp}"
    counter = 0
    while path.exists():
        counter += 1
        path = base / f"{stage}-{short}-{stamp}-{counter}"
    path.mkdir(parents=True)
    (path / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    return path


def _write_log(path: Path, entries) -> None:
    with open(path, "a") as fh:
        for entry in entries:
            fh.write(json.dumps(entry) + "\n")


def _resolved_config(args) -> RunConfig:
    return load_config(
        getattr(args, "config", None),
        profile=getattr(args, "profile", None),
        seed=getattr(args, "seed", None),
        out_dir=getattr(args, "out", None),
    )


def _cmd_synth(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("synth", config)
    sy = config.synth
    dataset = synth_generate(
        sy.num_classes, sy.samples_per_class, sy.length,
        sy.prototypes_per_class, sy.noise_sigma, seed=config.data.seed,
    )
    write_pose_dataset(dataset, run_dir / "dataset.jsonl")
    train, held_out = split_dataset(dataset, config.data.test_fraction, seed=config.data.seed)
    write_pose_dataset(train, run_dir / "train.jsonl")
    write_pose_dataset(held_out, run_dir / "eval.jsonl")
    _write_log(run_dir / "log.jsonl", [{
        "stage": "synth", "sequences": len(dataset),
        "train": len(train), "eval": len(held_out),
    }])
    print(run_dir)
    return 0


def _cmd_tokenizer(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("tokenizer", config)
    train_set, _ = resolve_datasets(config)
    tokenizer = build_tokenizer(train_set, config, args.kind, seed=config.data.seed)
    ckpt = run_dir / "tokenizer.ckpt"
    save_checkpoint(tokenizer, ckpt)
    _write_log(run_dir / "log.jsonl", getattr(tokenizer, "train_log", []))
    _write_log(run_dir / "log.jsonl", [{
        "stage": "tokenizer", "kind": args.kind or config.model.tokenizer_kind,
        "checkpoint": str(ckpt), "frames": sum(len(s) for s in train_set.sequences),
    }])
    print(ckpt)
    return 0


def _cmd_tokenize(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("tokenize", config)
    tokenizer = load_checkpoint(args.checkpoint)
    dataset = load_pose_dataset(args.data)
    out = run_dir / "tokens.jsonl"
    with open(out, "w") as fh:
        for seq in dataset.sequences:
            triplets = tokenize_sequence(seq, tokenizer)
            fh.write(json.dumps({
                "id": seq.sample_id,
                "tokens": [[t.k_l, t.k_r, t.k_b] for t in triplets],
            }) + "\n")
    _write_log(run_dir / "log.jsonl", [{
        "stage": "tokenize", "sequences": len(dataset), "output": str(out),
    }])
    print(out)
    return 0


def _cmd_pretrain(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("pretrain", config)
    train_set, _ = resolve_datasets(config)
    plan = pretraining_plan("mum_" + config.model.objective, config.model.mask_case,
                            config.model.mask_ratio)
    if plan is None:
        raise ConfigError(["pretraining is disabled by mask_case/mask_ratio settings"])
    objective, case = plan
    tokenizer = None
    if objective == "token":
        if args.tokenizer is None:
            raise DependencyError("token-objective pretraining needs --tokenizer")
        tokenizer = load_checkpoint(args.tokenizer)
        if not tokenizer.frozen:
            tokenizer.freeze()
    model = pretrain(
        train_set, tokenizer,
        pretrain_train_config(config, mask_case=case, objective=objective),
        seed=config.data.seed,
    )
    ckpt = run_dir / "backbone.ckpt"
    save_checkpoint(model, ckpt)
    _write_log(run_dir / "log.jsonl", model.train_log)
    print(ckpt)
    return 0


def _cmd_finetune(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("finetune", config)
    train_set, _ = resolve_datasets(config)
    pretrained = None
    if args.backbone is not None:
        pretrained = load_checkpoint(args.backbone, expected_type="backbone/pretrained")
    classifier = finetune(train_set, pretrained, finetune_train_config(config),
                          seed=config.data.seed)
    ckpt = run_dir / "classifier.ckpt"
    save_checkpoint(classifier, ckpt)
    _write_log(run_dir / "log.jsonl", classifier.train_log)
    print(ckpt)
    return 0


def _cmd_evaluate(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("evaluate", config)
    classifier = load_checkpoint(args.classifier, expected_type="downstream/classifier")
    if args.data is not None:
        eval_set = load_pose_dataset(args.data)
    else:
        _, eval_set = resolve_datasets(config)
    ids, labels, scores = score_dataset(eval_set, classifier)
    write_scores(run_dir / "scores.jsonl", ids, scores)
    if labels is None:
        raise DatasetError("evaluation requires labels")
    report = compute_metrics(labels, scores)
    report.save(run_dir / "metrics.json")
    _write_log(run_dir / "log.jsonl", [{
        "stage": "evaluate", "sequences": len(eval_set), **{
            k: report.to_dict()[k] for k in (
                "per_instance_top1", "per_instance_top5",
                "per_class_top1", "per_class_top5",
            )
        },
    }])
    print(report.format_table())
    return 0


def _cmd_fuse(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("fuse", config)
    weights = (args.weight_a, args.weight_b)
    ids, fused = fuse_score_files(args.scores_a, args.scores_b, weights,
                                  normalize=not args.raw)
    out = run_dir / "fused.jsonl"
    write_scores(out, ids, fused)
    entry = {"stage": "fuse", "weights": list(weights), "normalize": not args.raw,
             "output": str(out)}
    if args.data is not None:
        dataset = load_pose_dataset(args.data)
        by_id = {seq.sample_id: seq.label for seq in dataset.sequences}
        missing = [i for i in ids if i not in by_id or by_id[i] is None]
        if missing:
            raise DatasetError(f"no label for fused ids (e.g. {missing[:5]})")
        labels = [by_id[i] for i in ids]
        report = compute_metrics(labels, fused)
        report.save(run_dir / "metrics.json")
        entry.update(per_instance_top1=report.per_instance_top1,
                     per_class_top1=report.per_class_top1)
        print(report.format_table())
    _write_log(run_dir / "log.jsonl", [entry])
    print(out)
    return 0


def _cmd_grid(args) -> int:
    config = _resolved_config(args)
    run_dir = _make_run_dir("grid", config)
    progress_log = run_dir / "log.jsonl"
    rows = run_grid(config, progress=lambda p: _write_log(progress_log, [{
        "stage": "grid", "point": p,
    }]))
    outputs = write_grid_outputs(rows, run_dir, plot=args.plot)
    failed = sum(1 for r in rows if r.get("status") != "ok")
    _write_log(progress_log, [{
        "stage": "grid", "rows": len(rows), "failed": failed, **outputs,
    }])
    print((run_dir / "grid_table.txt").read_text())
    print(run_dir)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="signmum",
        description="Pose tokenization, masked-unit pretraining and sign classification.",
    )
    sub = parser.add_subparsers(dest="stage", metavar="stage")

    def common(p):
        p.add_argument("--config", default=None, help="YAML config file")
        p.add_argument("--profile", default=None, choices=("full", "test"),
                       help="base defaults to start from")
        p.add_argument("--seed", type=int, default=None, help="override data.seed")
        p.add_argument("--out", default=None, help="override data.out_dir")

    p = sub.add_parser("synth", help="generate a synthetic dataset and split it")
    common(p)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("tokenizer", help="train a pose tokenizer")
    common(p)
    p.add_argument("--kind", default=None, choices=("coupled", "kmeans", "separate_vq"))
    p.set_defaults(handler=_cmd_tokenizer)

    p = sub.add_parser("tokenize", help="tokenize a dataset with a trained tokenizer")
    common(p)
    p.add_argument("--checkpoint", required=True, help="tokenizer checkpoint")
    p.add_argument("--data", required=True, help="dataset to tokenize")
    p.set_defaults(handler=_cmd_tokenize)

    p = sub.add_parser("pretrain", help="masked-unit pretraining of the encoder")
    common(p)
    p.add_argument("--tokenizer", default=None, help="frozen tokenizer checkpoint")
    p.set_defaults(handler=_cmd_pretrain)

    p = sub.add_parser("finetune", help="train the sign classifier")
    common(p)
    p.add_argument("--backbone", default=None, help="pretrained encoder checkpoint")
    p.set_defaults(handler=_cmd_finetune)

    p = sub.add_parser("evaluate", help="score a dataset and report accuracy")
    common(p)
    p.add_argument("--classifier", required=True, help="classifier checkpoint")
    p.add_argument("--data", default=None, help="evaluation dataset")
    p.set_defaults(handler=_cmd_evaluate)

    p = sub.add_parser("fuse", help="late-fuse two score files")
    common(p)
    p.add_argument("--scores-a", required=True)
    p.add_argument("--scores-b", required=True)
    p.add_argument("--weight-a", type=float, default=1.0)
    p.add_argument("--weight-b", type=float, default=1.0)
    p.add_argument("--raw", action="store_true", help="sum raw scores without softmax")
    p.add_argument("--data", default=None, help="labeled dataset to score the fusion")
    p.set_defaults(handler=_cmd_fuse)

    p = sub.add_parser("grid", help="run the ablation grid")
    common(p)
    p.add_argument("--plot", action="store_true", help="also write a bar chart")
    p.set_defaults(handler=_cmd_grid)

    return parser


def run_command(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "handler"):
        parser.print_help()
        return 2
    try:
        return args.handler(args)
    except Exception as exc:
        for types, code in EXIT_CODES:
            if isinstance(exc, types):
                print(f"error: {exc}", file=sys.stderr)
                return code
        traceback.print_exc()
        return 1


def main() -> None:
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
