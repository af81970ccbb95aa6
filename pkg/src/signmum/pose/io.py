"""Reading and writing pose datasets.

A dataset is a line-delimited JSON file; each record holds
``{"id": str, "label": int (optional), "frames": [[x, y, c] x 49] x T}``
with rows ordered body(7), left hand(21), right hand(21). A sidecar manifest
``<name>.manifest.json`` carries ``num_classes``, class names and the
coordinate convention:

* ``raw_pixels``: frames are detector output; each part is cropped around
  its confident joints and rescaled to the unit square on load.
* ``normalized``: frames already hold per-part normalized coordinates and
  the third column is the part validity flag (1.0 or 0.0 for all joints of a
  part). This is the form ``write_pose_dataset`` emits, and it round-trips
  coordinates bit-exactly through JSON.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from ..errors import DatasetError, SchemaError
from .transforms import crop_and_rescale
from .types import (
    DEFAULT_LAYOUT,
    PartValid,
    PoseDataset,
    PoseLayout,
    PoseSequence,
    PoseTripletUnit,
    RawPoseFrame,
)

MANIFEST_VERSION = 1


def manifest_path(data_path) -> Path:
    data_path = Path(data_path)
    return data_path.parent / (data_path.stem + ".manifest.json")


def write_pose_dataset(dataset: PoseDataset, path) -> None:
    """Write a dataset plus its sidecar manifest in normalized form."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        for seq in dataset.sequences:
            record = {"id": seq.sample_id}
            if seq.label is not None:
                record["label"] = seq.label
            frames = []
            for unit in seq.frames:
                rows = []
                for arr, ok in (
                    (unit.body, unit.part_valid.body),
                    (unit.left, unit.part_valid.left),
                    (unit.right, unit.part_valid.right),
                ):
                    flag = 1.0 if ok else 0.0
                    rows.extend([float(x), float(y), flag] for x, y in arr)
                frames.append(rows)
            record["frames"] = frames
            fh.write(json.dumps(record) + "\n")
    manifest = {
        "version": MANIFEST_VERSION,
        "coordinates": "normalized",
        "num_classes": dataset.num_classes,
        "classes": list(dataset.vocabulary),
    }
    manifest_path(path).write_text(json.dumps(manifest, indent=2) + "\n")


def _parse_frame_rows(record_no: int, t: int, frame, layout: PoseLayout) -> np.ndarray:
    if not isinstance(frame, list) or len(frame) != layout.total_joints:
        got = len(frame) if isinstance(frame, list) else type(frame).__name__
        raise SchemaError(
            f"record {record_no}: frame {t} has {got} joints, expected {layout.total_joints}"
        )
    try:
        rows = np.array(frame, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"record {record_no}: frame {t} is not numeric: {exc}") from None
    if rows.shape != (layout.total_joints, 3):
        raise SchemaError(
            f"record {record_no}: frame {t} rows must be [x, y, c] triples, got shape {rows.shape}"
        )
    return rows


def _normalized_unit(record_no: int, t: int, rows: np.ndarray, layout: PoseLayout) -> PoseTripletUnit:
    parts = layout.split(rows)
    coords, flags = [], []
    for name, part in zip(("body", "left", "right"), parts):
        part_flags = part[:, 2]
        if not (np.all(part_flags == 1.0) or np.all(part_flags == 0.0)):
            raise SchemaError(
                f"record {record_no}: frame {t} part {name!r} has mixed validity flags"
            )
        coords.append(part[:, :2])
        flags.append(bool(part_flags[0]))
    try:
        return PoseTripletUnit(coords[0], coords[1], coords[2], PartValid(*flags))
    except ValueError as exc:
        raise SchemaError(f"record {record_no}: frame {t}: {exc}") from None


def load_pose_dataset(
    path,
    layout: PoseLayout = DEFAULT_LAYOUT,
    conf_threshold: float = 0.3,
    margin: float = 0.2,
) -> PoseDataset:
    """Load a dataset file plus its manifest.

    Args:
        path: line-delimited JSON file.
        layout: joint layout descriptor for the 49-row frames.
        conf_threshold: crop box confidence cutoff for raw-pixel datasets.
        margin: crop box expansion per side for raw-pixel datasets.

    Raises:
        DatasetError: missing or empty file, missing manifest.
        SchemaError: malformed record, wrong joint count, bad label.
    """
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}")
    mpath = manifest_path(path)
    if not mpath.is_file():
        raise DatasetError(f"manifest not found: {mpath}")
    try:
        manifest = json.loads(mpath.read_text())
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest {mpath} is not valid JSON: {exc}") from None
    if manifest.get("version", MANIFEST_VERSION) != MANIFEST_VERSION:
        raise SchemaError(f"manifest version {manifest.get('version')} is not supported")
    coordinates = manifest.get("coordinates", "raw_pixels")
    if coordinates not in ("raw_pixels", "normalized"):
        raise SchemaError(f"unknown coordinate convention {coordinates!r}")
    num_classes = int(manifest.get("num_classes", 0))
    classes = tuple(manifest.get("classes") or ())

    sequences = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"record {lineno}: invalid JSON: {exc}") from None
            if not isinstance(record, dict) or "id" not in record:
                raise SchemaError(f"record {lineno}: missing 'id' field")
            frames_field = record.get("frames")
            if not isinstance(frames_field, list) or not frames_field:
                raise SchemaError(f"record {lineno}: 'frames' must be a non-empty list")
            label = record.get("label")
            if label is not None:
                if not isinstance(label, int):
                    raise SchemaError(f"record {lineno}: label must be an integer")
                if num_classes and not 0 <= label < num_classes:
                    raise SchemaError(
                        f"record {lineno}: label {label} outside [0, {num_classes})"
                    )
            units = []
            for t, frame in enumerate(frames_field):
                rows = _parse_frame_rows(lineno, t, frame, layout)
                if coordinates == "normalized":
                    units.append(_normalized_unit(lineno, t, rows, layout))
                else:
                    try:
                        raw = RawPoseFrame(rows, layout)
                    except ValueError as exc:
                        raise SchemaError(f"record {lineno}: frame {t}: {exc}") from None
                    units.append(crop_and_rescale(raw, conf_threshold, margin))
            sequences.append(
                PoseSequence(tuple(units), sample_id=str(record["id"]), label=label)
            )
    if not sequences:
        raise DatasetError(f"dataset {path} is empty")
    try:
        return PoseDataset(tuple(sequences), num_classes=num_classes, vocabulary=classes)
    except ValueError as exc:
        raise SchemaError(str(exc)) from None
