from .io import load_pose_dataset, manifest_path, write_pose_dataset
from .synth import synth_generate
from .transforms import (
    JitterParams,
    crop_and_rescale,
    perturb,
    sample_frames,
    split_dataset,
    subsample_fraction,
    take_per_class,
)
from .types import (
    ALL_PARTS_VALID,
    BODY_JOINTS,
    DEFAULT_LAYOUT,
    HAND_JOINTS,
    PartArrays,
    PartValid,
    PoseDataset,
    PoseLayout,
    PoseSequence,
    PoseTripletUnit,
    RawPoseFrame,
    sequence_from_arrays,
)

__all__ = [
    "ALL_PARTS_VALID",
    "BODY_JOINTS",
    "DEFAULT_LAYOUT",
    "HAND_JOINTS",
    "JitterParams",
    "PartArrays",
    "PartValid",
    "PoseDataset",
    "PoseLayout",
    "PoseSequence",
    "PoseTripletUnit",
    "RawPoseFrame",
    "crop_and_rescale",
    "load_pose_dataset",
    "manifest_path",
    "perturb",
    "sample_frames",
    "sequence_from_arrays",
    "split_dataset",
    "subsample_fraction",
    "synth_generate",
    "take_per_class",
    "write_pose_dataset",
]
