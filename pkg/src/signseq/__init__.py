"""Skeletal-landmark sign gesture recognition.

Landmark CSV ingestion, a transformer sequence classifier on a small
reverse-mode autodiff core, Adam training with stratified evaluation
protocols, binary checkpoints, and motion-segmented streaming inference.
"""

from .landmarks import (
    DEFAULT_LAYOUT,
    ClassVocabulary,
    ClipTensor,
    FrameKind,
    FrameRecord,
    LandmarkLayout,
    VideoClip,
    build_clip_tensor,
    group_clips,
    impute_missing,
    parse_landmark_csv,
    sample_frames,
    write_landmark_csv,
)
from .model import ModelConfig, ModelParams, forward, forward_clips, init_params, predict_topk
from .training import MetricsReport, TrainConfig, evaluate, stratified_kfold, stratified_split, train_loop
from .checkpoint import load_checkpoint, save_checkpoint
from .segment import SegmenterConfig, StreamSegmenter, motion_signal, segment_stream
from .inference import infer_clip

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_LAYOUT",
    "ClassVocabulary",
    "ClipTensor",
    "FrameKind",
    "FrameRecord",
    "LandmarkLayout",
    "MetricsReport",
    "ModelConfig",
    "ModelParams",
    "SegmenterConfig",
    "StreamSegmenter",
    "TrainConfig",
    "VideoClip",
    "build_clip_tensor",
    "evaluate",
    "forward",
    "forward_clips",
    "group_clips",
    "impute_missing",
    "infer_clip",
    "init_params",
    "load_checkpoint",
    "motion_signal",
    "parse_landmark_csv",
    "predict_topk",
    "sample_frames",
    "save_checkpoint",
    "segment_stream",
    "stratified_kfold",
    "stratified_split",
    "train_loop",
    "write_landmark_csv",
]
