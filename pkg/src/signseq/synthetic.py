"""Seeded generator for tiny sanity-check gesture datasets.

Three separable gesture families built from a fixed skeleton template:

* family 0 -- ``drift_right``: every keypoint translates +x over the clip
* family 1 -- ``drift_left``: same, mirrored
* family 2 -- ``still``: stationary pose with per-frame jitter only

Each clip adds positional jitter, a per-clip pose offset, and a sprinkle of
dropped keypoints (``None`` slots) so the full ingestion path is exercised.
Two calls with the same (seed, substream) are identical; different
substreams give disjoint-by-construction datasets for train/test pairs.
"""

from __future__ import annotations

import numpy as np

from .landmarks import (
    DEFAULT_LAYOUT,
    ClassVocabulary,
    ClipTensor,
    FrameRecord,
    LandmarkLayout,
    build_clip_tensor,
    group_clips,
    impute_missing,
    sample_frames,
)
from .rng import CounterRng

CLASS_NAMES = ("drift_right", "drift_left", "still")
_DRIFT_PER_FRAME = 0.012    # x-units per frame; ~0.4 over a clip, >> jitter


def _skeleton_template(layout: LandmarkLayout) -> np.ndarray:
    """Deterministic resting pose: one (x, y, z) row per keypoint."""
    n = len(layout.keypoint_names)
    template = np.zeros((n, 3))
    for j, name in enumerate(layout.keypoint_names):
        if name.startswith("left_hand"):
            cx, cy = 0.35, 0.55
        elif name.startswith("right_hand"):
            cx, cy = 0.65, 0.55
        else:
            cx, cy = 0.50, 0.30
        local = j % 21
        template[j] = (cx + (local % 5) * 0.012,
                       cy + (local // 5) * 0.015,
                       -0.02 + (local % 3) * 0.01)
    return template


def make_drift_records(n_clips: int, seed: int, substream: int = 0,
                       min_frames: int = 24, max_frames: int = 40,
                       missing_rate: float = 0.01,
                       layout: LandmarkLayout = DEFAULT_LAYOUT) -> list[FrameRecord]:
    """Flat per-frame records (CSV-ready) for n_clips synthetic clips."""
    if n_clips < 1:
        raise ValueError("n_clips must be >= 1")
    if not 0 <= missing_rate < 1:
        raise ValueError("missing_rate must be in [0, 1)")
    if not 1 <= min_frames <= max_frames:
        raise ValueError("need 1 <= min_frames <= max_frames")
    base = CounterRng(seed, stream=10).spawn(substream)
    template = _skeleton_template(layout)
    records: list[FrameRecord] = []
    for i in range(n_clips):
        rng = base.spawn(i)
        family = i % 3
        n_frames = min_frames + int(rng.integers(max_frames - min_frames + 1, 1)[0])
        vx = {0: _DRIFT_PER_FRAME, 1: -_DRIFT_PER_FRAME, 2: 0.0}[family]
        vx *= 1.0 + 0.2 * (rng.uniform() - 0.5)
        offset = (rng.uniform((3,)) - 0.5) * np.array([0.08, 0.08, 0.01])
        jitter = rng.normal((n_frames, len(template), 3)) * 0.004
        drop = rng.uniform((n_frames, len(template))) < missing_rate
        video_id = f"s{substream}_clip{i:04d}"
        label = CLASS_NAMES[family]
        for t in range(n_frames):
            pose = template + offset + jitter[t]
            pose[:, 0] += vx * t
            feats: list = []
            for j in range(len(template)):
                feats.extend([None, None, None] if drop[t, j]
                             else [float(v) for v in pose[j]])
            records.append(FrameRecord(video_id, t, feats, label))
    return records


def make_drift_clips(n_clips: int, seed: int, substream: int = 0, t_data: int = 16,
                     **kwargs) -> tuple[list[ClipTensor], ClassVocabulary]:
    """Records run through the full tensor pipeline; labels from CLASS_NAMES."""
    vocab = ClassVocabulary.from_labels(CLASS_NAMES)
    records = make_drift_records(n_clips, seed, substream, **kwargs)
    tensors = []
    for clip in group_clips(records):
        imputed = [impute_missing(f) for f in clip.frames]
        keep = sample_frames(len(imputed), t_data)
        tensors.append(build_clip_tensor([imputed[k] for k in keep], t_data,
                                         vocab.index_of(clip.label)))
    return tensors, vocab
