"""Landmark data model: CSV records in, fixed-shape masked clip tensors out.

The on-disk format is a plain CSV, one row per video frame: video id, frame
index, 48 keypoints x 3 coordinates (X/Y/Z, image-normalized), class label.
Undetected joints are stored as the literal token ``None``. Columns follow
the layout order: 21 left-hand joints, 21 right-hand joints, then 6 upper-body
pose joints (shoulders, elbows, wrists).

A clip tensor holds one sign: up to ``t_data`` sampled data frames, one
end-of-sequence sentinel row (constant EOS_VALUE, outside the normalized
coordinate range), and zero padding up to the fixed capacity ``t_data + 1``.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Optional, Sequence

import numpy as np


class HeaderMismatch(ValueError):
    pass


class MalformedRow(ValueError):
    pass


class BadNumber(ValueError):
    pass


class InconsistentLabel(ValueError):
    pass


class DimensionMismatch(ValueError):
    pass


class ZeroFrames(ValueError):
    pass


# Sentinel feature value for the EOS row; Mediapipe X/Y are in [0, 1].
EOS_VALUE = 2.0

_HAND_JOINTS = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)
_POSE_JOINTS = (
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
)
DEFAULT_KEYPOINT_NAMES = (
    tuple(f"left_hand_{j}" for j in _HAND_JOINTS)
    + tuple(f"right_hand_{j}" for j in _HAND_JOINTS)
    + _POSE_JOINTS
)


@dataclass(frozen=True)
class LandmarkLayout:
    """Named keypoint set; fixes column order and feature width (count x 3)."""

    keypoint_names: tuple[str, ...] = DEFAULT_KEYPOINT_NAMES

    def __post_init__(self):
        if len(set(self.keypoint_names)) != len(self.keypoint_names):
            raise DimensionMismatch("duplicate keypoint names in layout")
        if not self.keypoint_names:
            raise DimensionMismatch("layout needs at least one keypoint")

    @property
    def keypoint_count(self) -> int:
        return len(self.keypoint_names)

    @property
    def dims_per_keypoint(self) -> int:
        return 3

    @property
    def feature_count(self) -> int:
        return 3 * len(self.keypoint_names)

    def csv_header(self) -> str:
        cols = ["video_id", "frame_index"]
        for name in self.keypoint_names:
            cols += [f"{name}_x", f"{name}_y", f"{name}_z"]
        cols.append("label")
        return ",".join(cols)


DEFAULT_LAYOUT = LandmarkLayout()


@dataclass
class FrameRecord:
    """One CSV row; a feature slot of None means the landmark was not detected."""

    video_id: str
    frame_index: int
    features: list[Optional[float]]
    label: str = ""


class FrameKind(IntEnum):
    DATA = 0
    EOS = 1
    PAD = 2


@dataclass
class ClipTensor:
    """Fixed-capacity (t_data + 1) x F matrix for one clip, plus row kinds."""

    features: np.ndarray           # (T, F) float32, fully imputed
    frame_kind: np.ndarray         # (T,) int8 of FrameKind values
    label_index: Optional[int] = None

    @property
    def capacity(self) -> int:
        return self.features.shape[0]

    @property
    def data_len(self) -> int:
        return int((self.frame_kind == FrameKind.DATA).sum())

    def attend_mask(self) -> np.ndarray:
        """True for DATA and EOS rows, False for PAD."""
        return self.frame_kind != FrameKind.PAD


@dataclass(frozen=True)
class ClassVocabulary:
    """Bijective class-name <-> index mapping; order fixes the label indices."""

    names: tuple[str, ...]
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        if len(set(self.names)) != len(self.names):
            raise InconsistentLabel("duplicate class names")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(self.names)})

    @classmethod
    def from_labels(cls, labels: Iterable[str]) -> "ClassVocabulary":
        return cls(tuple(sorted(set(labels))))

    def __len__(self) -> int:
        return len(self.names)

    def index_of(self, name: str) -> int:
        return self._index[name]

    def name_of(self, index: int) -> str:
        return self.names[index]


@dataclass
class VideoClip:
    """Frames of one video id, sorted by frame index, with the shared label."""

    video_id: str
    frames: list[FrameRecord]
    label: str


# ---------------------------------------------------------------------------
# CSV round trip
# ---------------------------------------------------------------------------

def parse_landmark_csv(text, layout: LandmarkLayout = DEFAULT_LAYOUT) -> list[FrameRecord]:
    """Parse the landmark CSV format into frame records, in file order.

    Accepts a string or a text file object. The literal token ``None``
    (case-sensitive) in a coordinate field becomes a missing value.
    """
    if hasattr(text, "read"):
        text = text.read()
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise HeaderMismatch("empty input, expected a header line")
    expected = layout.csv_header()
    if lines[0] != expected:
        raise HeaderMismatch(f"header does not match layout ({len(lines[0].split(','))} columns, "
                             f"expected {len(expected.split(','))})")
    n_fields = 3 + layout.feature_count
    records = []
    for lineno, line in enumerate(lines[1:], start=2):
        fields = line.split(",")
        if len(fields) != n_fields:
            raise MalformedRow(f"line {lineno}: {len(fields)} fields, expected {n_fields}")
        video_id = fields[0]
        try:
            frame_index = int(fields[1])
        except ValueError:
            raise BadNumber(f"line {lineno}: bad frame_index {fields[1]!r}") from None
        if frame_index < 0:
            raise BadNumber(f"line {lineno}: negative frame_index {frame_index}")
        features: list[Optional[float]] = []
        for col, tok in enumerate(fields[2:-1]):
            if tok == "None":
                features.append(None)
                continue
            try:
                v = float(tok)
            except ValueError:
                raise BadNumber(f"line {lineno}: bad coordinate {tok!r} at feature {col}") from None
            if not np.isfinite(v):
                raise BadNumber(f"line {lineno}: non-finite coordinate {tok!r} at feature {col}")
            features.append(v)
        records.append(FrameRecord(video_id, frame_index, features, fields[-1]))
    return records


def _format_value(v: Optional[float]) -> str:
    return "None" if v is None else f"{v:.9g}"


def write_landmark_csv(records: Iterable[FrameRecord],
                       layout: LandmarkLayout = DEFAULT_LAYOUT) -> str:
    """Inverse of parse_landmark_csv; floats at 9 significant digits."""
    out = io.StringIO()
    out.write(layout.csv_header())
    out.write("\n")
    for rec in records:
        if len(rec.features) != layout.feature_count:
            raise DimensionMismatch(
                f"record {rec.video_id}/{rec.frame_index} has {len(rec.features)} features, "
                f"layout expects {layout.feature_count}")
        coords = ",".join(_format_value(v) for v in rec.features)
        out.write(f"{rec.video_id},{rec.frame_index},{coords},{rec.label}\n")
    return out.getvalue()


# ---------------------------------------------------------------------------
# grouping, imputation, sampling, clip assembly
# ---------------------------------------------------------------------------

def group_clips(records: Iterable[FrameRecord]) -> list[VideoClip]:
    """Partition records by video id (first-appearance order), sort frames."""
    groups: dict[str, list[FrameRecord]] = {}
    for rec in records:
        groups.setdefault(rec.video_id, []).append(rec)
    clips = []
    for video_id, frames in groups.items():
        labels = {f.label for f in frames}
        if len(labels) > 1:
            raise InconsistentLabel(f"video {video_id!r} has labels {sorted(labels)}")
        frames.sort(key=lambda f: f.frame_index)
        clips.append(VideoClip(video_id, frames, frames[0].label))
    return clips


def impute_missing(frame) -> np.ndarray:
    """Replace missing coordinates with zeros; present values are untouched.

    Accepts a FrameRecord or a bare feature sequence (e.g. a decoded stream
    record).
    """
    features = frame.features if isinstance(frame, FrameRecord) else frame
    return np.array([0.0 if v is None else v for v in features], dtype=np.float64)


def sample_frames(n_frames: int, t_data: int) -> list[int]:
    """Indices of t_data evenly spaced frames out of n_frames.

    Short clips (n_frames < t_data) keep every frame. Endpoints are always
    included for n_frames >= 2; rounding is half-to-even, and any collision
    is resolved by bumping the later index.
    """
    if n_frames == 0:
        raise ZeroFrames("cannot sample from an empty clip")
    if n_frames < 0 or t_data < 1:
        raise ValueError("n_frames and t_data must be positive")
    if n_frames <= t_data:
        return list(range(n_frames))
    if t_data == 1:
        return [0]
    step = (n_frames - 1) / (t_data - 1)
    indices = []
    prev = -1
    for k in range(t_data):
        idx = round(k * step)
        if idx <= prev:
            idx = prev + 1
        indices.append(idx)
        prev = idx
    return indices


def build_clip_tensor(frames: Sequence[np.ndarray], t_data: int,
                      label_index: Optional[int] = None,
                      dtype=np.float32) -> ClipTensor:
    """Stack data frames, append the EOS sentinel row, zero-pad to t_data + 1."""
    if t_data < 1:
        raise DimensionMismatch("t_data must be positive")
    if len(frames) > t_data:
        raise DimensionMismatch(f"{len(frames)} frames exceed capacity {t_data}")
    widths = {len(f) for f in frames}
    if len(widths) > 1:
        raise DimensionMismatch(f"inconsistent frame widths {sorted(widths)}")
    n = len(frames)
    feat_dim = widths.pop() if widths else DEFAULT_LAYOUT.feature_count
    if feat_dim == 0:
        raise DimensionMismatch("frames have zero features")
    T = t_data + 1
    features = np.zeros((T, feat_dim), dtype=dtype)
    for i, f in enumerate(frames):
        features[i] = np.asarray(f, dtype=dtype)
    features[n] = EOS_VALUE
    kind = np.full(T, FrameKind.PAD, dtype=np.int8)
    kind[:n] = FrameKind.DATA
    kind[n] = FrameKind.EOS
    return ClipTensor(features, kind, label_index)


def recenter_on_shoulders(features: list[Optional[float]],
                          layout: LandmarkLayout = DEFAULT_LAYOUT) -> list[Optional[float]]:
    """Optional transform: subtract the shoulder midpoint from every keypoint.

    Off by default in every pipeline; raw image-normalized coordinates are
    passed through unchanged unless explicitly requested. Frames missing
    either shoulder are returned as-is.
    """
    try:
        li = layout.keypoint_names.index("left_shoulder")
        ri = layout.keypoint_names.index("right_shoulder")
    except ValueError:
        return list(features)
    ls = features[3 * li:3 * li + 3]
    rs = features[3 * ri:3 * ri + 3]
    if any(v is None for v in ls) or any(v is None for v in rs):
        return list(features)
    mid = [(a + b) / 2.0 for a, b in zip(ls, rs)]
    out: list[Optional[float]] = []
    for i, v in enumerate(features):
        out.append(None if v is None else v - mid[i % 3])
    return out
