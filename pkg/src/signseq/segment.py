"""Motion-gated clip segmentation for streaming landmark frames.

The signal for a pair of consecutive frames is the mean Euclidean XYZ
displacement over keypoints detected in both frames. A state machine turns
the per-transition signal into clips:

* IDLE -> RECORDING after ``start_hold`` consecutive transitions at or above
  ``start_threshold``; the clip is back-filled to the frame preceding the
  first qualifying transition.
* RECORDING -> emit after ``stop_hold`` consecutive transitions below
  ``stop_threshold`` (the trailing still frames are dropped), or immediately
  when the clip reaches ``max_clip_frames``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Sequence


class TooFewFrames(ValueError):
    pass


@dataclass(frozen=True)
class SegmenterConfig:
    start_threshold: float = 0.01    # normalized units; ~1% of image width
    stop_threshold: float = 0.004
    start_hold: int = 3
    stop_hold: int = 10
    max_clip_frames: int = 150

    def __post_init__(self):
        if self.stop_threshold > self.start_threshold:
            raise ValueError("stop_threshold must be <= start_threshold")
        if self.start_hold < 1 or self.stop_hold < 1:
            raise ValueError("holds must be >= 1")
        if self.max_clip_frames <= self.start_hold:
            raise ValueError("max_clip_frames must exceed start_hold")


def pair_signal(a: Sequence[Optional[float]], b: Sequence[Optional[float]]) -> float:
    """Mean displacement over keypoints fully present in both frames."""
    if len(a) != len(b) or len(a) % 3 != 0:
        raise ValueError(f"frame lengths {len(a)}/{len(b)} not matching triples")
    total, kept = 0.0, 0
    for k in range(0, len(a), 3):
        pa, pb = a[k:k + 3], b[k:k + 3]
        if any(v is None for v in pa) or any(v is None for v in pb):
            continue
        total += math.sqrt((pb[0] - pa[0]) ** 2 + (pb[1] - pa[1]) ** 2
                           + (pb[2] - pa[2]) ** 2)
        kept += 1
    return total / kept if kept else 0.0


def motion_signal(frames: Sequence[Sequence[Optional[float]]]) -> list[float]:
    """Per-transition signal for a whole clip (length = len(frames) - 1)."""
    if len(frames) < 2:
        raise TooFewFrames(f"need >= 2 frames, got {len(frames)}")
    return [pair_signal(frames[i - 1], frames[i]) for i in range(1, len(frames))]


class StreamSegmenter:
    """Incremental segmentation; feed frames, collect emitted clips.

    Frames are feature lists (``None`` = missing coordinate). Frames whose
    length does not match the first accepted frame are skipped and counted
    in ``skipped`` rather than raising — a live stream should survive a
    mangled record.
    """

    def __init__(self, config: SegmenterConfig = SegmenterConfig()):
        self.config = config
        self.recording = False
        self.skipped = 0
        self._width: Optional[int] = None
        self._prev: Optional[list] = None
        self._pending: list = []    # IDLE: previous frame + current motion run
        self._clip: list = []
        self._still = 0

    def _malformed(self, frame) -> bool:
        try:
            width = len(frame)
        except TypeError:
            return True
        if width == 0 or width % 3 != 0:
            return True
        if self._width is None:
            self._width = width
        return width != self._width

    def push(self, frame: Sequence[Optional[float]]) -> list[list]:
        """Consume one frame; return clips completed by it (0 or 1)."""
        if self._malformed(frame):
            self.skipped += 1
            return []
        # Frames are stored as given (not copied): emitted clips then carry
        # whatever sequence type the caller pushed, e.g. one with a timestamp
        # attribute. Callers must not mutate a frame after pushing it.
        if self._prev is None:
            self._prev = frame
            self._pending = [frame]
            return []
        signal = pair_signal(self._prev, frame)
        self._prev = frame
        emitted: list[list] = []
        if not self.recording:
            if signal >= self.config.start_threshold:
                self._pending.append(frame)
                if len(self._pending) - 1 >= self.config.start_hold:
                    self.recording = True
                    self._clip = self._pending
                    self._pending = []
                    self._still = 0
            else:
                self._pending = [frame]
        else:
            self._clip.append(frame)
            self._still = self._still + 1 if signal < self.config.stop_threshold else 0
            if self._still >= self.config.stop_hold:
                emitted.append(self._clip[:-self._still])
                self._reset_idle(frame)
            elif len(self._clip) >= self.config.max_clip_frames:
                emitted.append(self._clip)
                self._reset_idle(frame)
        return emitted

    def _reset_idle(self, frame: list) -> None:
        self.recording = False
        self._clip = []
        self._still = 0
        self._pending = [frame]

    def flush(self) -> list[list]:
        """End of stream: emit an in-flight recording, minus its still tail."""
        if not self.recording:
            return []
        clip = self._clip[:-self._still] if self._still else self._clip
        self._reset_idle(self._prev)
        return [clip] if clip else []


def segment_stream(frames: Iterable[Sequence[Optional[float]]],
                   config: SegmenterConfig = SegmenterConfig(),
                   flush_tail: bool = False) -> Iterator[list]:
    """Generator form of StreamSegmenter over a finite frame iterable."""
    seg = StreamSegmenter(config)
    for frame in frames:
        yield from seg.push(frame)
    if flush_tail:
        yield from seg.flush()
