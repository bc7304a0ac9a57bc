"""Scripted synthetic landmark clips (.synth files).

A .synth file is a small JSON script describing a gesture as segments:

    {"fps": 30, "seed": 7,
     "segments": [{"kind": "still", "frames": 5},
                  {"kind": "drift", "frames": 30, "step": 0.02},
                  {"kind": "jitter", "frames": 10, "amplitude": 0.002}],
     "missing": {"hands": [[7, 9]]}}

Any segment may add `"jitter": <amp>` — per-frame uniform noise layered on
top of the segment's own motion, for sensor-like wobble on drift or still
segments without changing their kind.

Expansion is fully deterministic for a given script, which makes these
files stand in for camera footage in tests: the frame count "decoded"
is exactly the frame count scripted.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from typing import Optional

from . import layout
from .landmarks import FrameLandmarks, Point


class BadScript(ValueError):
    pass


_KINDS = ("still", "drift", "jitter")
_PARTS = {
    "left_hand": layout.LEFT_HAND,
    "right_hand": layout.RIGHT_HAND,
    "hands": slice(layout.LEFT_HAND.start, layout.RIGHT_HAND.stop),
    "pose": layout.POSE,
    "all": slice(0, layout.KEYPOINT_COUNT),
}


@dataclass
class Segment:
    kind: str
    frames: int
    step: tuple[float, float, float] = (0.0, 0.0, 0.0)
    amplitude: float = 0.0
    jitter: float = 0.0                 # extra per-frame noise, any kind


@dataclass
class SynthScript:
    fps: float
    seed: int
    base: Point
    segments: list[Segment]
    # part name -> inclusive [first, last] frame ranges with that part undetected
    missing: dict[str, list[tuple[int, int]]]

    @property
    def frame_count(self) -> int:
        return sum(s.frames for s in self.segments)


def _as_step(v) -> tuple[float, float, float]:
    if isinstance(v, (int, float)):
        return (float(v), 0.0, 0.0)
    if isinstance(v, list) and len(v) == 3:
        return tuple(float(c) for c in v)
    raise BadScript(f"step must be a number or [dx, dy, dz], got {v!r}")


def parse_script(data: dict) -> SynthScript:
    try:
        segments = []
        for i, seg in enumerate(data["segments"]):
            kind = seg["kind"]
            if kind not in _KINDS:
                raise BadScript(f"segment {i}: unknown kind {kind!r}")
            frames = int(seg["frames"])
            if frames <= 0:
                raise BadScript(f"segment {i}: frames must be positive")
            jitter = float(seg.get("jitter", 0.0))
            if jitter < 0:
                raise BadScript(f"segment {i}: jitter must be >= 0")
            segments.append(Segment(
                kind=kind, frames=frames,
                step=_as_step(seg.get("step", 0.0)) if kind == "drift" else (0.0, 0.0, 0.0),
                amplitude=float(seg.get("amplitude", 0.002)) if kind == "jitter" else 0.0,
                jitter=jitter,
            ))
        if not segments:
            raise BadScript("script has no segments")
        missing: dict[str, list[tuple[int, int]]] = {}
        for part, ranges in data.get("missing", {}).items():
            if part not in _PARTS:
                raise BadScript(f"unknown part {part!r} in missing")
            missing[part] = [(int(a), int(b)) for a, b in ranges]
        base = data.get("base", [0.35, 0.5, 0.0])
        return SynthScript(
            fps=float(data.get("fps", 30.0)),
            seed=int(data.get("seed", 0)),
            base=tuple(float(c) for c in base),
            segments=segments,
            missing=missing,
        )
    except BadScript:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise BadScript(f"malformed script: {exc}") from None


def load_script(path) -> SynthScript:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise BadScript(f"{path}: {exc}") from None
    if not isinstance(data, dict):
        raise BadScript(f"{path}: script must be a JSON object")
    return parse_script(data)


# Upper-body anchors relative to the base point, in layout.POSE_JOINTS order.
_POSE_LOCAL = (
    (-0.10, -0.18, 0.0), (+0.10, -0.18, 0.0),   # shoulders
    (-0.14, -0.08, 0.0), (+0.14, -0.08, 0.0),   # elbows
    (-0.12, +0.04, 0.0), (+0.12, +0.04, 0.0),   # wrists
)


def _template() -> list[Point]:
    """Resting skeleton: two hand clusters beside the base, pose above it."""
    points: list[Point] = []
    for k in range(layout.KEYPOINT_COUNT):
        if k >= layout.POSE.start:
            points.append(_POSE_LOCAL[k - layout.POSE.start])
            continue
        ax = -0.12 if k < layout.LEFT_HAND.stop else +0.12
        local = k % 21
        points.append((ax + (local % 5) * 0.012,
                       0.05 + (local // 5) * 0.015,
                       -0.02 + (local % 3) * 0.01))
    return points


def generate_frames(script: SynthScript) -> list[FrameLandmarks]:
    """Expand a script to landmark frames; same script, same frames, always.

    Keypoints keep a plausible skeleton shape: a fixed template around the
    base point, one seeded whole-body offset per clip, and a small static
    per-joint wobble — motion (drift/jitter) rides on top of that.
    """
    rng = random.Random(script.seed)
    template = _template()
    body = (rng.uniform(-0.04, 0.04), rng.uniform(-0.04, 0.04),
            rng.uniform(-0.01, 0.01))
    offsets = [tuple(t + b + w for t, b, w in zip(
                   template[k], body,
                   (rng.uniform(-0.01, 0.01), rng.uniform(-0.01, 0.01),
                    rng.uniform(-0.005, 0.005))))
               for k in range(layout.KEYPOINT_COUNT)]

    hidden: list[set[str]] = [set() for _ in range(script.frame_count)]
    for part, ranges in script.missing.items():
        for first, last in ranges:
            for f in range(max(first, 0), min(last, script.frame_count - 1) + 1):
                hidden[f].add(part)

    frames: list[FrameLandmarks] = []
    cx, cy, cz = script.base
    index = 0
    for seg in script.segments:
        for _ in range(seg.frames):
            if seg.kind == "drift":
                cx += seg.step[0]
                cy += seg.step[1]
                cz += seg.step[2]
            points: list[Optional[Point]] = []
            noise = seg.amplitude + seg.jitter
            for k in range(layout.KEYPOINT_COUNT):
                ox, oy, oz = offsets[k]
                if noise:
                    ox += rng.uniform(-noise, noise)
                    oy += rng.uniform(-noise, noise)
                    oz += rng.uniform(-noise, noise)
                points.append((cx + ox, cy + oy, cz + oz))
            for part in hidden[index]:
                sl = _PARTS[part]
                points[sl] = [None] * (sl.stop - sl.start)
            frames.append(FrameLandmarks(points, ts=index / script.fps))
            index += 1
    return frames
