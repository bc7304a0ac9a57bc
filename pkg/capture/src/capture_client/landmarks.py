"""Per-frame landmark bundle and its two wire encodings (CSV row, NDJSON)."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

from . import layout

Point = tuple[float, float, float]


@dataclass
class FrameLandmarks:
    """One frame's keypoints in layout order; None marks an undetected joint."""

    points: list[Optional[Point]] = field(
        default_factory=lambda: [None] * layout.KEYPOINT_COUNT)
    ts: Optional[float] = None

    def __post_init__(self):
        if len(self.points) != layout.KEYPOINT_COUNT:
            raise ValueError(
                f"{len(self.points)} keypoints, layout has {layout.KEYPOINT_COUNT}")

    def features(self) -> list[Optional[float]]:
        """Flatten to the 144-slot feature row (undetected joint -> 3 Nones)."""
        row: list[Optional[float]] = []
        for p in self.points:
            row.extend((None, None, None) if p is None else p)
        return row

    def detected(self) -> int:
        return sum(p is not None for p in self.points)


def _cell(v: Optional[float]) -> str:
    # Engine-side parser prints floats back at 9 significant digits; matching
    # it here makes extract output round-trip stable.
    return "None" if v is None else f"{v:.9g}"


def csv_row(video_id: str, frame_index: int, lm: FrameLandmarks, label: str) -> str:
    if "," in video_id or "," in label or "\n" in video_id or "\n" in label:
        raise ValueError(f"video_id/label must be comma-free: {video_id!r}, {label!r}")
    coords = ",".join(_cell(v) for v in lm.features())
    return f"{video_id},{frame_index},{coords},{label}"


def ndjson_line(lm: FrameLandmarks) -> str:
    record = {"features": lm.features()}
    if lm.ts is not None:
        record = {"ts": lm.ts, "features": lm.features()}
    return json.dumps(record)


@dataclass
class HandDetection:
    """A detected 21-point hand plus the detector's side guess (may be absent)."""

    points: list[Point]
    side: Optional[str] = None  # "left" / "right" / None when the model is unsure

    def __post_init__(self):
        if len(self.points) != len(layout.HAND_JOINTS):
            raise ValueError(f"hand has {len(self.points)} points, expected 21")
        if self.side not in (None, "left", "right"):
            raise ValueError(f"bad side {self.side!r}")

    @property
    def wrist_x(self) -> float:
        return self.points[0][0]


def assign_hands(hands: Sequence[HandDetection],
                 mid_shoulder_x: Optional[float],
                 ) -> tuple[Optional[list[Point]], Optional[list[Point]]]:
    """Map detections to (left, right) slots.

    Unambiguous detector labels win. Anything left over is placed by wrist
    x relative to the mid-shoulder line (image coordinates: smaller x is
    the left slot); without shoulders the image midline 0.5 substitutes.
    Two hands competing for one slot: the nearer wrist keeps it, the other
    takes the free slot.
    """
    if len(hands) > 2:
        raise ValueError(f"{len(hands)} hands in one frame")
    mid = 0.5 if mid_shoulder_x is None else mid_shoulder_x

    slots: dict[str, HandDetection] = {}
    unplaced: list[HandDetection] = []
    for h in hands:
        if h.side is not None and h.side not in slots:
            slots[h.side] = h
        else:
            unplaced.append(h)

    for h in unplaced:
        want = "left" if h.wrist_x < mid else "right"
        if want not in slots:
            slots[want] = h
            continue
        other = "right" if want == "left" else "left"
        if other in slots:  # both taken: cannot happen with <= 2 hands
            raise ValueError("more hands than slots")
        incumbent = slots[want]
        # closer wrist to its claimed side keeps the slot
        if abs(h.wrist_x - mid) > abs(incumbent.wrist_x - mid):
            slots[want] = h
            slots[other] = incumbent
        else:
            slots[other] = h

    left = slots["left"].points if "left" in slots else None
    right = slots["right"].points if "right" in slots else None
    return left, right


def compose_frame(left_hand: Optional[list[Point]],
                  right_hand: Optional[list[Point]],
                  pose: Sequence[Optional[Point]],
                  ts: Optional[float] = None) -> FrameLandmarks:
    """Assemble the layout-ordered keypoint list from part detections."""
    if len(pose) != len(layout.POSE_JOINTS):
        raise ValueError(f"pose has {len(pose)} joints, expected {len(layout.POSE_JOINTS)}")
    points: list[Optional[Point]] = [None] * layout.KEYPOINT_COUNT
    if left_hand is not None:
        points[layout.LEFT_HAND] = list(left_hand)
    if right_hand is not None:
        points[layout.RIGHT_HAND] = list(right_hand)
    points[layout.POSE] = list(pose)
    return FrameLandmarks(points, ts=ts)


def mid_shoulder_x(pose: Sequence[Optional[Point]]) -> Optional[float]:
    ls = pose[layout.LEFT_SHOULDER - layout.POSE.start]
    rs = pose[layout.RIGHT_SHOULDER - layout.POSE.start]
    if ls is None or rs is None:
        return None
    return (ls[0] + rs[0]) / 2.0
