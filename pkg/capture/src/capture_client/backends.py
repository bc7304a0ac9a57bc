"""Pixel-frame landmark backends.

The real detector is Mediapipe (Pose + Hands); it is an optional install,
so everything here imports lazily. DotBackend is a dependency-light stand-in
that tracks one bright blob — enough to smoke-test the video path end to
end on machines without Mediapipe.
"""

from __future__ import annotations

from typing import Optional

from . import layout
from .landmarks import (FrameLandmarks, HandDetection, assign_hands,
                        compose_frame, mid_shoulder_x)


class BackendUnavailable(Exception):
    pass


class MediapipeBackend:
    """Mediapipe Pose + Hands over BGR frames (converted to RGB per frame)."""

    # Mediapipe pose indices for our six joints, in layout.POSE_JOINTS order.
    _POSE_IDS = (11, 12, 13, 14, 15, 16)

    def __init__(self, static_image_mode: bool = True):
        try:
            import mediapipe as mp
        except ImportError:
            raise BackendUnavailable(
                "mediapipe not installed (pip install 'capture-client[pose]')") from None
        self._mp = mp
        # static mode trades speed for run-to-run determinism on files
        self._pose = mp.solutions.pose.Pose(static_image_mode=static_image_mode)
        self._hands = mp.solutions.hands.Hands(static_image_mode=static_image_mode,
                                               max_num_hands=2)

    def process(self, pixels, ts: Optional[float] = None) -> FrameLandmarks:
        import cv2
        rgb = cv2.cvtColor(pixels, cv2.COLOR_BGR2RGB)
        pose_res = self._pose.process(rgb)
        hands_res = self._hands.process(rgb)

        pose: list = [None] * len(layout.POSE_JOINTS)
        if pose_res.pose_landmarks is not None:
            pts = pose_res.pose_landmarks.landmark
            for slot, idx in enumerate(self._POSE_IDS):
                p = pts[idx]
                pose[slot] = (p.x, p.y, p.z)

        hands = []
        if hands_res.multi_hand_landmarks:
            sides = []
            if hands_res.multi_handedness:
                for h in hands_res.multi_handedness:
                    c = h.classification[0]
                    # low-confidence side guesses are treated as ambiguous
                    sides.append(c.label.lower() if c.score >= 0.8 else None)
            sides += [None] * (len(hands_res.multi_hand_landmarks) - len(sides))
            for marks, side in zip(hands_res.multi_hand_landmarks, sides):
                pts = [(p.x, p.y, p.z) for p in marks.landmark]
                hands.append(HandDetection(pts, side))

        left, right = assign_hands(hands[:2], mid_shoulder_x(pose))
        return compose_frame(left, right, pose, ts=ts)

    def close(self):
        self._pose.close()
        self._hands.close()


class DotBackend:
    """Tracks the centroid of bright pixels as the right wrist; test double."""

    _THRESHOLD = 200

    def __init__(self):
        try:
            import numpy as np
        except ImportError:
            raise BackendUnavailable("numpy not installed") from None
        self._np = np

    def process(self, pixels, ts: Optional[float] = None) -> FrameLandmarks:
        np = self._np
        gray = np.asarray(pixels).max(axis=2)
        ys, xs = np.nonzero(gray >= self._THRESHOLD)
        pose: list = [None] * len(layout.POSE_JOINTS)
        right = None
        if xs.size:
            h, w = gray.shape
            x = float(xs.mean()) / w
            y = float(ys.mean()) / h
            right = [(x, y, 0.0)] * len(layout.HAND_JOINTS)
        return compose_frame(None, right, pose, ts=ts)
