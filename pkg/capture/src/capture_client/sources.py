"""Frame sources: things that yield CapturedFrame streams.

A frame either carries pixels (camera / video file, landmarks still to be
extracted) or ready-made landmarks (.synth scripts, the injector used in
tests). The extraction stage treats both uniformly via resolve().
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional

from .landmarks import FrameLandmarks
from .synth import BadScript, generate_frames, load_script


class UnreadableVideo(Exception):
    pass


class CameraUnavailable(Exception):
    pass


@dataclass
class CapturedFrame:
    ts: Optional[float]
    pixels: object = None              # HxWx3 BGR array when from a decoder
    landmarks: Optional[FrameLandmarks] = None


VIDEO_SUFFIXES = (".avi", ".mp4", ".mov", ".mkv", ".webm")


def _cv2():
    try:
        import cv2
    except ImportError:
        raise CameraUnavailable(
            "OpenCV not installed (pip install 'capture-client[camera]')") from None
    return cv2


class SyntheticSource:
    """Expands a .synth script; the script's frame count is what we 'decode'."""

    live = False  # frames are not perishable: consumers may pace us

    def __init__(self, path):
        self.path = Path(path)
        try:
            self._frames = generate_frames(load_script(path))
        except BadScript as exc:
            raise UnreadableVideo(str(exc)) from None

    def __len__(self) -> int:
        return len(self._frames)

    def __iter__(self) -> Iterator[CapturedFrame]:
        for lm in self._frames:
            yield CapturedFrame(ts=lm.ts, landmarks=lm)


class OpenCVVideoSource:
    """Decodes a video file frame by frame; timestamps from the container fps."""

    live = False

    def __init__(self, path):
        self.path = Path(path)
        if not self.path.is_file():
            raise UnreadableVideo(f"{path}: no such file")
        cv2 = _cv2()
        self._cap = cv2.VideoCapture(str(path))
        if not self._cap.isOpened():
            raise UnreadableVideo(f"{path}: decoder would not open it")
        fps = self._cap.get(cv2.CAP_PROP_FPS)
        self._fps = fps if fps and fps > 0 else 30.0

    def __iter__(self) -> Iterator[CapturedFrame]:
        index = 0
        while True:
            ok, frame = self._cap.read()
            if not ok:
                break
            yield CapturedFrame(ts=index / self._fps, pixels=frame)
            index += 1
        self._cap.release()


class CameraSource:
    """Live webcam frames; timestamps are seconds since the stream opened."""

    live = True  # a camera cannot be paused: never block its producer

    def __init__(self, camera_id: int):
        cv2 = _cv2()
        self._cap = cv2.VideoCapture(camera_id)
        if not self._cap.isOpened():
            raise CameraUnavailable(f"camera {camera_id} would not open")
        self._t0 = None

    def __iter__(self) -> Iterator[CapturedFrame]:
        while True:
            ok, frame = self._cap.read()
            if not ok:
                break
            now = time.monotonic()
            if self._t0 is None:
                self._t0 = now
            yield CapturedFrame(ts=now - self._t0, pixels=frame)
        self._cap.release()

    def close(self):
        self._cap.release()


def open_source(path):
    """Pick a source for a file by suffix."""
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".synth":
        return SyntheticSource(p)
    if suffix in VIDEO_SUFFIXES:
        return OpenCVVideoSource(p)
    raise UnreadableVideo(f"{path}: unsupported file type {suffix!r}")
