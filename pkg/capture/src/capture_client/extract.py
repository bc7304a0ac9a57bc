"""Batch landmark extraction: video files in, one landmark CSV out."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from . import layout
from .landmarks import csv_row
from .sources import VIDEO_SUFFIXES, UnreadableVideo, open_source


class LabelMissing(Exception):
    pass


@dataclass
class ExtractionJob:
    inputs: list[Path]                 # files, or directories to scan
    out_path: Path
    label_source: str = "filename"     # or "manifest:<json path>"
    backend: object = None             # pixel-frame backend; lazy Mediapipe if None

    def __post_init__(self):
        self.inputs = [Path(p) for p in self.inputs]
        self.out_path = Path(self.out_path)


@dataclass
class ExtractSummary:
    files: int = 0
    frames: int = 0
    frames_missing: int = 0            # frames with at least one undetected joint
    skipped: list[tuple[str, str]] = field(default_factory=list)
    per_video: dict[str, int] = field(default_factory=dict)


_TRAILING_INDEX = re.compile(r"_\d+$")


def label_from_filename(path: Path) -> str:
    """drift_right_007.synth -> drift_right; no trailing index, whole stem."""
    return _TRAILING_INDEX.sub("", path.stem)


def _label_fn(label_source: str):
    if label_source == "filename":
        return lambda p: label_from_filename(p)
    if label_source.startswith("manifest:"):
        manifest_path = label_source.split(":", 1)[1]
        try:
            with open(manifest_path, "r", encoding="utf-8") as fh:
                table = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise LabelMissing(f"cannot read manifest {manifest_path}: {exc}") from None
        if not isinstance(table, dict):
            raise LabelMissing(f"{manifest_path}: manifest must map filename to label")

        def lookup(p: Path) -> str:
            for key in (p.name, p.stem):
                if key in table:
                    return str(table[key])
            raise LabelMissing(f"{p.name}: not in manifest {manifest_path}")
        return lookup
    raise LabelMissing(f"unknown label source {label_source!r} "
                       "(want 'filename' or 'manifest:<path>')")


def gather_inputs(inputs: list[Path]) -> list[Path]:
    """Expand directories; order is sorted by name so reruns are stable.

    A missing --in path is an operator error, not a bad recording: raise
    instead of skip-and-report so a typo cannot produce an empty CSV
    with exit code 0.
    """
    files: list[Path] = []
    for p in inputs:
        if p.is_dir():
            files.extend(sorted(
                c for c in p.iterdir()
                if c.suffix.lower() in VIDEO_SUFFIXES + (".synth",)))
        elif p.exists():
            files.append(p)
        else:
            raise UnreadableVideo(f"{p}: no such file or directory")
    return files


def _unique_video_id(stem: str, used: set) -> str:
    vid = stem
    n = 2
    while vid in used:
        vid = f"{stem}__{n}"
        n += 1
    used.add(vid)
    return vid


def extract_landmarks(job: ExtractionJob) -> ExtractSummary:
    """Write one CSV row per decoded frame; undetected joints become None."""
    label_of = _label_fn(job.label_source)
    files = gather_inputs(job.inputs)
    if not files:
        raise UnreadableVideo("no input files found")

    backend = job.backend
    summary = ExtractSummary()
    used_ids: set = set()

    with open(job.out_path, "w", encoding="utf-8", newline="") as out:
        out.write(layout.csv_header())
        out.write("\n")
        for path in files:
            label = label_of(path)      # fail fast before decoding anything
            try:
                source = open_source(path)
            except UnreadableVideo as exc:
                summary.skipped.append((str(path), str(exc)))
                continue
            video_id = _unique_video_id(path.stem, used_ids)
            count = 0
            for frame in source:
                if frame.landmarks is not None:
                    lm = frame.landmarks
                else:
                    if backend is None:
                        from .backends import MediapipeBackend
                        backend = MediapipeBackend()
                    lm = backend.process(frame.pixels, ts=frame.ts)
                out.write(csv_row(video_id, count, lm, label))
                out.write("\n")
                count += 1
                summary.frames += 1
                if lm.detected() < layout.KEYPOINT_COUNT:
                    summary.frames_missing += 1
            summary.per_video[video_id] = count
            summary.files += 1
    return summary
