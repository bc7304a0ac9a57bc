"""Landmark capture client: batch video extraction and a live demo loop."""

from .extract import ExtractionJob, ExtractSummary, extract_landmarks
from .landmarks import FrameLandmarks
from .layout import FEATURE_COUNT, KEYPOINT_COUNT, KEYPOINT_NAMES, csv_header

__all__ = [
    "ExtractionJob",
    "ExtractSummary",
    "extract_landmarks",
    "FrameLandmarks",
    "FEATURE_COUNT",
    "KEYPOINT_COUNT",
    "KEYPOINT_NAMES",
    "csv_header",
]
