"""Keypoint layout shared with the classifier's CSV/stream formats.

The column order below is an interchange contract: the engine refuses
files whose header deviates by a single byte, so the names are spelled
out here rather than imported from anywhere.
"""

HAND_JOINTS = (
    "wrist",
    "thumb_cmc", "thumb_mcp", "thumb_ip", "thumb_tip",
    "index_mcp", "index_pip", "index_dip", "index_tip",
    "middle_mcp", "middle_pip", "middle_dip", "middle_tip",
    "ring_mcp", "ring_pip", "ring_dip", "ring_tip",
    "pinky_mcp", "pinky_pip", "pinky_dip", "pinky_tip",
)

# Upper-body subset only: shoulders anchor the handedness rule, elbows and
# wrists carry the arm trajectory. Face/leg joints are never emitted.
POSE_JOINTS = (
    "left_shoulder", "right_shoulder",
    "left_elbow", "right_elbow",
    "left_wrist", "right_wrist",
)

KEYPOINT_NAMES = (
    tuple(f"left_hand_{j}" for j in HAND_JOINTS)
    + tuple(f"right_hand_{j}" for j in HAND_JOINTS)
    + POSE_JOINTS
)

KEYPOINT_COUNT = len(KEYPOINT_NAMES)          # 48
FEATURE_COUNT = 3 * KEYPOINT_COUNT            # 144

# Slices of the keypoint axis, for masking whole body parts.
LEFT_HAND = slice(0, 21)
RIGHT_HAND = slice(21, 42)
POSE = slice(42, 48)

LEFT_SHOULDER = 42
RIGHT_SHOULDER = 43


def csv_header() -> str:
    cols = ["video_id", "frame_index"]
    for name in KEYPOINT_NAMES:
        cols += [f"{name}_x", f"{name}_y", f"{name}_z"]
    cols.append("label")
    return ",".join(cols)
