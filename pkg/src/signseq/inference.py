"""Single-clip inference and frame-rate samplers.

A recorded clip goes through the same pipeline as training data — impute,
evenly sample, tensorize with the EOS row — then one eval-mode forward pass
yields the ranked (class name, probability) list.

Samplers are a pre-thinning stage applied before the fixed even sampling:
``fixed:16`` passes frames straight through (the even sampler then keeps 16),
``fps:15`` first thins to ~15 frames per second — by timestamp when the
stream provides one, by count (assumed 30 fps native) otherwise.
"""

from __future__ import annotations

from typing import Optional, Sequence

from .landmarks import (
    ClassVocabulary,
    build_clip_tensor,
    impute_missing,
    sample_frames,
)
from .model import ModelConfig, ModelParams, forward_clips, predict_topk


class EmptyClip(ValueError):
    pass


class BadSampler(ValueError):
    pass


DEFAULT_NATIVE_FPS = 30.0


def thin_by_fps(n_frames: int, timestamps: Optional[Sequence[float]],
                fps: float, native_fps: float = DEFAULT_NATIVE_FPS) -> list[int]:
    """Indices of frames kept when thinning to `fps`.

    With timestamps: greedy tick walk — keep the first frame at or past each
    1/fps tick starting from the first frame's timestamp. Without: uniform
    stride of round(native_fps / fps). Index 0 is always kept.
    """
    if n_frames < 1:
        raise EmptyClip("no frames to sample")
    if fps <= 0:
        raise BadSampler("fps must be positive")
    if timestamps is None:
        stride = max(1, round(native_fps / fps))
        return list(range(0, n_frames, stride))
    if len(timestamps) != n_frames:
        raise BadSampler(f"{len(timestamps)} timestamps for {n_frames} frames")
    kept = [0]
    tick = timestamps[0] + 1.0 / fps
    for i in range(1, n_frames):
        if timestamps[i] >= tick:
            kept.append(i)
            # advance past skipped ticks so a slow stream does not backlog
            while tick <= timestamps[i]:
                tick += 1.0 / fps
    return kept


def parse_sampler(spec_text: str) -> tuple:
    """`fixed:<t_data>` or `fps:<rate>` -> (thin_fn | None, t_data | None).

    thin_fn maps (n_frames, timestamps) to kept indices; fixed mode skips
    thinning and instead pins t_data for the even-sampling stage.
    """
    kind, _, arg = spec_text.partition(":")
    try:
        if kind == "fixed":
            t_data = int(arg) if arg else 16
            if t_data < 1:
                raise ValueError
            return None, t_data
        if kind == "fps":
            rate = float(arg) if arg else 15.0
            if rate <= 0:
                raise ValueError
            return (lambda n, ts: thin_by_fps(n, ts, rate)), None
    except ValueError:
        raise BadSampler(f"bad sampler argument {arg!r}") from None
    raise BadSampler(f"unknown sampler {kind!r} (want fixed:<n> or fps:<rate>)")


def infer_clip(frames: Sequence, params: ModelParams, config: ModelConfig,
               vocabulary: ClassVocabulary, t_data: int = 16, k: int = 5,
               timestamps: Optional[Sequence[float]] = None,
               sampler=None) -> list[tuple[str, float]]:
    """Ranked top-k (class name, probability) for one clip of raw frames."""
    if not frames:
        raise EmptyClip("cannot classify an empty clip")
    imputed = [impute_missing(f) for f in frames]
    if sampler is not None:
        keep = sampler(len(imputed), timestamps)
        imputed = [imputed[i] for i in keep]
    keep = sample_frames(len(imputed), t_data)
    clip = build_clip_tensor([imputed[i] for i in keep], t_data)
    logits = forward_clips([clip], params, config, training=False)
    ranked = predict_topk(logits, min(k, len(vocabulary)))
    return [(vocabulary.name_of(i), p) for i, p in ranked]
