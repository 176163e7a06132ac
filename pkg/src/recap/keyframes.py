"""Frame sampling and anchor-threshold keyframe selection.

Frames are first sampled at a fixed rate from the source, then deduplicated:
the first frame anchors the set, and each later frame is admitted only when
its cosine with the current anchor drops below the threshold (i.e. it is
sufficiently dissimilar); every admitted frame becomes the new anchor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from recap.backends.base import EmbeddingVector, Frame, ImageTextScorer
from recap.backends.files import load_frames_from_blob
from recap.errors import InputError

__all__ = ["VideoSource", "KeyframeSet", "sample_frames", "select_keyframes", "load_video_source"]


@dataclass
class VideoSource:
    """An ordered frame list with its native frame rate."""

    video_id: str
    frames: list[Frame]
    native_fps: float = 3.0

    @property
    def duration(self) -> float:
        return len(self.frames) / self.native_fps


@dataclass
class KeyframeSet:
    """Deduplicated keyframes plus their (unit) embeddings and the threshold used."""

    frames: list[Frame]
    embeddings: list[EmbeddingVector]
    threshold: float
    indices: list[int] = field(default_factory=list)

    @property
    def count(self) -> int:
        return len(self.frames)


def sample_frames(video: VideoSource, fps: float) -> list[Frame]:
    """Frames at timestamps k/fps for k = 0, 1, ... within the video duration.

    Timestamp k/fps maps to source index floor(t * native_fps); consecutive
    duplicate indices collapse, so a one-frame video yields that frame once.
    """
    if fps <= 0:
        raise InputError("fps must be positive")
    if not video.frames:
        raise InputError(f"video {video.video_id!r} has no frames")
    n = len(video.frames)
    out: list[Frame] = []
    last_index = -1
    k = 0
    while True:
        index = math.floor(k * video.native_fps / fps + 1e-9)
        if index >= n:
            break
        if index != last_index:
            out.append(video.frames[index])
            last_index = index
        k += 1
    return out


def select_keyframes(frames: Sequence[Frame], scorer: ImageTextScorer, threshold: float) -> KeyframeSet:
    """Anchor-threshold dedup over ``frames``.

    Frame 0 is always admitted and becomes the anchor; a later frame is
    admitted iff the dot product of its unit embedding with the anchor's is
    strictly below ``threshold``, and then replaces the anchor.
    """
    if not frames:
        raise InputError("cannot select keyframes from an empty frame list")
    if not 0.0 < threshold <= 1.0:
        raise InputError(f"threshold must lie in (0, 1], got {threshold}")
    anchor = scorer.embed_frame(frames[0])
    kept = [frames[0]]
    embeddings = [anchor]
    indices = [0]
    for i, frame in enumerate(frames[1:], start=1):
        emb = scorer.embed_frame(frame)
        if emb.dot(anchor) < threshold:
            kept.append(frame)
            embeddings.append(emb)
            indices.append(i)
            anchor = emb
    return KeyframeSet(frames=kept, embeddings=embeddings, threshold=threshold, indices=indices)


def load_video_source(
    video_id: str,
    frames_dir: Path | None = None,
    embeddings_path: Path | None = None,
    native_fps: float = 3.0,
) -> VideoSource:
    """Frame source from an image directory (ordered by filename) or a vector blob."""
    if frames_dir is not None:
        files = sorted(p for p in Path(frames_dir).iterdir() if p.is_file())
        if not files:
            raise InputError(f"video {video_id!r}: no frame files in {frames_dir}")
        frames = [Frame(frame_id=f"{video_id}/{p.name}", path=p) for p in files]
    elif embeddings_path is not None:
        frames = load_frames_from_blob(embeddings_path, video_id)
        if not frames:
            raise InputError(f"video {video_id!r}: empty embedding blob {embeddings_path}")
    else:
        raise InputError(f"video {video_id!r}: needs a frames directory or an embeddings blob")
    return VideoSource(video_id=video_id, frames=frames, native_fps=native_fps)
