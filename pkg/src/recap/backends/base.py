"""Scorer interfaces and the domain types they exchange.

Every neural component of the captioning engine (video encoder, image-text
scorer, causal language model, sentence-similarity scorer) hides behind one
of the abstract classes below, so the whole pipeline runs against the
deterministic toy implementations in :mod:`recap.backends.toy` as well as
against real checkpoints.
"""
from __future__ import annotations

import abc
import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from recap.errors import ConfigurationError, InputError

__all__ = [
    "EmbeddingVector",
    "TokenDistribution",
    "Frame",
    "VideoEncoder",
    "ImageTextScorer",
    "SentenceScorer",
    "CausalLM",
    "TextEncoder",
    "BackendSuite",
]


class EmbeddingVector:
    """A unit-normalized dense vector in a shared semantic space.

    Normalization happens at construction; ``values`` always has L2 norm 1,
    so a dot product between two vectors is their cosine similarity.
    """

    __slots__ = ("values",)

    def __init__(self, values: Sequence[float] | np.ndarray):
        arr = np.asarray(values, dtype=np.float64).ravel()
        if arr.size == 0:
            raise InputError("embedding vector must be non-empty")
        if not np.all(np.isfinite(arr)):
            raise InputError("embedding vector contains non-finite values")
        norm = float(np.linalg.norm(arr))
        if norm < 1e-12:
            raise InputError("cannot normalize a zero vector")
        self.values = arr / norm

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def dot(self, other: "EmbeddingVector") -> float:
        return float(np.dot(self.values, other.values))

    def __repr__(self) -> str:  # pragma: no cover
        return f"EmbeddingVector(dim={self.dim})"


class TokenDistribution:
    """A probability distribution over the LM vocabulary.

    ``probs`` may be a numpy array or a torch tensor; a torch tensor keeps
    its autograd graph intact so downstream losses can differentiate through
    it. Entries must be non-negative and sum to 1 within 1e-6.
    """

    __slots__ = ("probs", "vocab_size")

    def __init__(self, probs, vocab_size: int | None = None):
        values = self._detached(probs)
        if vocab_size is None:
            vocab_size = int(values.size)
        if values.size != vocab_size:
            raise InputError(f"distribution length {values.size} != vocab size {vocab_size}")
        if float(values.min()) < -1e-9:
            raise InputError("distribution has negative entries")
        total = float(values.sum())
        if abs(total - 1.0) > 1e-6:
            raise InputError(f"distribution sums to {total!r}, expected 1")
        self.probs = probs
        self.vocab_size = vocab_size

    @staticmethod
    def _detached(probs) -> np.ndarray:
        if hasattr(probs, "detach"):
            return probs.detach().cpu().numpy()
        return np.asarray(probs, dtype=np.float64)

    def numpy(self) -> np.ndarray:
        """Plain float64 view, detached from any autograd graph."""
        return self._detached(self.probs).astype(np.float64)

    def __len__(self) -> int:
        return self.vocab_size


@dataclass(eq=False)
class Frame:
    """Handle to one video frame; handles compare by identity.

    Exactly one of ``vector`` (a precomputed embedding-space vector), ``path``
    (an on-disk image file, consumed as opaque bytes by the toy backend) or
    the bare ``frame_id`` identifies the frame content.
    """

    frame_id: str
    vector: np.ndarray | None = None
    path: Path | None = None


def _sha256_arrays(arrays: Iterable[np.ndarray]) -> str:
    h = hashlib.sha256()
    for arr in arrays:
        h.update(np.ascontiguousarray(arr, dtype=np.float64).tobytes())
    return h.hexdigest()


class _Checksummed(abc.ABC):
    """Mixin: a stable digest over all (frozen) parameters of a component."""

    def parameter_arrays(self) -> list[np.ndarray]:
        """Arrays whose bytes define this component's parameters."""
        return []

    def checksum(self) -> str:
        return _sha256_arrays(self.parameter_arrays())


class VideoEncoder(_Checksummed):
    """Maps a frame sequence to one embedding in the retrieval space."""

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Width of the embedding space this encoder produces."""

    @abc.abstractmethod
    def encode_frame(self, frame: Frame) -> EmbeddingVector:
        """Embed a single frame."""

    def encode_video(self, frames: Sequence[Frame], n_sample: int = 16) -> EmbeddingVector:
        """Uniformly subsample ``n_sample`` frames and pool their embeddings.

        Subsample indices are ``floor(i * len(frames) / n_sample)``; the
        per-frame embeddings are averaged and the mean re-normalized.
        """
        if not frames:
            raise InputError("cannot encode an empty frame list")
        if n_sample < 1:
            raise InputError("n_sample must be >= 1")
        count = len(frames)
        indices = [math.floor(i * count / n_sample) for i in range(n_sample)]
        stacked = np.stack([self.encode_frame(frames[j]).values for j in indices])
        return EmbeddingVector(stacked.mean(axis=0))


class ImageTextScorer(_Checksummed):
    """Scores (frame, text) pairs by cosine in a joint embedding space."""

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        ...

    @abc.abstractmethod
    def embed_frame(self, frame: Frame) -> EmbeddingVector:
        """Unit-normalized image-tower embedding (also used for keyframe dedup)."""

    @abc.abstractmethod
    def embed_text(self, text: str) -> EmbeddingVector:
        ...

    def score(self, frame: Frame, text: str) -> float:
        """Similarity in [-1, 1]; clamped at the boundary."""
        raw = self.embed_frame(frame).dot(self.embed_text(text))
        return float(min(1.0, max(-1.0, raw)))


class SentenceScorer(_Checksummed):
    """Symmetric text-text similarity in [-1, 1]."""

    @abc.abstractmethod
    def score(self, a: str, b: str) -> float:
        ...


class TextEncoder(_Checksummed):
    """Retrieval-side text tower; shares a space with the video encoder."""

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        ...

    @abc.abstractmethod
    def encode(self, text: str) -> EmbeddingVector:
        ...


class CausalLM(_Checksummed):
    """Autoregressive LM over a fixed vocabulary with an embedding prefix.

    ``next_distribution`` is the single inference entry point: it accepts an
    optional prefix of raw embedding vectors (the soft prompt) followed by
    token ids, and returns the next-token distribution. When the prefix is a
    torch tensor with ``requires_grad``, the returned distribution is
    differentiable with respect to it — that gradient contract is what the
    soft-prompt optimizer consumes.
    """

    @property
    @abc.abstractmethod
    def vocab_size(self) -> int:
        ...

    @property
    @abc.abstractmethod
    def embedding_width(self) -> int:
        ...

    @abc.abstractmethod
    def next_distribution(self, prefix_embeddings, tokens: Sequence[int]) -> TokenDistribution:
        """Full-vocabulary distribution for the next token.

        ``prefix_embeddings`` is ``None`` or a ``(n, embedding_width)`` array
        or tensor; a width mismatch raises :class:`ConfigurationError`.
        """

    @abc.abstractmethod
    def embed_tokens(self, tokens: Sequence[int]) -> np.ndarray:
        """Token-embedding lookup, detached, shape ``(len(tokens), width)``."""

    @abc.abstractmethod
    def encode(self, text: str) -> list[int]:
        ...

    @abc.abstractmethod
    def decode(self, tokens: Sequence[int]) -> str:
        ...

    def _check_prefix_width(self, width: int) -> None:
        if width != self.embedding_width:
            raise ConfigurationError(
                f"prefix embedding width {width} != LM embedding width {self.embedding_width}"
            )


@dataclass
class BackendSuite:
    """The full set of scorers one run needs, plus identification metadata.

    All members are stateless after construction and safe for concurrent
    read-only use; ``checksum`` digests every frozen parameter so tests can
    assert that generation never mutates a backbone.
    """

    name: str
    video_encoder: VideoEncoder
    image_text_scorer: ImageTextScorer
    causal_lm: CausalLM
    sentence_scorer: SentenceScorer
    text_encoder: TextEncoder = field(repr=False)

    def checksum(self) -> str:
        parts = [
            self.video_encoder.checksum(),
            self.image_text_scorer.checksum(),
            self.causal_lm.checksum(),
            self.sentence_scorer.checksum(),
            self.text_encoder.checksum(),
        ]
        return hashlib.sha256("".join(parts).encode()).hexdigest()
