"""Precomputed-embedding backend and the shared vector-blob file format.

A vector blob is two little-endian uint32 words (count, dim) followed by
``count * dim`` little-endian float32 values. The `files` backend reads one
such blob per video (all frame embeddings precomputed offline), which lets
dataset runs skip model code on the vision side entirely. Text-side scorers
and the causal LM stay toy components in the same embedding dimension.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from recap.backends.base import BackendSuite, EmbeddingVector, Frame, VideoEncoder
from recap.backends.toy import (
    HashEmbedder,
    ToyCausalLM,
    ToyImageTextScorer,
    ToySentenceScorer,
    ToyTextEncoder,
    ToyVocab,
)
from recap.errors import DataError, InputError

__all__ = ["write_vector_blob", "read_vector_blob", "load_frames_from_blob", "make_files_suite"]

_HEADER = struct.Struct("<II")


def write_vector_blob(path: Path | str, vectors: np.ndarray) -> None:
    """Write a (count, dim) float array as a length-prefixed float32 blob."""
    arr = np.asarray(vectors, dtype=np.float32)
    if arr.ndim != 2:
        raise InputError(f"vector blob expects a 2-d array, got shape {arr.shape}")
    payload = _HEADER.pack(arr.shape[0], arr.shape[1]) + arr.astype("<f4").tobytes()
    Path(path).write_bytes(payload)


def read_vector_blob(path: Path | str) -> np.ndarray:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < _HEADER.size:
        raise DataError(f"{path}: truncated vector blob")
    count, dim = _HEADER.unpack_from(raw)
    expected = _HEADER.size + count * dim * 4
    if len(raw) != expected:
        raise DataError(f"{path}: blob size {len(raw)} != expected {expected} for {count}x{dim}")
    data = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    return data.reshape(count, dim).astype(np.float64)


def load_frames_from_blob(path: Path | str, video_id: str) -> list[Frame]:
    """One Frame per stored vector, ids ``<video_id>/<index>``."""
    vectors = read_vector_blob(path)
    return [Frame(frame_id=f"{video_id}/{i}", vector=vectors[i]) for i in range(vectors.shape[0])]


class FilesVideoEncoder(VideoEncoder):
    """Video encoder over frames that already carry their vectors."""

    def __init__(self, dim: int, embedder: HashEmbedder):
        self._dim = int(dim)
        self._embedder = embedder

    @property
    def dim(self) -> int:
        return self._dim

    def encode_frame(self, frame: Frame) -> EmbeddingVector:
        if frame.vector is None:
            raise InputError(
                f"files backend requires precomputed frame vectors; frame {frame.frame_id!r} has none"
            )
        arr = np.asarray(frame.vector, dtype=np.float64)
        if arr.size != self._dim:
            raise InputError(f"frame {frame.frame_id!r}: vector dim {arr.size} != backend dim {self._dim}")
        return EmbeddingVector(arr)

    def parameter_arrays(self) -> list[np.ndarray]:
        return [np.asarray([self._dim], dtype=np.float64)]


def make_files_suite(seed: int = 0, dim: int = 32, lm_width: int = 16, words=None) -> BackendSuite:
    """Suite whose vision side consumes precomputed per-frame vectors."""
    embedder = HashEmbedder(seed=seed, dim=dim)
    return BackendSuite(
        name=f"files(dim={dim})",
        video_encoder=FilesVideoEncoder(dim, embedder),
        image_text_scorer=ToyImageTextScorer(embedder),
        causal_lm=ToyCausalLM(seed=seed + 1, width=lm_width, vocab=ToyVocab(words)),
        sentence_scorer=ToySentenceScorer(embedder),
        text_encoder=ToyTextEncoder(embedder),
    )
