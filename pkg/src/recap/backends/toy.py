"""Deterministic toy backends.

These stand in for the pretrained models so that every part of the engine is
testable at desk scale:

* text and image embedders are seeded-hash bag-of-feature vectors
  (each token or byte blob hashes to a fixed pseudo-random direction);
* the causal LM is a single linear-attention layer over embeddings with
  seeded frozen weights — small enough for finite-difference gradient
  checks, rich enough that a soft-prompt prefix influences its output.

Everything is pure and seed-deterministic across processes: the same seed
always yields bitwise-identical weights and outputs.
"""
from __future__ import annotations

import hashlib
import math
import re
import weakref
from typing import Sequence

import numpy as np
import torch

from recap.backends.base import (
    BackendSuite,
    CausalLM,
    EmbeddingVector,
    Frame,
    ImageTextScorer,
    SentenceScorer,
    TextEncoder,
    TokenDistribution,
    VideoEncoder,
)
from recap.errors import InputError

__all__ = [
    "ToyVocab",
    "HashEmbedder",
    "ToyTextEncoder",
    "ToyVideoEncoder",
    "ToyImageTextScorer",
    "ToySentenceScorer",
    "ToyCausalLM",
    "make_toy_suite",
    "DEFAULT_WORDS",
]

_TOKEN_RE = re.compile(r"[a-z0-9']+|\.")


def tokenize_text(text: str) -> list[str]:
    """Lowercase and split on whitespace/punctuation; '.' stays a token."""
    return _TOKEN_RE.findall(text.lower())


# Compact vocabulary shared by the toy LM and its tokenizer. Covers the
# built-in hard prompts plus enough scene vocabulary for fixtures.
DEFAULT_WORDS = [
    "a", "the", "is", "are", "of", "in", "on", "with", "and", "to", "at",
    "man", "woman", "person", "boy", "girl", "cat", "dog", "baby", "people",
    "bread", "loaf", "food", "water", "ball", "song", "game", "car", "bike",
    "table", "room", "kitchen", "park", "street", "video", "guitar", "piano",
    "field", "beach", "pan", "knife", "bowl", "toy", "hair", "dance",
    "cutting", "cuts", "cut", "playing", "plays", "play", "showing", "shows",
    "show", "describes", "describe", "running", "runs", "run", "walking",
    "walks", "walk", "singing", "sings", "sing", "cooking", "cooks", "cook",
    "slicing", "slices", "slice", "eating", "eats", "eat", "making", "makes",
    "make", "riding", "rides", "ride", "talking", "talks", "talk", "holds",
    "holding", "jumping", "jumps", "jump", "sitting", "sits", "sit",
]


class ToyVocab:
    """Whitespace/punctuation tokenizer over a fixed small vocabulary."""

    UNK = "<unk>"

    def __init__(self, words: Sequence[str] | None = None):
        words = list(words) if words is not None else list(DEFAULT_WORDS)
        self.tokens = [self.UNK, "."] + [w for w in words if w not in (self.UNK, ".")]
        self.index = {tok: i for i, tok in enumerate(self.tokens)}

    def __len__(self) -> int:
        return len(self.tokens)

    def encode(self, text: str) -> list[int]:
        unk = self.index[self.UNK]
        return [self.index.get(tok, unk) for tok in tokenize_text(text)]

    def decode(self, ids: Sequence[int]) -> str:
        out: list[str] = []
        for i in ids:
            tok = self.tokens[i]
            if tok == "." and out:
                out[-1] += "."
            else:
                out.append(tok)
        return " ".join(out)


class HashEmbedder:
    """Bag-of-feature text/bytes embedder with seed-stable token directions.

    Each token maps to a fixed pseudo-random unit-scale vector derived from
    blake2b(seed | token); a text embeds as the normalized mean of its token
    vectors. Purely functional — the internal cache only avoids recompute.
    """

    def __init__(self, seed: int, dim: int):
        self.seed = int(seed)
        self._dim = int(dim)
        self._token_cache: dict[str, np.ndarray] = {}
        self._text_cache: dict[str, EmbeddingVector] = {}
        self._frame_cache: "weakref.WeakKeyDictionary[Frame, EmbeddingVector]" = (
            weakref.WeakKeyDictionary()
        )

    @property
    def dim(self) -> int:
        return self._dim

    def _vector_for_key(self, key: bytes) -> np.ndarray:
        digest = hashlib.blake2b(key, digest_size=8).digest()
        rng = np.random.Generator(np.random.PCG64(int.from_bytes(digest, "little")))
        return rng.standard_normal(self._dim)

    def token_vector(self, token: str) -> np.ndarray:
        vec = self._token_cache.get(token)
        if vec is None:
            vec = self._vector_for_key(f"{self.seed}|tok|{token}".encode())
            self._token_cache[token] = vec
        return vec

    def embed_text(self, text: str) -> EmbeddingVector:
        cached = self._text_cache.get(text)
        if cached is not None:
            return cached
        tokens = tokenize_text(text)
        if not tokens:
            raise InputError(f"cannot embed empty text: {text!r}")
        mean = np.mean([self.token_vector(t) for t in tokens], axis=0)
        emb = EmbeddingVector(mean)
        self._text_cache[text] = emb
        return emb

    def embed_bytes(self, payload: bytes) -> EmbeddingVector:
        return EmbeddingVector(self._vector_for_key(f"{self.seed}|bytes|".encode() + payload))

    def embed_frame(self, frame: Frame) -> EmbeddingVector:
        cached = self._frame_cache.get(frame)
        if cached is not None:
            return cached
        if frame.vector is not None:
            arr = np.asarray(frame.vector, dtype=np.float64)
            if arr.size != self._dim:
                raise InputError(
                    f"frame {frame.frame_id!r} carries a {arr.size}-d vector, backend dim is {self._dim}"
                )
            emb = EmbeddingVector(arr)
        elif frame.path is not None:
            emb = self.embed_bytes(frame.path.read_bytes())
        else:
            emb = self.embed_bytes(frame.frame_id.encode())
        self._frame_cache[frame] = emb
        return emb


class ToyTextEncoder(TextEncoder):
    def __init__(self, embedder: HashEmbedder):
        self._embedder = embedder

    @property
    def dim(self) -> int:
        return self._embedder.dim

    def encode(self, text: str) -> EmbeddingVector:
        return self._embedder.embed_text(text)

    def parameter_arrays(self) -> list[np.ndarray]:
        return [np.asarray([self._embedder.seed, self._embedder.dim], dtype=np.float64)]


class ToyVideoEncoder(VideoEncoder):
    def __init__(self, embedder: HashEmbedder):
        self._embedder = embedder

    @property
    def dim(self) -> int:
        return self._embedder.dim

    def encode_frame(self, frame: Frame) -> EmbeddingVector:
        return self._embedder.embed_frame(frame)

    def parameter_arrays(self) -> list[np.ndarray]:
        return [np.asarray([self._embedder.seed, self._embedder.dim], dtype=np.float64)]


class ToyImageTextScorer(ImageTextScorer):
    def __init__(self, embedder: HashEmbedder):
        self._embedder = embedder

    @property
    def dim(self) -> int:
        return self._embedder.dim

    def embed_frame(self, frame: Frame) -> EmbeddingVector:
        return self._embedder.embed_frame(frame)

    def embed_text(self, text: str) -> EmbeddingVector:
        return self._embedder.embed_text(text)

    def parameter_arrays(self) -> list[np.ndarray]:
        return [np.asarray([self._embedder.seed, self._embedder.dim], dtype=np.float64)]


class ToySentenceScorer(SentenceScorer):
    """Cosine of two hash-bag embeddings; symmetric, self-similarity 1."""

    def __init__(self, embedder: HashEmbedder):
        self._embedder = embedder

    def score(self, a: str, b: str) -> float:
        if not a.strip() or not b.strip():
            raise InputError("sentence similarity requires non-empty texts")
        raw = self._embedder.embed_text(a).dot(self._embedder.embed_text(b))
        return float(min(1.0, max(-1.0, raw)))

    def parameter_arrays(self) -> list[np.ndarray]:
        return [np.asarray([self._embedder.seed, self._embedder.dim], dtype=np.float64)]


class ToyCausalLM(CausalLM):
    """Single-layer attention LM with frozen seeded weights, float64.

    Forward pass for ``next_distribution``: rows are [BOS] + prefix + token
    embeddings; the last row attends over all rows (softmax of scaled key
    scores), the attended value is added residually, projected, and matched
    against the embedding table to produce logits.
    """

    def __init__(self, seed: int = 0, width: int = 16, vocab: ToyVocab | None = None):
        self.vocab = vocab if vocab is not None else ToyVocab()
        self._width = int(width)
        self.seed = int(seed)
        rng = np.random.default_rng(seed)
        scale = 1.0 / math.sqrt(self._width)
        as_param = lambda a: torch.tensor(a, dtype=torch.float64, requires_grad=False)
        self.E = as_param(rng.standard_normal((len(self.vocab), self._width)) * scale)
        self.bos = as_param(rng.standard_normal(self._width) * scale)
        self.Wq = as_param(rng.standard_normal((self._width, self._width)) * scale)
        self.Wk = as_param(rng.standard_normal((self._width, self._width)) * scale)
        self.Wv = as_param(rng.standard_normal((self._width, self._width)) * scale)
        self.Wo = as_param(rng.standard_normal((self._width, self._width)) * scale)

    @property
    def vocab_size(self) -> int:
        return len(self.vocab)

    @property
    def embedding_width(self) -> int:
        return self._width

    def _validate_tokens(self, tokens: Sequence[int]) -> list[int]:
        ids = list(tokens)
        for t in ids:
            if not 0 <= int(t) < self.vocab_size:
                raise InputError(f"token id {t} outside vocabulary of size {self.vocab_size}")
        return ids

    def next_distribution(self, prefix_embeddings, tokens: Sequence[int]) -> TokenDistribution:
        ids = self._validate_tokens(tokens)
        rows = [self.bos.unsqueeze(0)]
        if prefix_embeddings is not None:
            prefix = torch.as_tensor(prefix_embeddings, dtype=torch.float64)
            if prefix.numel():
                if prefix.ndim == 1:
                    prefix = prefix.unsqueeze(0)
                self._check_prefix_width(int(prefix.shape[1]))
                rows.append(prefix)
        if ids:
            rows.append(self.E[ids])
        x = torch.cat(rows, dim=0)
        query = x[-1] @ self.Wq
        attn = torch.softmax((x @ self.Wk) @ query / math.sqrt(self._width), dim=0)
        h = x[-1] + attn @ (x @ self.Wv)
        logits = (h @ self.Wo) @ self.E.T
        probs = torch.softmax(logits, dim=0)
        return TokenDistribution(probs, self.vocab_size)

    def embed_tokens(self, tokens: Sequence[int]) -> np.ndarray:
        ids = self._validate_tokens(tokens)
        if not ids:
            return np.zeros((0, self._width))
        return self.E[ids].detach().numpy().copy()

    def encode(self, text: str) -> list[int]:
        return self.vocab.encode(text)

    def decode(self, tokens: Sequence[int]) -> str:
        return self.vocab.decode(self._validate_tokens(tokens))

    def parameter_arrays(self) -> list[np.ndarray]:
        tensors = [self.E, self.bos, self.Wq, self.Wk, self.Wv, self.Wo]
        return [t.detach().numpy() for t in tensors]


def make_toy_suite(
    seed: int = 0,
    dim: int = 32,
    lm_width: int = 16,
    words: Sequence[str] | None = None,
) -> BackendSuite:
    """Assemble a complete toy backend suite from one seed.

    ``dim`` is the shared retrieval/vision/sentence embedding width; the LM
    keeps its own (smaller) token-embedding width.
    """
    embedder = HashEmbedder(seed=seed, dim=dim)
    vocab = ToyVocab(words)
    return BackendSuite(
        name=f"toy(seed={seed})",
        video_encoder=ToyVideoEncoder(embedder),
        image_text_scorer=ToyImageTextScorer(embedder),
        causal_lm=ToyCausalLM(seed=seed + 1, width=lm_width, vocab=vocab),
        sentence_scorer=ToySentenceScorer(embedder),
        text_encoder=ToyTextEncoder(embedder),
    )
