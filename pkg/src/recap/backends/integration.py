"""Optional adapters for real pretrained checkpoints.

Experimental: these wrap Hugging Face / open-clip style models behind the
same interfaces as the toy backends so the full pipeline can run against
real checkpoints. They are deliberately thin, require the `transformers`
extra plus downloaded weights, and are excluded from the acceptance suite
(desk-scale verification never touches them).
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

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
from recap.errors import ConfigurationError, InputError

__all__ = ["make_integration_suite"]


def _require_transformers():
    try:
        import torch  # noqa: F401
        import transformers
    except ImportError as exc:  # pragma: no cover - exercised only without extras
        raise ConfigurationError(
            "the integration backend needs the 'transformers' package and local checkpoints; "
            "install them or use backend: toy|files"
        ) from exc
    return transformers


class HFCausalLM(CausalLM):
    """Causal LM adapter over a Hugging Face checkpoint (e.g. gpt2-medium)."""

    def __init__(self, model_name: str = "gpt2-medium"):
        transformers = _require_transformers()
        import torch

        self._torch = torch
        self.tokenizer = transformers.AutoTokenizer.from_pretrained(model_name)
        self.model = transformers.AutoModelForCausalLM.from_pretrained(model_name)
        self.model.eval()
        for p in self.model.parameters():
            p.requires_grad_(False)
        self._embeddings = self.model.get_input_embeddings()

    @property
    def vocab_size(self) -> int:
        return int(self.model.config.vocab_size)

    @property
    def embedding_width(self) -> int:
        return int(self._embeddings.weight.shape[1])

    def next_distribution(self, prefix_embeddings, tokens: Sequence[int]) -> TokenDistribution:
        torch = self._torch
        parts = []
        if prefix_embeddings is not None:
            prefix = torch.as_tensor(prefix_embeddings, dtype=self._embeddings.weight.dtype)
            if prefix.ndim == 1:
                prefix = prefix.unsqueeze(0)
            if prefix.shape[0]:
                self._check_prefix_width(int(prefix.shape[1]))
                parts.append(prefix)
        if tokens:
            ids = torch.tensor(list(tokens), dtype=torch.long)
            parts.append(self._embeddings(ids))
        if not parts:
            raise InputError("HF causal LM needs a non-empty prefix or token sequence")
        inputs = torch.cat(parts, dim=0).unsqueeze(0)
        out = self.model(inputs_embeds=inputs)
        probs = torch.softmax(out.logits[0, -1], dim=-1)
        return TokenDistribution(probs, self.vocab_size)

    def embed_tokens(self, tokens: Sequence[int]) -> np.ndarray:
        ids = self._torch.tensor(list(tokens), dtype=self._torch.long)
        return self._embeddings(ids).detach().cpu().numpy()

    def encode(self, text: str) -> list[int]:
        return list(self.tokenizer.encode(text))

    def decode(self, tokens: Sequence[int]) -> str:
        return self.tokenizer.decode(list(tokens))

    def parameter_arrays(self) -> list[np.ndarray]:
        # Digesting every weight is too slow for big checkpoints; the input
        # embedding table is enough to detect accidental mutation.
        return [self._embeddings.weight.detach().cpu().numpy()]


class ClipImageTextScorer(ImageTextScorer):
    """CLIP-style joint scorer; frames must reference image files."""

    def __init__(self, model_name: str = "openai/clip-vit-large-patch14"):
        transformers = _require_transformers()
        import torch

        self._torch = torch
        self.model = transformers.CLIPModel.from_pretrained(model_name).eval()
        self.processor = transformers.CLIPProcessor.from_pretrained(model_name)

    @property
    def dim(self) -> int:
        return int(self.model.config.projection_dim)

    def embed_frame(self, frame: Frame) -> EmbeddingVector:
        if frame.path is None:
            raise InputError("integration scorer needs frame image paths")
        from PIL import Image

        image = Image.open(frame.path).convert("RGB")
        inputs = self.processor(images=image, return_tensors="pt")
        with self._torch.no_grad():
            feats = self.model.get_image_features(**inputs)[0]
        return EmbeddingVector(feats.cpu().numpy())

    def embed_text(self, text: str) -> EmbeddingVector:
        inputs = self.processor(text=[text], return_tensors="pt", truncation=True)
        with self._torch.no_grad():
            feats = self.model.get_text_features(**inputs)[0]
        return EmbeddingVector(feats.cpu().numpy())


class ClipVideoEncoder(VideoEncoder):
    """Mean-pooled CLIP image tower as the video retrieval encoder."""

    def __init__(self, scorer: ClipImageTextScorer):
        self._scorer = scorer

    @property
    def dim(self) -> int:
        return self._scorer.dim

    def encode_frame(self, frame: Frame) -> EmbeddingVector:
        return self._scorer.embed_frame(frame)


class ClipTextEncoder(TextEncoder):
    def __init__(self, scorer: ClipImageTextScorer):
        self._scorer = scorer

    @property
    def dim(self) -> int:
        return self._scorer.dim

    def encode(self, text: str) -> EmbeddingVector:
        return self._scorer.embed_text(text)


class EmbeddingSentenceScorer(SentenceScorer):
    """Sentence similarity from any sentence-embedding checkpoint."""

    def __init__(self, model_name: str = "WhereIsAI/UAE-Large-V1"):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:  # pragma: no cover
            raise ConfigurationError(
                "the integration sentence scorer needs 'sentence-transformers'"
            ) from exc
        self.model = SentenceTransformer(model_name)

    def score(self, a: str, b: str) -> float:
        if not a.strip() or not b.strip():
            raise InputError("sentence similarity requires non-empty texts")
        vecs = self.model.encode([a, b], normalize_embeddings=True)
        return float(min(1.0, max(-1.0, float(np.dot(vecs[0], vecs[1])))))


def make_integration_suite(
    lm_name: str = "gpt2-medium",
    clip_name: str = "openai/clip-vit-large-patch14",
    sentence_name: str = "WhereIsAI/UAE-Large-V1",
) -> BackendSuite:
    scorer = ClipImageTextScorer(clip_name)
    return BackendSuite(
        name="integration",
        video_encoder=ClipVideoEncoder(scorer),
        image_text_scorer=scorer,
        causal_lm=HFCausalLM(lm_name),
        sentence_scorer=EmbeddingSentenceScorer(sentence_name),
        text_encoder=ClipTextEncoder(scorer),
    )
