"""Pluggable scorer backends: abstract interfaces, toy and file-based suites."""
from __future__ import annotations

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
from recap.backends.files import make_files_suite, read_vector_blob, write_vector_blob
from recap.backends.toy import ToyCausalLM, ToyVocab, make_toy_suite, tokenize_text
from recap.errors import ConfigurationError

__all__ = [
    "BackendSuite",
    "CausalLM",
    "EmbeddingVector",
    "Frame",
    "ImageTextScorer",
    "SentenceScorer",
    "TextEncoder",
    "TokenDistribution",
    "VideoEncoder",
    "ToyCausalLM",
    "ToyVocab",
    "make_toy_suite",
    "make_files_suite",
    "make_backend_suite",
    "read_vector_blob",
    "write_vector_blob",
    "tokenize_text",
]


def make_backend_suite(backend: str, options: dict | None = None) -> BackendSuite:
    """Build a suite from the ``backend`` config key: toy | files | integration."""
    options = dict(options or {})
    if backend == "toy":
        return make_toy_suite(**options)
    if backend == "files":
        return make_files_suite(**options)
    if backend == "integration":
        from recap.backends.integration import make_integration_suite

        return make_integration_suite(**options)
    raise ConfigurationError(f"unknown backend {backend!r}; expected toy, files or integration")
