"""recap: retrieval-enhanced zero-shot video captioning.

A frozen causal language model is steered toward the content of a video by
optimizing a handful of soft-prompt embeddings at inference time, using
losses built from retrieved sentences, their high-frequency words, keyframe
matching, and plain-LM fluency. All neural scorers are pluggable backends;
the bundled toy backends make the whole method runnable and testable
without any pretrained checkpoints.
"""
from __future__ import annotations

__version__ = "0.1.0"

from recap.backends import BackendSuite, make_backend_suite, make_toy_suite
from recap.config import LossWeights, RunConfig
from recap.decoder import CaptionResult, generate_caption
from recap.keyframes import KeyframeSet, sample_frames, select_keyframes
from recap.metrics import EvalCorpus, bleu4, cider_d, rouge_l
from recap.pipeline import load_manifest, run_caption, run_evaluate
from recap.retrieval import build_index, retrieve, sample_high_frequency_words

__all__ = [
    "__version__",
    "BackendSuite",
    "make_backend_suite",
    "make_toy_suite",
    "LossWeights",
    "RunConfig",
    "CaptionResult",
    "generate_caption",
    "KeyframeSet",
    "sample_frames",
    "select_keyframes",
    "EvalCorpus",
    "bleu4",
    "cider_d",
    "rouge_l",
    "load_manifest",
    "run_caption",
    "run_evaluate",
    "build_index",
    "retrieve",
    "sample_high_frequency_words",
]
