"""Run configuration: every tunable of the pipeline in one serializable record."""
from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from recap.errors import ConfigurationError

__all__ = ["RunConfig", "LossWeights", "load_config", "DEFAULT_PROMPT_SET"]

DEFAULT_PROMPT_SET = ["Video showing", "Video describes", "Video of", "Video shows"]


@dataclass(frozen=True)
class LossWeights:
    """Non-negative weights for the four per-step loss terms."""

    language: float = 1.6
    vision: float = 1.0
    sentence: float = 0.8
    word: float = 0.3

    def validate(self) -> list[str]:
        problems = []
        for name, value in dataclasses.asdict(self).items():
            if value < 0:
                problems.append(f"loss weight {name} must be >= 0, got {value}")
        return problems


@dataclass
class RunConfig:
    """All knobs of one captioning run; round-trips losslessly through JSON."""

    # backends
    backend: str = "toy"
    backend_options: dict = field(default_factory=dict)
    # retrieval
    corpus_path: str | None = None
    corpus_id: str = "corpus"
    num_sentences: int = 15          # retrieved sentences per video
    num_words: int = 5               # high-frequency words sampled from them
    retrieval_frames: int = 16       # uniform subsample for the video embedding
    # keyframes
    frame_rate: float = 3.0
    keyframe_threshold: float = 0.9
    # soft-prompt generation
    num_soft_tokens: int = 5
    num_candidates: int = 100
    num_iterations: int = 16
    max_tokens: int = 15
    temperature: float = 0.1         # pseudo-target softmax temperature
    weights: LossWeights = field(default_factory=LossWeights)
    prompt_set: list[str] = field(default_factory=lambda: list(DEFAULT_PROMPT_SET))
    init_sigma: float = 0.02
    steps_per_token: int = 1
    emission: str = "greedy"         # or "topk"
    top_k: int = 5
    prefix_mode: bool = False        # retrieved sentences as a literal text prefix
    # optimizer (applied to soft-prompt embeddings only)
    learning_rate: float = 1e-4
    weight_decay: float = 0.3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    # run control
    seed: int = 0
    workers: int = 1
    record_traces: bool = False
    out_dir: str = "runs"

    def validate(self) -> None:
        problems: list[str] = []
        if self.backend not in ("toy", "files", "integration"):
            problems.append(f"backend must be toy|files|integration, got {self.backend!r}")
        for name in ("num_sentences", "retrieval_frames", "num_soft_tokens", "num_candidates",
                     "num_iterations", "max_tokens", "steps_per_token", "workers"):
            if getattr(self, name) < 1:
                problems.append(f"{name} must be >= 1")
        if self.num_words < 0:
            problems.append("num_words must be >= 0")
        if not 0.0 < self.keyframe_threshold <= 1.0:
            problems.append(f"keyframe_threshold must lie in (0, 1], got {self.keyframe_threshold}")
        if self.frame_rate <= 0:
            problems.append("frame_rate must be positive")
        if self.temperature <= 0:
            problems.append("temperature must be positive")
        if self.emission not in ("greedy", "topk"):
            problems.append(f"emission must be greedy|topk, got {self.emission!r}")
        if self.emission == "topk" and self.top_k < 1:
            problems.append("top_k must be >= 1")
        if not self.prompt_set:
            problems.append("prompt_set must not be empty")
        problems.extend(self.weights.validate())
        if problems:
            raise ConfigurationError("; ".join(problems))

    def to_dict(self) -> dict:
        data = dataclasses.asdict(self)
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        data = dict(data)
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        if "weights" in data and isinstance(data["weights"], dict):
            data["weights"] = LossWeights(**data["weights"])
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def fingerprint(self) -> str:
        """Stable hash of the serialized config plus the code version."""
        from recap import __version__

        blob = json.dumps(self.to_dict(), sort_keys=True) + f"|recap={__version__}"
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: Path | str) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
    config = RunConfig.from_dict(data)
    config.validate()
    return config
