from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from recap.backends import Frame, make_toy_suite
from recap.backends.files import write_vector_blob
from recap.keyframes import VideoSource

TOY_DIM = 32

CORPUS = [
    "a man is cutting bread",
    "the man cuts a loaf of bread",
    "a person slices bread",
    "a cat is playing with a ball",
    "a dog runs in the park",
    "a woman sings a song on a stage",
    "people are cooking food in a kitchen",
    "a boy rides a bike on the street",
    "a girl is eating food at a table",
    "the dog jumps in the water",
]


@pytest.fixture(scope="session")
def suite():
    return make_toy_suite(seed=0)


@pytest.fixture()
def fresh_suite():
    return make_toy_suite(seed=0)


@pytest.fixture(scope="session")
def corpus():
    return list(CORPUS)


def make_vector_frames(count: int, seed: int, dim: int = TOY_DIM, video_id: str = "v") -> list[Frame]:
    rng = np.random.default_rng(seed)
    return [Frame(f"{video_id}/{i}", vector=rng.standard_normal(dim)) for i in range(count)]


@pytest.fixture()
def video():
    return VideoSource("v0", make_vector_frames(12, seed=42, video_id="v0"), native_fps=3.0)


def write_toy_manifest(root: Path, video_ids: list[str], references: dict[str, list[str]],
                       frames_per_video: int = 9, dim: int = TOY_DIM) -> Path:
    """Create per-video embedding blobs plus a JSONL manifest under ``root``."""
    import json

    root.mkdir(parents=True, exist_ok=True)
    lines = []
    for i, vid in enumerate(video_ids):
        rng = np.random.default_rng(1000 + i)
        blob = root / f"{vid}.f32"
        write_vector_blob(blob, rng.standard_normal((frames_per_video, dim)))
        lines.append(json.dumps({
            "video_id": vid,
            "embeddings": blob.name,
            "references": references[vid],
            "native_fps": 3.0,
        }))
    manifest = root / "manifest.jsonl"
    manifest.write_text("\n".join(lines) + "\n")
    return manifest


def write_corpus_file(path: Path, sentences: list[str]) -> Path:
    path.write_text("\n".join(sentences) + "\n", encoding="utf-8")
    return path
