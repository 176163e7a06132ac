"""Corpus retrieval: sentence index, top-K lookup, high-frequency words.

The text corpus is embedded once into a dense index; at caption time each
video embedding pulls its top-K most similar sentences (exact dot-product
scan — corpora here are at most tens of thousands of sentences), and the
top-L stem-folded nouns/verbs are counted across those sentences.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from recap.backends.base import EmbeddingVector
from recap.backends.files import read_vector_blob, write_vector_blob
from recap.errors import DataError, InputError

logger = logging.getLogger(__name__)

__all__ = [
    "CorpusIndex",
    "RetrievalContext",
    "build_index",
    "retrieve",
    "sample_high_frequency_words",
    "light_stem",
    "LexiconTagger",
    "DEFAULT_TAGGER",
    "load_corpus",
    "save_index",
    "load_index",
]


@dataclass(frozen=True)
class CorpusIndex:
    """Immutable sentence-embedding index, one row per corpus sentence."""

    sentences: tuple[str, ...]
    embeddings: np.ndarray  # (n, dim), unit rows
    corpus_id: str
    skipped: int = 0

    def __post_init__(self):
        if len(self.sentences) != self.embeddings.shape[0]:
            raise InputError("sentence count does not match embedding rows")
        if any(not s.strip() for s in self.sentences):
            raise InputError("index contains an empty sentence")

    def __len__(self) -> int:
        return len(self.sentences)

    @property
    def dim(self) -> int:
        return int(self.embeddings.shape[1])


@dataclass
class RetrievalContext:
    """What retrieval attaches to one video: K sentences and L frequent words."""

    sentences: list[tuple[str, float]] = field(default_factory=list)
    words: list[tuple[str, int]] = field(default_factory=list)

    @property
    def sentence_texts(self) -> list[str]:
        return [s for s, _ in self.sentences]

    @property
    def word_texts(self) -> list[str]:
        return [w for w, _ in self.words]


def build_index(corpus: Sequence[str], text_encoder, corpus_id: str = "corpus") -> CorpusIndex:
    """Embed every sentence, preserving corpus order.

    Empty sentences are skipped (counted in ``skipped``); an entirely empty
    corpus is an input error.
    """
    if not corpus:
        raise InputError("corpus is empty")
    kept: list[str] = []
    rows: list[np.ndarray] = []
    skipped = 0
    for sentence in corpus:
        if not sentence.strip():
            skipped += 1
            continue
        kept.append(sentence)
        rows.append(text_encoder.encode(sentence).values)
    if not kept:
        raise InputError("corpus has no non-empty sentences")
    if skipped:
        logger.warning("build_index skipped %d empty sentences", skipped)
    return CorpusIndex(tuple(kept), np.stack(rows), corpus_id, skipped)


def retrieve(video_emb: EmbeddingVector, index: CorpusIndex, k: int) -> list[tuple[str, float]]:
    """Top-``k`` sentences by dot product, descending; ties keep corpus order."""
    if k < 1:
        raise InputError("k must be >= 1")
    if len(index) == 0:
        raise InputError("cannot retrieve from an empty index")
    scores = index.embeddings @ video_emb.values
    order = np.argsort(-scores, kind="stable")[: min(k, len(index))]
    return [(index.sentences[i], float(scores[i])) for i in order]


# --------------------------------------------------------------------------
# High-frequency noun/verb sampling
# --------------------------------------------------------------------------

_WORD_RE = re.compile(r"[a-z']+")
_VOWELS = set("aeiou")


def light_stem(token: str) -> str:
    """Light suffix stripper: -ing/-ed/-es/-s with consonant-doubling undo.

    Deliberately not a full stemmer — it only has to fold inflections like
    cuts/cutting onto one key for counting.
    """
    def undo_doubling(stem: str) -> str:
        if len(stem) >= 3 and stem[-1] == stem[-2] and stem[-1] not in _VOWELS:
            return stem[:-1]
        return stem

    if token.endswith("ing") and len(token) > 5:
        return undo_doubling(token[:-3])
    if token.endswith("ed") and len(token) > 4:
        return undo_doubling(token[:-2])
    if token.endswith("es") and len(token) > 3 and (
        token[-3] in "sxz" or token[-4:-2] in ("ch", "sh")
    ):
        return token[:-2]
    if token.endswith("s") and not token.endswith("ss") and len(token) > 3:
        return token[:-1]
    return token


class Tagger(Protocol):
    """Minimal part-of-speech interface: 'noun', 'verb' or None (excluded)."""

    def tag(self, token: str) -> str | None: ...


_STOPWORDS = frozenset(
    """a an the is are was were be been being am do does did done has have had
    having will would shall should can could may might must of in on at by to
    for from with without and or but not no nor so than then too very it its
    this that these those there here he she they them his her their i you we
    me my your our us what which who whom when where why how as if because
    while about into over under again further once all any both each few more
    most other some such only own same s t don now up down out off""".split()
)

_NOUNS = frozenset(
    """man woman person boy girl child baby people group crowd team player
    singer dancer chef cook guy lady kid men women children friend family
    cat dog bird horse elephant monkey animal fish tiger lion bear puppy
    kitten pet shrimp chicken
    bread loaf pizza cake food meal rice pasta soup salad fruit apple banana
    vegetable potato onion meat egg cheese sandwich oil pan pot bowl knife
    plate spoon cup glass bottle water juice milk coffee tea drink recipe
    ball game basketball football soccer tennis baseball golf race sport
    goal match pingpong pong
    song music guitar piano drum violin band stage concert dance
    car truck bike bicycle motorcycle bus train plane boat ship wave ocean
    road street park field beach mountain river lake garden yard room kitchen
    house home building table chair bed sofa floor wall door window
    video camera screen computer laptop phone tv television movie film clip
    picture photo image title song tutorial instruction
    hair face hand head arm leg foot eye mouth makeup dress shirt shoe hat
    toy doll slide swing paper book pen box bag
    day night time year way thing part area place side end""".split()
)

_VERBS = frozenset(
    """be have do say go get make know think take see come want look use find
    give tell work call try ask need feel become leave put mean keep let
    begin show hear play run move like live believe hold bring happen write
    sit stand lose pay meet include continue set learn change lead understand
    watch follow stop create speak read allow add spend grow open walk win
    offer remember love consider appear buy wait serve die send expect build
    stay fall cut reach kill remain ride sing dance cook eat drink jump swim
    climb throw catch kick hit slice chop mix stir pour fry bake boil wash
    clean drive fly draw paint smile laugh cry talk perform practice record
    describe film capture demonstrate explain prepare slide push pull wear
    type surf ski skate race travel visit""".split()
)

_NOUN_SUFFIXES = ("tion", "ment", "ness", "ship", "sion")


class LexiconTagger:
    """Embedded lexicon tagger: bundled noun/verb word lists plus suffix
    heuristics; tokens absent from both and failing every heuristic are
    excluded. Accepts replacement word sets for custom domains.
    """

    def __init__(self, nouns: frozenset[str] = _NOUNS, verbs: frozenset[str] = _VERBS,
                 stopwords: frozenset[str] = _STOPWORDS):
        self.nouns = nouns
        self.verbs = verbs
        self.stopwords = stopwords

    def tag(self, token: str) -> str | None:
        if token in self.stopwords:
            return None
        if token in self.nouns:
            return "noun"
        if token in self.verbs:
            return "verb"
        stem = light_stem(token)
        if stem in self.stopwords:
            return None
        if stem in self.nouns:
            return "noun"
        if stem in self.verbs:
            return "verb"
        if token.endswith("ing") and len(token) >= 6:
            return "verb"
        if token.endswith("ed") and len(token) >= 5:
            return "verb"
        if token.endswith(_NOUN_SUFFIXES):
            return "noun"
        return None


DEFAULT_TAGGER = LexiconTagger()


def sample_high_frequency_words(
    sentences: Sequence[str],
    limit: int,
    tagger: Tagger | None = None,
) -> list[tuple[str, int]]:
    """Top-``limit`` stem-folded noun/verb counts across ``sentences``.

    Tokens are lowercased and punctuation-stripped; only noun- or verb-tagged
    tokens count, folded onto their light stem. Results sort by count
    descending, ties broken lexicographically by the reported surface form —
    the most frequent unstemmed variant (variant ties also lexicographic).
    """
    if limit < 0:
        raise InputError("limit must be >= 0")
    if limit == 0 or not sentences:
        return []
    tagger = tagger if tagger is not None else DEFAULT_TAGGER
    counts: dict[str, int] = {}
    variants: dict[str, dict[str, int]] = {}
    for sentence in sentences:
        for token in _WORD_RE.findall(sentence.lower()):
            if tagger.tag(token) is None:
                continue
            stem = light_stem(token)
            counts[stem] = counts.get(stem, 0) + 1
            variants.setdefault(stem, {})
            variants[stem][token] = variants[stem].get(token, 0) + 1
    surfaced = []
    for stem, count in counts.items():
        surface = min(variants[stem].items(), key=lambda kv: (-kv[1], kv[0]))[0]
        surfaced.append((surface, count))
    surfaced.sort(key=lambda kv: (-kv[1], kv[0]))
    return surfaced[:limit]


# --------------------------------------------------------------------------
# Corpus files and index persistence
# --------------------------------------------------------------------------


def load_corpus(path: Path | str) -> list[str]:
    """One sentence per line (plain text) or JSON-lines ``{"text": ...}``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if path.suffix in (".jsonl", ".json"):
        out = []
        for i, line in enumerate(lines):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{i + 1}: invalid JSON line") from exc
            if "text" not in record:
                raise DataError(f"{path}:{i + 1}: missing 'text' field")
            out.append(str(record["text"]))
        return out
    return lines


def save_index(index: CorpusIndex, directory: Path | str) -> None:
    """Persist as meta.json + embeddings blob + one sentence per line."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    meta = {
        "corpus_id": index.corpus_id,
        "dim": index.dim,
        "count": len(index),
        "skipped": index.skipped,
    }
    (directory / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    write_vector_blob(directory / "embeddings.f32", index.embeddings)
    (directory / "sentences.txt").write_text("\n".join(index.sentences) + "\n", encoding="utf-8")


def load_index(directory: Path | str) -> CorpusIndex:
    directory = Path(directory)
    meta_path = directory / "meta.json"
    if not meta_path.exists():
        raise DataError(f"not an index directory (no meta.json): {directory}")
    meta = json.loads(meta_path.read_text())
    sentences = (directory / "sentences.txt").read_text(encoding="utf-8").splitlines()
    embeddings = read_vector_blob(directory / "embeddings.f32")
    if len(sentences) != meta["count"] or embeddings.shape != (meta["count"], meta["dim"]):
        raise DataError(f"index at {directory} is inconsistent with its meta.json")
    # Persisted blobs are float32; restore exact unit norm for cosine scans.
    norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
    embeddings = embeddings / np.where(norms < 1e-12, 1.0, norms)
    return CorpusIndex(tuple(sentences), embeddings, meta["corpus_id"], meta.get("skipped", 0))


def make_retrieval_context(
    video_emb: EmbeddingVector,
    index: CorpusIndex,
    k: int,
    limit: int,
    tagger: Tagger | None = None,
) -> RetrievalContext:
    """Retrieve top-k sentences, then sample top-``limit`` frequent words from them."""
    hits = retrieve(video_emb, index, k)
    words = sample_high_frequency_words([s for s, _ in hits], limit, tagger)
    return RetrievalContext(sentences=hits, words=words)
