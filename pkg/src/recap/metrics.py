"""Native corpus-level caption metrics: BLEU@4, ROUGE-L, CIDEr-D.

All three share one tokenizer (lowercase, punctuation stripped, whitespace
split) so reported numbers are self-consistent. Items are processed in
sorted video-id order, which makes every score exactly invariant to input
ordering.
"""
from __future__ import annotations

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass

from recap.errors import InputError

logger = logging.getLogger(__name__)

__all__ = ["EvalCorpus", "tokenize_caption", "bleu4", "rouge_l", "cider_d"]

_PUNCT_RE = re.compile(r"[^\w\s]")


def tokenize_caption(text: str) -> list[str]:
    """Shared metric tokenization: lowercase, strip punctuation, split."""
    return _PUNCT_RE.sub(" ", text.lower()).split()


@dataclass
class EvalCorpus:
    """candidate + references per video id.

    Every item needs at least one non-empty reference; empty candidates are
    legal (scores stay defined) but warned about.
    """

    items: dict[str, tuple[str, list[str]]]

    def __post_init__(self):
        if not self.items:
            raise InputError("evaluation corpus is empty")
        for vid, (candidate, references) in self.items.items():
            if not references or all(not r.strip() for r in references):
                raise InputError(f"item {vid!r} has no non-empty reference")
            if not candidate.strip():
                logger.warning("item %r has an empty candidate caption", vid)

    def sorted_items(self) -> list[tuple[str, str, list[str]]]:
        return [(vid, cand, refs) for vid, (cand, refs) in sorted(self.items.items())]

    def __len__(self) -> int:
        return len(self.items)


def _ngrams(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


# --------------------------------------------------------------------------
# BLEU@4
# --------------------------------------------------------------------------


def bleu4(corpus: EvalCorpus) -> float:
    """Corpus-level BLEU, n = 1..4, uniform weights, clipped counts,
    closest-reference length for the brevity penalty."""
    matches = [0] * 4
    totals = [0] * 4
    cand_len = 0
    ref_len = 0
    for _, candidate, references in corpus.sorted_items():
        cand_tokens = tokenize_caption(candidate)
        ref_token_lists = [tokenize_caption(r) for r in references]
        c = len(cand_tokens)
        cand_len += c
        # closest reference length; ties go to the shorter reference
        ref_len += min((abs(len(r) - c), len(r)) for r in ref_token_lists)[1]
        for n in range(1, 5):
            cand_counts = _ngrams(cand_tokens, n)
            if not cand_counts:
                continue
            max_ref: Counter = Counter()
            for ref_tokens in ref_token_lists:
                for gram, count in _ngrams(ref_tokens, n).items():
                    if count > max_ref[gram]:
                        max_ref[gram] = count
            matches[n - 1] += sum(min(count, max_ref[gram]) for gram, count in cand_counts.items())
            totals[n - 1] += sum(cand_counts.values())
    if cand_len == 0 or any(t == 0 for t in totals) or any(m == 0 for m in matches):
        return 0.0
    log_precision = sum(math.log(m / t) for m, t in zip(matches, totals)) / 4.0
    brevity = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return brevity * math.exp(log_precision)


# --------------------------------------------------------------------------
# ROUGE-L
# --------------------------------------------------------------------------

_ROUGE_BETA = 1.2


def _lcs_length(a: list[str], b: list[str]) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for x in a:
        curr = [0]
        for j, y in enumerate(b, start=1):
            curr.append(prev[j - 1] + 1 if x == y else max(prev[j], curr[j - 1]))
        prev = curr
    return prev[-1]


def rouge_l(corpus: EvalCorpus) -> float:
    """Mean per-item LCS F-measure (beta = 1.2) against the best reference."""
    beta_sq = _ROUGE_BETA**2
    scores = []
    for _, candidate, references in corpus.sorted_items():
        cand_tokens = tokenize_caption(candidate)
        best = 0.0
        for reference in references:
            ref_tokens = tokenize_caption(reference)
            if not cand_tokens or not ref_tokens:
                continue
            lcs = _lcs_length(cand_tokens, ref_tokens)
            if lcs == 0:
                continue
            precision = lcs / len(cand_tokens)
            recall = lcs / len(ref_tokens)
            f1 = (1 + beta_sq) * precision * recall / (recall + beta_sq * precision)
            best = max(best, f1)
        scores.append(best)
    return sum(scores) / len(scores)


# --------------------------------------------------------------------------
# CIDEr-D
# --------------------------------------------------------------------------

_CIDER_N = 4
_CIDER_SIGMA = 6.0


def _tfidf_vectors(counts: Counter, doc_freq: dict, log_num_items: float):
    vectors = [defaultdict(float) for _ in range(_CIDER_N)]
    norms = [0.0] * _CIDER_N
    length = 0
    for gram, term_freq in counts.items():
        idf = log_num_items - math.log(max(doc_freq.get(gram, 0.0), 1.0))
        n = len(gram) - 1
        vectors[n][gram] = term_freq * idf
        norms[n] += vectors[n][gram] ** 2
        if n == 0:
            length += term_freq
    return vectors, [math.sqrt(v) for v in norms], length


def cider_d(corpus: EvalCorpus) -> float:
    """CIDEr-D: TF-IDF n-gram cosine (n = 1..4) with count clipping and a
    Gaussian length penalty (sigma = 6), averaged over n and references,
    scaled by 10."""
    if len(corpus) < 2:
        logger.warning("CIDEr-D over %d item(s): IDF statistics are degenerate", len(corpus))
    items = corpus.sorted_items()
    # document frequency: in how many items' reference sets each n-gram occurs
    doc_freq: dict = defaultdict(float)
    all_counts = []
    for _, candidate, references in items:
        cand_counts = Counter()
        for n in range(1, _CIDER_N + 1):
            cand_counts.update(_ngrams(tokenize_caption(candidate), n))
        ref_counts = []
        for reference in references:
            counts = Counter()
            for n in range(1, _CIDER_N + 1):
                counts.update(_ngrams(tokenize_caption(reference), n))
            ref_counts.append(counts)
        for gram in set(g for counts in ref_counts for g in counts):
            doc_freq[gram] += 1
        all_counts.append((cand_counts, ref_counts))

    log_num_items = math.log(len(items))
    scores = []
    for cand_counts, ref_counts in all_counts:
        cand_vec, cand_norm, cand_len = _tfidf_vectors(cand_counts, doc_freq, log_num_items)
        item_score = 0.0
        for counts in ref_counts:
            ref_vec, ref_norm, ref_length = _tfidf_vectors(counts, doc_freq, log_num_items)
            delta = float(cand_len - ref_length)
            for n in range(_CIDER_N):
                value = 0.0
                for gram, weight in cand_vec[n].items():
                    # CIDEr-D clipping: candidate counts capped by the reference
                    value += min(weight, ref_vec[n][gram]) * ref_vec[n][gram]
                if cand_norm[n] > 0 and ref_norm[n] > 0:
                    value /= cand_norm[n] * ref_norm[n]
                item_score += value * math.exp(-(delta**2) / (2 * _CIDER_SIGMA**2))
        item_score *= 10.0 / (len(ref_counts) * _CIDER_N)
        scores.append(item_score)
    return sum(scores) / len(scores)
