"""Independent brute-force oracles used to pin expected values.

Everything here is deliberately written as plain scalar Python (math module,
explicit loops) so it shares no code path with the implementation it checks.
"""
from __future__ import annotations

import math


def softmax_oracle(raw: list[float], temperature: float) -> list[float]:
    scaled = [r / temperature for r in raw]
    top = max(scaled)
    exp = [math.exp(s - top) for s in scaled]
    total = sum(exp)
    return [e / total for e in exp]


def pseudo_target_oracle(texts: list[str], refs: list[str], score_fn, temperature: float) -> list[float]:
    """Average-then-softmax over candidate texts, one scalar pair at a time."""
    raw = []
    for text in texts:
        total = 0.0
        for ref in refs:
            total += score_fn(ref, text)
        raw.append(total / len(refs))
    return softmax_oracle(raw, temperature)


def cross_entropy_oracle(target: list[float], probs: list[float]) -> float:
    assert len(target) == len(probs)
    total = 0.0
    for p, q in zip(target, probs):
        total -= p * math.log(max(q, 1e-12))
    return total


def adamw_reference(
    params: list[float],
    grads: list[float],
    exp_avg: list[float],
    exp_avg_sq: list[float],
    step: int,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[list[float], list[float], list[float]]:
    """Scalar decoupled-weight-decay adaptive update; returns new (p, m, v)."""
    new_p, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, exp_avg, exp_avg_sq):
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1**step)
        v_hat = v / (1.0 - beta2**step)
        p = p * (1.0 - lr * weight_decay) - lr * m_hat / (math.sqrt(v_hat) + eps)
        new_p.append(p)
        new_m.append(m)
        new_v.append(v)
    return new_p, new_m, new_v


def keyframe_simulation_oracle(embeddings: list[list[float]], threshold: float) -> list[int]:
    """Step-by-step anchor walk over unit embeddings; returns admitted indices."""

    def dot(a: list[float], b: list[float]) -> float:
        return sum(x * y for x, y in zip(a, b))

    admitted = [0]
    anchor = embeddings[0]
    for i in range(1, len(embeddings)):
        if dot(embeddings[i], anchor) < threshold:
            admitted.append(i)
            anchor = embeddings[i]
    return admitted


def retrieval_sort_oracle(scores: list[float], k: int) -> list[int]:
    """Exhaustive sort by (-score, position)."""
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    return order[: min(k, len(scores))]


def word_count_oracle(sentences: list[str], limit: int, tagger, stemmer) -> list[tuple[str, int]]:
    """Brute-force noun/verb counting with the same tagger and stemmer,
    independent dict bookkeeping and sorting."""
    import re

    token_re = re.compile(r"[a-z']+")
    counts: dict[str, int] = {}
    surfaces: dict[str, dict[str, int]] = {}
    for sentence in sentences:
        for token in token_re.findall(sentence.lower()):
            if tagger.tag(token) is None:
                continue
            stem = stemmer(token)
            counts[stem] = counts.get(stem, 0) + 1
            surfaces.setdefault(stem, {})
            surfaces[stem][token] = surfaces[stem].get(token, 0) + 1
    rows = []
    for stem, count in counts.items():
        best_surface = sorted(surfaces[stem].items(), key=lambda kv: (-kv[1], kv[0]))[0][0]
        rows.append((best_surface, count))
    rows.sort(key=lambda r: (-r[1], r[0]))
    return rows[:limit]


def finite_difference_gradient(fn, values: list[float], h: float = 1e-4) -> list[float]:
    """Central finite differences of a scalar function of a flat vector."""
    grads = []
    for i in range(len(values)):
        plus = list(values)
        minus = list(values)
        plus[i] += h
        minus[i] -= h
        grads.append((fn(plus) - fn(minus)) / (2.0 * h))
    return grads
