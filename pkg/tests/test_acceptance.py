"""Acceptance suite: one test per acceptance criterion, toy backends only.

Each test prints a single PASS line after its assertions (visible with
``pytest tests/test_acceptance.py -v -s``); a failure surfaces as a normal
pytest failure for that criterion.
"""
from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest
import torch

from recap.backends import Frame, make_toy_suite
from recap.cli import EXIT_OK, main
from recap.config import LossWeights, RunConfig
from recap.decoder import (
    GenerationState,
    HardPrompt,
    adamw_update,
    candidate_set,
    generate_caption,
    generate_sentence,
    init_soft_prompt,
    pseudo_target_sentences,
    pseudo_target_vision,
    pseudo_target_words,
    step_loss_terms,
)
from recap.keyframes import KeyframeSet, select_keyframes
from recap.metrics import EvalCorpus, bleu4, cider_d, rouge_l
from recap.pipeline import load_manifest, run_caption
from recap.retrieval import CorpusIndex, RetrievalContext, retrieve
from recap.backends.base import EmbeddingVector

from conftest import CORPUS, TOY_DIM, make_vector_frames, write_corpus_file, write_toy_manifest
from oracles import (
    adamw_reference,
    keyframe_simulation_oracle,
    pseudo_target_oracle,
    retrieval_sort_oracle,
)

FIXTURE_PATH = Path(__file__).parent / "fixtures" / "cider_fixture.json"


def report(name: str) -> None:
    print(f"[ACCEPTANCE PASS] {name}")


def make_keys(suite, count=3, seed=7) -> KeyframeSet:
    return select_keyframes(make_vector_frames(count, seed=seed), suite.image_text_scorer, 1.0)


WORD_POOL = [
    "man", "woman", "dog", "cat", "bread", "ball", "park", "song", "water",
    "kitchen", "street", "bike", "table", "game", "running", "eats", "plays",
]


def random_sentences(rng, count):
    return [" ".join(rng.choice(WORD_POOL, size=int(rng.integers(2, 6)))) for _ in range(count)]


def test_pseudo_target_oracle_equivalence():
    """100 randomized cases per pseudo-target op match the brute-force
    average-then-softmax oracle within 1e-9, in under 10 seconds."""
    start = time.time()
    suite = make_toy_suite(seed=0)
    rng = np.random.default_rng(2024)
    cfg = RunConfig()
    lm = suite.causal_lm
    hard = HardPrompt.from_text("Video showing", lm, cfg.prompt_set)

    cand_sets = []
    for i in range(10):
        soft = init_soft_prompt(hard, cfg.num_soft_tokens, i, lm, sigma=cfg.init_sigma)
        generated = list(rng.integers(2, lm.vocab_size, size=int(rng.integers(0, 4))))
        cand_sets.append(
            candidate_set(lm, soft, hard.token_ids, generated, int(rng.integers(2, 12)))
        )

    for case in range(100):
        cands = cand_sets[case % len(cand_sets)]
        tau = float(rng.uniform(0.05, 1.5))

        refs = random_sentences(rng, int(rng.integers(1, 5)))
        p = pseudo_target_sentences(cands, refs, suite.sentence_scorer, tau)
        expected = pseudo_target_oracle(cands.texts, refs, suite.sentence_scorer.score, tau)
        np.testing.assert_allclose(p, expected, atol=1e-9)

        words = list(rng.choice(WORD_POOL, size=int(rng.integers(1, 5)), replace=False))
        p = pseudo_target_words(cands, words, suite.sentence_scorer, tau)
        expected = pseudo_target_oracle(cands.texts, words, suite.sentence_scorer.score, tau)
        np.testing.assert_allclose(p, expected, atol=1e-9)

        frames = make_vector_frames(int(rng.integers(1, 5)), seed=case, video_id=f"c{case}")
        keys = KeyframeSet(frames, [suite.image_text_scorer.embed_frame(f) for f in frames], 0.9)
        p = pseudo_target_vision(cands, keys, suite.image_text_scorer, tau)
        expected = pseudo_target_oracle(
            cands.texts, frames, lambda f, t: suite.image_text_scorer.score(f, t), tau
        )
        np.testing.assert_allclose(p, expected, atol=1e-9)

    elapsed = time.time() - start
    assert elapsed < 10.0, f"pseudo-target oracle run took {elapsed:.1f}s"
    report(f"pseudo-target oracle equivalence (300 cases, {elapsed:.1f}s)")


def test_gradient_correctness():
    """Analytic gradient of the weighted total loss matches central finite
    differences (h=1e-4) with relative error < 1e-4 for every soft-prompt
    coordinate, across 3 seeds, in under 60 seconds."""
    start = time.time()
    suite = make_toy_suite(seed=0)
    lm = suite.causal_lm
    h = 1e-4
    for seed in (1, 2, 3):
        cfg = RunConfig(seed=seed)
        rng = np.random.default_rng(seed)
        hard = HardPrompt.from_text("Video showing", lm, cfg.prompt_set)
        soft = init_soft_prompt(hard, cfg.num_soft_tokens, seed, lm, sigma=cfg.init_sigma)
        ctx = RetrievalContext(
            sentences=[(s, 0.0) for s in random_sentences(rng, 3)],
            words=[(w, 1) for w in rng.choice(WORD_POOL, size=2, replace=False)],
        )
        keys = make_keys(suite, seed=seed)
        generated = list(rng.integers(2, lm.vocab_size, size=2))
        cands = candidate_set(lm, soft, hard.token_ids, generated, cfg.num_candidates)
        cands.p_sentence = pseudo_target_sentences(
            cands, ctx.sentence_texts, suite.sentence_scorer, cfg.temperature)
        cands.p_word = pseudo_target_words(
            cands, ctx.word_texts, suite.sentence_scorer, cfg.temperature)
        cands.p_vision = pseudo_target_vision(
            cands, keys, suite.image_text_scorer, cfg.temperature)
        q_plain = lm.next_distribution(None, hard.token_ids + generated)

        loss, _ = step_loss_terms(
            lm, soft.embeddings, hard.token_ids, generated, cands, q_plain, cfg.weights)
        (analytic,) = torch.autograd.grad(loss, soft.embeddings)
        analytic = analytic.numpy()
        base = soft.embeddings.detach().numpy().copy()

        def f(values: np.ndarray) -> float:
            out, _ = step_loss_terms(
                lm, torch.tensor(values, dtype=torch.float64),
                hard.token_ids, generated, cands, q_plain, cfg.weights)
            return float(out.detach())

        checked = 0
        for i in range(base.shape[0]):
            for j in range(base.shape[1]):
                plus, minus = base.copy(), base.copy()
                plus[i, j] += h
                minus[i, j] -= h
                fd = (f(plus) - f(minus)) / (2 * h)
                rel = abs(fd - analytic[i, j]) / max(abs(fd), abs(analytic[i, j]), 1e-8)
                assert rel < 1e-4, f"seed {seed} coord ({i},{j}): rel err {rel:.2e}"
                checked += 1
        assert checked == soft.embeddings.numel()
    elapsed = time.time() - start
    assert elapsed < 60.0, f"gradient check took {elapsed:.1f}s"
    report(f"gradient correctness (3 seeds, every coordinate, {elapsed:.1f}s)")


def test_frozen_backbone_checksum():
    """Backbone parameter checksum is identical before and after a full
    16-iteration caption generation."""
    suite = make_toy_suite(seed=0)
    before = suite.checksum()
    cfg = RunConfig()  # defaults: 16 iterations, 15-token cap
    ctx = RetrievalContext(
        sentences=[("a man cuts bread", 0.5), ("a dog runs", 0.4)],
        words=[("bread", 2), ("dog", 1)],
    )
    result = generate_caption("accept_vid", suite, ctx, make_keys(suite), cfg)
    assert len(result.captions) == 16
    assert suite.checksum() == before
    report("frozen-backbone checksum (16 iterations)")


def test_optimizer_conformance():
    """One optimizer update matches the scalar reference implementation of
    the decoupled-decay adaptive rule to 1e-10 on 50 randomized pairs."""
    rng = np.random.default_rng(77)
    for trial in range(50):
        n = int(rng.integers(1, 10))
        p = rng.standard_normal(n) * float(rng.uniform(0.1, 3.0))
        g = rng.standard_normal(n) * float(rng.uniform(0.01, 5.0))
        m = rng.standard_normal(n) * 0.05
        v = np.abs(rng.standard_normal(n)) * 0.05
        step = int(rng.integers(1, 100))
        lr = float(rng.choice([1e-4, 1e-3, 1e-2]))
        wd = float(rng.choice([0.0, 0.1, 0.3]))
        expected_p, expected_m, expected_v = adamw_reference(
            list(p), list(g), list(m), list(v), step, lr=lr, weight_decay=wd)
        tp, tm, tv = torch.tensor(p), torch.tensor(m), torch.tensor(v)
        adamw_update(tp, torch.tensor(g), tm, tv, step=step, lr=lr, weight_decay=wd)
        np.testing.assert_allclose(tp.numpy(), expected_p, atol=1e-10, rtol=0)
        np.testing.assert_allclose(tm.numpy(), expected_m, atol=1e-10, rtol=0)
        np.testing.assert_allclose(tv.numpy(), expected_v, atol=1e-10, rtol=0)
    report("optimizer conformance (50 randomized pairs, 1e-10)")


def test_keyframe_simulation():
    """select_keyframes equals the sequential simulation oracle on 100
    randomized embedding sequences; identical frames collapse to frame 0."""
    suite = make_toy_suite(seed=0)
    rng = np.random.default_rng(31)
    for case in range(100):
        n = int(rng.integers(1, 25))
        vectors = rng.standard_normal((n, TOY_DIM))
        vectors /= np.linalg.norm(vectors, axis=1, keepdims=True)
        threshold = float(rng.uniform(0.05, 1.0))
        frames = [Frame(f"k{case}/{i}", vector=vectors[i]) for i in range(n)]
        keys = select_keyframes(frames, suite.image_text_scorer, threshold)
        expected = keyframe_simulation_oracle([list(v) for v in vectors], threshold)
        assert keys.indices == expected, f"case {case}"

    payload = rng.standard_normal(TOY_DIM)
    identical = [Frame(f"dup/{i}", vector=payload.copy()) for i in range(10)]
    keys = select_keyframes(identical, suite.image_text_scorer, 0.9)
    assert keys.frames == [identical[0]]
    report("keyframe simulation oracle (100 sequences + identical-frame case)")


def test_retrieval_ranking():
    """retrieve equals the exhaustive argsort oracle on 100 randomized
    corpora, and retrieve(K1) is a prefix of retrieve(K2) for K1 <= K2."""
    rng = np.random.default_rng(13)
    for case in range(100):
        n = int(rng.integers(1, 40))
        dim = int(rng.integers(2, 16))
        embeddings = rng.standard_normal((n, dim))
        embeddings /= np.linalg.norm(embeddings, axis=1, keepdims=True)
        index = CorpusIndex(tuple(f"s{i}" for i in range(n)), embeddings, f"case{case}")
        query = EmbeddingVector(rng.standard_normal(dim))
        k = int(rng.integers(1, n + 4))
        scores = embeddings @ query.values
        expected = retrieval_sort_oracle(list(scores), k)
        got = [int(s[1:]) for s, _ in retrieve(query, index, k)]
        assert got == expected, f"case {case}"

        k1 = int(rng.integers(1, k + 1))
        first = retrieve(query, index, k1)
        assert retrieve(query, index, k)[: len(first)] == first, f"case {case} prefix"
    report("retrieval ranking oracle + prefix property (100 corpora)")


def test_word_loss_effect_fixture():
    """On the crafted fixture with the single high-frequency word 'cat',
    the updated probability of token 'cat' under word weight 0.3 strictly
    exceeds the paired run with word weight 0 at the same step and seed."""
    def updated_cat_prob(word_weight: float, seed: int) -> float:
        suite = make_toy_suite(seed=0)
        lm = suite.causal_lm
        cfg = RunConfig(
            max_tokens=1,
            record_traces=True,
            seed=seed,
            weights=LossWeights(language=1.6, vision=1.0, sentence=0.0, word=word_weight),
        )
        hard = HardPrompt.from_text("Video showing", lm, cfg.prompt_set)
        soft = init_soft_prompt(hard, cfg.num_soft_tokens, seed, lm, sigma=cfg.init_sigma)
        ctx = RetrievalContext(sentences=[], words=[("cat", 1)])
        state = GenerationState()
        generate_sentence(state, soft, hard, suite, ctx, make_keys(suite), cfg)
        return float(state.steps[0].updated_probs[lm.vocab.index["cat"]])

    for seed in (0, 1, 2):
        with_word = updated_cat_prob(0.3, seed)
        without = updated_cat_prob(0.0, seed)
        assert with_word > without, f"seed {seed}: {with_word} !> {without}"
    report("word-loss effect fixture (strict q(cat) increase, 3 seeds)")


def test_metric_golden_values():
    """BLEU@4 and ROUGE-L are exactly 1.0 on identical candidate/reference
    corpora; CIDEr matches the reference-scorer value committed with the
    5-item fixture within 1e-4."""
    identical = EvalCorpus(
        {
            "a": ("a man cuts a loaf of bread", ["a man cuts a loaf of bread"]),
            "b": ("a dog runs in the park", ["a dog runs in the park"]),
            "c": ("a woman sings a song on stage", ["a woman sings a song on stage"]),
        }
    )
    assert bleu4(identical) == pytest.approx(1.0, abs=1e-9)
    assert rouge_l(identical) == pytest.approx(1.0, abs=1e-9)

    data = json.loads(FIXTURE_PATH.read_text())
    items = {vid: (item["candidate"], item["references"]) for vid, item in data["items"].items()}
    assert cider_d(EvalCorpus(items)) == pytest.approx(data["expected_cider"], abs=1e-4)
    report("metric golden values (B4=1, R=1, CIDEr fixture within 1e-4)")


def test_end_to_end_determinism(tmp_path):
    """`caption` on a 3-video toy manifest with fixed seeds produces
    byte-identical output across two runs, in under 2 minutes."""
    start = time.time()
    refs = {
        "vid_a": ["a man is cutting bread", "a man slices a loaf"],
        "vid_b": ["a dog runs in the park", "the dog is playing outside"],
        "vid_c": ["a woman sings a song", "a lady is singing on a stage"],
    }
    manifest_path = write_toy_manifest(tmp_path / "data", list(refs), refs)
    corpus_path = write_corpus_file(tmp_path / "corpus.txt", CORPUS)
    manifest = load_manifest(manifest_path)
    cfg = RunConfig(corpus_path=str(corpus_path), seed=3)  # full §defaults: M=16, 15 tokens

    summary_a = run_caption(cfg, manifest, tmp_path / "run_a.json")
    summary_b = run_caption(cfg, manifest, tmp_path / "run_b.json")
    assert summary_a["failed"] == 0 and summary_b["failed"] == 0
    bytes_a = (tmp_path / "run_a.json").read_bytes()
    bytes_b = (tmp_path / "run_b.json").read_bytes()
    assert bytes_a == bytes_b
    elapsed = time.time() - start
    assert elapsed < 120.0, f"end-to-end determinism run took {elapsed:.1f}s"
    report(f"end-to-end determinism (3 videos, byte-identical, {elapsed:.1f}s)")


def test_ablation_runner_shape(tmp_path):
    """`ablate --axis K --values 5,10,15,20` emits a 4-row table and plot
    files."""
    refs = {
        "vid_a": ["a man is cutting bread"],
        "vid_b": ["a dog runs in the park"],
    }
    manifest_path = write_toy_manifest(tmp_path / "data", list(refs), refs)
    corpus_path = write_corpus_file(tmp_path / "corpus.txt", CORPUS)
    cfg = RunConfig(corpus_path=str(corpus_path), num_iterations=1, max_tokens=2, seed=1)
    config_path = tmp_path / "config.json"
    config_path.write_text(cfg.to_json())
    out = tmp_path / "sweep"

    code = main([
        "ablate", "--config", str(config_path), "--manifest", str(manifest_path),
        "--axis", "K", "--values", "5,10,15,20", "--out", str(out),
    ])
    assert code == EXIT_OK
    table_lines = (out / "ablation_table.txt").read_text().splitlines()
    data_rows = [l for l in table_lines if l.strip() and l.strip()[0].isdigit()]
    assert len(data_rows) == 4
    rows = json.loads((out / "ablation.json").read_text())["rows"]
    assert [r["value"] for r in rows] == [5, 10, 15, 20]
    plots = list(out.glob("*.png"))
    assert plots and all(p.stat().st_size > 0 for p in plots)
    report("ablation runner shape (4-row table + plots)")
