"""Soft-prompt caption decoding with per-token test-time optimization.

The generation loop, per token step:

1. build the candidate set: full-vocabulary next-token distribution
   conditioned on [soft prompt | hard prompt | tokens so far], restricted to
   the top-N candidates and renormalized;
2. score every candidate continuation against the retrieved sentences, the
   high-frequency words, and the keyframes, turning each averaged similarity
   into a pseudo-target distribution via a temperature softmax;
3. form the weighted total loss (three pseudo-target cross-entropies on the
   candidate distribution plus a full-vocabulary fluency term against the
   prompt-free distribution) and apply one decoupled-weight-decay adaptive
   update to the soft-prompt embeddings only;
4. re-run the LM with the updated soft prompt and emit the next token.

Sentences stop at a '.' token or at the per-sentence token cap. A full
caption run repeats this for several iterations, keeping the soft prompt and
optimizer state across iterations, then keeps the caption most similar to
the keyframes.
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from recap.backends.base import BackendSuite, CausalLM, TokenDistribution
from recap.config import LossWeights, RunConfig
from recap.errors import ConfigurationError, GenerationError, InputError
from recap.keyframes import KeyframeSet
from recap.retrieval import RetrievalContext

logger = logging.getLogger(__name__)

__all__ = [
    "SoftPrompt",
    "HardPrompt",
    "CandidateSet",
    "StepRecord",
    "GenerationState",
    "CaptionResult",
    "stable_seed",
    "init_soft_prompt",
    "sample_hard_prompt",
    "candidate_set",
    "pseudo_target_sentences",
    "pseudo_target_words",
    "pseudo_target_vision",
    "loss_cross_entropy",
    "loss_language",
    "total_loss",
    "adamw_update",
    "optimize_step",
    "step_loss_terms",
    "generate_sentence",
    "generate_caption",
    "select_best_caption",
]

_PROB_FLOOR = 1e-12


def stable_seed(*parts) -> int:
    """Process-independent 63-bit seed derived from the given parts."""
    key = ":".join(str(p) for p in parts).encode()
    digest = hashlib.blake2b(key, digest_size=8).digest()
    return int.from_bytes(digest, "little") >> 1


# --------------------------------------------------------------------------
# Prompts
# --------------------------------------------------------------------------


@dataclass
class HardPrompt:
    """A natural-language prefix drawn from the configured prompt set."""

    text: str
    token_ids: list[int]

    @classmethod
    def from_text(cls, text: str, lm: CausalLM, prompt_set: Sequence[str]) -> "HardPrompt":
        if text not in prompt_set:
            raise InputError(f"hard prompt {text!r} is not in the configured prompt set")
        return cls(text=text, token_ids=lm.encode(text))


def sample_hard_prompt(prompt_set: Sequence[str], rng: np.random.Generator, lm: CausalLM) -> HardPrompt:
    text = prompt_set[int(rng.integers(len(prompt_set)))]
    return HardPrompt.from_text(text, lm, prompt_set)


@dataclass
class SoftPrompt:
    """The only mutable parameters in the system: P learnable embedding
    vectors plus the optimizer's moment accumulators and step count."""

    embeddings: torch.Tensor            # (P, width), float64, requires_grad
    exp_avg: torch.Tensor               # first-moment accumulator
    exp_avg_sq: torch.Tensor            # second-moment accumulator
    step_count: int = 0

    @property
    def num_tokens(self) -> int:
        return int(self.embeddings.shape[0])

    def clone(self) -> "SoftPrompt":
        return SoftPrompt(
            embeddings=self.embeddings.detach().clone().requires_grad_(True),
            exp_avg=self.exp_avg.clone(),
            exp_avg_sq=self.exp_avg_sq.clone(),
            step_count=self.step_count,
        )


def init_soft_prompt(
    hard_prompt: HardPrompt,
    num_tokens: int,
    seed: int,
    lm: CausalLM,
    sigma: float = 0.02,
) -> SoftPrompt:
    """Each soft vector = mean of the hard prompt's token embeddings plus
    seeded Gaussian noise; optimizer state starts at zero."""
    if num_tokens < 1:
        raise InputError("a soft prompt needs at least one vector")
    token_embeddings = lm.embed_tokens(hard_prompt.token_ids)
    if token_embeddings.shape[0]:
        base = token_embeddings.mean(axis=0)
    else:
        base = np.zeros(lm.embedding_width)
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, sigma, size=(num_tokens, lm.embedding_width)) if sigma > 0 else 0.0
    values = np.broadcast_to(base, (num_tokens, lm.embedding_width)) + noise
    embeddings = torch.tensor(np.ascontiguousarray(values), dtype=torch.float64, requires_grad=True)
    return SoftPrompt(
        embeddings=embeddings,
        exp_avg=torch.zeros_like(embeddings),
        exp_avg_sq=torch.zeros_like(embeddings),
    )


# --------------------------------------------------------------------------
# Candidates and pseudo-targets
# --------------------------------------------------------------------------


@dataclass
class CandidateSet:
    """Top-N next-token candidates with renormalized base probabilities.

    ``probs`` keeps its autograd graph (it feeds the retrieval and vision
    losses); ``texts`` are the decoded continuations generated-so-far plus
    the candidate, with all prompts excluded. Pseudo-target distributions
    are attached after construction by the scoring helpers.
    """

    token_ids: np.ndarray               # (n,) int
    probs: torch.Tensor                 # (n,) renormalized, graph-carrying
    texts: list[str]
    full_dist: TokenDistribution
    p_sentence: np.ndarray | None = None
    p_word: np.ndarray | None = None
    p_vision: np.ndarray | None = None

    @property
    def size(self) -> int:
        return int(self.token_ids.size)


def candidate_set(
    lm: CausalLM,
    soft: SoftPrompt,
    conditioning_ids: Sequence[int],
    generated_ids: Sequence[int],
    num_candidates: int,
) -> CandidateSet:
    """Build the candidate set for the next token.

    ``conditioning_ids`` are prompt-side tokens (hard prompt, plus any text
    prefix in prefix mode); ``generated_ids`` is the sentence so far. The
    top-N clamp is min(num_candidates, vocab size); candidate continuation
    texts never include the conditioning tokens.
    """
    if num_candidates < 1:
        raise InputError("num_candidates must be >= 1")
    dist = lm.next_distribution(soft.embeddings, list(conditioning_ids) + list(generated_ids))
    detached = dist.numpy()
    n = min(num_candidates, lm.vocab_size)
    ids = np.argsort(-detached, kind="stable")[:n]
    probs_full = dist.probs
    selected = probs_full[torch.as_tensor(ids, dtype=torch.long)]
    probs = selected / selected.sum()
    texts = [lm.decode(list(generated_ids) + [int(t)]) for t in ids]
    return CandidateSet(token_ids=ids, probs=probs, texts=texts, full_dist=dist)


def _softmax(raw: np.ndarray, temperature: float) -> np.ndarray:
    if temperature <= 0:
        raise InputError("temperature must be positive")
    scaled = np.asarray(raw, dtype=np.float64) / temperature
    scaled -= scaled.max()
    exp = np.exp(scaled)
    return exp / exp.sum()


def pseudo_target_sentences(
    cands: CandidateSet,
    sentences: Sequence[str],
    scorer,
    temperature: float,
) -> np.ndarray:
    """Average sentence-similarity of each candidate continuation against all
    retrieved sentences, sharpened into a distribution by a temperature
    softmax."""
    if not sentences:
        raise InputError("pseudo_target_sentences needs at least one sentence")
    raw = np.array(
        [np.mean([scorer.score(ref, text) for ref in sentences]) for text in cands.texts]
    )
    return _softmax(raw, temperature)


def pseudo_target_words(
    cands: CandidateSet,
    words: Sequence[str],
    scorer,
    temperature: float,
) -> np.ndarray:
    """As :func:`pseudo_target_sentences`, averaging over the high-frequency
    words instead of whole sentences."""
    if not words:
        raise InputError("pseudo_target_words needs at least one word")
    raw = np.array(
        [np.mean([scorer.score(word, text) for word in words]) for text in cands.texts]
    )
    return _softmax(raw, temperature)


def pseudo_target_vision(
    cands: CandidateSet,
    keys: KeyframeSet,
    scorer,
    temperature: float,
) -> np.ndarray:
    """Average keyframe-text matching score per candidate, softmax-sharpened."""
    if keys.count < 1:
        raise InputError("pseudo_target_vision needs at least one keyframe")
    raw = np.array(
        [np.mean([scorer.score(frame, text) for frame in keys.frames]) for text in cands.texts]
    )
    return _softmax(raw, temperature)


# --------------------------------------------------------------------------
# Losses
# --------------------------------------------------------------------------


def loss_cross_entropy(target, probs) -> torch.Tensor:
    """-sum(target * log(probs)) with probs floored at 1e-12.

    ``target`` is treated as a constant (detached); gradients flow only into
    ``probs``.
    """
    p = torch.as_tensor(np.asarray(TokenDistribution._detached(target)), dtype=torch.float64)
    q = probs if torch.is_tensor(probs) else torch.as_tensor(np.asarray(probs), dtype=torch.float64)
    if p.shape != q.shape:
        raise InputError(f"cross-entropy shape mismatch: {tuple(p.shape)} vs {tuple(q.shape)}")
    return -(p * torch.log(torch.clamp(q, min=_PROB_FLOOR))).sum()


def loss_language(q_soft: TokenDistribution, q_plain: TokenDistribution) -> torch.Tensor:
    """Fluency loss over the full vocabulary.

    The prompt-free ("reading") distribution is the detached target; the
    soft-prompted ("writing") distribution is the prediction, so the
    gradient steers the soft prompt back toward plain LM behavior.
    """
    if q_soft.vocab_size != q_plain.vocab_size:
        raise InputError("language loss requires matching vocabularies")
    return loss_cross_entropy(q_plain.numpy(), q_soft.probs)


def total_loss(l_language, l_sentence, l_word, l_vision, weights: LossWeights):
    """Weighted sum of the four loss terms."""
    return (
        weights.language * l_language
        + weights.sentence * l_sentence
        + weights.word * l_word
        + weights.vision * l_vision
    )


# --------------------------------------------------------------------------
# Optimizer
# --------------------------------------------------------------------------


def adamw_update(
    param: torch.Tensor,
    grad: torch.Tensor,
    exp_avg: torch.Tensor,
    exp_avg_sq: torch.Tensor,
    step: int,
    lr: float,
    weight_decay: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One decoupled-weight-decay adaptive-moment update, in place.

    ``step`` is the 1-based update index. Decay multiplies the parameter by
    (1 - lr * weight_decay) before the bias-corrected adaptive term is
    subtracted.
    """
    with torch.no_grad():
        exp_avg.mul_(beta1).add_(grad, alpha=1.0 - beta1)
        exp_avg_sq.mul_(beta2).addcmul_(grad, grad, value=1.0 - beta2)
        m_hat = exp_avg / (1.0 - beta1**step)
        v_hat = exp_avg_sq / (1.0 - beta2**step)
        param.mul_(1.0 - lr * weight_decay)
        param.sub_(lr * m_hat / (v_hat.sqrt() + eps))


def optimize_step(soft: SoftPrompt, loss: torch.Tensor, cfg: RunConfig) -> bool:
    """Apply one optimizer update to the soft prompt from ``loss``.

    Only the soft-prompt embeddings receive gradients — every backbone
    parameter is frozen by construction. A non-finite gradient aborts the
    step (logged) and leaves prompt and optimizer state untouched. Returns
    whether the update was applied.
    """
    if not torch.isfinite(loss):
        logger.warning("skipping optimizer step: non-finite loss %r", float(loss.detach()))
        return False
    (grad,) = torch.autograd.grad(loss, soft.embeddings)
    if not torch.all(torch.isfinite(grad)):
        logger.warning("skipping optimizer step: non-finite gradient")
        return False
    adamw_update(
        soft.embeddings,
        grad,
        soft.exp_avg,
        soft.exp_avg_sq,
        step=soft.step_count + 1,
        lr=cfg.learning_rate,
        weight_decay=cfg.weight_decay,
        beta1=cfg.beta1,
        beta2=cfg.beta2,
        eps=cfg.eps,
    )
    soft.step_count += 1
    if not torch.all(torch.isfinite(soft.embeddings)):
        raise GenerationError("soft prompt became non-finite after an optimizer update")
    return True


# --------------------------------------------------------------------------
# Generation
# --------------------------------------------------------------------------


@dataclass
class StepRecord:
    """Diagnostics for one token step."""

    token_id: int
    losses: tuple[float, float, float, float, float]  # language, sentence, word, vision, total
    updated_probs: np.ndarray | None = None


@dataclass
class GenerationState:
    """Mutable per-sentence state: emitted tokens plus the loss trace."""

    tokens: list[int] = field(default_factory=list)
    steps: list[StepRecord] = field(default_factory=list)
    rng_seed: int = 0


@dataclass
class CaptionResult:
    """All captions of one video run and the keyframe-similarity selection."""

    captions: list[str]
    selection_scores: list[float]
    best_index: int
    best_caption: str
    traces: list[list[StepRecord]] = field(default_factory=list)
    skipped_losses: list[str] = field(default_factory=list)


def step_loss_terms(
    lm: CausalLM,
    soft_embeddings: torch.Tensor,
    conditioning_ids: Sequence[int],
    generated_ids: Sequence[int],
    cands: CandidateSet,
    q_plain: TokenDistribution,
    weights: LossWeights,
) -> tuple[torch.Tensor, tuple[float, float, float, float, float]]:
    """Recompute the step's total loss as a function of ``soft_embeddings``.

    Candidate ids and pseudo-targets stay fixed (they are detached in the
    real step as well), which makes this the exact function the optimizer
    differentiates — and the one finite differences must agree with.
    """
    tokens = list(conditioning_ids) + list(generated_ids)
    dist = lm.next_distribution(soft_embeddings, tokens)
    probs_full = dist.probs
    selected = probs_full[torch.as_tensor(cands.token_ids, dtype=torch.long)]
    q_cand = selected / selected.sum()

    zero = torch.zeros((), dtype=torch.float64)
    l_sentence = loss_cross_entropy(cands.p_sentence, q_cand) if cands.p_sentence is not None else zero
    l_word = loss_cross_entropy(cands.p_word, q_cand) if cands.p_word is not None else zero
    l_vision = loss_cross_entropy(cands.p_vision, q_cand) if cands.p_vision is not None else zero
    l_language = loss_language(dist, q_plain)
    total = total_loss(l_language, l_sentence, l_word, l_vision, weights)
    parts = (
        float(l_language.detach()),
        float(l_sentence.detach()),
        float(l_word.detach()),
        float(l_vision.detach()),
        float(total.detach()),
    )
    return total, parts


def _emit_token(updated: np.ndarray, cfg: RunConfig, rng: np.random.Generator) -> int:
    if cfg.emission == "greedy":
        return int(np.argmax(updated))
    k = min(cfg.top_k, updated.size)
    top = np.argsort(-updated, kind="stable")[:k]
    weights = updated[top] / updated[top].sum()
    return int(rng.choice(top, p=weights))


def generate_sentence(
    state: GenerationState,
    soft: SoftPrompt,
    hard: HardPrompt,
    suite: BackendSuite,
    ctx: RetrievalContext,
    keys: KeyframeSet,
    cfg: RunConfig,
    prefix_ids: Sequence[int] | None = None,
    rng: np.random.Generator | None = None,
    skipped: list[str] | None = None,
) -> tuple[str, SoftPrompt]:
    """Generate one sentence, optimizing the soft prompt at every token step.

    Returns the decoded sentence (prompts excluded) and the updated soft
    prompt. ``prefix_ids`` carries the retrieved-text prefix in prefix mode.
    """
    if cfg.max_tokens < 1:
        raise InputError("max_tokens must be >= 1")
    lm = suite.causal_lm
    rng = rng if rng is not None else np.random.default_rng(state.rng_seed)
    conditioning = list(prefix_ids or []) + list(hard.token_ids)

    use_sentences = cfg.weights.sentence > 0 and not cfg.prefix_mode
    use_words = cfg.weights.word > 0 and not cfg.prefix_mode
    if use_sentences and not ctx.sentences:
        use_sentences = False
        if skipped is not None and "sentence" not in skipped:
            skipped.append("sentence")
        logger.warning("no retrieved sentences; sentence loss disabled for this video")
    if use_words and not ctx.words:
        use_words = False
        if skipped is not None and "word" not in skipped:
            skipped.append("word")
        logger.warning("no high-frequency words; word loss disabled for this video")

    # with every loss inactive there is nothing to optimize: generation
    # reduces to plain greedy LM continuation under the static prompts
    any_active = (
        cfg.weights.language > 0
        or cfg.weights.vision > 0
        or (use_sentences and cfg.weights.sentence > 0)
        or (use_words and cfg.weights.word > 0)
    )

    try:
        for _ in range(cfg.max_tokens):
            cands = candidate_set(lm, soft, conditioning, state.tokens, cfg.num_candidates)
            if not any_active:
                updated_np = cands.full_dist.numpy()
                parts = (0.0, 0.0, 0.0, 0.0, 0.0)
            else:
                if use_sentences:
                    cands.p_sentence = pseudo_target_sentences(
                        cands, ctx.sentence_texts, suite.sentence_scorer, cfg.temperature
                    )
                if use_words:
                    cands.p_word = pseudo_target_words(
                        cands, ctx.word_texts, suite.sentence_scorer, cfg.temperature
                    )
                if cfg.weights.vision > 0:
                    cands.p_vision = pseudo_target_vision(
                        cands, keys, suite.image_text_scorer, cfg.temperature
                    )
                for target in (cands.p_sentence, cands.p_word, cands.p_vision):
                    assert target is None or abs(float(np.sum(target)) - 1.0) < 1e-6
                assert abs(float(cands.probs.detach().sum()) - 1.0) < 1e-6

                q_plain = lm.next_distribution(None, conditioning + state.tokens)
                parts = None
                for _ in range(cfg.steps_per_token):
                    loss, parts = step_loss_terms(
                        lm, soft.embeddings, conditioning, state.tokens, cands, q_plain, cfg.weights
                    )
                    optimize_step(soft, loss, cfg)

                with torch.no_grad():
                    updated = lm.next_distribution(soft.embeddings, conditioning + state.tokens)
                updated_np = updated.numpy()
            token = _emit_token(updated_np, cfg, rng)
            state.tokens.append(token)
            state.steps.append(
                StepRecord(
                    token_id=token,
                    losses=parts,
                    updated_probs=updated_np if cfg.record_traces else None,
                )
            )
            if lm.decode([token]).endswith("."):
                break
    except (InputError, GenerationError, ConfigurationError):
        raise
    except Exception as exc:  # LM/back-end failure aborts the whole video
        raise GenerationError(f"language model failed during generation: {exc}") from exc

    return lm.decode(state.tokens), soft


def select_best_caption(
    captions: Sequence[str],
    keys: KeyframeSet,
    scorer,
) -> tuple[int, list[float]]:
    """Score each caption by its mean keyframe similarity; argmax wins,
    ties going to the smallest index. Captions the scorer cannot embed
    (e.g. empty after tokenization) score -1."""
    if not captions:
        raise InputError("select_best_caption needs at least one caption")
    if keys.count < 1:
        raise InputError("select_best_caption needs at least one keyframe")
    scores: list[float] = []
    for caption in captions:
        try:
            scores.append(float(np.mean([scorer.score(f, caption) for f in keys.frames])))
        except InputError:
            scores.append(-1.0)
    best = int(np.argmax(scores))
    return best, scores


def generate_caption(
    video_id: str,
    suite: BackendSuite,
    ctx: RetrievalContext,
    keys: KeyframeSet,
    cfg: RunConfig,
) -> CaptionResult:
    """Run the configured number of generation iterations for one video.

    The soft prompt and its optimizer state persist across iterations; the
    hard prompt is re-sampled per iteration from the prompt set. All
    randomness derives from (config seed, video id), so a rerun reproduces
    the result bitwise on deterministic backends.
    """
    if cfg.num_iterations < 1:
        raise InputError("num_iterations must be >= 1")
    lm = suite.causal_lm
    prompt_rng = np.random.default_rng(stable_seed(cfg.seed, video_id, "prompts"))
    emit_rng = np.random.default_rng(stable_seed(cfg.seed, video_id, "emission"))

    prefix_ids: list[int] | None = None
    if cfg.prefix_mode:
        prefix_ids = []
        for sentence in ctx.sentence_texts:
            prefix_ids.extend(lm.encode(sentence))

    soft: SoftPrompt | None = None
    captions: list[str] = []
    traces: list[list[StepRecord]] = []
    skipped: list[str] = []
    for iteration in range(cfg.num_iterations):
        hard = sample_hard_prompt(cfg.prompt_set, prompt_rng, lm)
        if soft is None:
            soft = init_soft_prompt(
                hard,
                cfg.num_soft_tokens,
                stable_seed(cfg.seed, video_id, "soft-init"),
                lm,
                sigma=cfg.init_sigma,
            )
        state = GenerationState(rng_seed=stable_seed(cfg.seed, video_id, "sentence", iteration))
        sentence, soft = generate_sentence(
            state, soft, hard, suite, ctx, keys, cfg,
            prefix_ids=prefix_ids, rng=emit_rng, skipped=skipped,
        )
        captions.append(sentence)
        traces.append(state.steps)

    best_index, scores = select_best_caption(captions, keys, suite.image_text_scorer)
    return CaptionResult(
        captions=captions,
        selection_scores=scores,
        best_index=best_index,
        best_caption=captions[best_index],
        traces=traces,
        skipped_losses=skipped,
    )
