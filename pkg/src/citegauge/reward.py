"""Composite citation-aware reward, group-relative advantages, and rollout records.

The total reward is the weighted sum of eight normalized components; the
weights are the sole scale carriers. The hallucination term is added last
so that toggling r_hal in {0,1} shifts a breakdown's total by exactly
w_hal. Advantages are normalized with the population standard deviation,
which keeps two-candidate groups well-defined.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .backends import GenerationRequest, stable_hash64
from .citemetrics import fabricated_citations, parse_citations
from .corpus import DialogueExample, build_prompt
from .errors import BackendError, EmptyKnowledge, GroupTooSmall, LengthMismatch
from .semqual import DEFAULT_ENTAILMENT_TAU, fact_score, split_sentences
from .textmetrics import tokenize

DEFAULT_GROUP_SIZE = 4
DEFAULT_BETA = 0.04
DEFAULT_TEMPERATURE = 0.7
DEFAULT_STEPS = 500
DEFAULT_EPSILON = 1e-6
MAX_RESPONSE_TOKENS = 128

_NUMBER_RE = re.compile(r"\d+(?:[.,]\d+)*")
_CAP_SPAN_RE = re.compile(r"\b[A-Z][A-Za-z]*(?:\s+[A-Z][A-Za-z]*)*")
_EN_STOPWORDS = {
    "the", "a", "an", "and", "or", "but", "is", "was", "are", "were",
    "of", "in", "on", "at", "to", "for", "with", "by", "it", "this", "that",
    "according", "as", "based", "i", "you", "he", "she", "we", "they",
}
_HI_STOPWORDS = {
    "का", "के", "की", "को", "में", "से", "पर", "और", "है", "हैं",
    "था", "थी", "यह", "वह", "एक", "कि", "ने", "भी", "तो", "हो",
}
_DEVANAGARI_RE = re.compile(r"[ऀ-ॿ]")


@dataclass(frozen=True)
class RewardWeights:
    """Per-component weights; hallucination carries the largest magnitude by design."""

    w_fact: float = 5.0
    w_ent: float = 3.0
    w_attr: float = 1.5
    w_flu: float = 1.0
    w_len: float = -0.1
    w_hal: float = -10.0
    w_cite_pos: float = 5.0
    w_cite_neg: float = -5.0

    def scaled(self, c: float) -> "RewardWeights":
        return RewardWeights(
            w_fact=self.w_fact * c,
            w_ent=self.w_ent * c,
            w_attr=self.w_attr * c,
            w_flu=self.w_flu * c,
            w_len=self.w_len * c,
            w_hal=self.w_hal * c,
            w_cite_pos=self.w_cite_pos * c,
            w_cite_neg=self.w_cite_neg * c,
        )

    def as_dict(self) -> dict:
        return {
            "w_fact": self.w_fact,
            "w_ent": self.w_ent,
            "w_attr": self.w_attr,
            "w_flu": self.w_flu,
            "w_len": self.w_len,
            "w_hal": self.w_hal,
            "w_cite_pos": self.w_cite_pos,
            "w_cite_neg": self.w_cite_neg,
        }


@dataclass(frozen=True)
class RewardBreakdown:
    """Component scores r_j plus the weighted total."""

    r_fact: float
    r_ent: float
    r_attr: float
    r_flu: float
    r_len: float
    r_hal: float
    r_cite_pos: float
    r_cite_neg: float
    total: float

    @classmethod
    def from_components(
        cls,
        weights: RewardWeights,
        r_fact: float = 0.0,
        r_ent: float = 0.0,
        r_attr: float = 0.0,
        r_flu: float = 0.0,
        r_len: float = 0.0,
        r_hal: float = 0.0,
        r_cite_pos: float = 0.0,
        r_cite_neg: float = 0.0,
    ) -> "RewardBreakdown":
        total = (
            weights.w_fact * r_fact
            + weights.w_ent * r_ent
            + weights.w_attr * r_attr
            + weights.w_flu * r_flu
            + weights.w_len * r_len
            + weights.w_cite_pos * r_cite_pos
            + weights.w_cite_neg * r_cite_neg
        )
        total = total + weights.w_hal * r_hal
        return cls(
            r_fact=r_fact,
            r_ent=r_ent,
            r_attr=r_attr,
            r_flu=r_flu,
            r_len=r_len,
            r_hal=r_hal,
            r_cite_pos=r_cite_pos,
            r_cite_neg=r_cite_neg,
            total=total,
        )


@dataclass(frozen=True)
class CandidateGroup:
    """G sampled responses for one prompt with rewards and normalized advantages."""

    prompt_id: str
    candidates: tuple[str, ...]
    rewards: tuple[float, ...]
    advantages: tuple[float, ...]
    epsilon: float = DEFAULT_EPSILON

    def __post_init__(self):
        if not (len(self.candidates) == len(self.rewards) == len(self.advantages)):
            raise ValueError("candidates, rewards, advantages must be aligned")
        if len(self.candidates) < 2:
            raise GroupTooSmall(f"group for {self.prompt_id!r} has {len(self.candidates)} candidates")


@dataclass(frozen=True)
class GrpoStepRecord:
    """One training-signal record per (step, prompt)."""

    step: int
    prompt_id: str
    mean_reward: float
    reward_std: float
    kl_estimate: float
    objective_estimate: float
    beta: float = DEFAULT_BETA
    temperature: float = DEFAULT_TEMPERATURE
    group_size: int = DEFAULT_GROUP_SIZE
    total_steps: int = DEFAULT_STEPS

    def to_wire(self) -> dict:
        return {
            "step": self.step,
            "prompt_id": self.prompt_id,
            "mean_reward": self.mean_reward,
            "reward_std": self.reward_std,
            "kl_estimate": self.kl_estimate,
            "objective_estimate": self.objective_estimate,
            "beta": self.beta,
            "temperature": self.temperature,
            "group_size": self.group_size,
            "total_steps": self.total_steps,
        }


def extract_entities(text: str) -> frozenset[str]:
    """Numbers, capitalized spans (English), and non-stopword Devanagari tokens."""
    entities = set(_NUMBER_RE.findall(text))
    for m in _CAP_SPAN_RE.finditer(text):
        words = [w for w in m.group(0).split() if w.lower() not in _EN_STOPWORDS]
        if words:
            entities.add(" ".join(words).lower())
    for token in tokenize(text, "hi").tokens:
        if _DEVANAGARI_RE.search(token) and token not in _HI_STOPWORDS:
            entities.add(token)
    return frozenset(entities)


def entity_overlap(response: str, knowledge_text: str) -> float:
    """Jaccard similarity of extracted entity sets; 0.0 when both are empty."""
    a = extract_entities(response)
    b = extract_entities(knowledge_text)
    union = a | b
    if not union:
        return 0.0
    return len(a & b) / len(union)


def distinct_2(tokens: Sequence[str]) -> float:
    """Unique-bigram ratio; 0.0 for empty input, 1.0 for a single token."""
    if len(tokens) == 0:
        return 0.0
    if len(tokens) < 2:
        return 1.0
    bigrams = [tuple(tokens[i : i + 2]) for i in range(len(tokens) - 1)]
    return len(set(bigrams)) / len(bigrams)


def component_scores(
    response: str,
    example: DialogueExample,
    nli,
    weights: RewardWeights = RewardWeights(),
    tau: float = DEFAULT_ENTAILMENT_TAU,
) -> RewardBreakdown:
    """Score one response against its example; components are in [0,1] except r_len."""
    if len(example.knowledge) == 0:
        raise EmptyKnowledge(f"example {example.id!r} has no knowledge passages")

    predicted = parse_citations(response)
    gold = parse_citations(example.reference)
    pred_set = predicted.index_set()
    gold_set = gold.index_set()
    n_passages = len(example.knowledge)
    fabricated = fabricated_citations(predicted, n_passages)

    if not response.strip():
        r_fact = 0.0
    else:
        r_fact = fact_score(response, example.knowledge, nli)

    r_ent = entity_overlap(response, " ".join(example.knowledge.display_texts()))

    sentences = split_sentences(response)
    attributed = 0
    for i in sorted(pred_set):
        if 1 <= i <= n_passages and sentences:
            premise = example.knowledge.passages[i - 1].display_text
            if any(nli.nli(premise, s).p_entail > tau for s in sentences):
                attributed += 1
    r_attr = attributed / len(pred_set) if pred_set else 0.0

    tokens = tokenize(response, example.language).tokens
    r_flu = distinct_2(tokens)
    r_len = max(0, len(tokens) - MAX_RESPONSE_TOKENS) / MAX_RESPONSE_TOKENS
    r_hal = 1.0 if fabricated else 0.0
    r_cite_pos = len(pred_set & gold_set) / max(1, len(gold_set))
    r_cite_neg = len(pred_set - gold_set) / max(1, len(pred_set))

    return RewardBreakdown.from_components(
        weights,
        r_fact=r_fact,
        r_ent=r_ent,
        r_attr=r_attr,
        r_flu=r_flu,
        r_len=r_len,
        r_hal=r_hal,
        r_cite_pos=r_cite_pos,
        r_cite_neg=r_cite_neg,
    )


def normalize_advantages(rewards: Sequence[float], epsilon: float = DEFAULT_EPSILON) -> list[float]:
    """Group-relative advantages: (R - mean) / (population std + epsilon).

    Deviations are formed as n*R_i - sum(R) before any division, so adding a
    constant to every reward cancels exactly and leaves the output
    bit-identical whenever the shifted inputs are exactly representable.
    """
    if len(rewards) < 2:
        raise GroupTooSmall(f"need >= 2 rewards, got {len(rewards)}")
    if epsilon <= 0:
        raise ValueError("epsilon must be > 0")
    arr = np.asarray(rewards, dtype=np.float64)
    n = arr.shape[0]
    scaled_dev = n * arr - arr.sum()  # n * (R_i - mean), shift-invariant
    sigma = math.sqrt(float((scaled_dev * scaled_dev).sum())) / (n * math.sqrt(n))
    denom = n * (sigma + epsilon)
    return [float(v) for v in scaled_dev / denom]


def kl_estimate(policy_logprobs: Sequence[float], ref_logprobs: Sequence[float]) -> float:
    """Sample-based KL estimate: mean per-token log-ratio. May be negative."""
    if len(policy_logprobs) != len(ref_logprobs):
        raise LengthMismatch(
            f"{len(policy_logprobs)} policy tokens vs {len(ref_logprobs)} reference tokens"
        )
    if len(policy_logprobs) == 0:
        raise LengthMismatch("empty log-prob sequences")
    diffs = [p - r for p, r in zip(policy_logprobs, ref_logprobs)]
    return sum(diffs) / len(diffs)


def objective_estimate(
    group: CandidateGroup,
    per_candidate_logprob_sums: Sequence[float],
    kl: float,
    beta: float = DEFAULT_BETA,
) -> float:
    """Advantage-weighted log-likelihood minus the KL penalty."""
    if len(per_candidate_logprob_sums) != len(group.advantages):
        raise LengthMismatch(
            f"{len(per_candidate_logprob_sums)} log-prob sums vs "
            f"{len(group.advantages)} advantages"
        )
    weighted = sum(a * lp for a, lp in zip(group.advantages, per_candidate_logprob_sums))
    return weighted - beta * kl


def candidate_logprob_sum(token_logprobs: Optional[Sequence[float]], per_token_mean: bool = False) -> float:
    """Sum (default) or mean of a candidate's per-token log-probs."""
    if not token_logprobs:
        return 0.0
    total = sum(token_logprobs)
    if per_token_mean:
        return total / len(token_logprobs)
    return total


def _candidate_kl(policy: Optional[Sequence[float]], ref: Optional[Sequence[float]]) -> Optional[float]:
    # real backends may disagree on token counts; compare the aligned prefix
    if not policy or not ref:
        return None
    n = min(len(policy), len(ref))
    return kl_estimate(list(policy)[:n], list(ref)[:n])


def grpo_rollout_step(
    examples: Sequence[DialogueExample],
    gen,
    ref,
    nli,
    weights: RewardWeights = RewardWeights(),
    step: int = 1,
    group_size: int = DEFAULT_GROUP_SIZE,
    temperature: float = DEFAULT_TEMPERATURE,
    beta: float = DEFAULT_BETA,
    epsilon: float = DEFAULT_EPSILON,
    seed: int = 0,
    tau: float = DEFAULT_ENTAILMENT_TAU,
    total_steps: int = DEFAULT_STEPS,
    per_token_mean: bool = False,
    score_fn=None,
) -> tuple[list[GrpoStepRecord], list[CandidateGroup]]:
    """Sample, score, and normalize one rollout step over all prompts.

    Candidate seeds derive deterministically from (seed, step, prompt id,
    slot), so a run is reproducible and resumable mid-stream. A backend
    failure aborts that prompt with context; no partial group is emitted.
    score_fn(response, example) overrides the composite reward when a
    custom signal is wanted.
    """
    if group_size < 2:
        raise GroupTooSmall(f"group_size must be >= 2, got {group_size}")
    records: list[GrpoStepRecord] = []
    groups: list[CandidateGroup] = []
    for example in examples:
        prompt = build_prompt(example)
        candidates: list[str] = []
        policy_lps: list[Optional[tuple[float, ...]]] = []
        ref_lps: list[Optional[tuple[float, ...]]] = []
        try:
            for g in range(group_size):
                request = GenerationRequest(
                    prompt=prompt,
                    temperature=temperature,
                    seed=stable_hash64("rollout", seed, step, example.id, g),
                    want_logprobs=True,
                )
                policy_resp = gen.generate(request)
                ref_resp = ref.generate(request)
                candidates.append(policy_resp.text)
                policy_lps.append(policy_resp.token_logprobs)
                ref_lps.append(ref_resp.token_logprobs)
            if score_fn is None:
                rewards = [
                    component_scores(c, example, nli, weights, tau=tau).total
                    for c in candidates
                ]
            else:
                rewards = [float(score_fn(c, example)) for c in candidates]
        except BackendError as exc:
            raise BackendError(f"prompt {example.id!r}: {exc}") from exc

        advantages = normalize_advantages(rewards, epsilon=epsilon)
        group = CandidateGroup(
            prompt_id=example.id,
            candidates=tuple(candidates),
            rewards=tuple(rewards),
            advantages=tuple(advantages),
            epsilon=epsilon,
        )
        kls = [k for k in (_candidate_kl(p, r) for p, r in zip(policy_lps, ref_lps)) if k is not None]
        kl = sum(kls) / len(kls) if kls else 0.0
        lp_sums = [candidate_logprob_sum(lp, per_token_mean) for lp in policy_lps]
        objective = objective_estimate(group, lp_sums, kl, beta=beta)
        arr = np.asarray(rewards, dtype=np.float64)
        records.append(
            GrpoStepRecord(
                step=step,
                prompt_id=example.id,
                mean_reward=float(arr.mean()),
                reward_std=float(arr.std()),
                kl_estimate=kl,
                objective_estimate=objective,
                beta=beta,
                temperature=temperature,
                group_size=group_size,
                total_steps=total_steps,
            )
        )
        groups.append(group)
    return records, groups
