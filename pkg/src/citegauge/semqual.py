"""Semantic and factual quality via backend scorers.

The semantic score follows the greedy token-matching recipe: per-token
cosines from a contextual embedder, shifted to [0,1] as (cos+1)/2, greedy
precision/recall/F1, then mapped back so that orthogonal embeddings land
at 0.0 and identical strings at 1.0.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .citemetrics import CitationSet, fabricated_citations, parse_citations
from .corpus import DialogueExample, KnowledgeSet

DEFAULT_ENTAILMENT_TAU = 0.5

_SENTENCE_SPLIT_RE = re.compile(r"(?<=[.?!।])(?=\s|$)")


@dataclass(frozen=True)
class EntailmentJudgment:
    """Three-way NLI probabilities for one (premise, hypothesis) pair."""

    premise: str
    hypothesis: str
    p_entail: float
    p_contradict: float
    p_neutral: float

    def __post_init__(self):
        total = self.p_entail + self.p_contradict + self.p_neutral
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"NLI probabilities sum to {total}, expected 1")


@dataclass(frozen=True)
class FactualReport:
    """Corpus-level factual quality: mean FactScore plus hallucination rates."""

    fact_score: float
    halluc_rate: float
    flagged_ids: tuple[str, ...]
    fabricated_rate: float
    low_entailment_rate: float


def split_sentences(text: str) -> list[str]:
    """Split on ., ?, !, or danda followed by whitespace/end; markers never split."""
    parts = [p.strip() for p in _SENTENCE_SPLIT_RE.split(text)]
    return [p for p in parts if p]


def _cosine_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    norms_a = np.linalg.norm(a, axis=1)
    norms_b = np.linalg.norm(b, axis=1)
    sim = a @ b.T
    denom = np.outer(norms_a, norms_b)
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0, sim / np.where(denom > 0, denom, 1.0), 0.0)
    # two zero vectors are identical, one-sided zero is maximally dissimilar
    both_zero = np.outer(norms_a == 0, norms_b == 0)
    cos = np.where(both_zero, 1.0, cos)
    return cos


def semantic_score(candidate: str, reference: str, embedder) -> float:
    """Greedy token-level cosine matching F1, rescaled to [0,1]."""
    matrices = embedder.embed([candidate, reference])
    cand, ref = matrices[0], matrices[1]
    if cand.shape[0] == 0 and ref.shape[0] == 0:
        return 1.0
    if cand.shape[0] == 0 or ref.shape[0] == 0:
        return 0.0
    shifted = (_cosine_matrix(cand, ref) + 1.0) / 2.0
    p = float(shifted.max(axis=1).mean())
    r = float(shifted.max(axis=0).mean())
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return float(min(1.0, max(0.0, 2.0 * f1 - 1.0)))


def fact_score(
    response: str,
    knowledge: KnowledgeSet,
    nli,
    premise_mode: str = "per_passage",
    granularity: str = "sentence",
) -> float:
    """Mean over response sentences of the best per-passage entailment.

    premise_mode "concat" scores each sentence against the concatenated
    knowledge instead of maxing over passages; granularity "response"
    treats the whole response as a single hypothesis.
    """
    if len(knowledge) == 0:
        return 0.0
    if granularity == "response":
        hypotheses = [response.strip()] if response.strip() else []
    else:
        hypotheses = split_sentences(response)
    if not hypotheses:
        return 0.0
    if premise_mode == "concat":
        premises = [" ".join(knowledge.display_texts())]
    else:
        premises = knowledge.display_texts()
    total = 0.0
    for hyp in hypotheses:
        total += max(nli.nli(premise, hyp).p_entail for premise in premises)
    return total / len(hypotheses)


def hallucination_flag(
    response: str,
    knowledge: KnowledgeSet,
    predicted: CitationSet,
    nli,
    tau: float = DEFAULT_ENTAILMENT_TAU,
) -> bool:
    """True iff a fabricated citation exists or FactScore falls below tau.

    Vacuously false for empty responses with no markers.
    """
    if not response.strip() and len(predicted) == 0:
        return False
    if fabricated_citations(predicted, len(knowledge)):
        return True
    return fact_score(response, knowledge, nli) < tau


def factual_report(
    examples: Sequence[DialogueExample],
    responses: Sequence[str],
    nli,
    tau: float = DEFAULT_ENTAILMENT_TAU,
) -> FactualReport:
    """Aggregate FactScore and hallucination flags over aligned (example, response) pairs."""
    if len(examples) != len(responses):
        raise ValueError("examples and responses must be aligned")
    if not examples:
        raise ValueError("factual_report over zero examples")
    flagged = []
    fabricated = 0
    low_entail = 0
    score_sum = 0.0
    for example, response in zip(examples, responses):
        predicted = parse_citations(response)
        score = fact_score(response, example.knowledge, nli)
        score_sum += score
        has_fabricated = bool(fabricated_citations(predicted, len(example.knowledge)))
        fabricated += int(has_fabricated)
        is_low = bool(response.strip() or predicted.indices) and score < tau
        low_entail += int(is_low)
        if hallucination_flag(response, example.knowledge, predicted, nli, tau=tau):
            flagged.append(example.id)
    n = len(examples)
    return FactualReport(
        fact_score=score_sum / n,
        halluc_rate=len(flagged) / n,
        flagged_ids=tuple(flagged),
        fabricated_rate=fabricated / n,
        low_entailment_rate=low_entail / n,
    )
