"""Citation-marker parsing and citation precision/recall/F1 scoring.

A citation marker is exactly "[" + one or more ASCII digits + "]", with no
interior whitespace. Scores are computed over de-duplicated index sets;
repeated citation of the same passage neither helps nor hurts.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import EmptyCorpus

MARKER_RE = re.compile(rb"\[([0-9]+)\]")


@dataclass(frozen=True)
class CitationSet:
    """Citation indices parsed from one response, with byte spans in document order."""

    indices: tuple[int, ...] = ()
    spans: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        if len(self.indices) != len(self.spans):
            raise ValueError("indices and spans must have equal length")

    def __len__(self) -> int:
        return len(self.indices)

    def index_set(self) -> frozenset[int]:
        return frozenset(self.indices)

    @classmethod
    def of(cls, indices: Iterable[int]) -> "CitationSet":
        """Build a set from bare indices (synthetic spans), for tests and scoring."""
        idx = tuple(int(i) for i in indices)
        spans = []
        pos = 0
        for i in idx:
            width = len(str(i)) + 2
            spans.append((pos, pos + width))
            pos += width
        return cls(indices=idx, spans=tuple(spans))


@dataclass(frozen=True)
class CitationScore:
    precision: float
    recall: float
    f1: float
    has_citation: bool


@dataclass(frozen=True)
class CorpusCitationScore:
    """Macro-averaged citation quality over a corpus of (predicted, gold) pairs."""

    precision: float
    recall: float
    f1: float
    has_citation_rate: float
    fabrication_rate: float


def parse_citations(text: str) -> CitationSet:
    """Extract all citation markers from text.

    Returns every maximal match of the marker grammar with its byte span
    (UTF-8 offsets). Total function: marker-free text yields an empty set.
    """
    data = text.encode("utf-8")
    indices = []
    spans = []
    for m in MARKER_RE.finditer(data):
        indices.append(int(m.group(1)))
        spans.append((m.start(), m.end()))
    return CitationSet(indices=tuple(indices), spans=tuple(spans))


def render_markers(citations: CitationSet) -> str:
    """Render a citation set back to marker text, in document order."""
    return "".join(f"[{i}]" for i in citations.indices)


def citation_score(
    predicted: CitationSet,
    gold: CitationSet,
    empty_empty: str = "one",
) -> CitationScore:
    """Precision/recall/F1 between de-duplicated predicted and gold index sets.

    When both sets are empty the pair scores 1.0 by default so citation-free
    gold pairs do not zero a macro average; pass empty_empty="zero" for the
    punitive convention. A one-sided empty set always scores 0.0.
    """
    pred = predicted.index_set()
    ref = gold.index_set()
    has_citation = len(predicted) > 0
    if not pred and not ref:
        v = 1.0 if empty_empty == "one" else 0.0
        return CitationScore(precision=v, recall=v, f1=v, has_citation=has_citation)
    if not pred or not ref:
        return CitationScore(precision=0.0, recall=0.0, f1=0.0, has_citation=has_citation)
    inter = len(pred & ref)
    p = inter / len(pred)
    r = inter / len(ref)
    f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return CitationScore(precision=p, recall=r, f1=f1, has_citation=has_citation)


def fabricated_citations(predicted: CitationSet, n_passages: int) -> frozenset[int]:
    """Indices citing passages that do not exist: i > n_passages, or i = 0."""
    if n_passages < 0:
        raise ValueError("n_passages must be >= 0")
    return frozenset(i for i in predicted.index_set() if i > n_passages or i == 0)


def corpus_citation_f1(
    pairs: Sequence[tuple[CitationSet, CitationSet, int]],
    empty_empty: str = "one",
) -> CorpusCitationScore:
    """Macro-average citation scores over (predicted, gold, n_passages) triples.

    fabrication_rate is the fraction of pairs whose predicted set contains at
    least one fabricated index.
    """
    if not pairs:
        raise EmptyCorpus("corpus_citation_f1 over zero pairs")
    p_sum = r_sum = f_sum = 0.0
    has_cite = 0
    fabricated = 0
    for pred, gold, n_passages in pairs:
        score = citation_score(pred, gold, empty_empty=empty_empty)
        p_sum += score.precision
        r_sum += score.recall
        f_sum += score.f1
        has_cite += int(score.has_citation)
        fabricated += int(bool(fabricated_citations(pred, n_passages)))
    n = len(pairs)
    return CorpusCitationScore(
        precision=p_sum / n,
        recall=r_sum / n,
        f1=f_sum / n,
        has_citation_rate=has_cite / n,
        fabrication_rate=fabricated / n,
    )
