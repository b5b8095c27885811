"""Tokenization and lexical-overlap metrics: corpus BLEU, ROUGE-1, ROUGE-L.

The tokenizer must survive Devanagari, where stdlib \\w misclassifies
combining matras, so words are built from Unicode categories (letters,
marks, digits) rather than regex word classes. Citation markers "[i]" are
kept as single tokens so they participate in n-gram overlap.
"""

from __future__ import annotations

import math
import unicodedata
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import LengthMismatch
from .kernels import lcs_length

_WORD_CATEGORIES = ("L", "M", "N")


@dataclass(frozen=True)
class TokenSequence:
    tokens: tuple[str, ...]
    language: str = "en"

    def __len__(self) -> int:
        return len(self.tokens)


def _is_word_char(ch: str) -> bool:
    return ch == "_" or unicodedata.category(ch)[0] in _WORD_CATEGORIES


def tokenize(text: str, language: str = "en") -> TokenSequence:
    """Split text into word, punctuation, and citation-marker tokens.

    English words are lowercased; Devanagari is left as-is. Punctuation
    (including the danda) detaches as single-character tokens. Markers
    "[i]" are atomic.
    """
    tokens: list[str] = []
    i = 0
    n = len(text)
    word: list[str] = []

    def flush():
        if word:
            tok = "".join(word)
            tokens.append(tok.lower() if language == "en" else tok)
            word.clear()

    while i < n:
        ch = text[i]
        if ch == "[":
            j = i + 1
            while j < n and text[j].isdigit() and text[j].isascii():
                j += 1
            if j < n and j > i + 1 and text[j] == "]":
                flush()
                tokens.append(text[i : j + 1])
                i = j + 1
                continue
        if ch.isspace():
            flush()
        elif _is_word_char(ch):
            word.append(ch)
        else:
            flush()
            tokens.append(ch)
        i += 1
    flush()
    return TokenSequence(tokens=tuple(tokens), language=language)


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(
    candidates: Sequence[TokenSequence],
    references: Sequence[TokenSequence],
    max_n: int = 4,
) -> float:
    """Corpus BLEU with clipped n-gram counts and brevity penalty, no smoothing.

    Counts are summed over the corpus before forming precisions. Uniform
    1/max_n weights; orders whose summed candidate n-gram count is zero
    (candidates shorter than n) are skipped rather than zeroing the score,
    so identity pairs score 1.0 at any length. Any skipped-free order with
    zero matches yields 0.0.
    """
    if len(candidates) != len(references):
        raise LengthMismatch(
            f"{len(candidates)} candidates vs {len(references)} references"
        )
    if max_n < 1:
        raise ValueError("max_n must be >= 1")

    matches = [0] * max_n
    totals = [0] * max_n
    cand_len = 0
    ref_len = 0
    for cand, ref in zip(candidates, references):
        cand_len += len(cand)
        ref_len += len(ref)
        for n in range(1, max_n + 1):
            c_counts = _ngram_counts(cand.tokens, n)
            if not c_counts:
                continue
            r_counts = _ngram_counts(ref.tokens, n)
            totals[n - 1] += sum(c_counts.values())
            matches[n - 1] += sum(
                min(count, r_counts[gram]) for gram, count in c_counts.items()
            )

    if cand_len == 0:
        return 0.0
    log_sum = 0.0
    effective = 0
    for n in range(max_n):
        if totals[n] == 0:
            continue
        effective += 1
        if matches[n] == 0:
            return 0.0
        log_sum += math.log(matches[n] / totals[n]) / max_n
    if effective == 0:
        return 0.0
    bp = 1.0 if cand_len >= ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(log_sum)


def _overlap_f1(overlap: float, cand_n: int, ref_n: int, variant: str) -> float:
    if cand_n == 0 and ref_n == 0:
        return 1.0
    if cand_n == 0 or ref_n == 0:
        return 0.0
    p = overlap / cand_n
    r = overlap / ref_n
    if variant == "recall":
        return r
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def rouge1(candidate: TokenSequence, reference: TokenSequence, variant: str = "f1") -> float:
    """ROUGE-1 from clipped unigram overlap; variant "f1" (default) or "recall"."""
    c_counts = Counter(candidate.tokens)
    r_counts = Counter(reference.tokens)
    overlap = sum(min(count, r_counts[tok]) for tok, count in c_counts.items())
    return _overlap_f1(overlap, len(candidate), len(reference), variant)


def rougeL(candidate: TokenSequence, reference: TokenSequence, variant: str = "f1") -> float:
    """ROUGE-L from longest-common-subsequence length."""
    if len(candidate) == 0 or len(reference) == 0:
        return _overlap_f1(0, len(candidate), len(reference), variant)
    vocab: dict[str, int] = {}
    for tok in candidate.tokens:
        vocab.setdefault(tok, len(vocab))
    for tok in reference.tokens:
        vocab.setdefault(tok, len(vocab))
    a = np.array([vocab[t] for t in candidate.tokens], dtype=np.int64)
    b = np.array([vocab[t] for t in reference.tokens], dtype=np.int64)
    lcs = lcs_length(a, b)
    return _overlap_f1(lcs, len(candidate), len(reference), variant)
