"""Dataset model, JSONL ingestion, prompt construction, and bilingual mixing.

Knowledge passages are escaped on ingestion so that literal "[3]"-like
substrings in source text never collide with citation markers: "[3]" in a
passage becomes "⟦3⟧" in storage and is unescaped on display/serialization.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .citemetrics import parse_citations
from .errors import EmptyKnowledge, EmptyPool, EmptyText, IndexGap, MalformedRecord, MarkerLoss

logger = logging.getLogger(__name__)

LANGUAGES = ("en", "hi")
SOURCES = ("dstc9", "faithdial", "wow", "other")

PROMPT_INSTRUCTION = "Respond using the knowledge above with citations [1], [2], etc."

_MARKER_STR_RE = re.compile(r"\[([0-9]+)\]")
_ESCAPED_STR_RE = re.compile(r"⟦([0-9]+)⟧")

_DEVANAGARI_LO = 0x0900
_DEVANAGARI_HI = 0x097F
DEVANAGARI_THRESHOLD = 0.3


def escape_markers(text: str) -> str:
    """Rewrite literal "[i]" substrings to "⟦i⟧" so they cannot parse as citations."""
    return _MARKER_STR_RE.sub(lambda m: f"⟦{m.group(1)}⟧", text)


def unescape_markers(text: str) -> str:
    return _ESCAPED_STR_RE.sub(lambda m: f"[{m.group(1)}]", text)


@dataclass(frozen=True)
class KnowledgePassage:
    """One numbered knowledge passage; index is 1-based and unique in its set."""

    index: int
    text: str

    def __post_init__(self):
        if self.index < 1:
            raise ValueError(f"passage index must be >= 1, got {self.index}")
        if not self.text:
            raise ValueError("passage text must be non-empty")

    @property
    def display_text(self) -> str:
        return unescape_markers(self.text)


@dataclass(frozen=True)
class KnowledgeSet:
    """Ordered knowledge passages with contiguous 1..n indices."""

    passages: tuple[KnowledgePassage, ...] = ()

    def __post_init__(self):
        indices = [p.index for p in self.passages]
        if indices != list(range(1, len(indices) + 1)):
            raise ValueError(f"knowledge indices must be contiguous 1..n, got {indices}")

    @classmethod
    def from_texts(cls, texts: Iterable[str], escape: bool = True) -> "KnowledgeSet":
        passages = tuple(
            KnowledgePassage(index=i, text=escape_markers(t) if escape else t)
            for i, t in enumerate(texts, start=1)
        )
        return cls(passages=passages)

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self):
        return iter(self.passages)

    def texts(self) -> list[str]:
        return [p.text for p in self.passages]

    def display_texts(self) -> list[str]:
        return [p.display_text for p in self.passages]

    def without(self, index: int) -> "KnowledgeSet":
        """Drop passage `index` and renumber the rest contiguously."""
        kept = [p.text for p in self.passages if p.index != index]
        return KnowledgeSet.from_texts(kept, escape=False)


@dataclass
class DialogueExample:
    """One JSONL record: query, numbered knowledge, gold cited response."""

    id: str
    query: str
    knowledge: KnowledgeSet
    reference: str
    language: str
    source: str = "other"
    metadata: dict = field(default_factory=dict)
    fabricated_reference: bool = False

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise ValueError(f"language must be one of {LANGUAGES}, got {self.language!r}")
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        self.fabricated_reference = any(
            i > len(self.knowledge) or i == 0
            for i in parse_citations(self.reference).index_set()
        )

    def check_language_consistency(self) -> bool:
        """Warn-level check that the tagged language matches the query script."""
        try:
            detected = detect_language(self.query)
        except EmptyText:
            return True
        if detected != self.language:
            logger.warning(
                "example %s tagged %s but query script looks %s", self.id, self.language, detected
            )
            return False
        return True


@dataclass(frozen=True)
class MixtureSpec:
    """Bernoulli language mixture: alpha_en is the English draw probability."""

    alpha_en: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha_en <= 1.0:
            raise ValueError(f"alpha_en must be in [0,1], got {self.alpha_en}")


def render_prompt(query: str, knowledge_texts: Sequence[str]) -> str:
    """Prompt template over raw parts; allows an empty knowledge block (occlusion edge)."""
    lines = [f"Query: {query}", "Knowledge:"]
    lines.extend(f"[{i}] {text}" for i, text in enumerate(knowledge_texts, start=1))
    lines.append(PROMPT_INSTRUCTION)
    return "\n".join(lines)


def build_prompt(example: DialogueExample) -> str:
    """Structured prompt: query, numbered knowledge lines, citing instruction."""
    if len(example.knowledge) == 0:
        raise EmptyKnowledge(f"example {example.id!r} has no knowledge passages")
    return render_prompt(example.query, example.knowledge.texts())


def _parse_knowledge(raw, example_id: str) -> tuple[KnowledgeSet, dict]:
    """Normalize the knowledge field; returns (set, extra-metadata)."""
    if not isinstance(raw, list) or not raw:
        raise ValueError("knowledge must be a non-empty array")
    extra: dict = {}
    if all(isinstance(entry, str) for entry in raw):
        return KnowledgeSet.from_texts(raw), extra

    texts = []
    explicit: list[tuple[object, str]] = []
    for entry in raw:
        if isinstance(entry, str):
            explicit.append((None, entry))
            continue
        if not isinstance(entry, dict) or "text" not in entry:
            raise ValueError("knowledge entries must be strings or objects with a text field")
        explicit.append((entry.get("index", entry.get("id")), str(entry["text"])))

    indices = [ix for ix, _ in explicit]
    if all(isinstance(ix, int) for ix in indices):
        seen = sorted(indices)
        if seen != list(range(1, len(seen) + 1)):
            raise IndexGap(example_id, f"knowledge indices {sorted(indices)}")
        ordered = sorted(explicit, key=lambda pair: pair[0])
        texts = [t for _, t in ordered]
    else:
        # non-numeric identifiers: normalize to position, keep originals
        extra["original_knowledge_ids"] = [ix for ix, _ in explicit]
        texts = [t for _, t in explicit]
    return KnowledgeSet.from_texts(texts), extra


_SCHEMA_FIELDS = ("id", "query", "knowledge", "reference", "language", "source")


def example_from_record(record: dict, line_no: int = 0, line: str = "") -> DialogueExample:
    """Build a DialogueExample from a decoded JSONL object."""
    for name in ("id", "query", "knowledge", "reference", "language"):
        if name not in record:
            raise MalformedRecord(line_no, line, f"missing field {name!r}")
    example_id = str(record["id"])
    try:
        knowledge, extra = _parse_knowledge(record["knowledge"], example_id)
    except IndexGap:
        raise
    except ValueError as exc:
        raise MalformedRecord(line_no, line, str(exc)) from exc
    language = record["language"]
    if language not in LANGUAGES:
        raise MalformedRecord(line_no, line, f"language must be en|hi, got {language!r}")
    source = record.get("source", "other")
    metadata = {k: v for k, v in record.items() if k not in _SCHEMA_FIELDS}
    metadata.update(extra)
    if source not in SOURCES:
        metadata["source_raw"] = source
        source = "other"
    example = DialogueExample(
        id=example_id,
        query=str(record["query"]),
        knowledge=knowledge,
        reference=str(record["reference"]),
        language=language,
        source=source,
        metadata=metadata,
    )
    example.check_language_consistency()
    return example


def example_to_record(example: DialogueExample) -> dict:
    record = {
        "id": example.id,
        "query": example.query,
        "knowledge": example.knowledge.display_texts(),
        "reference": example.reference,
        "language": example.language,
        "source": example.source,
    }
    for key in sorted(example.metadata):
        if key not in record:
            record[key] = example.metadata[key]
    return record


def read_jsonl(path) -> list[DialogueExample]:
    """Parse one-example-per-line JSONL; line numbers are exact in errors."""
    examples = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            stripped = line.strip()
            if not stripped:
                continue
            try:
                record = json.loads(stripped)
            except json.JSONDecodeError as exc:
                raise MalformedRecord(line_no, stripped, f"invalid JSON: {exc.msg}") from exc
            if not isinstance(record, dict):
                raise MalformedRecord(line_no, stripped, "record is not a JSON object")
            examples.append(example_from_record(record, line_no, stripped))
    return examples


def write_jsonl(examples: Iterable[DialogueExample], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for example in examples:
            fh.write(json.dumps(example_to_record(example), ensure_ascii=False, sort_keys=True))
            fh.write("\n")


def detect_language(text: str) -> str:
    """"hi" iff Devanagari fraction among alphabetic code points >= 0.3, else "en"."""
    if not text.strip():
        raise EmptyText("cannot detect language of empty text")
    alpha = 0
    devanagari = 0
    for ch in text:
        if ch.isalpha():
            alpha += 1
            if _DEVANAGARI_LO <= ord(ch) <= _DEVANAGARI_HI:
                devanagari += 1
    if alpha == 0:
        return "en"
    return "hi" if devanagari / alpha >= DEVANAGARI_THRESHOLD else "en"


_PLACEHOLDER_RE = re.compile(r"⟪([0-9]+)⟫")


def guard_translate(
    text: str,
    translator,
    source_lang: str = "en",
    target_lang: str = "hi",
) -> str:
    """Translate while preserving citation markers exactly.

    Each marker occurrence is swapped for an opaque placeholder before the
    translator call and restored after. Raises MarkerLoss if any placeholder
    is dropped or duplicated, or if the restored output's marker multiset
    differs from the input's — never a silent loss.
    """
    occurrences: list[int] = []

    def mask(m: re.Match) -> str:
        occurrences.append(int(m.group(1)))
        return f"⟪{len(occurrences) - 1}⟫"

    masked = _MARKER_STR_RE.sub(mask, text)
    translated = translator.translate(masked, source_lang, target_lang)

    lost: list[int] = []
    counts = {int(m.group(1)): 0 for m in _PLACEHOLDER_RE.finditer(translated)}
    for m in _PLACEHOLDER_RE.finditer(translated):
        counts[int(m.group(1))] += 1
    for occ, marker_index in enumerate(occurrences):
        if counts.get(occ, 0) != 1:
            lost.append(marker_index)
    if lost:
        raise MarkerLoss(lost)

    restored = _PLACEHOLDER_RE.sub(
        lambda m: f"[{occurrences[int(m.group(1))]}]", translated
    )
    out_multiset = sorted(parse_citations(restored).indices)
    if out_multiset != sorted(occurrences):
        raise MarkerLoss(set(out_multiset) ^ set(occurrences))
    return restored


def sample_mixture(
    en_pool: Sequence[DialogueExample],
    hi_pool: Sequence[DialogueExample],
    spec: MixtureSpec,
    count: int,
) -> list[DialogueExample]:
    """Draw `count` examples, each English with probability alpha_en (seeded)."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not en_pool and spec.alpha_en > 0.0:
        raise EmptyPool("en")
    if not hi_pool and spec.alpha_en < 1.0:
        raise EmptyPool("hi")
    rng = np.random.default_rng(spec.seed)
    drawn = []
    for _ in range(count):
        if rng.random() < spec.alpha_en:
            pool = en_pool
        else:
            pool = hi_pool
        drawn.append(pool[int(rng.integers(len(pool)))])
    return drawn
