"""Post-hoc explainability: attention alignment, saliency summaries, occlusion.

Tensor dumps travel as ".tdmp" files: one JSON header line
{"kind": ..., "dims": [...], "token_spans": [...]} followed by a row-major
little-endian float32 payload of exactly prod(dims) values.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .backends import GenerationRequest
from .citemetrics import parse_citations
from .corpus import DialogueExample, build_prompt, render_prompt
from .errors import (
    FormatError,
    IndexOutOfRange,
    NoCitations,
    NonStochastic,
    ShapeMismatch,
)
from .kernels import alignment_mean

ROW_SUM_TOLERANCE = 1e-4
DEFAULT_TOP_K = 5


@dataclass(frozen=True)
class AttentionDump:
    """Cross-attention weights [layer][head][out][in], row-stochastic over in."""

    weights: np.ndarray
    input_token_spans: tuple[tuple[int, int], ...]

    @property
    def layers(self) -> int:
        return self.weights.shape[0]

    @property
    def heads(self) -> int:
        return self.weights.shape[1]

    @property
    def out_len(self) -> int:
        return self.weights.shape[2]

    @property
    def in_len(self) -> int:
        return self.weights.shape[3]

    def validate(self) -> None:
        if self.weights.ndim != 4:
            raise ShapeMismatch(f"attention weights must be 4-D, got {self.weights.ndim}-D")
        if len(self.input_token_spans) != self.in_len:
            raise ShapeMismatch(
                f"{len(self.input_token_spans)} token spans for in_len {self.in_len}"
            )
        sums = self.weights.sum(axis=3, dtype=np.float64)
        bad = np.argwhere(np.abs(sums - 1.0) > ROW_SUM_TOLERANCE)
        if bad.size:
            layer, head, out = (int(v) for v in bad[0])
            raise NonStochastic(layer, head, out, float(sums[layer, head, out]))


@dataclass(frozen=True)
class SaliencyDump:
    """Per-input-token absolute attribution scores; undefined mirrors NaN collapse."""

    scores: np.ndarray
    token_spans: tuple[tuple[int, int], ...]
    undefined: bool = False

    def validate(self) -> None:
        if self.scores.ndim != 1:
            raise ShapeMismatch(f"saliency scores must be 1-D, got {self.scores.ndim}-D")
        if len(self.token_spans) != self.scores.shape[0]:
            raise ShapeMismatch(
                f"{len(self.token_spans)} token spans for {self.scores.shape[0]} scores"
            )


@dataclass(frozen=True)
class SaliencySummary:
    entropy: float
    concentration: float
    defined: bool

    @classmethod
    def undefined_result(cls) -> "SaliencySummary":
        return cls(entropy=float("nan"), concentration=float("nan"), defined=False)


@dataclass(frozen=True)
class GroundingResult:
    """Occlusion outcome: how many baseline citations vanish with their source."""

    total_citations: int
    disappeared: int

    def __post_init__(self):
        if self.disappeared > self.total_citations:
            raise ValueError("disappeared cannot exceed total_citations")

    @property
    def score(self) -> float:
        if self.total_citations == 0:
            return 0.0
        return self.disappeared / self.total_citations


def attention_alignment(dump: AttentionDump, cited_token_indices: Iterable[int]) -> float:
    """Mean attention weight over every (layer, head, out, cited-token) cell."""
    cited = sorted(set(int(i) for i in cited_token_indices))
    for i in cited:
        if i < 0 or i >= dump.in_len:
            raise IndexOutOfRange(f"cited token index {i} outside input length {dump.in_len}")
    dump.validate()
    if not cited:
        return 0.0
    return alignment_mean(dump.weights, np.asarray(cited, dtype=np.int64))


def saliency_summary(dump: SaliencyDump, top_k: int = DEFAULT_TOP_K) -> SaliencySummary:
    """Entropy (natural log) and top-k mass of the attribution distribution.

    All-zero or non-finite scores yield the undefined marker, not an error.
    """
    if dump.undefined:
        return SaliencySummary.undefined_result()
    scores = np.asarray(dump.scores, dtype=np.float64)
    if scores.size == 0 or not np.all(np.isfinite(scores)) or np.any(scores < 0):
        return SaliencySummary.undefined_result()
    total = scores.sum()
    if total <= 0.0:
        return SaliencySummary.undefined_result()
    p = scores / total
    nonzero = p[p > 0]
    entropy = float(-(nonzero * np.log(nonzero)).sum())
    top = np.sort(p)[::-1][: max(0, top_k)]
    return SaliencySummary(entropy=entropy, concentration=float(top.sum()), defined=True)


def passage_byte_spans(prompt: str) -> dict[int, tuple[int, int]]:
    """Byte span of each knowledge passage's text within the rendered prompt."""
    data = prompt.encode("utf-8")
    spans: dict[int, tuple[int, int]] = {}
    offset = 0
    for line in data.split(b"\n"):
        if line.startswith(b"[") and b"] " in line:
            head, _, _ = line.partition(b"] ")
            idx_bytes = head[1:]
            if idx_bytes.isdigit():
                start = offset + len(head) + 2
                spans[int(idx_bytes)] = (start, offset + len(line))
        offset += len(line) + 1
    return spans


def cited_token_indices(
    prompt: str,
    cited_passages: Iterable[int],
    input_token_spans: Sequence[tuple[int, int]],
) -> set[int]:
    """Input-token positions whose byte spans overlap any cited passage's span."""
    spans = passage_byte_spans(prompt)
    targets = [spans[i] for i in cited_passages if i in spans]
    out = set()
    for pos, (ts, te) in enumerate(input_token_spans):
        for ps, pe in targets:
            if ts < pe and ps < te:
                out.add(pos)
                break
    return out


def occlusion_grounding(
    example: DialogueExample,
    gen,
    max_new_tokens: int = 128,
) -> GroundingResult:
    """Fraction of baseline citations that disappear when their passage is removed.

    For each distinct in-range index i cited in the greedy baseline output,
    the prompt is rebuilt without passage i (later passages renumbered) and
    the response regenerated. Citation i counts as disappeared iff the old
    index is absent from the regenerated markers AND no fabricated marker
    (index 0 or beyond the shrunk passage count) appears — the conservative
    reading that never overstates grounding.
    """
    baseline = gen.generate(
        GenerationRequest(prompt=build_prompt(example), temperature=0.0, max_new_tokens=max_new_tokens)
    )
    n = len(example.knowledge)
    cited = sorted(i for i in parse_citations(baseline.text).index_set() if 1 <= i <= n)
    if not cited:
        raise NoCitations(f"baseline output for {example.id!r} contains no in-range citations")

    disappeared = 0
    for i in cited:
        reduced = example.knowledge.without(i)
        prompt = render_prompt(example.query, reduced.texts())
        regen = gen.generate(
            GenerationRequest(prompt=prompt, temperature=0.0, max_new_tokens=max_new_tokens)
        )
        regen_set = parse_citations(regen.text).index_set()
        n_new = n - 1
        fabricated = any(s > n_new or s == 0 for s in regen_set)
        if i not in regen_set and not fabricated:
            disappeared += 1
    return GroundingResult(total_citations=len(cited), disappeared=disappeared)


# -- tensor dump IO ----------------------------------------------------------

def write_tensor_dump(dump, path) -> str:
    """Serialize an AttentionDump or SaliencyDump to a .tdmp file."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(dump, AttentionDump):
        kind = "attention"
        dims = list(dump.weights.shape)
        spans = [list(s) for s in dump.input_token_spans]
        payload = np.ascontiguousarray(dump.weights, dtype="<f4")
    elif isinstance(dump, SaliencyDump):
        kind = "saliency"
        dims = [int(dump.scores.shape[0])]
        spans = [list(s) for s in dump.token_spans]
        payload = np.ascontiguousarray(dump.scores, dtype="<f4")
    else:
        raise TypeError(f"cannot dump {type(dump).__name__}")
    header: dict = {"kind": kind, "dims": dims, "token_spans": spans}
    if isinstance(dump, SaliencyDump) and dump.undefined:
        header["undefined"] = True
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8"))
        fh.write(b"\n")
        fh.write(payload.tobytes())
    return str(path)


def read_tensor_dump(path):
    """Parse and validate a .tdmp file into an AttentionDump or SaliencyDump."""
    with open(path, "rb") as fh:
        header_line = fh.readline()
        body = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(0, f"bad header: {exc}") from exc
    if not isinstance(header, dict) or "kind" not in header or "dims" not in header:
        raise FormatError(0, "header must carry kind and dims")
    kind = header["kind"]
    dims = header["dims"]
    if not isinstance(dims, list) or not all(isinstance(d, int) and d >= 0 for d in dims):
        raise FormatError(0, f"bad dims {dims!r}")
    expected = int(np.prod(dims, dtype=np.int64)) if dims else 0
    if len(body) != expected * 4:
        raise ShapeMismatch(f"payload holds {len(body) // 4} floats, header promises {expected}")
    values = np.frombuffer(body, dtype="<f4").copy()
    spans = tuple((int(s), int(e)) for s, e in header.get("token_spans", []))

    if kind == "attention":
        if len(dims) != 4:
            raise FormatError(0, f"attention dims must be 4-D, got {dims}")
        dump = AttentionDump(weights=values.reshape(dims), input_token_spans=spans)
        dump.validate()
        return dump
    if kind == "saliency":
        if len(dims) != 1:
            raise FormatError(0, f"saliency dims must be 1-D, got {dims}")
        undefined = bool(header.get("undefined", False)) or not bool(
            np.all(np.isfinite(values))
        )
        dump = SaliencyDump(scores=values, token_spans=spans, undefined=undefined)
        dump.validate()
        return dump
    raise FormatError(0, f"unknown dump kind {kind!r}")
