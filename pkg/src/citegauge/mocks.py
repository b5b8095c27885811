"""Deterministic in-process mock backends for every endpoint.

Every mock is a pure function of (request, seed): repeated calls return
identical results on any platform, which is what makes golden-file and
rollout-determinism tests possible. Mocks record their calls so tests can
assert call counts and idempotence.
"""

from __future__ import annotations

import re
from typing import Callable, Optional, Sequence
from urllib.parse import parse_qsl, urlparse

import numpy as np

from .backends import GenerationRequest, GenerationResponse, stable_hash64
from .semqual import EntailmentJudgment
from .textmetrics import tokenize
from .xai import AttentionDump, write_tensor_dump

_KNOWLEDGE_LINE_RE = re.compile(r"^\[([0-9]+)\] (.*)$", re.MULTILINE)


def parse_prompt_knowledge(prompt: str) -> list[tuple[int, str]]:
    """Recover (index, text) pairs from a rendered prompt's knowledge block."""
    return [(int(m.group(1)), m.group(2)) for m in _KNOWLEDGE_LINE_RE.finditer(prompt)]


class _Recording:
    def __init__(self):
        self.calls: list = []


class EchoGenerator(_Recording):
    """Returns the prompt itself."""

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        return GenerationResponse(text=request.prompt)


class ScriptedGenerator(_Recording):
    """Returns scripted text keyed by exact prompt, stable across calls."""

    def __init__(self, script: dict[str, str], default: Optional[str] = None):
        super().__init__()
        self.script = dict(script)
        self.default = default

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        if request.prompt in self.script:
            return GenerationResponse(text=self.script[request.prompt])
        if self.default is not None:
            return GenerationResponse(text=self.default)
        raise KeyError(f"no script for prompt {request.prompt[:60]!r}")


_DEFAULT_VOCAB = (
    "the", "a", "tower", "river", "city", "bridge", "known", "famous",
    "built", "opened", "visited", "according", "located", "noted",
    "नदी", "शहर", "प्रसिद्ध", "इतिहास",
)


class SeededSamplerGenerator(_Recording):
    """Samples vocabulary words with an RNG derived from the full request.

    With want_logprobs it emits one log-prob per word; with want_attentions
    (and a dump_dir) it writes a random row-stochastic attention dump and
    returns its path.
    """

    def __init__(self, vocab: Sequence[str] = _DEFAULT_VOCAB, dump_dir=None, cite_up_to: int = 0):
        super().__init__()
        self.vocab = tuple(vocab)
        self.dump_dir = dump_dir
        self.cite_up_to = cite_up_to

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        rng = np.random.default_rng(
            stable_hash64(
                "seeded-gen",
                request.prompt,
                request.seed,
                round(request.temperature, 6),
                request.max_new_tokens,
            )
        )
        n_words = int(4 + rng.integers(0, 9))
        words = [self.vocab[int(rng.integers(len(self.vocab)))] for _ in range(n_words)]
        if self.cite_up_to > 0:
            n_passages = max(1, len(parse_prompt_knowledge(request.prompt)))
            cite = 1 + int(rng.integers(min(self.cite_up_to, n_passages)))
            words.append(f"[{cite}]")
        text = " ".join(words) + "."

        logprobs = None
        if request.want_logprobs:
            logprobs = tuple(float(-(0.2 + 2.5 * rng.random())) for _ in words)

        dump_ref = None
        if request.want_attentions and self.dump_dir is not None:
            dump_ref = self._write_attention(request, rng, len(words))
        return GenerationResponse(text=text, token_logprobs=logprobs, attention_dump_ref=dump_ref)

    def _write_attention(self, request: GenerationRequest, rng, out_len: int) -> str:
        spans = _byte_token_spans(request.prompt)
        in_len = max(1, len(spans))
        if not spans:
            spans = [(0, len(request.prompt.encode("utf-8")))]
        raw = rng.random((2, 2, out_len, in_len)) + 0.05
        weights = (raw / raw.sum(axis=3, keepdims=True)).astype(np.float32)
        dump = AttentionDump(weights=weights, input_token_spans=tuple(spans))
        name = f"attn_{stable_hash64(request.prompt, request.seed):016x}.tdmp"
        return write_tensor_dump(dump, f"{self.dump_dir}/{name}")


def _byte_token_spans(text: str) -> list[tuple[int, int]]:
    """Whitespace-token byte spans, the mock backend's notion of input tokens."""
    data = text.encode("utf-8")
    spans = []
    start = None
    for i, b in enumerate(data):
        is_space = b in (0x20, 0x09, 0x0A, 0x0D)
        if is_space:
            if start is not None:
                spans.append((start, i))
                start = None
        elif start is None:
            start = i
    if start is not None:
        spans.append((start, len(data)))
    return spans


class KnowledgeEchoGenerator(_Recording):
    """Cites every passage in the prompt with a snippet of its text.

    Fully knowledge-conditioned: citations exist only for passages actually
    present, so occluded passages lose their snippets and markers.
    """

    def __init__(self, snippet_words: int = 6):
        super().__init__()
        self.snippet_words = snippet_words

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        parts = []
        for index, text in parse_prompt_knowledge(request.prompt):
            snippet = " ".join(text.split()[: self.snippet_words])
            parts.append(f"According to [{index}], {snippet}.")
        return GenerationResponse(text=" ".join(parts))


class ClaimCitingGenerator(_Recording):
    """Cites the current position of each passage containing a known claim key.

    With a single claim this is the "cites [1] only when passage 1 present"
    mock: remove the claim's passage and the marker disappears.
    """

    def __init__(self, claims: dict[str, str]):
        super().__init__()
        self.claims = dict(claims)

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        parts = []
        for index, text in parse_prompt_knowledge(request.prompt):
            for key, claim in self.claims.items():
                if key in text:
                    parts.append(f"According to [{index}], {claim}.")
        if not parts:
            return GenerationResponse(text="There is no supporting passage.")
        return GenerationResponse(text=" ".join(parts))


class AlwaysCiteGenerator(_Recording):
    """Emits fixed marker-bearing text regardless of the prompt."""

    def __init__(self, text: str = "As stated in [1], that is correct."):
        super().__init__()
        self.text = text

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        self.calls.append(request)
        return GenerationResponse(text=self.text)


# -- NLI mocks ----------------------------------------------------------------

class ConstantNli(_Recording):
    def __init__(self, p_entail: float = 0.9, p_contradict: Optional[float] = None, p_neutral: Optional[float] = None):
        super().__init__()
        rest = 1.0 - p_entail
        self.p_entail = p_entail
        self.p_contradict = p_contradict if p_contradict is not None else rest / 2
        self.p_neutral = p_neutral if p_neutral is not None else rest - (p_contradict if p_contradict is not None else rest / 2)

    def nli(self, premise: str, hypothesis: str) -> EntailmentJudgment:
        self.calls.append((premise, hypothesis))
        return EntailmentJudgment(
            premise=premise,
            hypothesis=hypothesis,
            p_entail=self.p_entail,
            p_contradict=self.p_contradict,
            p_neutral=self.p_neutral,
        )


class ScriptedNli(_Recording):
    """p_entail looked up by hypothesis text; remainder split across other labels."""

    def __init__(self, by_hypothesis: dict[str, float], default: float = 0.5):
        super().__init__()
        self.by_hypothesis = dict(by_hypothesis)
        self.default = default

    def nli(self, premise: str, hypothesis: str) -> EntailmentJudgment:
        self.calls.append((premise, hypothesis))
        p = self.by_hypothesis.get(hypothesis, self.default)
        return EntailmentJudgment(
            premise=premise,
            hypothesis=hypothesis,
            p_entail=p,
            p_contradict=(1.0 - p) / 2,
            p_neutral=(1.0 - p) / 2,
        )


class SimilarityNli(_Recording):
    """Near-certain entailment when the hypothesis is contained in the premise."""

    def nli(self, premise: str, hypothesis: str) -> EntailmentJudgment:
        self.calls.append((premise, hypothesis))
        contained = hypothesis.strip() and hypothesis.strip() in premise
        p = 0.99 if contained else 0.02
        return EntailmentJudgment(
            premise=premise,
            hypothesis=hypothesis,
            p_entail=p,
            p_contradict=(1.0 - p) / 2,
            p_neutral=(1.0 - p) / 2,
        )


# -- embedding mocks -----------------------------------------------------------

class HashEmbedder(_Recording):
    """Each token maps to a fixed unit basis vector chosen by a stable hash."""

    def __init__(self, dim: int = 64):
        super().__init__()
        self.dim = dim

    def _vector(self, token: str) -> np.ndarray:
        v = np.zeros(self.dim)
        v[stable_hash64("embed", token) % self.dim] = 1.0
        return v

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.calls.append(tuple(texts))
        out = []
        for text in texts:
            tokens = tokenize(text, "en").tokens
            if not tokens:
                out.append(np.zeros((0, self.dim)))
            else:
                out.append(np.stack([self._vector(t) for t in tokens]))
        return out


class ScriptedEmbedder(_Recording):
    """Hand-specified token vectors for fixture arithmetic."""

    def __init__(self, table: dict[str, Sequence[float]], dim: int):
        super().__init__()
        self.table = {k: np.asarray(v, dtype=np.float64) for k, v in table.items()}
        self.dim = dim

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        self.calls.append(tuple(texts))
        out = []
        for text in texts:
            tokens = tokenize(text, "en").tokens
            if not tokens:
                out.append(np.zeros((0, self.dim)))
            else:
                out.append(np.stack([self.table[t] for t in tokens]))
        return out


# -- translator mocks -----------------------------------------------------------

class IdentityTranslator(_Recording):
    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        self.calls.append(text)
        return text


class ReversingTranslator(_Recording):
    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        self.calls.append(text)
        return " ".join(reversed(text.split()))


class ShufflingTranslator(_Recording):
    """Deterministically shuffles word order (seeded by content)."""

    def __init__(self, seed: int = 0):
        super().__init__()
        self.seed = seed

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        self.calls.append(text)
        words = text.split()
        rng = np.random.default_rng(stable_hash64("shuffle", self.seed, text))
        rng.shuffle(words)
        return " ".join(words)


class DeletingTranslator(_Recording):
    """Drops marker placeholders, forcing the MarkerLoss path."""

    _PLACEHOLDER = re.compile(r"⟪[0-9]+⟫")

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        self.calls.append(text)
        return self._PLACEHOLDER.sub("", text)


class FnTranslator(_Recording):
    def __init__(self, fn: Callable[[str], str]):
        super().__init__()
        self.fn = fn

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        self.calls.append(text)
        return self.fn(text)


# -- CLI wiring -----------------------------------------------------------------

def make_mock(url: str, dump_dir=None):
    """Build a mock backend from a mock: URL, e.g. mock:seeded?seed=7.

    Supported names: echo, seeded, knowledge, claims, always-cite,
    nli-const, nli-similarity, embed-hash, translate-identity,
    translate-reverse, translate-shuffle.
    """
    parsed = urlparse(url)
    if parsed.scheme != "mock":
        raise ValueError(f"not a mock URL: {url!r}")
    name = parsed.path or parsed.netloc
    params = dict(parse_qsl(parsed.query))
    if name == "echo":
        return EchoGenerator()
    if name == "seeded":
        return SeededSamplerGenerator(
            dump_dir=dump_dir, cite_up_to=int(params.get("cite_up_to", 0))
        )
    if name == "knowledge":
        return KnowledgeEchoGenerator(snippet_words=int(params.get("snippet_words", 6)))
    if name == "always-cite":
        return AlwaysCiteGenerator(text=params.get("text", "As stated in [1], that is correct."))
    if name == "nli-const":
        return ConstantNli(p_entail=float(params.get("p_entail", 0.9)))
    if name == "nli-similarity":
        return SimilarityNli()
    if name == "embed-hash":
        return HashEmbedder(dim=int(params.get("dim", 64)))
    if name == "translate-identity":
        return IdentityTranslator()
    if name == "translate-reverse":
        return ReversingTranslator()
    if name == "translate-shuffle":
        return ShufflingTranslator(seed=int(params.get("seed", 0)))
    raise ValueError(f"unknown mock backend {name!r}")
