"""Wire protocol and HTTP clients for model-side capabilities.

The protocol is JSON over HTTP with endpoints /generate, /nli, /embed,
/translate, and /health. Field names are part of the contract and must not
drift: prompt, temperature, max_new_tokens, seed, want_logprobs,
want_attentions, text, token_logprobs, attention_dump_ref, premise,
hypothesis, p_entail, p_contradict, p_neutral, texts, source_lang,
target_lang. Attention/saliency tensors travel by .tdmp file reference,
never inline.
"""

from __future__ import annotations

import hashlib
import os
import threading
import time
import uuid
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import requests

from .errors import DimensionMismatch, ProtocolError, Timeout, Unavailable
from .semqual import EntailmentJudgment

ENV_BACKEND_URL = "CITEGAUGE_BACKEND_URL"
DEFAULT_MAX_NEW_TOKENS = 128


def stable_hash64(*parts) -> int:
    """Platform-stable 63-bit hash of the given parts (process hash() is salted)."""
    h = hashlib.sha256()
    for part in parts:
        h.update(repr(part).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "little") & 0x7FFFFFFFFFFFFFFF


@dataclass(frozen=True)
class RetryPolicy:
    attempts: int = 3
    backoff: float = 0.2

    def __post_init__(self):
        if self.attempts < 1:
            raise ValueError("retry attempts must be >= 1")


@dataclass(frozen=True)
class BackendEndpoint:
    base_url: str
    timeout: float = 30.0
    max_in_flight: int = 4
    retry: RetryPolicy = field(default_factory=RetryPolicy)

    def __post_init__(self):
        if self.timeout <= 0:
            raise ValueError("timeout must be > 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")

    @classmethod
    def from_env(cls, default: str = "http://127.0.0.1:8811") -> "BackendEndpoint":
        return cls(base_url=os.environ.get(ENV_BACKEND_URL, default))


@dataclass(frozen=True)
class GenerationRequest:
    prompt: str
    temperature: float = 0.0
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    seed: Optional[int] = None
    want_logprobs: bool = False
    want_attentions: bool = False

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")

    def to_wire(self) -> dict:
        return {
            "prompt": self.prompt,
            "temperature": self.temperature,
            "max_new_tokens": self.max_new_tokens,
            "seed": self.seed,
            "want_logprobs": self.want_logprobs,
            "want_attentions": self.want_attentions,
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "GenerationRequest":
        return cls(
            prompt=payload["prompt"],
            temperature=payload.get("temperature", 0.0),
            max_new_tokens=payload.get("max_new_tokens", DEFAULT_MAX_NEW_TOKENS),
            seed=payload.get("seed"),
            want_logprobs=payload.get("want_logprobs", False),
            want_attentions=payload.get("want_attentions", False),
        )


@dataclass(frozen=True)
class GenerationResponse:
    text: str
    token_logprobs: Optional[tuple[float, ...]] = None
    attention_dump_ref: Optional[str] = None
    attention_unavailable_reason: Optional[str] = None

    def to_wire(self) -> dict:
        wire = {
            "text": self.text,
            "token_logprobs": list(self.token_logprobs) if self.token_logprobs is not None else None,
            "attention_dump_ref": self.attention_dump_ref,
        }
        if self.attention_unavailable_reason is not None:
            wire["attention_unavailable_reason"] = self.attention_unavailable_reason
        return wire

    @classmethod
    def from_wire(cls, payload: dict) -> "GenerationResponse":
        logprobs = payload.get("token_logprobs")
        return cls(
            text=payload["text"],
            token_logprobs=tuple(logprobs) if logprobs is not None else None,
            attention_dump_ref=payload.get("attention_dump_ref"),
            attention_unavailable_reason=payload.get("attention_unavailable_reason"),
        )


class HttpBackend:
    """Shareable client for one backend endpoint.

    Safe for concurrent use; a semaphore keeps outstanding requests at or
    below the endpoint's max_in_flight. Requests carry a client-generated
    X-Request-Id header so idempotent retries are detectable server-side.
    """

    def __init__(self, endpoint: BackendEndpoint, session: Optional[requests.Session] = None):
        self.endpoint = endpoint
        self._session = session or requests.Session()
        self._slots = threading.Semaphore(endpoint.max_in_flight)

    def _post(self, path: str, payload: dict) -> dict:
        url = self.endpoint.base_url.rstrip("/") + path
        headers = {"X-Request-Id": str(uuid.uuid4())}
        attempts = self.endpoint.retry.attempts
        last_exc: Exception | None = None
        for attempt in range(attempts):
            if attempt:
                time.sleep(self.endpoint.retry.backoff * (2 ** (attempt - 1)))
            try:
                with self._slots:
                    resp = self._session.post(
                        url, json=payload, headers=headers, timeout=self.endpoint.timeout
                    )
            except requests.Timeout as exc:
                last_exc = Timeout(f"{url} timed out after {self.endpoint.timeout}s")
                continue
            except requests.RequestException as exc:
                last_exc = Unavailable(f"{url}: {exc}")
                continue
            if resp.status_code >= 500:
                last_exc = Unavailable(f"{url}: status {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise ProtocolError(resp.status_code, resp.text)
            try:
                return resp.json()
            except ValueError:
                raise ProtocolError(resp.status_code, resp.text)
        raise last_exc  # type: ignore[misc]

    def health(self) -> dict:
        url = self.endpoint.base_url.rstrip("/") + "/health"
        try:
            resp = self._session.get(url, timeout=self.endpoint.timeout)
        except requests.Timeout:
            raise Timeout(f"{url} timed out")
        except requests.RequestException as exc:
            raise Unavailable(f"{url}: {exc}")
        if resp.status_code != 200:
            raise ProtocolError(resp.status_code, resp.text)
        return resp.json()

    def generate(self, request: GenerationRequest) -> GenerationResponse:
        payload = self._post("/generate", request.to_wire())
        try:
            return GenerationResponse.from_wire(payload)
        except (KeyError, TypeError) as exc:
            raise ProtocolError(200, f"bad generate response: {payload!r}") from exc

    def nli(self, premise: str, hypothesis: str) -> EntailmentJudgment:
        payload = self._post("/nli", {"premise": premise, "hypothesis": hypothesis})
        try:
            return EntailmentJudgment(
                premise=premise,
                hypothesis=hypothesis,
                p_entail=float(payload["p_entail"]),
                p_contradict=float(payload["p_contradict"]),
                p_neutral=float(payload["p_neutral"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(200, f"bad nli response: {payload!r}") from exc

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        if not texts:
            raise ValueError("embed batch must be non-empty")
        payload = self._post("/embed", {"texts": list(texts)})
        try:
            raw = payload["embeddings"]
            dim = next((len(mat[0]) for mat in raw if mat), 0)
            matrices = [
                np.asarray(mat, dtype=np.float64).reshape(len(mat), -1)
                if mat
                else np.zeros((0, dim))
                for mat in raw
            ]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(200, f"bad embed response: {payload!r}") from exc
        if len(matrices) != len(texts):
            raise ProtocolError(200, f"embed returned {len(matrices)} matrices for {len(texts)} texts")
        dims = {m.shape[1] for m in matrices if m.size}
        if len(dims) > 1:
            raise DimensionMismatch(f"inconsistent embedding dims {sorted(dims)}")
        return matrices

    def translate(self, text: str, source_lang: str, target_lang: str) -> str:
        payload = self._post(
            "/translate",
            {"text": text, "source_lang": source_lang, "target_lang": target_lang},
        )
        try:
            return payload["text"]
        except (KeyError, TypeError) as exc:
            raise ProtocolError(200, f"bad translate response: {payload!r}") from exc


def wire_dispatch(handlers, path: str, payload: dict) -> dict:
    """Route one wire-protocol request to duck-typed backend objects.

    `handlers` maps role names (generate/nli/embed/translate) to backend
    objects. Used by the contract suite to run the same recorded requests
    against in-process mocks that a live bridge answers over HTTP.
    """
    if path == "/generate":
        resp = handlers["generate"].generate(GenerationRequest.from_wire(payload))
        return resp.to_wire()
    if path == "/nli":
        j = handlers["nli"].nli(payload["premise"], payload["hypothesis"])
        return {
            "p_entail": j.p_entail,
            "p_contradict": j.p_contradict,
            "p_neutral": j.p_neutral,
        }
    if path == "/embed":
        matrices = handlers["embed"].embed(payload["texts"])
        return {"embeddings": [m.tolist() for m in matrices]}
    if path == "/translate":
        text = handlers["translate"].translate(
            payload["text"], payload["source_lang"], payload["target_lang"]
        )
        return {"text": text}
    if path == "/health":
        return {"roles": sorted(handlers)}
    raise KeyError(f"unknown endpoint {path}")
