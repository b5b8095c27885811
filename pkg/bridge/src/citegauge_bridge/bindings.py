"""Model bindings: one loaded model+tokenizer per serving role.

The reference binding is frozen (eval mode, no gradients) — it scores
candidates but never updates. Exactly one binding per role per server.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch

ROLES = ("generator", "reference", "nli", "embedder", "translator")


class UnsupportedBinding(Exception):
    """The bound architecture cannot serve the requested capability."""


@dataclass
class ModelBinding:
    role: str
    model_id: str
    model: object
    tokenizer: object
    device: str = "cpu"
    max_batch: int = 8

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.max_batch < 1:
            raise ValueError("max_batch must be >= 1")
        self.model.to(self.device)
        self.model.eval()
        if self.role == "reference":
            for param in self.model.parameters():
                param.requires_grad_(False)

    @property
    def is_encoder_decoder(self) -> bool:
        return bool(getattr(self.model.config, "is_encoder_decoder", False))


class BindingSet:
    """Role -> binding map with the one-per-role invariant."""

    def __init__(self, bindings):
        self._by_role = {}
        for binding in bindings:
            if binding.role in self._by_role:
                raise ValueError(f"duplicate binding for role {binding.role!r}")
            self._by_role[binding.role] = binding

    def get(self, role: str) -> Optional[ModelBinding]:
        return self._by_role.get(role)

    def require(self, role: str) -> ModelBinding:
        binding = self._by_role.get(role)
        if binding is None:
            raise UnsupportedBinding(f"no binding for role {role!r}")
        return binding

    def manifest(self) -> dict:
        return {
            "roles": sorted(self._by_role),
            "bindings": {
                role: {
                    "model_id": b.model_id,
                    "device": b.device,
                    "max_batch": b.max_batch,
                    "encoder_decoder": b.is_encoder_decoder,
                }
                for role, b in self._by_role.items()
            },
        }


def load_pretrained_binding(role: str, model_id: str, device: str = "cpu", max_batch: int = 8) -> ModelBinding:
    """Load a binding from a local/cached transformers checkpoint."""
    from transformers import (
        AutoModel,
        AutoModelForCausalLM,
        AutoModelForSeq2SeqLM,
        AutoModelForSequenceClassification,
        AutoTokenizer,
    )

    tokenizer = AutoTokenizer.from_pretrained(model_id)
    if role == "nli":
        model = AutoModelForSequenceClassification.from_pretrained(model_id)
    elif role == "embedder":
        model = AutoModel.from_pretrained(model_id)
    else:
        try:
            model = AutoModelForSeq2SeqLM.from_pretrained(model_id)
        except (ValueError, OSError):
            model = AutoModelForCausalLM.from_pretrained(model_id)
    with torch.no_grad():
        pass
    return ModelBinding(role=role, model_id=model_id, model=model, tokenizer=tokenizer,
                        device=device, max_batch=max_batch)
