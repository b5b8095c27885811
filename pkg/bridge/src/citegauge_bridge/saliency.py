"""Integrated-gradients attribution over input token embeddings.

Gradients accumulate along a straight path from a zero embedding baseline
to the actual input (default 32 steps); the per-token score is the summed
absolute attribution of the full target sequence's log-likelihood. When no
target tokens exist or gradients are non-finite, the dump is written with
the undefined marker instead of failing.
"""

from __future__ import annotations

import numpy as np
import torch

from .bindings import ModelBinding, UnsupportedBinding
from .tdmp import char_spans_to_byte_spans, write_dump

DEFAULT_IG_STEPS = 32


def ig_token_scores(
    binding: ModelBinding,
    prompt: str,
    target_text: str,
    steps: int = DEFAULT_IG_STEPS,
) -> tuple[np.ndarray, list[tuple[int, int]], bool]:
    """Returns (scores, byte token spans, undefined flag)."""
    if not binding.is_encoder_decoder:
        raise UnsupportedBinding(
            f"saliency needs an encoder-decoder generator, got {binding.model_id!r}"
        )
    tokenizer = binding.tokenizer
    enc = tokenizer(
        prompt or tokenizer.unk_token,
        return_tensors="pt",
        add_special_tokens=False,
        return_offsets_mapping=True,
    )
    spans = char_spans_to_byte_spans(
        prompt or tokenizer.unk_token, [tuple(s) for s in enc["offset_mapping"][0].tolist()]
    )
    n_tokens = enc["input_ids"].shape[1]

    target = tokenizer(target_text, return_tensors="pt", add_special_tokens=False)
    if target["input_ids"].shape[1] == 0:
        return np.zeros(n_tokens, dtype=np.float32), spans, True

    input_ids = enc["input_ids"].to(binding.device)
    target_ids = target["input_ids"][0].to(binding.device)
    start_id = binding.model.config.decoder_start_token_id or 0
    decoder_input = torch.cat(
        [torch.full((1,), start_id, dtype=torch.long, device=binding.device), target_ids[:-1]]
    ).unsqueeze(0)

    embeddings = binding.model.get_input_embeddings()(input_ids).detach()
    grad_total = torch.zeros_like(embeddings)
    for k in range(1, steps + 1):
        alpha = k / steps
        point = (alpha * embeddings).requires_grad_(True)
        out = binding.model(inputs_embeds=point, decoder_input_ids=decoder_input)
        logprob_rows = torch.log_softmax(out.logits[0].float(), dim=-1)
        scalar = logprob_rows[torch.arange(len(target_ids)), target_ids].sum()
        (grad,) = torch.autograd.grad(scalar, point)
        grad_total += grad

    attribution = embeddings * (grad_total / steps)
    scores = attribution.abs().sum(dim=-1)[0].float().cpu().numpy().astype(np.float32)
    undefined = not bool(np.all(np.isfinite(scores)))
    if undefined:
        scores = np.zeros(n_tokens, dtype=np.float32)
    return scores, spans, undefined


def dump_saliency(
    binding: ModelBinding,
    prompt: str,
    target_text: str,
    path,
    steps: int = DEFAULT_IG_STEPS,
) -> str:
    scores, spans, undefined = ig_token_scores(binding, prompt, target_text, steps=steps)
    return write_dump("saliency", scores, spans, path, undefined=undefined)
