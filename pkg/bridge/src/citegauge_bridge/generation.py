"""Inference ops: generation with log-probs and attention dumps, NLI,
embeddings, translation."""

from __future__ import annotations

import hashlib
from typing import Optional

import numpy as np
import torch

from .bindings import ModelBinding
from .tdmp import char_spans_to_byte_spans, write_dump

NO_CROSS_ATTENTION = "no cross-attention"


def _encode(binding: ModelBinding, text: str, with_offsets: bool = False):
    tokenizer = binding.tokenizer
    if not text.strip():
        text = tokenizer.unk_token or "?"
    kwargs = dict(return_tensors="pt", add_special_tokens=False)
    if with_offsets:
        kwargs["return_offsets_mapping"] = True
    enc = tokenizer(text, **kwargs)
    return {k: (v.to(binding.device) if hasattr(v, "to") else v) for k, v in enc.items()}


@torch.no_grad()
def generate_response(
    binding: ModelBinding,
    prompt: str,
    temperature: float = 0.0,
    max_new_tokens: int = 128,
    seed: Optional[int] = None,
    want_logprobs: bool = False,
    want_attentions: bool = False,
    dump_dir=None,
) -> dict:
    """Run one generation and assemble the wire response dict."""
    enc = _encode(binding, prompt, with_offsets=want_attentions)
    input_ids = enc["input_ids"]
    gen_kwargs = dict(
        input_ids=input_ids,
        max_new_tokens=max_new_tokens,
        num_beams=1,
        pad_token_id=binding.tokenizer.pad_token_id,
    )
    if want_logprobs and max_new_tokens >= 1:
        gen_kwargs["min_new_tokens"] = 1
    if temperature > 0:
        torch.manual_seed(seed if seed is not None else 0)
        gen_kwargs.update(do_sample=True, temperature=temperature, top_k=0)
    else:
        gen_kwargs["do_sample"] = False

    sequences = binding.model.generate(**gen_kwargs)
    if binding.is_encoder_decoder:
        new_ids = sequences[0][1:]  # drop decoder_start
    else:
        new_ids = sequences[0][input_ids.shape[1] :]
    text = binding.tokenizer.decode(new_ids, skip_special_tokens=True)

    logprobs = None
    cross = None
    need_forward = want_logprobs or (want_attentions and binding.is_encoder_decoder)
    if need_forward and len(new_ids) > 0:
        logprobs, cross = _teacher_forced(binding, input_ids, sequences[0], want_attentions)

    response: dict = {
        "text": text,
        "token_logprobs": logprobs if want_logprobs else None,
        "attention_dump_ref": None,
    }
    if want_attentions:
        if not binding.is_encoder_decoder:
            response["attention_unavailable_reason"] = NO_CROSS_ATTENTION
        elif cross is not None and dump_dir is not None:
            spans = char_spans_to_byte_spans(
                prompt, [tuple(span) for span in enc["offset_mapping"][0].tolist()]
            )
            digest = hashlib.sha256(
                f"{prompt}\x1f{seed}\x1f{temperature}".encode("utf-8")
            ).hexdigest()[:16]
            response["attention_dump_ref"] = write_dump(
                "attention", cross, spans, f"{dump_dir}/attn_{digest}.tdmp"
            )
    return response


def _teacher_forced(binding: ModelBinding, input_ids, full_sequence, want_attentions: bool):
    """Score the generated tokens under the model; optionally grab cross-attentions."""
    if binding.is_encoder_decoder:
        decoder_input = full_sequence[:-1].unsqueeze(0)
        targets = full_sequence[1:]
        out = binding.model(
            input_ids=input_ids,
            decoder_input_ids=decoder_input,
            output_attentions=want_attentions,
        )
        logits = out.logits[0]
    else:
        seq = full_sequence.unsqueeze(0)
        out = binding.model(input_ids=seq, output_attentions=want_attentions)
        n_input = input_ids.shape[1]
        logits = out.logits[0][n_input - 1 : -1]
        targets = full_sequence[n_input:]

    logprob_rows = torch.log_softmax(logits.float(), dim=-1)
    chosen = logprob_rows[torch.arange(len(targets)), targets]
    logprobs = [float(v) for v in chosen.tolist()]

    cross = None
    if want_attentions and binding.is_encoder_decoder:
        # tuple over layers of [batch, heads, out_len, in_len]
        stacked = torch.stack([layer[0] for layer in out.cross_attentions], dim=0)
        cross = stacked.float().cpu().numpy()
        row_sums = cross.sum(axis=-1, keepdims=True)
        cross = np.where(row_sums > 0, cross / np.where(row_sums > 0, row_sums, 1.0),
                         1.0 / cross.shape[-1])
    return logprobs, cross


_NLI_LABEL_ALIASES = {
    "entailment": "p_entail",
    "entail": "p_entail",
    "contradiction": "p_contradict",
    "contradict": "p_contradict",
    "neutral": "p_neutral",
}


@torch.no_grad()
def nli_probs(binding: ModelBinding, premise: str, hypothesis: str, max_length: int = 256) -> dict:
    """Three-way entailment probabilities; premise truncates head-first on overflow."""
    enc = binding.tokenizer(
        premise or "?",
        hypothesis or "?",
        return_tensors="pt",
        truncation="only_first",
        max_length=max_length,
        add_special_tokens=False,
    )
    enc = {k: v.to(binding.device) for k, v in enc.items()}
    probs = torch.softmax(binding.model(**enc).logits[0].float(), dim=-1).tolist()
    id2label = getattr(binding.model.config, "id2label", {}) or {}
    out = {}
    for idx, prob in enumerate(probs[:3]):
        label = str(id2label.get(idx, "")).lower()
        out[_NLI_LABEL_ALIASES.get(label, ("p_entail", "p_contradict", "p_neutral")[idx])] = prob
    total = sum(out.values())
    return {k: v / total for k, v in out.items()}


@torch.no_grad()
def embed_texts(binding: ModelBinding, texts) -> list[list[list[float]]]:
    """Per-text token embedding matrices from the encoder's last hidden state."""
    matrices = []
    for text in texts:
        enc = binding.tokenizer(text, return_tensors="pt", add_special_tokens=False)
        if enc["input_ids"].shape[1] == 0:
            matrices.append([])
            continue
        enc = {k: v.to(binding.device) for k, v in enc.items()}
        hidden = binding.model(**enc).last_hidden_state[0]
        matrices.append([[float(v) for v in row] for row in hidden.float().tolist()])
    return matrices


@torch.no_grad()
def translate_text(binding: ModelBinding, text: str, max_new_tokens: int = 128) -> str:
    enc = _encode(binding, text)
    sequences = binding.model.generate(
        input_ids=enc["input_ids"],
        max_new_tokens=max_new_tokens,
        num_beams=1,
        do_sample=False,
        pad_token_id=binding.tokenizer.pad_token_id,
    )
    new_ids = sequences[0][1:] if binding.is_encoder_decoder else sequences[0][enc["input_ids"].shape[1]:]
    return binding.tokenizer.decode(new_ids, skip_special_tokens=True)
