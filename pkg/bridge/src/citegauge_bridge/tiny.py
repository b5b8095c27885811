"""Deterministic tiny models for tests and demos.

No hub access needed: models are randomly initialized from small configs
under a fixed torch seed, and the tokenizer is a word-level tokenizer built
programmatically. Useful for protocol conformance and shape testing, not
for output quality.
"""

from __future__ import annotations

import torch
from tokenizers import Tokenizer
from tokenizers.models import WordLevel
from tokenizers.pre_tokenizers import Whitespace
from transformers import (
    BertConfig,
    BertForSequenceClassification,
    BertModel,
    GPT2Config,
    GPT2LMHeadModel,
    PreTrainedTokenizerFast,
    T5Config,
    T5ForConditionalGeneration,
)

from .bindings import BindingSet, ModelBinding

_WORDS = (
    "query knowledge respond using the above with citations etc according to "
    "tower opened in it is was a an and of for stands city landmark built "
    "repeatable yes no made iron paris fact alpha beta claim text hello "
    "0 1 2 3 4 5 6 7 8 9 1889 one two three when who what did"
).split()
_PUNCT = list("[]():,.?!-")


def build_tiny_tokenizer() -> PreTrainedTokenizerFast:
    vocab = {"<pad>": 0, "</s>": 1, "<unk>": 2}
    for token in _WORDS + _PUNCT:
        vocab.setdefault(token, len(vocab))
    tok = Tokenizer(WordLevel(vocab, unk_token="<unk>"))
    tok.pre_tokenizer = Whitespace()
    return PreTrainedTokenizerFast(
        tokenizer_object=tok, pad_token="<pad>", eos_token="</s>", unk_token="<unk>"
    )


def _tiny_t5(vocab_size: int, seed: int) -> T5ForConditionalGeneration:
    torch.manual_seed(seed)
    config = T5Config(
        vocab_size=vocab_size,
        d_model=32,
        d_kv=8,
        d_ff=64,
        num_layers=2,
        num_heads=2,
        num_decoder_layers=2,
        decoder_start_token_id=0,
        pad_token_id=0,
        eos_token_id=1,
    )
    return T5ForConditionalGeneration(config)


def _tiny_gpt2(vocab_size: int, seed: int) -> GPT2LMHeadModel:
    torch.manual_seed(seed)
    config = GPT2Config(
        vocab_size=vocab_size,
        n_embd=32,
        n_layer=2,
        n_head=2,
        n_positions=512,
        bos_token_id=1,
        eos_token_id=1,
        pad_token_id=0,
    )
    return GPT2LMHeadModel(config)


def _tiny_bert(vocab_size: int, seed: int, num_labels: int = 0):
    torch.manual_seed(seed)
    config = BertConfig(
        vocab_size=vocab_size,
        hidden_size=32,
        num_hidden_layers=2,
        num_attention_heads=2,
        intermediate_size=64,
        max_position_embeddings=512,
        pad_token_id=0,
    )
    if num_labels:
        config.num_labels = num_labels
        return BertForSequenceClassification(config)
    return BertModel(config)


def build_tiny_bindings(seed: int = 0, decoder_only_generator: bool = False) -> BindingSet:
    """All five roles backed by tiny random models sharing one tokenizer."""
    tokenizer = build_tiny_tokenizer()
    v = tokenizer.vocab_size
    if decoder_only_generator:
        generator = ModelBinding(
            role="generator", model_id="tiny-gpt2", model=_tiny_gpt2(v, seed), tokenizer=tokenizer
        )
    else:
        generator = ModelBinding(
            role="generator", model_id="tiny-t5", model=_tiny_t5(v, seed), tokenizer=tokenizer
        )
    return BindingSet(
        [
            generator,
            ModelBinding(
                role="reference", model_id="tiny-t5-ref", model=_tiny_t5(v, seed + 1),
                tokenizer=tokenizer,
            ),
            ModelBinding(
                role="nli", model_id="tiny-bert-nli",
                model=_tiny_bert(v, seed + 2, num_labels=3), tokenizer=tokenizer,
            ),
            ModelBinding(
                role="embedder", model_id="tiny-bert",
                model=_tiny_bert(v, seed + 3), tokenizer=tokenizer,
            ),
            ModelBinding(
                role="translator", model_id="tiny-t5-mt",
                model=_tiny_t5(v, seed + 4), tokenizer=tokenizer,
            ),
        ]
    )
