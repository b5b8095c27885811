import numpy as np
import pytest

from citegauge.errors import LengthMismatch
from citegauge.textmetrics import TokenSequence, bleu, rouge1, rougeL, tokenize
from oracles import bleu_oracle, rouge1_oracle, rougeL_oracle


def seq(*tokens, language="en"):
    return TokenSequence(tokens=tuple(tokens), language=language)


class TestTokenize:
    def test_english_with_marker(self):
        assert tokenize("According to [1], yes.", "en").tokens == (
            "according", "to", "[1]", ",", "yes", ".",
        )

    def test_empty(self):
        assert tokenize("", "en").tokens == ()

    def test_hindi(self):
        assert tokenize("क्या हाल?", "hi").tokens == ("क्या", "हाल", "?")

    def test_danda_detaches(self):
        assert tokenize("ठीक है। अच्छा", "hi").tokens == ("ठीक", "है", "।", "अच्छा")

    def test_hindi_keeps_case_folding_off(self):
        assert tokenize("Delhi में", "hi").tokens == ("Delhi", "में")

    def test_marker_without_close_is_punct(self):
        assert tokenize("a [12 b", "en").tokens == ("a", "[", "12", "b")

    def test_deterministic(self):
        text = "Mixed [3] text, with नमस्ते!"
        assert tokenize(text, "en") == tokenize(text, "en")


class TestBleu:
    def test_identity_single_pair(self):
        cand = seq("the", "cat", "sat", "on", "the", "mat")
        assert bleu([cand], [cand]) == pytest.approx(1.0)

    def test_short_identity_still_one(self):
        cand = seq("hi", "there")
        assert bleu([cand], [cand]) == pytest.approx(1.0)

    def test_disjoint_zero(self):
        assert bleu([seq("a", "b")], [seq("c", "d")]) == 0.0

    def test_repeated_token_clipping(self):
        cand = seq("the", "the", "the", "cat")
        ref = seq("the", "cat", "sat")
        assert bleu([cand], [ref]) == pytest.approx(bleu_oracle([cand.tokens], [ref.tokens]))

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            bleu([seq("a")], [])

    def test_empty_candidates(self):
        assert bleu([seq()], [seq("a")]) == 0.0

    def test_brevity_penalty_applies(self):
        cand = seq("the", "cat")
        ref = seq("the", "cat", "sat", "on", "a", "mat")
        score = bleu([cand], [ref])
        assert 0 < score < 1

    def test_token_renaming_invariance(self):
        rng = np.random.default_rng(21)
        vocab = ["a", "b", "c", "d", "e"]
        renamed = {"a": "v", "b": "w", "c": "x", "d": "y", "e": "z"}
        for _ in range(50):
            cand = [vocab[i] for i in rng.integers(0, 5, size=rng.integers(1, 12))]
            ref = [vocab[i] for i in rng.integers(0, 5, size=rng.integers(1, 12))]
            orig = bleu([seq(*cand)], [seq(*ref)])
            mapped = bleu(
                [seq(*[renamed[t] for t in cand])], [seq(*[renamed[t] for t in ref])]
            )
            assert orig == pytest.approx(mapped, abs=1e-12)


class TestRouge:
    def test_identity(self):
        cand = seq("a", "b", "c")
        assert rouge1(cand, cand) == 1.0
        assert rougeL(cand, cand) == 1.0

    def test_hand_lcs_case(self):
        cand = seq("a", "b", "c")
        ref = seq("a", "c")
        assert rougeL(cand, ref) == pytest.approx(0.8)

    def test_disjoint(self):
        assert rouge1(seq("a"), seq("b")) == 0.0
        assert rougeL(seq("a"), seq("b")) == 0.0

    def test_empty_conventions(self):
        assert rouge1(seq(), seq()) == 1.0
        assert rougeL(seq(), seq()) == 1.0
        assert rouge1(seq("a"), seq()) == 0.0
        assert rougeL(seq(), seq("a")) == 0.0

    def test_recall_variant(self):
        cand = seq("a", "b", "c")
        ref = seq("a", "c")
        assert rouge1(cand, ref, variant="recall") == pytest.approx(1.0)
        assert rougeL(cand, ref, variant="recall") == pytest.approx(1.0)

    def test_single_token_rouge_l_equals_rouge_1(self):
        rng = np.random.default_rng(31)
        vocab = ["a", "b", "c"]
        for _ in range(50):
            cand = seq(vocab[int(rng.integers(3))])
            ref = seq(vocab[int(rng.integers(3))])
            assert rougeL(cand, ref) == rouge1(cand, ref)


def test_lexical_oracle_agreement_randomized():
    rng = np.random.default_rng(77)
    vocab = ["the", "cat", "sat", "mat", "[1]", "a", "नदी"]
    for _ in range(500):
        cand_toks = [vocab[i] for i in rng.integers(0, len(vocab), size=rng.integers(0, 15))]
        ref_toks = [vocab[i] for i in rng.integers(0, len(vocab), size=rng.integers(0, 15))]
        cand, ref = seq(*cand_toks), seq(*ref_toks)
        assert bleu([cand], [ref]) == pytest.approx(
            bleu_oracle([cand_toks], [ref_toks]), abs=1e-9
        )
        assert rouge1(cand, ref) == pytest.approx(rouge1_oracle(cand_toks, ref_toks), abs=1e-9)
        assert rougeL(cand, ref) == pytest.approx(rougeL_oracle(cand_toks, ref_toks), abs=1e-9)


def test_scores_in_unit_interval_fuzzed():
    rng = np.random.default_rng(123)
    vocab = ["x", "y", "z", "[2]", "।"]
    for _ in range(200):
        cand_toks = [vocab[i] for i in rng.integers(0, 5, size=rng.integers(0, 10))]
        ref_toks = [vocab[i] for i in rng.integers(0, 5, size=rng.integers(0, 10))]
        cand, ref = seq(*cand_toks), seq(*ref_toks)
        for value in (bleu([cand], [ref]), rouge1(cand, ref), rougeL(cand, ref)):
            assert 0.0 <= value <= 1.0


def test_bleu_corpus_aggregation_sums_counts():
    # corpus BLEU over two pairs differs from averaging sentence BLEUs
    pair_a = (seq("a", "b", "c", "d"), seq("a", "b", "c", "d"))
    pair_b = (seq("x", "x"), seq("y", "z"))
    corpus = bleu([pair_a[0], pair_b[0]], [pair_a[1], pair_b[1]])
    assert corpus == pytest.approx(
        bleu_oracle([pair_a[0].tokens, pair_b[0].tokens], [pair_a[1].tokens, pair_b[1].tokens]),
        abs=1e-12,
    )
