import math

import numpy as np
import pytest

from citegauge.corpus import build_prompt, render_prompt
from citegauge.errors import (
    FormatError,
    IndexOutOfRange,
    NoCitations,
    NonStochastic,
    ShapeMismatch,
)
from citegauge.mocks import AlwaysCiteGenerator, ClaimCitingGenerator, ScriptedGenerator
from citegauge.xai import (
    AttentionDump,
    GroundingResult,
    SaliencyDump,
    attention_alignment,
    cited_token_indices,
    occlusion_grounding,
    passage_byte_spans,
    read_tensor_dump,
    saliency_summary,
    write_tensor_dump,
)
from test_corpus import make_example


def spans_for(n):
    return tuple((4 * i, 4 * i + 3) for i in range(n))


def make_attention(weights):
    weights = np.asarray(weights, dtype=np.float32)
    return AttentionDump(weights=weights, input_token_spans=spans_for(weights.shape[3]))


class TestAttentionAlignment:
    def test_hand_case(self):
        dump = make_attention([[[[0.1, 0.2, 0.3, 0.4], [0.25, 0.25, 0.25, 0.25]]]])
        assert attention_alignment(dump, {2, 3}) == pytest.approx(0.30)

    def test_uniform_gives_one_over_n(self):
        n = 8
        dump = make_attention(np.full((2, 3, 4, n), 1.0 / n))
        for cited in ({0}, {1, 5}, set(range(n))):
            assert attention_alignment(dump, cited) == pytest.approx(1.0 / n)

    def test_empty_cited_zero(self):
        dump = make_attention(np.full((1, 1, 2, 4), 0.25))
        assert attention_alignment(dump, set()) == 0.0

    def test_out_of_range(self):
        dump = make_attention(np.full((1, 1, 2, 4), 0.25))
        with pytest.raises(IndexOutOfRange):
            attention_alignment(dump, {4})

    def test_non_stochastic_rejected(self):
        weights = np.full((1, 1, 2, 4), 0.25)
        weights[0, 0, 1] = [0.5, 0.5, 0.1, 0.1]  # sums to 1.2
        dump = make_attention(weights)
        with pytest.raises(NonStochastic) as err:
            attention_alignment(dump, {0})
        assert err.value.out == 1

    def test_permutation_invariance(self):
        rng = np.random.default_rng(5)
        raw = rng.random((3, 2, 4, 6)) + 0.01
        weights = raw / raw.sum(axis=3, keepdims=True)
        dump = make_attention(weights)
        cited = {1, 4}
        base = attention_alignment(dump, cited)
        perm = weights[[2, 0, 1]][:, [1, 0]]
        assert attention_alignment(make_attention(perm), cited) == pytest.approx(base, abs=1e-9)

    def test_head_mean_linearity(self):
        rng = np.random.default_rng(6)
        raw = rng.random((2, 4, 3, 5)) + 0.01
        weights = raw / raw.sum(axis=3, keepdims=True)
        cited = {0, 3}
        per_head = [
            attention_alignment(make_attention(weights[:, h : h + 1]), cited)
            for h in range(4)
        ]
        head_mean = weights.mean(axis=1, keepdims=True)
        merged = attention_alignment(make_attention(head_mean), cited)
        assert merged == pytest.approx(sum(per_head) / 4, abs=1e-6)


class TestSaliencySummary:
    def test_uniform(self):
        dump = SaliencyDump(scores=np.full(4, 2.5), token_spans=spans_for(4))
        summary = saliency_summary(dump, top_k=5)
        assert summary.defined
        assert summary.entropy == pytest.approx(math.log(4), abs=1e-9)
        assert summary.concentration == pytest.approx(1.0)

    def test_one_hot(self):
        scores = np.zeros(10)
        scores[3] = 7.0
        summary = saliency_summary(SaliencyDump(scores=scores, token_spans=spans_for(10)))
        assert summary.entropy == pytest.approx(0.0)
        assert summary.concentration == pytest.approx(1.0)

    def test_top5_mass_hand_case(self):
        scores = np.zeros(20)
        scores[:4] = [4, 3, 2, 1]
        summary = saliency_summary(SaliencyDump(scores=scores, token_spans=spans_for(20)))
        p = [0.4, 0.3, 0.2, 0.1]
        assert summary.concentration == pytest.approx(1.0)
        assert summary.entropy == pytest.approx(-sum(v * math.log(v) for v in p), abs=1e-12)

    def test_all_zero_undefined(self):
        summary = saliency_summary(SaliencyDump(scores=np.zeros(5), token_spans=spans_for(5)))
        assert not summary.defined
        assert math.isnan(summary.entropy)

    def test_nan_scores_undefined(self):
        scores = np.array([1.0, float("nan"), 2.0])
        summary = saliency_summary(SaliencyDump(scores=scores, token_spans=spans_for(3)))
        assert not summary.defined

    def test_marked_undefined_propagates(self):
        dump = SaliencyDump(scores=np.ones(3), token_spans=spans_for(3), undefined=True)
        assert not saliency_summary(dump).defined

    def test_entropy_maximal_iff_uniform(self):
        uniform = saliency_summary(SaliencyDump(scores=np.ones(6), token_spans=spans_for(6)))
        skewed = saliency_summary(
            SaliencyDump(scores=np.array([5.0, 1, 1, 1, 1, 1]), token_spans=spans_for(6))
        )
        assert uniform.entropy == pytest.approx(math.log(6), abs=1e-12)
        assert skewed.entropy < uniform.entropy

    def test_concentration_majorization(self):
        # moving mass from the tail into the top token cannot lower top-k mass
        a = saliency_summary(
            SaliencyDump(scores=np.array([4.0, 1, 1, 1, 1, 1, 1]), token_spans=spans_for(7)),
            top_k=2,
        )
        b = saliency_summary(
            SaliencyDump(scores=np.array([5.0, 1, 1, 1, 1, 1, 0]), token_spans=spans_for(7)),
            top_k=2,
        )
        assert b.concentration >= a.concentration


class TestOcclusion:
    def _example(self):
        return make_example(
            id="occ",
            knowledge=("The tower opened in 1889.", "It stands in Paris.", "It is iron."),
            reference="Per [1], opened 1889. Per [2], in Paris. Made of iron [3].",
        )

    def test_grounded_single_citer(self):
        ex = make_example(
            id="g1",
            knowledge=("The tower opened in 1889.", "It stands in Paris."),
            reference="Opened in 1889 [1].",
        )
        gen = ClaimCitingGenerator({"opened in 1889": "it opened in 1889"})
        result = occlusion_grounding(ex, gen)
        assert result.total_citations == 1
        assert result.score == 1.0

    def test_multi_citer_under_conservative_renumbering(self):
        # after removing passage 1, the regenerated "[1]" now names old passage 2;
        # the conservative rule treats the surviving index as not-disappeared,
        # so only the last passage's citation is credited
        ex = self._example()
        gen = ClaimCitingGenerator(
            {"1889": "opened in 1889", "Paris": "it is in Paris", "iron": "made of iron"}
        )
        result = occlusion_grounding(ex, gen)
        assert result.total_citations == 3
        assert result.disappeared == 1

    def test_always_cite_is_ungrounded(self):
        ex = self._example()
        result = occlusion_grounding(ex, AlwaysCiteGenerator(text="See [1], clearly."))
        assert result.score == 0.0

    def test_prompt_blind_generator_scores_zero(self):
        # emits markers but ignores knowledge entirely
        ex = self._example()
        result = occlusion_grounding(ex, AlwaysCiteGenerator(text="All of [1] and [2], [3]."))
        assert result.score == 0.0

    def test_two_of_three_scripted(self):
        ex = self._example()
        baseline_prompt = build_prompt(ex)
        prompts = {
            baseline_prompt: "Uses [1], [2] and [3].",
            self._occluded(ex, 1): "Citing [2] only.",
            self._occluded(ex, 2): "Citing [1] only.",
            self._occluded(ex, 3): "Still citing [3].",
        }
        gen = ScriptedGenerator(prompts)
        result = occlusion_grounding(ex, gen)
        assert result.total_citations == 3
        assert result.disappeared == 2
        assert result.score == pytest.approx(2 / 3, abs=1e-12)

    @staticmethod
    def _occluded(ex, index):
        return render_prompt(ex.query, ex.knowledge.without(index).texts())

    def test_no_citations_error(self):
        ex = self._example()
        gen = ScriptedGenerator({}, default="No markers at all.")
        with pytest.raises(NoCitations):
            occlusion_grounding(ex, gen)

    def test_fabricated_only_baseline_is_no_citations(self):
        ex = self._example()
        gen = ScriptedGenerator({}, default="Cites [9] outside range.")
        with pytest.raises(NoCitations):
            occlusion_grounding(ex, gen)

    def test_grounding_result_invariants(self):
        with pytest.raises(ValueError):
            GroundingResult(total_citations=1, disappeared=2)
        assert GroundingResult(total_citations=0, disappeared=0).score == 0.0


class TestPassageSpans:
    def test_spans_locate_passages(self):
        ex = make_example()
        prompt = build_prompt(ex)
        spans = passage_byte_spans(prompt)
        data = prompt.encode("utf-8")
        assert data[slice(*spans[1])] == "Completed 1889.".encode("utf-8")
        assert data[slice(*spans[2])] == "Designed by Gustave Eiffel.".encode("utf-8")

    def test_cited_token_indices_overlap(self):
        ex = make_example()
        prompt = build_prompt(ex)
        spans = passage_byte_spans(prompt)
        token_spans = (
            (0, 5),
            spans[1],
            (spans[2][0], spans[2][0] + 4),
        )
        cited = cited_token_indices(prompt, [1], token_spans)
        assert cited == {1}
        cited_both = cited_token_indices(prompt, [1, 2], token_spans)
        assert cited_both == {1, 2}


class TestTensorDumpIO:
    def test_attention_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        raw = rng.random((2, 2, 3, 5)) + 0.01
        weights = (raw / raw.sum(axis=3, keepdims=True)).astype(np.float32)
        dump = AttentionDump(weights=weights, input_token_spans=spans_for(5))
        path = write_tensor_dump(dump, tmp_path / "a.tdmp")
        loaded = read_tensor_dump(path)
        assert isinstance(loaded, AttentionDump)
        np.testing.assert_array_equal(loaded.weights, weights)
        assert loaded.input_token_spans == dump.input_token_spans

    def test_saliency_roundtrip(self, tmp_path):
        dump = SaliencyDump(scores=np.array([1.0, 2.0, 3.0], dtype=np.float32),
                            token_spans=spans_for(3))
        loaded = read_tensor_dump(write_tensor_dump(dump, tmp_path / "s.tdmp"))
        assert isinstance(loaded, SaliencyDump)
        np.testing.assert_array_equal(loaded.scores, dump.scores)
        assert not loaded.undefined

    def test_undefined_saliency_roundtrip(self, tmp_path):
        dump = SaliencyDump(
            scores=np.array([float("nan")] * 3, dtype=np.float32),
            token_spans=spans_for(3),
            undefined=True,
        )
        loaded = read_tensor_dump(write_tensor_dump(dump, tmp_path / "u.tdmp"))
        assert loaded.undefined

    def test_header_payload_mismatch(self, tmp_path):
        rng = np.random.default_rng(4)
        raw = rng.random((2, 1, 2, 3)) + 0.01
        weights = (raw / raw.sum(axis=3, keepdims=True)).astype(np.float32)
        dump = AttentionDump(weights=weights, input_token_spans=spans_for(3))
        path = write_tensor_dump(dump, tmp_path / "short.tdmp")
        data = open(path, "rb").read()
        header, _, payload = data.partition(b"\n")
        truncated = header.replace(b'"dims": [2, 1, 2, 3]', b'"dims": [4, 1, 2, 3]')
        bad = tmp_path / "bad.tdmp"
        bad.write_bytes(truncated + b"\n" + payload)
        with pytest.raises(ShapeMismatch):
            read_tensor_dump(bad)

    def test_non_stochastic_rejected_on_read(self, tmp_path):
        weights = np.full((1, 1, 1, 4), 0.3, dtype=np.float32)  # rows sum to 1.2
        dump = AttentionDump(weights=weights, input_token_spans=spans_for(4))
        path = write_tensor_dump(dump, tmp_path / "ns.tdmp")
        with pytest.raises(NonStochastic):
            read_tensor_dump(path)

    def test_bad_header_json(self, tmp_path):
        path = tmp_path / "junk.tdmp"
        path.write_bytes(b"not json at all\n\x00\x00\x00\x00")
        with pytest.raises(FormatError):
            read_tensor_dump(path)

    def test_unknown_kind(self, tmp_path):
        path = tmp_path / "k.tdmp"
        path.write_bytes(b'{"kind": "mystery", "dims": [1]}\n\x00\x00\x00\x00')
        with pytest.raises(FormatError):
            read_tensor_dump(path)
