import numpy as np

from conftest import read_tdmp

PROMPT = (
    "Query: who built the tower?\n"
    "Knowledge:\n[1] the tower opened in 1889.\n[2] it stands in paris.\n"
    "Respond using the knowledge above with citations [1], [2], etc."
)


def gen(client, **overrides):
    payload = {
        "prompt": PROMPT,
        "temperature": 0.0,
        "max_new_tokens": 8,
        "seed": 3,
        "want_logprobs": False,
        "want_attentions": False,
    }
    payload.update(overrides)
    resp = client.post("/generate", json=payload)
    assert resp.status_code == 200, resp.text
    return resp.json()


class TestLogprobs:
    def test_present_and_nonpositive(self, client):
        out = gen(client, want_logprobs=True)
        assert isinstance(out["token_logprobs"], list)
        assert len(out["token_logprobs"]) >= 1
        assert all(lp <= 0 for lp in out["token_logprobs"])

    def test_absent_when_not_requested(self, client):
        assert gen(client)["token_logprobs"] is None

    def test_greedy_deterministic(self, client):
        assert gen(client, want_logprobs=True) == gen(client, want_logprobs=True)

    def test_sampling_repeatable_with_seed(self, client):
        a = gen(client, temperature=0.9, seed=11, want_logprobs=True)
        b = gen(client, temperature=0.9, seed=11, want_logprobs=True)
        assert a == b


class TestAttentions:
    def test_seq2seq_dump_row_stochastic(self, client):
        out = gen(client, want_attentions=True)
        ref = out["attention_dump_ref"]
        assert ref is not None and ref.endswith(".tdmp")
        header, weights = read_tdmp(ref)
        assert header["kind"] == "attention"
        assert weights.ndim == 4
        sums = weights.sum(axis=-1)
        assert np.all(np.abs(sums - 1.0) <= 1e-4), "rows must renormalize to 1"
        # one byte span per input token
        assert len(header["token_spans"]) == weights.shape[3]

    def test_spans_cover_prompt_bytes(self, client):
        out = gen(client, want_attentions=True)
        header, _ = read_tdmp(out["attention_dump_ref"])
        data = PROMPT.encode("utf-8")
        for start, end in header["token_spans"]:
            assert 0 <= start < end <= len(data)
            assert data[start:end].decode("utf-8").strip()

    def test_decoder_only_reports_absence(self, decoder_client):
        out = gen(decoder_client, want_attentions=True)
        assert out["attention_dump_ref"] is None
        assert out["attention_unavailable_reason"] == "no cross-attention"

    def test_no_dump_when_not_requested(self, client):
        assert gen(client)["attention_dump_ref"] is None


class TestOtherEndpoints:
    def test_nli_probabilities(self, client):
        resp = client.post(
            "/nli", json={"premise": "the tower opened in 1889.", "hypothesis": "it opened."}
        )
        body = resp.json()
        assert abs(body["p_entail"] + body["p_contradict"] + body["p_neutral"] - 1.0) <= 1e-6

    def test_nli_long_premise_truncates(self, client):
        long_premise = "the tower opened . " * 400
        resp = client.post("/nli", json={"premise": long_premise, "hypothesis": "it opened."})
        assert resp.status_code == 200

    def test_embed_shapes(self, client):
        resp = client.post("/embed", json={"texts": ["the tower", "", "paris"]})
        mats = resp.json()["embeddings"]
        assert len(mats) == 3
        assert mats[1] == []
        assert len(mats[0]) == 2 and len(mats[0][0]) == 32

    def test_translate_returns_string(self, client):
        resp = client.post(
            "/translate", json={"text": "hello tower", "source_lang": "en", "target_lang": "hi"}
        )
        assert isinstance(resp.json()["text"], str)
