import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vulnsum import summarize, textkit
from vulnsum.corpusbuild import token_count
from vulnsum.summarize import (
    BackendError,
    BackendProtocolError,
    BatchResult,
    DecodeParams,
    SummarizeError,
    SummaryBackend,
    SummaryResult,
    batch_summarize,
    lead_k,
    remote_summarize,
)
from test_corpusbuild import sample


class TestDecodeParams:
    def test_defaults_match_decoding_contract(self):
        params = DecodeParams()
        assert params.max_input_tokens == 500
        assert params.max_summary_tokens == 250
        assert params.num_beams == 2
        assert params.length_penalty == 8.0
        assert params.repetition_penalty == 2.0

    def test_validation(self):
        with pytest.raises(ValueError):
            DecodeParams(num_beams=0)
        with pytest.raises(ValueError):
            DecodeParams(length_penalty=0)
        with pytest.raises(ValueError):
            DecodeParams(max_input_tokens=0)

    def test_json_round_trip(self):
        params = DecodeParams(max_input_tokens=1000, num_beams=5)
        assert DecodeParams.from_json(params.to_json()) == params


FIVE_SENTENCES = (
    "First sentence here. Second one follows! Third asks a question? "
    "Fourth keeps going. Fifth closes the text."
)


class TestLeadK:
    def test_first_two_sentences_verbatim(self):
        out = lead_k(FIVE_SENTENCES, k_sentences=2, max_tokens=250)
        assert out == "First sentence here. Second one follows!"

    def test_k_at_least_sentence_count_returns_whole_text(self):
        assert lead_k(FIVE_SENTENCES, k_sentences=9, max_tokens=250) == FIVE_SENTENCES

    def test_long_single_sentence_token_capped(self):
        text = " ".join(f"w{i}" for i in range(400))
        out = lead_k(text, k_sentences=2, max_tokens=250)
        assert token_count(out) == 250
        assert text.startswith(out)

    def test_empty_text(self):
        assert lead_k("", 3, 250) == ""

    def test_invalid_k(self):
        with pytest.raises(ValueError):
            lead_k("text", 0, 10)

    @given(st.text(max_size=400), st.integers(1, 5), st.integers(1, 50))
    @settings(max_examples=200)
    def test_always_a_prefix(self, text, k, cap):
        out = lead_k(text, k, cap)
        assert text.startswith(out)
        assert token_count(out) <= cap


class TestRemoteSummarize:
    params = DecodeParams()

    def test_fixture_readback(self, http_stub):
        http_stub.routes["/summarize"] = lambda body: (
            200,
            {"summary": "recorded summary text", "model_id": "stub-model"},
        )
        backend = SummaryBackend(http_stub.url, retries=1)
        result = remote_summarize("some input", self.params, backend, "CVE-2021-1")
        assert result.summary == "recorded summary text"
        assert result.backend_id == "stub-model"
        assert result.cve_id == "CVE-2021-1"

    def test_request_carries_exactly_the_decoding_fields(self, http_stub):
        http_stub.routes["/summarize"] = lambda body: (
            200,
            {"summary": "ok", "model_id": "stub"},
        )
        backend = SummaryBackend(http_stub.url, retries=1)
        remote_summarize("payload text", self.params, backend)
        _, body = http_stub.requests[0]
        assert body == {
            "text": "payload text",
            "max_input_tokens": 500,
            "max_summary_tokens": 250,
            "num_beams": 2,
            "length_penalty": 8.0,
            "repetition_penalty": 2.0,
        }

    def test_empty_input_rejected_before_any_call(self, http_stub):
        backend = SummaryBackend(http_stub.url, retries=1)
        with pytest.raises(SummarizeError):
            remote_summarize("   ", self.params, backend)
        assert http_stub.requests == []

    def test_overlong_backend_summary_truncated_client_side(self, http_stub):
        long_summary = " ".join(f"s{i}" for i in range(300))
        http_stub.routes["/summarize"] = lambda body: (
            200,
            {"summary": long_summary, "model_id": "stub"},
        )
        backend = SummaryBackend(http_stub.url, retries=1)
        result = remote_summarize("input", self.params, backend)
        assert token_count(result.summary) == 250

    def test_missing_field_is_protocol_error(self, http_stub):
        http_stub.routes["/summarize"] = lambda body: (200, {"summary": "x"})
        backend = SummaryBackend(http_stub.url, retries=1)
        with pytest.raises(BackendProtocolError):
            remote_summarize("input", self.params, backend)

    def test_server_error_after_retries(self, http_stub):
        http_stub.routes["/summarize"] = lambda body: (503, {"error": "loading"})
        backend = SummaryBackend(http_stub.url, retries=2, retry_backoff=0.01)
        with pytest.raises(BackendError):
            remote_summarize("input", self.params, backend)
        assert len(http_stub.requests) == 2

    def test_client_error_not_retried(self, http_stub):
        http_stub.routes["/summarize"] = lambda body: (400, {"error": "bad"})
        backend = SummaryBackend(http_stub.url, retries=3, retry_backoff=0.01)
        with pytest.raises(BackendError):
            remote_summarize("input", self.params, backend)
        assert len(http_stub.requests) == 1


class TestBatchSummarize:
    params = DecodeParams()

    def _samples(self, n=10):
        return [
            sample(
                cve_id=f"CVE-2021-{i:05d}",
                input_text=f"Sample number {i} first sentence. Second sentence "
                f"with more words. Third one. Fourth tail.",
                target=f"target {i}",
            )
            for i in range(n)
        ]

    def test_baseline_deterministic(self):
        samples = self._samples()
        first = batch_summarize(samples, "baseline", self.params)
        second = batch_summarize(samples, "baseline", self.params)
        assert first == second
        assert len(first.results) == 10
        assert first.failures == ()
        assert [r.cve_id for r in first.results] == [s.cve_id for s in samples]
        assert all(r.backend_id == "baseline:lead3" for r in first.results)

    def test_baseline_takes_lead_sentences(self):
        [result] = batch_summarize(self._samples(1), "baseline", self.params).results
        assert result.summary == (
            "Sample number 0 first sentence. Second sentence with more "
            "words. Third one."
        )

    def test_empty_split(self):
        assert batch_summarize([], "baseline", self.params) == BatchResult(())

    def test_remote_records_failures_and_continues(self, http_stub):
        def flaky(body):
            if "number 3" in body["text"]:
                return 400, {"error": "injected"}
            return 200, {"summary": "fine", "model_id": "stub"}

        http_stub.routes["/summarize"] = flaky
        backend = SummaryBackend(http_stub.url, retries=1)
        batch = batch_summarize(self._samples(10), "remote", self.params, backend)
        assert len(batch.results) == 9
        assert len(batch.failures) == 1
        assert batch.failures[0].cve_id == "CVE-2021-00003"

    def test_unknown_engine(self):
        with pytest.raises(ValueError):
            batch_summarize([], "magic", self.params)

    def test_remote_needs_backend(self):
        with pytest.raises(ValueError):
            batch_summarize([], "remote", self.params)

    def test_no_result_exceeds_summary_cap(self):
        long_first_sentence = " ".join(f"w{i}" for i in range(400))
        samples = [sample(cve_id="CVE-2021-1", input_text=long_first_sentence)]
        params = DecodeParams(max_summary_tokens=100)
        [result] = batch_summarize(samples, "baseline", params).results
        assert token_count(result.summary) <= 100


class TestPersistence:
    def test_round_trip(self, tmp_path):
        results = [
            SummaryResult("CVE-2021-1", "summary one", "baseline:lead3", DecodeParams()),
            SummaryResult("CVE-2021-2", "summary two", "stub", DecodeParams(num_beams=5)),
        ]
        path = tmp_path / "results.jsonl"
        summarize.write_results(results, path)
        assert summarize.read_results(path) == results

    def test_malformed_line_names_line(self, tmp_path):
        path = tmp_path / "results.jsonl"
        path.write_text("not json\n", encoding="utf-8")
        with pytest.raises(SummarizeError, match=":1"):
            summarize.read_results(path)
