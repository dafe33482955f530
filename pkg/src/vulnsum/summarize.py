"""Summary generation: remote seq2seq backend or local extractive baseline.

Neural decoding happens behind the wire protocol; this module only carries
the decoding contract (beam count, penalties, caps) and re-checks the
summary-length cap in statistics space on the way back.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import requests

from . import textkit
from .corpusbuild import AugmentedSample, token_count, truncate_tokens

log = logging.getLogger(__name__)


class SummarizeError(Exception):
    """Base error for this module."""


class BackendError(SummarizeError):
    """The backend failed (non-200, timeout) after retries."""


class BackendProtocolError(SummarizeError):
    """The backend answered but violated the wire protocol."""


@dataclass(frozen=True)
class DecodeParams:
    max_input_tokens: int = 500
    max_summary_tokens: int = 250
    num_beams: int = 2
    length_penalty: float = 8.0
    repetition_penalty: float = 2.0

    def __post_init__(self):
        if self.max_input_tokens < 1 or self.max_summary_tokens < 1:
            raise ValueError("token limits must be positive")
        if self.num_beams < 1:
            raise ValueError("num_beams must be >= 1")
        if self.length_penalty <= 0 or self.repetition_penalty <= 0:
            raise ValueError("penalties must be positive")

    def to_json(self) -> dict:
        return {
            "max_input_tokens": self.max_input_tokens,
            "max_summary_tokens": self.max_summary_tokens,
            "num_beams": self.num_beams,
            "length_penalty": self.length_penalty,
            "repetition_penalty": self.repetition_penalty,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "DecodeParams":
        return cls(
            max_input_tokens=int(obj["max_input_tokens"]),
            max_summary_tokens=int(obj["max_summary_tokens"]),
            num_beams=int(obj["num_beams"]),
            length_penalty=float(obj["length_penalty"]),
            repetition_penalty=float(obj["repetition_penalty"]),
        )


@dataclass(frozen=True)
class SummaryResult:
    cve_id: str
    summary: str
    backend_id: str
    params: DecodeParams


@dataclass(frozen=True)
class SummaryFailure:
    cve_id: str
    error: str


@dataclass(frozen=True)
class BatchResult:
    results: tuple[SummaryResult, ...]
    failures: tuple[SummaryFailure, ...] = field(default_factory=tuple)


def lead_k(text: str, k_sentences: int = 3, max_tokens: int = 250) -> str:
    """Extractive baseline: the first ``k_sentences`` sentences, then the
    first ``max_tokens`` whitespace tokens.  Always a prefix of the input."""
    if k_sentences < 1:
        raise ValueError("k_sentences must be >= 1")
    spans = textkit.sentence_spans(text)
    if not spans:
        return ""
    end = spans[min(k_sentences, len(spans)) - 1][1]
    return truncate_tokens(text[:end], max_tokens)


class SummaryBackend:
    """Client for the POST /summarize wire protocol."""

    def __init__(
        self,
        base_url: str,
        timeout: float = 120.0,
        retries: int = 3,
        retry_backoff: float = 0.5,
        session: requests.Session | None = None,
    ):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.retry_backoff = retry_backoff
        self.session = session or requests.Session()

    def summarize(self, text: str, params: DecodeParams) -> tuple[str, str]:
        """(summary, model_id) from the backend; retries transient failures."""
        payload = {"text": text}
        payload.update(params.to_json())
        last: str = "unknown error"
        for attempt in range(self.retries):
            try:
                resp = self.session.post(
                    f"{self.base_url}/summarize", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last = str(exc)
                resp = None
            if resp is not None:
                if resp.status_code == 200:
                    body = resp.json()
                    if "summary" not in body or "model_id" not in body:
                        raise BackendProtocolError(
                            "/summarize response missing summary or model_id"
                        )
                    return str(body["summary"]), str(body["model_id"])
                last = f"HTTP {resp.status_code}"
                if 400 <= resp.status_code < 500:
                    break  # bad request will not heal on retry
            if attempt + 1 < self.retries:
                time.sleep(self.retry_backoff * 2**attempt)
        raise BackendError(f"/summarize failed after retries: {last}")


def remote_summarize(
    text: str,
    params: DecodeParams,
    backend: SummaryBackend,
    cve_id: str = "",
) -> SummaryResult:
    """Summarize ``text`` through the backend, re-enforcing the summary cap.

    Empty input is rejected client-side before any network call.
    """
    if not text.strip():
        raise SummarizeError("refusing to summarize empty input")
    summary, model_id = backend.summarize(text, params)
    if token_count(summary) > params.max_summary_tokens:
        log.warning(
            "backend %s exceeded the summary cap; truncating client-side",
            model_id,
        )
        summary = truncate_tokens(summary, params.max_summary_tokens)
    return SummaryResult(
        cve_id=cve_id, summary=summary, backend_id=model_id, params=params
    )


def batch_summarize(
    samples: list[AugmentedSample],
    engine: str,
    params: DecodeParams,
    backend: SummaryBackend | None = None,
    k_sentences: int = 3,
) -> BatchResult:
    """Summarize every sample, in input order.

    The baseline engine is pure and deterministic.  With the remote engine,
    a per-sample failure is recorded and the run continues.
    """
    if engine not in ("baseline", "remote"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "remote" and backend is None:
        raise ValueError("remote engine requires a backend")
    results: list[SummaryResult] = []
    failures: list[SummaryFailure] = []
    for sample in samples:
        if engine == "baseline":
            summary = lead_k(
                sample.input_text, k_sentences, params.max_summary_tokens
            )
            results.append(
                SummaryResult(
                    cve_id=sample.cve_id,
                    summary=summary,
                    backend_id=f"baseline:lead{k_sentences}",
                    params=params,
                )
            )
            continue
        try:
            results.append(
                remote_summarize(sample.input_text, params, backend, sample.cve_id)
            )
        except SummarizeError as exc:
            log.warning("%s: summarization failed: %s", sample.cve_id, exc)
            failures.append(SummaryFailure(sample.cve_id, str(exc)))
    return BatchResult(results=tuple(results), failures=tuple(failures))


# ---------------------------------------------------------------------------
# Persistence

def result_to_json(result: SummaryResult) -> dict:
    return {
        "cve_id": result.cve_id,
        "summary": result.summary,
        "backend_id": result.backend_id,
        "params": result.params.to_json(),
    }


def result_from_json(obj: dict) -> SummaryResult:
    try:
        return SummaryResult(
            cve_id=obj["cve_id"],
            summary=obj["summary"],
            backend_id=obj["backend_id"],
            params=DecodeParams.from_json(obj["params"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SummarizeError(f"bad summary-result field: {exc}") from exc


def write_results(results, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for result in results:
            fh.write(json.dumps(result_to_json(result), sort_keys=True))
            fh.write("\n")


def read_results(path: str | Path) -> list[SummaryResult]:
    results = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                results.append(result_from_json(json.loads(line)))
            except (json.JSONDecodeError, SummarizeError) as exc:
                raise SummarizeError(f"{path}:{lineno}: {exc}") from exc
    return results
