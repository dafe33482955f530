"""Embedding providers, cosine similarity, and the paragraph acceptance gate.

A paragraph joins the augmented description only if its similarity to the
official description clears per-encoder bands, and, in dual mode, the two
encoders agree.  Gate functions are pure; providers do the I/O.
"""

from __future__ import annotations

import hashlib
import math
from collections import Counter
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import requests

from . import textkit


class SemgateError(Exception):
    """Base error for this module."""


class ZeroVectorError(SemgateError):
    """Cosine similarity is undefined for an all-zero vector."""


class ProviderMismatchError(SemgateError):
    """Vectors from different providers or dimensions cannot be compared."""


class ScoreRangeError(SemgateError):
    """A similarity score outside [-1, 1] reached the gate."""


class EmbeddingError(SemgateError):
    """The embedding provider failed or violated its contract."""


@dataclass(frozen=True)
class EmbeddingVector:
    values: tuple[float, ...]
    provider_id: str

    def __post_init__(self):
        if len(self.values) == 0:
            raise SemgateError("embedding vector must have positive dimension")
        if not all(math.isfinite(v) for v in self.values):
            raise SemgateError("embedding vector has non-finite entries")

    @property
    def dim(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class EncoderBand:
    lower: float
    upper: float

    def __post_init__(self):
        if not (-1.0 <= self.lower < self.upper <= 1.0):
            raise ValueError(
                f"band must satisfy -1 <= lower < upper <= 1, got "
                f"[{self.lower}, {self.upper}]"
            )


class GateMode(str, Enum):
    SINGLE_USE = "single_use"
    SINGLE_MPNET = "single_mpnet"
    DUAL = "dual"


class GateReason(str, Enum):
    IN_BAND = "in_band"
    BELOW_LOWER = "below_lower"
    ABOVE_CAP = "above_cap"
    DISAGREEMENT = "disagreement"
    MISSING_SCORE = "missing_score"


@dataclass(frozen=True)
class GateConfig:
    mode: GateMode = GateMode.DUAL
    use_band: EncoderBand = EncoderBand(0.60, 0.90)
    mpnet_band: EncoderBand = EncoderBand(0.70, 0.90)
    dual_use_lower: float = 0.50
    agreement_delta: float = 0.20
    upper_cap: float = 0.90

    def __post_init__(self):
        if not (0.0 <= self.agreement_delta <= 2.0):
            raise ValueError("agreement_delta must lie in [0, 2]")
        if not self.dual_use_lower < self.upper_cap:
            raise ValueError("dual_use_lower must be below upper_cap")

    def encoders_needed(self) -> tuple[str, ...]:
        if self.mode is GateMode.SINGLE_USE:
            return ("use",)
        if self.mode is GateMode.SINGLE_MPNET:
            return ("mpnet",)
        return ("use", "mpnet")


@dataclass(frozen=True)
class GateDecision:
    accepted: bool
    scores: dict[str, float] = field(default_factory=dict)
    reason: GateReason = GateReason.IN_BAND

    def __post_init__(self):
        if self.accepted and self.reason is not GateReason.IN_BAND:
            raise ValueError("accepted decisions must carry reason in_band")


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """cos(a, b) = a.b / (|a||b|), clamped to [-1, 1] against rounding."""
    if a.provider_id != b.provider_id:
        raise ProviderMismatchError(
            f"providers differ: {a.provider_id!r} vs {b.provider_id!r}"
        )
    if a.dim != b.dim:
        raise ProviderMismatchError(f"dimensions differ: {a.dim} vs {b.dim}")
    va = np.asarray(a.values, dtype=np.float64)
    vb = np.asarray(b.values, dtype=np.float64)
    norm_a = float(np.linalg.norm(va))
    norm_b = float(np.linalg.norm(vb))
    if norm_a == 0.0 or norm_b == 0.0:
        raise ZeroVectorError("cosine similarity undefined for zero vector")
    value = float(np.dot(va, vb)) / (norm_a * norm_b)
    return max(-1.0, min(1.0, value))


def _check_score(score: float) -> None:
    if not math.isfinite(score) or not (-1.0 <= score <= 1.0):
        raise ScoreRangeError(f"similarity score out of [-1, 1]: {score}")


def gate_single(
    score: float, band: EncoderBand, provider_id: str = "use"
) -> GateDecision:
    """Accept iff ``band.lower <= score <= band.upper`` (closed interval)."""
    _check_score(score)
    scores = {provider_id: score}
    if score < band.lower:
        return GateDecision(False, scores, GateReason.BELOW_LOWER)
    if score > band.upper:
        return GateDecision(False, scores, GateReason.ABOVE_CAP)
    return GateDecision(True, scores, GateReason.IN_BAND)


def gate_dual(s_use: float, s_mpnet: float, cfg: GateConfig) -> GateDecision:
    """Dual-encoder gate: relaxed lower bound for the first encoder, the
    usual band for the second, a shared upper cap, and an agreement check.

    Rules are evaluated in a fixed order and the first failure names the
    reason: use-lower, mpnet band, use-cap, then |difference|.
    """
    _check_score(s_use)
    _check_score(s_mpnet)
    scores = {"use": s_use, "mpnet": s_mpnet}
    if s_use < cfg.dual_use_lower:
        return GateDecision(False, scores, GateReason.BELOW_LOWER)
    if s_mpnet < cfg.mpnet_band.lower:
        return GateDecision(False, scores, GateReason.BELOW_LOWER)
    if s_mpnet > cfg.mpnet_band.upper:
        return GateDecision(False, scores, GateReason.ABOVE_CAP)
    if s_use > cfg.upper_cap:
        return GateDecision(False, scores, GateReason.ABOVE_CAP)
    if abs(s_use - s_mpnet) > cfg.agreement_delta:
        return GateDecision(False, scores, GateReason.DISAGREEMENT)
    return GateDecision(True, scores, GateReason.IN_BAND)


def gate(scores: dict[str, float | None], cfg: GateConfig) -> GateDecision:
    """Dispatch on the configured mode; missing scores never accept."""
    if cfg.mode is GateMode.SINGLE_USE:
        s = scores.get("use")
        if s is None:
            return GateDecision(False, {}, GateReason.MISSING_SCORE)
        return gate_single(s, cfg.use_band, "use")
    if cfg.mode is GateMode.SINGLE_MPNET:
        s = scores.get("mpnet")
        if s is None:
            return GateDecision(False, {}, GateReason.MISSING_SCORE)
        return gate_single(s, cfg.mpnet_band, "mpnet")
    s_use = scores.get("use")
    s_mpnet = scores.get("mpnet")
    if s_use is None or s_mpnet is None:
        present = {k: v for k, v in scores.items() if v is not None}
        return GateDecision(False, present, GateReason.MISSING_SCORE)
    return gate_dual(s_use, s_mpnet, cfg)


class EmbeddingProvider:
    """Interface: maps texts to fixed-dimension vectors, order-preserving."""

    provider_id: str
    dim: int

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        raise NotImplementedError


class DeterministicProvider(EmbeddingProvider):
    """Offline test encoder: seeded hash projection of token multisets.

    Every token is mapped to a frozen pseudo-random direction derived from
    SHA-256 of (provider name, seed, token); a text embeds as the normalized
    sum of its token directions.  Identical texts embed identically, texts
    sharing vocabulary land closer together.  Not a semantic model; it
    exists so the whole pipeline runs deterministically with no network.
    """

    DIM = 64

    def __init__(self, name: str, seed: int = 0):
        self.provider_id = name
        self.seed = seed
        self.dim = self.DIM
        self._token_cache: dict[str, np.ndarray] = {}

    def _token_vector(self, token: str) -> np.ndarray:
        cached = self._token_cache.get(token)
        if cached is not None:
            return cached
        out = np.empty(self.DIM, dtype=np.float64)
        prefix = f"{self.provider_id}:{self.seed}:{token}:".encode()
        idx = 0
        block = 0
        while idx < self.DIM:
            digest = hashlib.sha256(prefix + str(block).encode()).digest()
            for off in range(0, 32, 8):
                if idx >= self.DIM:
                    break
                u = int.from_bytes(digest[off : off + 8], "big")
                out[idx] = u / 2**63 - 1.0
                idx += 1
            block += 1
        self._token_cache[token] = out
        return out

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        vectors = []
        for text in texts:
            tokens = textkit.tokenize(text)
            if not tokens:
                tokens = ["\x00empty"]
            acc = np.zeros(self.DIM, dtype=np.float64)
            for token, count in sorted(Counter(tokens).items()):
                acc += count * self._token_vector(token)
            norm = float(np.linalg.norm(acc))
            if norm == 0.0:
                acc[0] = 1.0
                norm = 1.0
            acc /= norm
            vectors.append(
                EmbeddingVector(tuple(float(v) for v in acc), self.provider_id)
            )
        return vectors


class RemoteProvider(EmbeddingProvider):
    """Client for the POST /embed wire protocol."""

    def __init__(
        self,
        base_url: str,
        encoder: str,
        timeout: float = 30.0,
        retries: int = 3,
        session: requests.Session | None = None,
        batch_size: int = 32,
    ):
        self.base_url = base_url.rstrip("/")
        self.encoder = encoder
        self.provider_id = encoder
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()
        self.batch_size = batch_size
        self.dim = -1  # learned from the first response

    def _post_batch(self, texts: list[str]) -> list[EmbeddingVector]:
        payload = {"encoder": self.encoder, "texts": texts}
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self.session.post(
                    f"{self.base_url}/embed", json=payload, timeout=self.timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code != 200:
                last_error = EmbeddingError(
                    f"/embed returned HTTP {resp.status_code}"
                )
                if 400 <= resp.status_code < 500:
                    break  # client errors will not heal on retry
                continue
            body = resp.json()
            if "dim" not in body or "vectors" not in body:
                raise EmbeddingError("/embed response missing dim or vectors")
            dim = int(body["dim"])
            vectors = body["vectors"]
            if len(vectors) != len(texts):
                raise EmbeddingError(
                    f"/embed returned {len(vectors)} vectors for "
                    f"{len(texts)} texts"
                )
            if self.dim == -1:
                self.dim = dim
            if dim != self.dim or any(len(v) != dim for v in vectors):
                raise EmbeddingError("/embed vector dimensions inconsistent")
            return [
                EmbeddingVector(tuple(float(x) for x in vec), self.provider_id)
                for vec in vectors
            ]
        raise EmbeddingError(
            f"embedding batch of {len(texts)} texts failed: {last_error}"
        )

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        out: list[EmbeddingVector] = []
        for i in range(0, len(texts), self.batch_size):
            out.extend(self._post_batch(texts[i : i + self.batch_size]))
        return out


def embed(texts: list[str], provider: EmbeddingProvider) -> list[EmbeddingVector]:
    """One vector per text, order preserved."""
    return provider.embed(texts)
