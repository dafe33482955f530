"""Sentence-encoder backends for the /embed endpoint.

Real encoder weights (USE, MPNet) are not fetchable from this
environment, so the default registry serves deterministic hash-projection
encoders at the real models' output dimensions.  A sentence-transformers
model saved on local disk can be plugged in instead.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(Exception):
    pass


class HashProjectionEncoder:
    """Deterministic stand-in encoder: one frozen direction per word.

    A text embeds as the L2-normalized sum of per-word directions derived
    from BLAKE2b digests, so equal texts map to equal vectors and shared
    vocabulary raises cosine similarity.  Offline and dependency-free; not
    a semantic model.
    """

    def __init__(self, name: str, dim: int):
        self.name = name
        self.dim = dim
        self._cache: dict[str, np.ndarray] = {}

    def _direction(self, word: str) -> np.ndarray:
        hit = self._cache.get(word)
        if hit is not None:
            return hit
        out = np.empty(self.dim, dtype=np.float64)
        filled = 0
        counter = 0
        while filled < self.dim:
            digest = hashlib.blake2b(
                f"{self.name}|{word}|{counter}".encode(), digest_size=64
            ).digest()
            for offset in range(0, 64, 8):
                if filled >= self.dim:
                    break
                value = int.from_bytes(digest[offset : offset + 8], "little")
                out[filled] = value / 2**63 - 1.0
                filled += 1
            counter += 1
        self._cache[word] = out
        return out

    def encode(self, texts: list[str]) -> list[list[float]]:
        vectors = []
        for text in texts:
            words = text.lower().split() or ["<empty>"]
            acc = np.zeros(self.dim, dtype=np.float64)
            for word in sorted(words):
                acc += self._direction(word)
            norm = float(np.linalg.norm(acc))
            if norm == 0.0:
                acc[0], norm = 1.0, 1.0
            vectors.append([float(v) for v in acc / norm])
        return vectors


class SentenceTransformerEncoder:
    """Wraps a locally saved sentence-transformers model."""

    def __init__(self, name: str, model_path: str):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError("sentence-transformers is not installed") from exc
        self.name = name
        self.model = SentenceTransformer(model_path)
        self.dim = int(self.model.get_sentence_embedding_dimension())

    def encode(self, texts: list[str]) -> list[list[float]]:
        embedded = self.model.encode(texts, convert_to_numpy=True)
        return [[float(v) for v in row] for row in embedded]


def default_registry() -> dict:
    # dimensions mirror the production encoders (USE 512, MPNet 768)
    return {
        "use": HashProjectionEncoder("use", 512),
        "mpnet": HashProjectionEncoder("mpnet", 768),
    }
