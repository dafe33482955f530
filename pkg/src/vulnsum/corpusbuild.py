"""Assemble the augmented summarization corpus and its statistics.

Per CVE: clean and length-filter each scraped paragraph, score it against
the cleaned official description with the configured encoders, gate it,
and join the survivors into one augmented input whose target summary is
the description itself.
"""

from __future__ import annotations

import json
import logging
import math
import random
import re
from dataclasses import dataclass, replace
from pathlib import Path

from . import semgate, textkit
from .harvest import FetchStatus, ReferenceDoc, VulnRecord
from .semgate import EmbeddingError, EmbeddingProvider, GateConfig, cosine

log = logging.getLogger(__name__)

DEFAULT_INPUT_CAP = 1000
DEFAULT_SUMMARY_CAP = 250
MIN_PARAGRAPH_WORDS = 20

_TOKEN_RUN_RE = re.compile(r"\S+")


class CorpusError(Exception):
    """Base error for this module."""


class SplitError(CorpusError):
    """The corpus is too small to form train/validation/test splits."""


class CorpusFormatError(CorpusError):
    """A persisted corpus file violates the documented schema."""


class EmptyCorpusError(CorpusError):
    """Statistics over zero samples are undefined."""


@dataclass(frozen=True)
class ProvenanceEntry:
    url: str
    para_index: int
    scores: dict[str, float]


@dataclass(frozen=True)
class AugmentedSample:
    cve_id: str
    input_text: str
    target_summary: str
    provenance: tuple[ProvenanceEntry, ...]
    input_token_count: int
    target_token_count: int


@dataclass(frozen=True)
class CorpusSplit:
    train: tuple[AugmentedSample, ...]
    validation: tuple[AugmentedSample, ...]
    test: tuple[AugmentedSample, ...]
    seed: int


@dataclass(frozen=True)
class FieldStats:
    mean: float
    std: float  # population standard deviation


@dataclass(frozen=True)
class CorpusStats:
    input_words: FieldStats
    input_chars: FieldStats
    input_sentences: FieldStats
    target_words: FieldStats
    target_chars: FieldStats
    target_sentences: FieldStats
    top_entities: tuple[tuple[str, int], ...]
    top_input_trigrams: tuple[tuple[str, int], ...]
    top_target_trigrams: tuple[tuple[str, int], ...]
    sample_count: int


def token_count(text: str) -> int:
    """Statistics-space token count: whitespace-delimited chunks."""
    return len(text.split())


def truncate_tokens(text: str, cap: int) -> str:
    """First ``cap`` whitespace tokens of ``text``, original separators kept.

    The result is a prefix of the input (modulo trailing whitespace), so a
    token is never split and newline joins survive truncation.
    """
    if cap < 0:
        raise ValueError("cap must be non-negative")
    runs = list(_TOKEN_RUN_RE.finditer(text))
    if len(runs) <= cap:
        return text
    if cap == 0:
        return ""
    return text[: runs[cap - 1].end()]


def build_sample(
    record: VulnRecord,
    docs: list[ReferenceDoc],
    gate_cfg: GateConfig,
    providers: dict[str, EmbeddingProvider],
    include_description: bool = True,
    dedup_paragraphs: bool = False,
    min_words: int = MIN_PARAGRAPH_WORDS,
    counters: dict | None = None,
) -> AugmentedSample | None:
    """One augmented sample for ``record``, or None if nothing is accepted.

    Only documents fetched with status ok contribute.  Paragraphs are
    cleaned, length-filtered (> ``min_words`` words), scored against the
    cleaned description per configured encoder, and gated.  Accepted
    paragraphs join the input in encounter order after the cleaned
    description; an embedding failure skips the whole document.
    """
    if not record.description.strip():
        raise ValueError(f"{record.cve_id}: description must be non-empty")
    target = textkit.clean(record.description)
    if not target.text:
        log.warning("%s: description empty after cleaning", record.cve_id)
        return None

    encoders = gate_cfg.encoders_needed()
    for name in encoders:
        if name not in providers:
            raise CorpusError(f"no provider configured for encoder {name!r}")
    desc_vectors = {
        name: providers[name].embed([target.text])[0] for name in encoders
    }

    accepted_texts: list[str] = []
    provenance: list[ProvenanceEntry] = []
    seen_texts: set[str] = set()
    for doc in docs:
        if doc.fetch_status is not FetchStatus.OK:
            continue
        candidates = []  # (paragraph index, cleaned text)
        for index, raw in enumerate(doc.paragraphs):
            ct = textkit.clean(raw)
            if textkit.passes_length_filter(ct, min_words):
                candidates.append((index, ct.text))
        if not candidates:
            continue
        try:
            vectors = {
                name: providers[name].embed([text for _, text in candidates])
                for name in encoders
            }
        except EmbeddingError as exc:
            log.warning(
                "%s: skipping %s, embedding failed: %s",
                record.cve_id, doc.source_url, exc,
            )
            if counters is not None:
                counters["docs_skipped"] = counters.get("docs_skipped", 0) + 1
            continue
        for pos, (index, text) in enumerate(candidates):
            scores = {
                name: cosine(vectors[name][pos], desc_vectors[name])
                for name in encoders
            }
            decision = semgate.gate(scores, gate_cfg)
            if not decision.accepted:
                continue
            if dedup_paragraphs:
                if text in seen_texts:
                    continue
                seen_texts.add(text)
            accepted_texts.append(text)
            provenance.append(
                ProvenanceEntry(doc.source_url, index, dict(decision.scores))
            )

    if not accepted_texts:
        return None
    parts = ([target.text] if include_description else []) + accepted_texts
    input_text = "\n".join(parts)
    return AugmentedSample(
        cve_id=record.cve_id,
        input_text=input_text,
        target_summary=target.text,
        provenance=tuple(provenance),
        input_token_count=token_count(input_text),
        target_token_count=token_count(target.text),
    )


def cap_lengths(
    sample: AugmentedSample,
    input_cap: int = DEFAULT_INPUT_CAP,
    summary_cap: int = DEFAULT_SUMMARY_CAP,
) -> AugmentedSample:
    """Truncate input/target to the caps without ever splitting a token."""
    input_text = truncate_tokens(sample.input_text, input_cap)
    target = truncate_tokens(sample.target_summary, summary_cap)
    return replace(
        sample,
        input_text=input_text,
        target_summary=target,
        input_token_count=token_count(input_text),
        target_token_count=token_count(target),
    )


def build_corpus(
    records: list[VulnRecord],
    docs_by_cve: dict[str, list[ReferenceDoc]],
    gate_cfg: GateConfig,
    providers: dict[str, EmbeddingProvider],
    input_cap: int = DEFAULT_INPUT_CAP,
    summary_cap: int = DEFAULT_SUMMARY_CAP,
    include_description: bool = True,
    dedup_paragraphs: bool = False,
    counters: dict | None = None,
) -> list[AugmentedSample]:
    """Gate and cap every record, in cve_id order; records without an
    accepted paragraph are dropped."""
    samples = []
    for record in sorted(records, key=lambda r: r.cve_id):
        sample = build_sample(
            record,
            docs_by_cve.get(record.cve_id, []),
            gate_cfg,
            providers,
            include_description=include_description,
            dedup_paragraphs=dedup_paragraphs,
            counters=counters,
        )
        if sample is not None:
            samples.append(cap_lengths(sample, input_cap, summary_cap))
    return samples


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split_corpus(samples: list[AugmentedSample], seed: int) -> CorpusSplit:
    """Deterministic 81/9/10 split: 10% test first, then 10% of the rest
    for validation, round-half-up at each stage."""
    n = len(samples)
    if n < 10:
        raise SplitError(f"cannot form splits from {n} samples (need >= 10)")
    ordered = sorted(samples, key=lambda s: s.cve_id)
    rng = random.Random(seed)
    rng.shuffle(ordered)
    n_test = _round_half_up(0.10 * n)
    n_val = _round_half_up(0.10 * (n - n_test))
    test = ordered[:n_test]
    validation = ordered[n_test : n_test + n_val]
    train = ordered[n_test + n_val :]
    key = lambda s: s.cve_id
    return CorpusSplit(
        train=tuple(sorted(train, key=key)),
        validation=tuple(sorted(validation, key=key)),
        test=tuple(sorted(test, key=key)),
        seed=seed,
    )


# ---------------------------------------------------------------------------
# Persistence: corpus JSONL, one sample per line.

def sample_to_json(sample: AugmentedSample) -> dict:
    return {
        "cve_id": sample.cve_id,
        "input_text": sample.input_text,
        "target_summary": sample.target_summary,
        "provenance": [
            {"url": p.url, "para_index": p.para_index, "scores": p.scores}
            for p in sample.provenance
        ],
        "input_tokens": sample.input_token_count,
        "target_tokens": sample.target_token_count,
    }


def sample_from_json(obj: dict) -> AugmentedSample:
    try:
        provenance = tuple(
            ProvenanceEntry(
                url=p["url"],
                para_index=int(p["para_index"]),
                scores={k: float(v) for k, v in p["scores"].items()},
            )
            for p in obj["provenance"]
        )
        return AugmentedSample(
            cve_id=obj["cve_id"],
            input_text=obj["input_text"],
            target_summary=obj["target_summary"],
            provenance=provenance,
            input_token_count=int(obj["input_tokens"]),
            target_token_count=int(obj["target_tokens"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorpusFormatError(f"bad sample field: {exc}") from exc


def write_samples(samples, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for sample in samples:
            fh.write(json.dumps(sample_to_json(sample), sort_keys=True))
            fh.write("\n")


def read_samples(path: str | Path) -> list[AugmentedSample]:
    samples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                samples.append(sample_from_json(json.loads(line)))
            except (json.JSONDecodeError, CorpusFormatError) as exc:
                raise CorpusFormatError(f"{path}:{lineno}: {exc}") from exc
    return samples


SPLIT_FILES = ("train.jsonl", "validation.jsonl", "test.jsonl")


def write_corpus(split: CorpusSplit, out_dir: str | Path) -> None:
    """Persist a split as train/validation/test JSONL plus split.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for name, part in zip(SPLIT_FILES, (split.train, split.validation, split.test)):
        write_samples(part, out_dir / name)
    meta = {"seed": split.seed, "sizes": {
        "train": len(split.train),
        "validation": len(split.validation),
        "test": len(split.test),
    }}
    (out_dir / "split.json").write_text(
        json.dumps(meta, sort_keys=True) + "\n", encoding="utf-8"
    )


def read_corpus(in_dir: str | Path) -> CorpusSplit:
    in_dir = Path(in_dir)
    try:
        meta = json.loads((in_dir / "split.json").read_text(encoding="utf-8"))
        seed = int(meta["seed"])
    except (OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        raise CorpusFormatError(f"{in_dir}/split.json: {exc}") from exc
    parts = [tuple(read_samples(in_dir / name)) for name in SPLIT_FILES]
    return CorpusSplit(train=parts[0], validation=parts[1], test=parts[2], seed=seed)


# ---------------------------------------------------------------------------
# Statistics

def _field_stats(values: list[float]) -> FieldStats:
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    return FieldStats(mean=mean, std=math.sqrt(variance))


def _text_counts(text: str) -> tuple[int, int, int]:
    return (
        len(text.split()),
        len(text),
        len(textkit.split_sentences(text)),
    )


def corpus_stats(samples: list[AugmentedSample], top_k: int = 15) -> CorpusStats:
    """Population mean/std of word/char/sentence counts for inputs and
    targets, plus top entity candidates (targets) and trigrams (both)."""
    if not samples:
        raise EmptyCorpusError("cannot compute statistics of an empty corpus")
    input_counts = [_text_counts(s.input_text) for s in samples]
    target_counts = [_text_counts(s.target_summary) for s in samples]

    entity_counts: dict[str, int] = {}
    for sample in samples:
        for entity, count in textkit.entity_candidates(sample.target_summary).items():
            entity_counts[entity] = entity_counts.get(entity, 0) + count
    top_entities = sorted(entity_counts.items(), key=lambda e: (-e[1], e[0]))[:top_k]

    def tri_top(texts: list[str]) -> list[tuple[str, int]]:
        merged: dict[tuple[str, ...], int] = {}
        for text in texts:
            table = textkit.ngrams(textkit.tokenize(text), 3)
            for gram, count in table.entries.items():
                merged[gram] = merged.get(gram, 0) + count
        return textkit.top_k(textkit.NgramTable(3, merged), top_k)

    return CorpusStats(
        input_words=_field_stats([c[0] for c in input_counts]),
        input_chars=_field_stats([c[1] for c in input_counts]),
        input_sentences=_field_stats([c[2] for c in input_counts]),
        target_words=_field_stats([c[0] for c in target_counts]),
        target_chars=_field_stats([c[1] for c in target_counts]),
        target_sentences=_field_stats([c[2] for c in target_counts]),
        top_entities=tuple(top_entities),
        top_input_trigrams=tuple(tri_top([s.input_text for s in samples])),
        top_target_trigrams=tuple(tri_top([s.target_summary for s in samples])),
        sample_count=len(samples),
    )


def stats_to_json(stats: CorpusStats) -> dict:
    def fs(f: FieldStats) -> dict:
        return {"mean": f.mean, "std": f.std}

    return {
        "sample_count": stats.sample_count,
        "input": {
            "words": fs(stats.input_words),
            "chars": fs(stats.input_chars),
            "sentences": fs(stats.input_sentences),
        },
        "target": {
            "words": fs(stats.target_words),
            "chars": fs(stats.target_chars),
            "sentences": fs(stats.target_sentences),
        },
        "top_entities": [list(e) for e in stats.top_entities],
        "top_input_trigrams": [list(t) for t in stats.top_input_trigrams],
        "top_target_trigrams": [list(t) for t in stats.top_target_trigrams],
    }


def render_stats(stats: CorpusStats) -> str:
    """Plain-text report: (mean, std) per field for augmented input vs
    target summary, then entity and trigram frequency lists."""
    lines = [
        f"Corpus statistics over {stats.sample_count} samples",
        "",
        f"{'field':<12} {'augmented input':>24} {'target summary':>24}",
    ]
    rows = [
        ("words", stats.input_words, stats.target_words),
        ("chars", stats.input_chars, stats.target_chars),
        ("sentences", stats.input_sentences, stats.target_sentences),
    ]
    for name, left, right in rows:
        lines.append(
            f"{name:<12} {_pair(left):>24} {_pair(right):>24}"
        )
    lines.append("")
    lines.append("Top entity candidates (target summaries):")
    for entity, count in stats.top_entities:
        lines.append(f"  ({entity}, {count})")
    lines.append("")
    lines.append("Top trigrams (target summaries):")
    for gram, count in stats.top_target_trigrams:
        lines.append(f"  ({gram}, {count})")
    lines.append("")
    lines.append("Top trigrams (augmented inputs):")
    for gram, count in stats.top_input_trigrams:
        lines.append(f"  ({gram}, {count})")
    return "\n".join(lines) + "\n"


def _pair(f: FieldStats) -> str:
    return f"({f.mean:.2f}, {f.std:.2f})"
