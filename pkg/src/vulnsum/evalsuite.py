"""Evaluation: ROUGE-1, prediction/target similarity, human grading.

ROUGE-1 uses clipped unigram counts over the shared statistics tokenizer:
no stemming, no stopword removal, lowercase.  Human grades are 1-3 on
fluency, completeness, correctness and understanding.
"""

from __future__ import annotations

import datetime as dt
import json
import logging
import random
import sys
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import textkit
from .corpusbuild import truncate_tokens
from .semgate import EmbeddingProvider, cosine
from .summarize import SummaryResult

log = logging.getLogger(__name__)

HUMAN_METRICS = ("fluency", "completeness", "correctness", "understanding")
VALID_GRADES = (1, 2, 3)

HISTOGRAM_BIN_WIDTH = 0.05
_HISTOGRAM_EDGES = np.linspace(-1.0, 1.0, 41)


class EvalError(Exception):
    """Base error for this module."""


class NoRecordsError(EvalError):
    """Aggregation over zero records is undefined."""


@dataclass(frozen=True)
class RougeScore:
    recall: float
    precision: float
    f1: float


@dataclass(frozen=True)
class SimilarityReport:
    scores: tuple[float, ...]
    histogram: tuple[int, ...]  # 40 bins of width 0.05 over [-1, 1]
    mean: float
    provider_id: str


@dataclass(frozen=True)
class HumanEvalRecord:
    sample_id: str
    fluency: int
    completeness: int
    correctness: int
    understanding: int
    annotator_id: str
    timestamp: str

    def __post_init__(self):
        for name in HUMAN_METRICS:
            if getattr(self, name) not in VALID_GRADES:
                raise ValueError(f"{name} grade must be in {VALID_GRADES}")


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def rouge1(prediction: str, target: str) -> RougeScore:
    """Unigram overlap with clipped counts.

    overlap = sum over unigram types of min(count in prediction, count in
    target); recall normalizes by target length, precision by prediction
    length; empty denominators give 0.
    """
    pred_tokens = textkit.tokenize(prediction)
    target_tokens = textkit.tokenize(target)
    overlap = sum((Counter(pred_tokens) & Counter(target_tokens)).values())
    recall = overlap / len(target_tokens) if target_tokens else 0.0
    precision = overlap / len(pred_tokens) if pred_tokens else 0.0
    return RougeScore(recall=recall, precision=precision, f1=_f1(precision, recall))


def corpus_rouge(
    results: list[SummaryResult], targets: dict[str, str]
) -> RougeScore:
    """Unweighted mean of per-sample recall, precision and F1."""
    if not results:
        raise NoRecordsError("no summary results to score")
    scores = []
    for result in results:
        if result.cve_id not in targets:
            raise EvalError(f"no target summary for {result.cve_id}")
        scores.append(rouge1(result.summary, targets[result.cve_id]))
    n = len(scores)
    return RougeScore(
        recall=sum(s.recall for s in scores) / n,
        precision=sum(s.precision for s in scores) / n,
        f1=sum(s.f1 for s in scores) / n,
    )


def render_rouge_table(rows: list[tuple[str, RougeScore, dict]]) -> str:
    """Fine-tuning-results layout: R, P, F1 plus the decoding knobs
    (T = input token limit, b = beams, B = batch size when known)."""
    lines = [
        f"{'Model':<24} {'R':>6} {'P':>6} {'F1':>6} {'T':>6} {'b':>4} {'B':>4}"
    ]
    for name, score, meta in rows:
        lines.append(
            f"{name:<24} {score.recall:>6.2f} {score.precision:>6.2f} "
            f"{score.f1:>6.2f} {meta.get('T', '-'):>6} {meta.get('b', '-'):>4} "
            f"{meta.get('B', '-'):>4}"
        )
    return "\n".join(lines) + "\n"


def similarity_report(
    results: list[SummaryResult],
    targets: dict[str, str],
    provider: EmbeddingProvider,
) -> SimilarityReport:
    """Cosine similarity between each prediction and its target, with the
    score histogram (bin width 0.05 over [-1, 1]) and mean."""
    if not results:
        raise NoRecordsError("no summary results to compare")
    predictions = [r.summary for r in results]
    target_texts = []
    for result in results:
        if result.cve_id not in targets:
            raise EvalError(f"no target summary for {result.cve_id}")
        target_texts.append(targets[result.cve_id])
    pred_vectors = provider.embed(predictions)
    target_vectors = provider.embed(target_texts)
    scores = tuple(
        cosine(p, t) for p, t in zip(pred_vectors, target_vectors)
    )
    histogram, _ = np.histogram(np.asarray(scores), bins=_HISTOGRAM_EDGES)
    return SimilarityReport(
        scores=scores,
        histogram=tuple(int(c) for c in histogram),
        mean=float(np.mean(scores)),
        provider_id=provider.provider_id,
    )


def render_similarity(report: SimilarityReport) -> str:
    lines = [
        f"Prediction/target similarity ({report.provider_id}): "
        f"mean {report.mean:.4f} over {len(report.scores)} pairs",
    ]
    for i, count in enumerate(report.histogram):
        if count == 0:
            continue
        lo = -1.0 + i * HISTOGRAM_BIN_WIDTH
        lines.append(f"  [{lo:+.2f}, {lo + HISTOGRAM_BIN_WIDTH:+.2f}) {count}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Human evaluation

@dataclass(frozen=True)
class HumanEvalItem:
    sample_id: str
    input_excerpt: str
    target: str
    prediction: str


def select_eval_items(
    results: list[SummaryResult],
    targets: dict[str, str],
    inputs: dict[str, str],
    n: int = 100,
    seed: int = 0,
    excerpt_tokens: int = 60,
) -> list[HumanEvalItem]:
    """Seeded uniform sample (without replacement) of graded items."""
    pool = [r for r in results if r.cve_id in targets]
    rng = random.Random(seed)
    chosen = pool if len(pool) <= n else rng.sample(pool, n)
    items = []
    for result in sorted(chosen, key=lambda r: r.cve_id):
        excerpt = truncate_tokens(inputs.get(result.cve_id, ""), excerpt_tokens)
        items.append(
            HumanEvalItem(
                sample_id=result.cve_id,
                input_excerpt=excerpt,
                target=targets[result.cve_id],
                prediction=result.summary,
            )
        )
    return items


def read_eval_log(log_path: str | Path) -> list[HumanEvalRecord]:
    path = Path(log_path)
    if not path.is_file():
        return []
    records = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                records.append(
                    HumanEvalRecord(
                        sample_id=obj["sample_id"],
                        fluency=int(obj["fluency"]),
                        completeness=int(obj["completeness"]),
                        correctness=int(obj["correctness"]),
                        understanding=int(obj["understanding"]),
                        annotator_id=obj["annotator_id"],
                        timestamp=obj["timestamp"],
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise EvalError(f"{path}:{lineno}: bad eval record: {exc}") from exc
    return records


def _parse_grades(line: str) -> tuple[int, int, int, int] | None:
    parts = line.split()
    if len(parts) != 4:
        return None
    try:
        grades = tuple(int(p) for p in parts)
    except ValueError:
        return None
    if any(g not in VALID_GRADES for g in grades):
        return None
    return grades  # type: ignore[return-value]


def human_eval_session(
    items: list[HumanEvalItem],
    annotator_id: str,
    log_path: str | Path,
    in_stream=None,
    out_stream=None,
) -> list[HumanEvalRecord]:
    """Interactive grading: four grades in {1,2,3} per sample.

    Out-of-range input re-prompts.  Records append to ``log_path`` with a
    flush per record, so an interrupted session keeps what was graded; on
    restart, sample_ids already in the log are skipped.
    """
    in_stream = in_stream if in_stream is not None else sys.stdin
    out_stream = out_stream if out_stream is not None else sys.stdout
    log_path = Path(log_path)
    log_path.parent.mkdir(parents=True, exist_ok=True)
    done = {record.sample_id for record in read_eval_log(log_path)}

    new_records = []
    with log_path.open("a", encoding="utf-8") as log_fh:
        for item in items:
            if item.sample_id in done:
                continue
            out_stream.write(
                f"\n=== {item.sample_id} ===\n"
                f"input (excerpt): {item.input_excerpt}\n"
                f"target:          {item.target}\n"
                f"prediction:      {item.prediction}\n"
            )
            grades = None
            while grades is None:
                out_stream.write(
                    "grades 1-3 (fluency completeness correctness "
                    "understanding): "
                )
                out_stream.flush()
                line = in_stream.readline()
                if line == "":  # stream exhausted: stop, keep what we have
                    out_stream.write("\ninput closed; session stopped\n")
                    return new_records
                grades = _parse_grades(line)
                if grades is None:
                    out_stream.write(
                        "invalid input: expected four integers in {1,2,3}\n"
                    )
            record = HumanEvalRecord(
                sample_id=item.sample_id,
                fluency=grades[0],
                completeness=grades[1],
                correctness=grades[2],
                understanding=grades[3],
                annotator_id=annotator_id,
                timestamp=dt.datetime.now(dt.timezone.utc).isoformat(),
            )
            log_fh.write(json.dumps(_record_to_json(record), sort_keys=True))
            log_fh.write("\n")
            log_fh.flush()
            new_records.append(record)
    return new_records


def _record_to_json(record: HumanEvalRecord) -> dict:
    return {
        "sample_id": record.sample_id,
        "fluency": record.fluency,
        "completeness": record.completeness,
        "correctness": record.correctness,
        "understanding": record.understanding,
        "annotator_id": record.annotator_id,
        "timestamp": record.timestamp,
    }


def human_eval_aggregate(records: list[HumanEvalRecord]) -> dict[str, float]:
    """Arithmetic mean per metric; always within [1, 3]."""
    if not records:
        raise NoRecordsError("no human evaluation records to aggregate")
    n = len(records)
    return {
        metric: sum(getattr(r, metric) for r in records) / n
        for metric in HUMAN_METRICS
    }


def render_human_eval(means_by_model: dict[str, dict[str, float]]) -> str:
    """Human-evaluation layout: F, Cm, Cr, U columns per model."""
    lines = [f"{'Model':<24} {'F':>6} {'Cm':>6} {'Cr':>6} {'U':>6}"]
    for model, means in means_by_model.items():
        lines.append(
            f"{model:<24} {means['fluency']:>6.2f} {means['completeness']:>6.2f} "
            f"{means['correctness']:>6.2f} {means['understanding']:>6.2f}"
        )
    return "\n".join(lines) + "\n"
