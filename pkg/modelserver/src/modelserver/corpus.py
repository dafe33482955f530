"""Read the corpus JSONL files produced by the pipeline.

Only the documented schema is consumed here (cve_id, input_text,
target_summary); extra fields such as provenance are ignored.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class CorpusError(Exception):
    pass


@dataclass(frozen=True)
class CorpusSample:
    cve_id: str
    input_text: str
    target_summary: str


def read_corpus_file(path: str | Path) -> list[CorpusSample]:
    samples = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                samples.append(
                    CorpusSample(
                        cve_id=str(obj["cve_id"]),
                        input_text=str(obj["input_text"]),
                        target_summary=str(obj["target_summary"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise CorpusError(f"{path}:{lineno}: bad corpus line: {exc}") from exc
    return samples


def read_split_dir(path: str | Path) -> dict[str, list[CorpusSample]]:
    path = Path(path)
    out = {}
    for name in ("train", "validation", "test"):
        file = path / f"{name}.jsonl"
        out[name] = read_corpus_file(file) if file.is_file() else []
    if not out["train"]:
        raise CorpusError(f"no training samples under {path}")
    return out
