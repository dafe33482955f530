import json

import pytest

from modelserver.corpus import CorpusError, CorpusSample, read_corpus_file, read_split_dir


def write_jsonl(path, rows):
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row) + "\n")


def row(cve_id="CVE-2021-1", extra=None):
    obj = {
        "cve_id": cve_id,
        "input_text": "augmented input text",
        "target_summary": "target",
    }
    obj.update(extra or {})
    return obj


class TestReadCorpus:
    def test_reads_documented_fields(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row(), row("CVE-2021-2")])
        samples = read_corpus_file(path)
        assert samples == [
            CorpusSample("CVE-2021-1", "augmented input text", "target"),
            CorpusSample("CVE-2021-2", "augmented input text", "target"),
        ]

    def test_extra_fields_ignored(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        write_jsonl(path, [row(extra={"provenance": [], "input_tokens": 3})])
        assert len(read_corpus_file(path)) == 1

    def test_bad_line_names_line_number(self, tmp_path):
        path = tmp_path / "corpus.jsonl"
        path.write_text(json.dumps(row()) + "\n{}\n", encoding="utf-8")
        with pytest.raises(CorpusError, match=":2"):
            read_corpus_file(path)

    def test_split_dir(self, tmp_path):
        write_jsonl(tmp_path / "train.jsonl", [row(), row("CVE-2021-2")])
        write_jsonl(tmp_path / "validation.jsonl", [row("CVE-2021-3")])
        write_jsonl(tmp_path / "test.jsonl", [row("CVE-2021-4")])
        split = read_split_dir(tmp_path)
        assert [len(split[k]) for k in ("train", "validation", "test")] == [2, 1, 1]

    def test_split_dir_requires_training_data(self, tmp_path):
        with pytest.raises(CorpusError):
            read_split_dir(tmp_path)
