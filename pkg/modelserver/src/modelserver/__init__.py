"""Seq2seq summarizer fine-tuning and serving for the CVE corpus."""

__version__ = "0.1.0"
