"""Tools for building and evaluating an enriched CVE summarization corpus."""

__version__ = "0.1.0"
