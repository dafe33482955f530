"""Text cleaning, counting and lightweight analysis shared by the pipeline.

All functions here are pure and deterministic.  The cleaning grammar
(URL / email / phone matchers and the special-character allowlist) is
frozen by golden-file tests; change it only together with the goldens.
"""

from __future__ import annotations

import re
from collections import Counter
from dataclasses import dataclass, field

# URLs must carry a scheme or a www. prefix.  Bare domains are left alone on
# purpose: identifiers such as "log4j.core" or "a.out" are not web links.
URL_RE = re.compile(r"(?:https?://|ftp://|www\.)\S+", re.IGNORECASE)

EMAIL_RE = re.compile(r"[A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,}")

# Phone grammar, deliberately conservative so that version strings and ids
# like "CVE-2021-44228" or year ranges never match:
#   - a parenthesized area code, optionally preceded by +CC, or
#   - a +CC prefix followed by separated digit groups, or
#   - at least three bare digit groups (e.g. 555-010-9999).
PHONE_RE = re.compile(
    r"""
    (?<![\w-])
    (?:
        (?:\+\d{1,3}[\s.-]?)?\(\d{2,4}\)[\s.-]?\d{2,4}(?:[\s.-]\d{2,4}){1,3}
        |
        \+\d{1,3}[\s.-]?\d{2,6}(?:[\s.-]\d{2,6}){1,3}
        |
        \d{3}(?:[\s.-]\d{3,4}){2,3}
    )
    (?!\d)
    """,
    re.VERBOSE,
)

# "Special character" = anything that is not a letter, digit, listed basic
# punctuation or whitespace.
_ALLOWED_PUNCT = set(".,;:!?()'\"/-")

# Abbreviations whose trailing period never ends a sentence.
_ABBREVIATIONS = frozenset(
    {
        "e.g.", "i.e.", "vs.", "etc.", "cf.", "al.", "approx.",
        "mr.", "mrs.", "ms.", "dr.", "prof.", "st.",
        "inc.", "ltd.", "co.", "corp.", "dept.",
        "fig.", "no.", "ver.", "rev.",
    }
)

_EDGE_PUNCT = ".,;:!?()'\"/-_`[]{}<>*#@&%+=~|\\^$"


@dataclass(frozen=True)
class CleanText:
    """A cleaned string together with its word/char/sentence counts."""

    text: str
    word_count: int
    char_count: int
    sentence_count: int


@dataclass
class NgramTable:
    """Sliding-window n-gram counts over a token list."""

    n: int
    entries: dict[tuple[str, ...], int] = field(default_factory=dict)


def _normalize_ws(text: str) -> str:
    return " ".join(text.split())


def _strip_special(text: str) -> str:
    out = []
    for ch in text:
        if ch.isalnum() or ch in _ALLOWED_PUNCT:
            out.append(ch)
        elif ch.isspace():
            out.append(" ")
        # anything else is dropped
    return "".join(out)


def clean(raw: str) -> CleanText:
    """Remove links, emails, phone numbers and special characters.

    Idempotent: cleaning an already-clean string is a no-op.  The matcher
    passes loop until a fixed point so removals can never leave (or, by
    joining fragments, create) a residual URL/email/phone match.
    """
    text = raw
    while True:
        prev = text
        text = _normalize_ws(text)
        text = URL_RE.sub(" ", text)
        text = EMAIL_RE.sub(" ", text)
        text = PHONE_RE.sub(" ", text)
        text = _strip_special(text)
        text = _normalize_ws(text)
        if text == prev:
            break
    return CleanText(
        text=text,
        word_count=len(text.split()),
        char_count=len(text),
        sentence_count=len(split_sentences(text)),
    )


def passes_length_filter(ct: CleanText, min_words: int = 20) -> bool:
    """True iff the cleaned text has strictly more than ``min_words`` words."""
    return ct.word_count > min_words


def tokenize(text: str) -> list[str]:
    """Lowercased whitespace tokens with punctuation stripped from the edges.

    Tokens that are punctuation-only disappear.  This is the tokenizer used
    for statistics and ROUGE; model-space tokenization is a backend concern.
    """
    tokens = []
    for chunk in text.lower().split():
        tok = chunk.strip(_EDGE_PUNCT)
        if tok:
            tokens.append(tok)
    return tokens


def sentence_spans(text: str) -> list[tuple[int, int]]:
    """(start, end) character spans of the sentences of ``text``.

    A sentence ends at ``.!?`` followed by whitespace and an uppercase
    letter, or at end of text.  Periods that close a known abbreviation do
    not end a sentence.  Spans exclude surrounding whitespace.
    """
    spans: list[tuple[int, int]] = []
    start = 0
    n = len(text)
    for m in re.finditer(r"[.!?]+", text):
        end = m.end()
        rest = text[end:]
        follows = re.match(r"\s+[A-Z0-9\"'(]", rest)
        at_eot = rest.strip() == ""
        if not (follows or at_eot):
            continue
        if "." in m.group():
            word = re.search(r"\S+$", text[:end])
            if word and word.group().lower() in _ABBREVIATIONS:
                continue
        spans.append((start, end))
        start = end
    tail = text[start:]
    if tail.strip():
        spans.append((start, n))
    # trim whitespace off both ends of every span
    trimmed = []
    for s, e in spans:
        seg = text[s:e]
        ls = len(seg) - len(seg.lstrip())
        rs = len(seg) - len(seg.rstrip())
        if s + ls < e - rs:
            trimmed.append((s + ls, e - rs))
    return trimmed


def split_sentences(text: str) -> list[str]:
    """Sentences of ``text`` in order, whitespace-trimmed."""
    return [text[s:e] for s, e in sentence_spans(text)]


def ngrams(tokens: list[str], n: int) -> NgramTable:
    """Sliding-window n-gram counts; empty table when ``n > len(tokens)``."""
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    counts = Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )
    return NgramTable(n=n, entries=dict(counts))


def top_k(table: NgramTable, k: int) -> list[tuple[str, int]]:
    """Most frequent n-grams as (space-joined gram, count).

    Sorted by count descending, ties broken lexicographically.
    """
    joined = [(" ".join(gram), count) for gram, count in table.entries.items()]
    joined.sort(key=lambda item: (-item[1], item[0]))
    return joined[:k]


def _entity_words(sentence: str) -> list[str]:
    words = []
    for chunk in sentence.split():
        word = chunk.strip(_EDGE_PUNCT)
        if word:
            words.append(word)
    return words


def _is_entity_shaped(word: str) -> bool:
    # Capitalized word ("Cisco", "JavaScript", "X-Force") or an all-caps
    # acronym of at least two characters ("XSS", "SQL").
    if not word or not word[0].isupper():
        return False
    return any(c.isalpha() for c in word)


def entity_candidates(text: str) -> dict[str, int]:
    """Heuristic named-entity frequency map.

    Counts maximal runs of capitalized words / acronyms that do not start a
    sentence.  A sentence-initial token is counted too when the same token
    also appears capitalized mid-sentence somewhere in ``text``.
    """
    counts: Counter[str] = Counter()
    deferred: list[str] = []
    mid_sentence_words: set[str] = set()

    for sentence in split_sentences(text):
        words = _entity_words(sentence)
        i = 0
        while i < len(words):
            if not _is_entity_shaped(words[i]):
                i += 1
                continue
            if i == 0:
                # Sentence-initial token: defer until we know whether the
                # same word shows up capitalized mid-sentence.
                deferred.append(words[0])
                i += 1
                continue
            j = i
            while j < len(words) and _is_entity_shaped(words[j]):
                j += 1
            phrase = " ".join(words[i:j])
            counts[phrase] += 1
            mid_sentence_words.update(words[i:j])
            i = j

    for word in deferred:
        if word in mid_sentence_words:
            counts[word] += 1
    return dict(counts)
