"""CVE listing and reference-page scraping.

Record listing goes through the vulnerability database's paginated JSON
API; reference hyperlinks are fetched as raw HTML with TLS verification.
Every network path can be swapped for an archived-fixture directory so
runs are reproducible offline.
"""

from __future__ import annotations

import concurrent.futures
import datetime as dt
import hashlib
import json
import logging
import re
import threading
import time
import urllib.parse
from dataclasses import dataclass, field
from enum import Enum
from html.parser import HTMLParser
from pathlib import Path

import requests

log = logging.getLogger(__name__)

DEFAULT_API_BASE = "https://services.nvd.nist.gov/rest/json/cves/2.0"
API_WINDOW_DAYS = 120  # the database API rejects wider publication ranges

CVE_ID_RE = re.compile(r"^CVE-\d{4}-\d{4,}$")

_HTML_TYPES = ("text/html", "application/xhtml+xml")


class HarvestError(Exception):
    """Base error for this module."""


class HarvestAborted(HarvestError):
    """Listing aborted after retries; partial progress was checkpointed."""

    def __init__(self, message: str, checkpoint: Path | None, records: list):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.records = records


class RecordFormatError(HarvestError):
    """A persisted record file violates the documented schema."""


class TlsError(Exception):
    pass


class FetchTimeout(Exception):
    pass


class NetworkError(Exception):
    pass


class FetchStatus(str, Enum):
    OK = "ok"
    TLS_INVALID = "tls_invalid"
    HTTP_ERROR = "http_error"
    TIMEOUT = "timeout"
    NON_HTML = "non_html"


@dataclass(frozen=True)
class VulnRecord:
    cve_id: str
    description: str
    references: tuple[str, ...]
    published: dt.date


@dataclass(frozen=True)
class ReferenceDoc:
    source_url: str
    fetch_status: FetchStatus
    paragraphs: tuple[str, ...]


@dataclass(frozen=True)
class HarvestConfig:
    date_start: dt.date
    date_end: dt.date
    paragraph_limit: int = 100
    request_timeout: float = 30.0
    max_parallel_fetches: int = 8
    rate_limit: float = 0.5  # database API requests per second
    retries: int = 3
    retry_backoff: float = 0.5
    results_per_page: int = 2000
    api_key: str | None = None

    def __post_init__(self):
        if self.date_start > self.date_end:
            raise ValueError("date_start must not be after date_end")
        if self.paragraph_limit < 1:
            raise ValueError("paragraph_limit must be >= 1")


@dataclass(frozen=True)
class RawResponse:
    status_code: int
    content: bytes
    content_type: str = ""
    encoding: str | None = None


def url_digest(url: str) -> str:
    """Fixture filename for a URL: lowercase hex SHA-256 of the URL string."""
    return hashlib.sha256(url.encode("utf-8")).hexdigest()


class LiveTransport:
    """HTTPS fetches with certificate verification and bounded redirects."""

    def __init__(self, api_key: str | None = None):
        self.session = requests.Session()
        self.session.max_redirects = 5
        if api_key:
            self.session.headers["apiKey"] = api_key
        self.session.headers.setdefault("User-Agent", "vulnsum/0.1")

    def get(self, url: str, timeout: float) -> RawResponse:
        try:
            resp = self.session.get(url, timeout=timeout, verify=True)
        except requests.exceptions.SSLError as exc:
            raise TlsError(str(exc)) from exc
        except requests.exceptions.Timeout as exc:
            raise FetchTimeout(str(exc)) from exc
        except requests.exceptions.TooManyRedirects as exc:
            raise NetworkError(f"redirect limit exceeded: {exc}") from exc
        except requests.RequestException as exc:
            raise NetworkError(str(exc)) from exc
        media_type = resp.headers.get("Content-Type", "").split(";")[0]
        return RawResponse(
            status_code=resp.status_code,
            content=resp.content,
            content_type=media_type.strip().lower(),
            encoding=resp.encoding,
        )


class FixtureTransport:
    """Replays archived responses from a directory.

    Layout: one file per URL named by ``url_digest``, holding the raw body,
    plus ``index.json`` mapping each digest to its URL and status code.
    Optional index fields: ``content_type`` (default text/html) and
    ``error`` ("tls_invalid" or "timeout") to replay transport failures.
    """

    def __init__(self, root: str | Path):
        self.root = Path(root)
        index_path = self.root / "index.json"
        if not index_path.is_file():
            raise HarvestError(f"fixture index not found: {index_path}")
        self.index = json.loads(index_path.read_text(encoding="utf-8"))

    def get(self, url: str, timeout: float) -> RawResponse:
        digest = url_digest(url)
        entry = self.index.get(digest)
        if entry is None:
            raise NetworkError(f"no fixture for URL {url}")
        error = entry.get("error")
        if error == "tls_invalid":
            raise TlsError(f"fixture: invalid certificate for {url}")
        if error == "timeout":
            raise FetchTimeout(f"fixture: timeout for {url}")
        body_path = self.root / digest
        content = body_path.read_bytes() if body_path.is_file() else b""
        return RawResponse(
            status_code=int(entry.get("status", 200)),
            content=content,
            content_type=entry.get("content_type", "text/html"),
            encoding=entry.get("encoding"),
        )


class RateLimiter:
    """Serializes calls to at most ``rate`` per second across threads."""

    def __init__(self, rate: float):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.interval = 1.0 / rate
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        with self._lock:
            now = time.monotonic()
            wait = self._next_at - now
            self._next_at = max(now, self._next_at) + self.interval
        if wait > 0:
            time.sleep(wait)


class _ParagraphParser(HTMLParser):
    """Collects text of the first ``limit`` <p> elements in document order.

    Lenient by construction: paragraphs auto-close on a new <p> (HTML never
    nests them) and an unclosed trailing paragraph is flushed at EOF.
    Script/style content is excluded; nested markup flattens to its text.
    """

    def __init__(self, limit: int):
        super().__init__(convert_charrefs=True)
        self.limit = limit
        self.paragraphs: list[str] = []
        self._chunks: list[str] | None = None
        self._skip = 0
        self._done = False

    def handle_starttag(self, tag, attrs):
        if self._done:
            return
        if tag in ("script", "style"):
            self._skip += 1
        elif tag == "p":
            self._flush()
            if len(self.paragraphs) < self.limit:
                self._chunks = []
            else:
                self._done = True
        elif tag == "br" and self._chunks is not None:
            self._chunks.append(" ")

    def handle_endtag(self, tag):
        if tag in ("script", "style"):
            self._skip = max(0, self._skip - 1)
        elif tag == "p":
            self._flush()

    def handle_data(self, data):
        if self._chunks is not None and self._skip == 0:
            self._chunks.append(data)

    def _flush(self):
        if self._chunks is not None:
            self.paragraphs.append("".join(self._chunks).strip())
            self._chunks = None

    def close(self):
        super().close()
        self._flush()


def extract_paragraphs(html: str, limit: int) -> list[str]:
    """Text of the first ``limit`` paragraph elements, in document order.

    Never raises on malformed markup; an unparseable document yields [].
    """
    if limit < 1:
        raise ValueError("limit must be >= 1")
    parser = _ParagraphParser(limit)
    try:
        parser.feed(html)
        parser.close()
    except Exception:  # html.parser is lenient; belt and braces
        log.warning("paragraph extraction bailed out on malformed document")
    return parser.paragraphs[: limit]


def _decode(response: RawResponse) -> str:
    encoding = response.encoding or "utf-8"
    try:
        return response.content.decode(encoding, errors="replace")
    except LookupError:
        return response.content.decode("utf-8", errors="replace")


def fetch_reference(
    url: str, cfg: HarvestConfig, transport=None
) -> ReferenceDoc:
    """TLS-verified fetch of one reference page.

    Certificate failures, timeouts, HTTP errors and non-HTML content types
    are recorded in ``fetch_status`` with empty paragraphs; only transient
    failures (timeouts, connection errors, HTTP 5xx) are retried.
    """
    transport = transport or LiveTransport()
    response = None
    status = FetchStatus.HTTP_ERROR
    for attempt in range(cfg.retries):
        try:
            response = transport.get(url, timeout=cfg.request_timeout)
        except TlsError:
            return ReferenceDoc(url, FetchStatus.TLS_INVALID, ())
        except FetchTimeout:
            status = FetchStatus.TIMEOUT
            response = None
        except NetworkError:
            status = FetchStatus.HTTP_ERROR
            response = None
        if response is not None and response.status_code < 500:
            break
        if attempt + 1 < cfg.retries:
            time.sleep(cfg.retry_backoff * 2**attempt)
    if response is None:
        return ReferenceDoc(url, status, ())
    if response.status_code >= 400:
        return ReferenceDoc(url, FetchStatus.HTTP_ERROR, ())
    if response.content_type and response.content_type not in _HTML_TYPES:
        return ReferenceDoc(url, FetchStatus.NON_HTML, ())
    paragraphs = extract_paragraphs(_decode(response), cfg.paragraph_limit)
    return ReferenceDoc(url, FetchStatus.OK, tuple(paragraphs))


def api_page_url(
    cfg: HarvestConfig,
    window_start: dt.date,
    window_end: dt.date,
    start_index: int,
    api_base: str = DEFAULT_API_BASE,
) -> str:
    """Exact request URL for one API page; fixtures key off this string."""
    params = [
        ("pubStartDate", f"{window_start.isoformat()}T00:00:00.000"),
        ("pubEndDate", f"{window_end.isoformat()}T23:59:59.999"),
        ("resultsPerPage", str(cfg.results_per_page)),
        ("startIndex", str(start_index)),
    ]
    return f"{api_base}?{urllib.parse.urlencode(params)}"


def _windows(start: dt.date, end: dt.date) -> list[tuple[dt.date, dt.date]]:
    out = []
    cursor = start
    step = dt.timedelta(days=API_WINDOW_DAYS - 1)
    while cursor <= end:
        out.append((cursor, min(cursor + step, end)))
        cursor = cursor + step + dt.timedelta(days=1)
    return out


def _parse_record(item: dict) -> VulnRecord | None:
    try:
        cve = item["cve"]
        cve_id = cve["id"]
        if not CVE_ID_RE.match(cve_id):
            return None
        description = next(
            d["value"]
            for d in cve.get("descriptions", [])
            if d.get("lang") == "en" and d.get("value", "").strip()
        )
        references = tuple(r["url"] for r in cve.get("references", []))
        published = dt.date.fromisoformat(str(cve["published"])[:10])
    except (KeyError, TypeError, ValueError, StopIteration):
        return None
    return VulnRecord(cve_id, description, references, published)


def list_cves(
    cfg: HarvestConfig,
    transport=None,
    api_base: str = DEFAULT_API_BASE,
    checkpoint_path: str | Path | None = None,
    counters: dict | None = None,
) -> list[VulnRecord]:
    """Every CVE published in [date_start, date_end], in publication order.

    Paginates transparently (and splits wide date ranges into the windows
    the API accepts), deduplicates by CVE id, skips malformed records with
    a logged warning.  A network failure that survives the retry budget
    aborts the run; records gathered so far are checkpointed first.
    """
    transport = transport or LiveTransport(api_key=cfg.api_key)
    limiter = RateLimiter(cfg.rate_limit)
    by_id: dict[str, VulnRecord] = {}
    skipped = 0

    def fail(message: str) -> HarvestAborted:
        records = _ordered(by_id)
        checkpoint = None
        if checkpoint_path is not None:
            checkpoint = Path(checkpoint_path)
            write_records(records, checkpoint)
        return HarvestAborted(message, checkpoint, records)

    for window_start, window_end in _windows(cfg.date_start, cfg.date_end):
        start_index = 0
        while True:
            url = api_page_url(cfg, window_start, window_end, start_index, api_base)
            page = _fetch_api_page(url, cfg, transport, limiter)
            if isinstance(page, str):
                raise fail(page)
            total = int(page.get("totalResults", 0))
            items = page.get("vulnerabilities", [])
            for item in items:
                record = _parse_record(item)
                if record is None:
                    skipped += 1
                    log.warning("skipping malformed record in %s", url)
                    continue
                if not (cfg.date_start <= record.published <= cfg.date_end):
                    continue
                by_id.setdefault(record.cve_id, record)
            start_index += cfg.results_per_page
            if start_index >= total or not items:
                break
    if skipped:
        log.warning("skipped %d malformed records", skipped)
    if counters is not None:
        counters["skipped_records"] = skipped
    return _ordered(by_id)


def _ordered(by_id: dict[str, VulnRecord]) -> list[VulnRecord]:
    return sorted(by_id.values(), key=lambda r: (r.published, r.cve_id))


def _fetch_api_page(url, cfg, transport, limiter) -> dict | str:
    """One API page as parsed JSON, or an error message after retries."""
    last = "unknown error"
    for attempt in range(cfg.retries):
        limiter.acquire()
        try:
            response = transport.get(url, timeout=cfg.request_timeout)
        except (TlsError, FetchTimeout, NetworkError) as exc:
            last = f"{url}: {exc}"
            response = None
        if response is not None:
            if response.status_code == 200:
                try:
                    return json.loads(_decode(response))
                except json.JSONDecodeError as exc:
                    last = f"{url}: invalid JSON ({exc})"
            else:
                last = f"{url}: HTTP {response.status_code}"
                if 400 <= response.status_code < 500:
                    break
        if attempt + 1 < cfg.retries:
            time.sleep(cfg.retry_backoff * 2**attempt)
    return f"database API failure after {cfg.retries} attempts: {last}"


def scrape_references(
    records: list[VulnRecord], cfg: HarvestConfig, transport=None
) -> dict[str, list[ReferenceDoc]]:
    """Fetch every reference of every record; map cve_id -> docs in order.

    Fetches run on a bounded worker pool; each distinct URL is fetched
    once.  Output order follows the input records and their URL order, not
    completion order.
    """
    transport = transport or LiveTransport()
    unique_urls: list[str] = []
    seen: set[str] = set()
    for record in records:
        for url in record.references:
            if url not in seen:
                seen.add(url)
                unique_urls.append(url)

    fetched: dict[str, ReferenceDoc] = {}
    if unique_urls:
        workers = max(1, min(cfg.max_parallel_fetches, len(unique_urls)))
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            for doc in pool.map(
                lambda u: fetch_reference(u, cfg, transport), unique_urls
            ):
                fetched[doc.source_url] = doc

    return {
        record.cve_id: [fetched[url] for url in record.references]
        for record in records
    }


# ---------------------------------------------------------------------------
# Persistence: harvest output and scrape output are JSONL, one line per CVE.

def record_to_json(record: VulnRecord) -> dict:
    return {
        "cve_id": record.cve_id,
        "description": record.description,
        "references": list(record.references),
        "published": record.published.isoformat(),
    }


def record_from_json(obj: dict) -> VulnRecord:
    try:
        return VulnRecord(
            cve_id=obj["cve_id"],
            description=obj["description"],
            references=tuple(obj["references"]),
            published=dt.date.fromisoformat(obj["published"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordFormatError(f"bad record field: {exc}") from exc


def write_records(records: list[VulnRecord], path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record_to_json(record), sort_keys=True))
            fh.write("\n")


def read_records(path: str | Path) -> list[VulnRecord]:
    records = []
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(record_from_json(json.loads(line)))
            except (json.JSONDecodeError, RecordFormatError) as exc:
                raise RecordFormatError(
                    f"{path}:{lineno}: {exc}"
                ) from exc
    return records


def docs_to_json(cve_id: str, docs: list[ReferenceDoc]) -> dict:
    return {
        "cve_id": cve_id,
        "docs": [
            {
                "url": d.source_url,
                "status": d.fetch_status.value,
                "paragraphs": list(d.paragraphs),
            }
            for d in docs
        ],
    }


def docs_from_json(obj: dict) -> tuple[str, list[ReferenceDoc]]:
    try:
        docs = [
            ReferenceDoc(
                source_url=d["url"],
                fetch_status=FetchStatus(d["status"]),
                paragraphs=tuple(d["paragraphs"]),
            )
            for d in obj["docs"]
        ]
        return obj["cve_id"], docs
    except (KeyError, TypeError, ValueError) as exc:
        raise RecordFormatError(f"bad reference-doc field: {exc}") from exc


def write_reference_docs(
    docs_by_cve: dict[str, list[ReferenceDoc]], path: str | Path
) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for cve_id in docs_by_cve:
            fh.write(
                json.dumps(docs_to_json(cve_id, docs_by_cve[cve_id]), sort_keys=True)
            )
            fh.write("\n")


def read_reference_docs(path: str | Path) -> dict[str, list[ReferenceDoc]]:
    out: dict[str, list[ReferenceDoc]] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                cve_id, docs = docs_from_json(json.loads(line))
            except (json.JSONDecodeError, RecordFormatError) as exc:
                raise RecordFormatError(f"{path}:{lineno}: {exc}") from exc
            out[cve_id] = docs
    return out
