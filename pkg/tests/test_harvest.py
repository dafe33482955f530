import datetime as dt
import json
import ssl
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from vulnsum import harvest
from vulnsum.harvest import (
    FetchStatus,
    FixtureTransport,
    HarvestAborted,
    HarvestConfig,
    RecordFormatError,
    ReferenceDoc,
    VulnRecord,
    extract_paragraphs,
    fetch_reference,
    list_cves,
)
from fixture_data import (
    PAGED_CVES,
    PAGES_END,
    PAGES_START,
    _api_item,
    build_fixture_dir,
)


def paged_cfg(**overrides) -> HarvestConfig:
    defaults = dict(
        date_start=PAGES_START,
        date_end=PAGES_END,
        results_per_page=2,
        rate_limit=1000.0,
        retry_backoff=0.01,
    )
    defaults.update(overrides)
    return HarvestConfig(**defaults)


class TestExtractParagraphs:
    def test_two_paragraphs(self):
        assert extract_paragraphs("<p>a</p><p>b</p>", 100) == ["a", "b"]

    def test_limit_truncates_in_order(self):
        html = "".join(f"<p>para {i}</p>" for i in range(120))
        out = extract_paragraphs(html, 100)
        assert len(out) == 100
        assert out == [f"para {i}" for i in range(100)]

    def test_paragraph_cap_on_250_tag_page(self):
        html = "".join(f"<p>p{i}</p>" for i in range(250))
        assert len(extract_paragraphs(html, 100)) == 100

    def test_document_order_with_sentinels(self):
        html = "<div>" + "".join(
            f"<section><p>{i}</p></section>" for i in range(30)
        ) + "</div>"
        assert extract_paragraphs(html, 100) == [str(i) for i in range(30)]

    def test_no_paragraph_tags(self):
        assert extract_paragraphs("<div>just a div</div>", 100) == []

    def test_malformed_unclosed_tags_hand_flattened(self):
        # p elements auto-close on the next <p>; inline markup flattens;
        # entities decode; the trailing unclosed paragraph flushes at EOF
        html = "<p>First <b>bold</b> text<p>Second unclosed<div><p>Third &amp; last"
        assert extract_paragraphs(html, 100) == [
            "First bold text",
            "Second unclosed",
            "Third & last",
        ]

    def test_script_and_style_content_excluded(self):
        html = "<p>visible <script>var hidden = 1;</script>rest</p>"
        assert extract_paragraphs(html, 100) == ["visible rest"]

    def test_br_becomes_space(self):
        assert extract_paragraphs("<p>one<br>two</p>", 100) == ["one two"]

    def test_garbage_input_returns_list(self):
        assert extract_paragraphs("\x00<<<>>>p<p", 100) in ([], [""])

    def test_empty_paragraph_counts_as_element(self):
        assert extract_paragraphs("<p></p><p>x</p>", 1) == [""]


class TestFetchReference:
    def _transport_for(self, tmp_path, entry, body=""):
        url = entry["url"]
        digest = harvest.url_digest(url)
        (tmp_path / digest).write_text(body, encoding="utf-8")
        index = {digest: {k: v for k, v in entry.items()}}
        (tmp_path / "index.json").write_text(json.dumps(index))
        return FixtureTransport(tmp_path)

    def test_ok_paragraphs(self, tmp_path):
        url = "https://ok.example/advisory"
        transport = self._transport_for(
            tmp_path, {"url": url, "status": 200}, "<p>alpha</p><p>beta</p>"
        )
        doc = fetch_reference(url, paged_cfg(), transport)
        assert doc.fetch_status is FetchStatus.OK
        assert doc.paragraphs == ("alpha", "beta")

    def test_paragraph_limit_respected(self, tmp_path):
        url = "https://big.example/page"
        body = "".join(f"<p>{i}</p>" for i in range(250))
        transport = self._transport_for(tmp_path, {"url": url, "status": 200}, body)
        doc = fetch_reference(url, paged_cfg(paragraph_limit=100), transport)
        assert len(doc.paragraphs) == 100

    def test_zero_paragraphs_still_ok(self, tmp_path):
        url = "https://empty.example/page"
        transport = self._transport_for(
            tmp_path, {"url": url, "status": 200}, "<html><body>nope</body></html>"
        )
        doc = fetch_reference(url, paged_cfg(), transport)
        assert doc.fetch_status is FetchStatus.OK
        assert doc.paragraphs == ()

    def test_tls_invalid_excluded_not_fatal(self, tmp_path):
        url = "https://bad-cert.example/x"
        transport = self._transport_for(tmp_path, {"url": url, "error": "tls_invalid"})
        doc = fetch_reference(url, paged_cfg(), transport)
        assert doc.fetch_status is FetchStatus.TLS_INVALID
        assert doc.paragraphs == ()

    def test_timeout_status(self, tmp_path):
        url = "https://slow.example/x"
        transport = self._transport_for(tmp_path, {"url": url, "error": "timeout"})
        doc = fetch_reference(url, paged_cfg(), transport)
        assert doc.fetch_status is FetchStatus.TIMEOUT

    def test_http_error_status(self, tmp_path):
        url = "https://gone.example/x"
        transport = self._transport_for(tmp_path, {"url": url, "status": 404}, "gone")
        doc = fetch_reference(url, paged_cfg(), transport)
        assert doc.fetch_status is FetchStatus.HTTP_ERROR

    def test_non_html_content_type(self, tmp_path):
        url = "https://files.example/doc.pdf"
        transport = self._transport_for(
            tmp_path,
            {"url": url, "status": 200, "content_type": "application/pdf"},
            "%PDF-1.4",
        )
        doc = fetch_reference(url, paged_cfg(), transport)
        assert doc.fetch_status is FetchStatus.NON_HTML
        assert doc.paragraphs == ()


@pytest.fixture(scope="module")
def self_signed_https_server(tmp_path_factory):
    cryptography = pytest.importorskip("cryptography")
    import datetime as dtm

    from cryptography import x509
    from cryptography.hazmat.primitives import hashes, serialization
    from cryptography.hazmat.primitives.asymmetric import rsa
    from cryptography.x509.oid import NameOID

    key = rsa.generate_private_key(public_exponent=65537, key_size=2048)
    name = x509.Name([x509.NameAttribute(NameOID.COMMON_NAME, "127.0.0.1")])
    now = dtm.datetime.now(dtm.timezone.utc)
    cert = (
        x509.CertificateBuilder()
        .subject_name(name)
        .issuer_name(name)
        .public_key(key.public_key())
        .serial_number(x509.random_serial_number())
        .not_valid_before(now - dtm.timedelta(days=1))
        .not_valid_after(now + dtm.timedelta(days=1))
        .sign(key, hashes.SHA256())
    )
    certdir = tmp_path_factory.mktemp("tls")
    cert_path = certdir / "cert.pem"
    key_path = certdir / "key.pem"
    cert_path.write_bytes(cert.public_bytes(serialization.Encoding.PEM))
    key_path.write_bytes(
        key.private_bytes(
            serialization.Encoding.PEM,
            serialization.PrivateFormat.TraditionalOpenSSL,
            serialization.NoEncryption(),
        )
    )

    class Handler(BaseHTTPRequestHandler):
        def do_GET(self):
            body = b"<p>served over self-signed TLS with enough words</p>"
            self.send_response(200)
            self.send_header("Content-Type", "text/html")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def log_message(self, *args):
            pass

    server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
    ctx = ssl.SSLContext(ssl.PROTOCOL_TLS_SERVER)
    ctx.load_cert_chain(str(cert_path), str(key_path))
    server.socket = ctx.wrap_socket(server.socket, server_side=True)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"https://127.0.0.1:{server.server_address[1]}/page"
    server.shutdown()
    server.server_close()


class TestLiveTls:
    def test_self_signed_certificate_rejected(self, self_signed_https_server):
        cfg = paged_cfg(request_timeout=5.0)
        doc = fetch_reference(self_signed_https_server, cfg)
        assert doc.fetch_status is FetchStatus.TLS_INVALID
        assert doc.paragraphs == ()


class TestListCves:
    def test_three_page_fixture_five_records_in_publication_order(
        self, paged_fixture_dir
    ):
        records = list_cves(paged_cfg(), FixtureTransport(paged_fixture_dir))
        assert [r.cve_id for r in records] == [
            f"CVE-2020-2200{i}" for i in range(1, 6)
        ]
        assert [r.published.isoformat() for r in records] == [
            f"2020-07-0{i}" for i in range(1, 6)
        ]
        assert all(r.description for r in records)

    def test_deterministic_serialization_across_runs(
        self, paged_fixture_dir, tmp_path
    ):
        transport = FixtureTransport(paged_fixture_dir)
        for run in (1, 2):
            records = list_cves(paged_cfg(), transport)
            harvest.write_records(records, tmp_path / f"run{run}.jsonl")
        assert (tmp_path / "run1.jsonl").read_bytes() == (
            tmp_path / "run2.jsonl"
        ).read_bytes()

    def test_empty_range(self, tmp_path):
        day = dt.date(2020, 1, 1)
        cfg = HarvestConfig(day, day, results_per_page=2, rate_limit=1000.0)
        root = build_fixture_dir(tmp_path / "empty", [], cfg)
        assert list_cves(cfg, FixtureTransport(root)) == []

    def test_duplicates_removed(self, tmp_path):
        cfg = paged_cfg()
        extra = [_api_item(PAGED_CVES[0])]  # same id appears twice
        root = build_fixture_dir(tmp_path / "dup", PAGED_CVES, cfg, extra_items=extra)
        records = list_cves(cfg, FixtureTransport(root))
        assert len(records) == len(PAGED_CVES)

    def test_malformed_records_skipped_and_counted(self, tmp_path):
        cfg = paged_cfg()
        extra = [
            {"cve": {"id": "not-a-cve-id", "published": "2020-07-02T00:00:00"}},
            {"unexpected": "shape"},
        ]
        root = build_fixture_dir(tmp_path / "bad", PAGED_CVES, cfg, extra_items=extra)
        counters = {}
        records = list_cves(cfg, FixtureTransport(root), counters=counters)
        assert len(records) == len(PAGED_CVES)
        assert counters["skipped_records"] == 2

    def test_out_of_range_dates_filtered(self, tmp_path):
        cfg = paged_cfg()
        stray = {
            "cve_id": "CVE-2019-1111",
            "published": "2019-01-01",
            "description": "too old to belong to the requested range at all",
            "refs": [],
        }
        root = build_fixture_dir(
            tmp_path / "range", PAGED_CVES, cfg, extra_items=[_api_item(stray)]
        )
        records = list_cves(cfg, FixtureTransport(root))
        assert all(r.published >= PAGES_START for r in records)
        assert len(records) == len(PAGED_CVES)

    def test_network_failure_aborts_with_checkpoint(self, tmp_path, paged_fixture_dir):
        cfg = paged_cfg()
        # remove the second API page from the index: transport now fails there
        index_path = paged_fixture_dir / "index.json"
        index = json.loads(index_path.read_text())
        second_page = harvest.api_page_url(cfg, PAGES_START, PAGES_END, 2)
        broken = dict(index)
        broken.pop(harvest.url_digest(second_page))
        broken_dir = tmp_path / "broken"
        broken_dir.mkdir()
        for digest in broken:
            (broken_dir / digest).write_bytes((paged_fixture_dir / digest).read_bytes())
        (broken_dir / "index.json").write_text(json.dumps(broken))

        checkpoint = tmp_path / "partial.jsonl"
        with pytest.raises(HarvestAborted) as err:
            list_cves(
                cfg, FixtureTransport(broken_dir), checkpoint_path=checkpoint
            )
        assert err.value.checkpoint == checkpoint
        assert checkpoint.is_file()
        partial = harvest.read_records(checkpoint)
        assert [r.cve_id for r in partial] == ["CVE-2020-22001", "CVE-2020-22002"]


class TestScrapeReferences:
    def test_statuses_and_order(self, e2e_fixture_dir, e2e_records_and_docs):
        records, docs_by_cve = e2e_records_and_docs
        assert set(docs_by_cve) == {r.cve_id for r in records}
        for record in records:
            docs = docs_by_cve[record.cve_id]
            assert [d.source_url for d in docs] == list(record.references)

    def test_limit_invariant(self, e2e_records_and_docs):
        _, docs_by_cve = e2e_records_and_docs
        for docs in docs_by_cve.values():
            for doc in docs:
                assert len(doc.paragraphs) <= 100
                if doc.fetch_status is not FetchStatus.OK:
                    assert doc.paragraphs == ()


class TestPersistence:
    def test_records_round_trip(self, tmp_path):
        records = [
            VulnRecord(
                "CVE-2021-1", "desc one", ("https://a.example/x",), dt.date(2021, 1, 2)
            ),
            VulnRecord("CVE-2021-2", "desc two", (), dt.date(2021, 1, 3)),
        ]
        path = tmp_path / "records.jsonl"
        harvest.write_records(records, path)
        assert harvest.read_records(path) == records

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "records.jsonl"
        path.write_text('{"cve_id": "CVE-2021-1"}\n', encoding="utf-8")
        with pytest.raises(RecordFormatError, match=":1"):
            harvest.read_records(path)

    def test_reference_docs_round_trip(self, tmp_path):
        docs = {
            "CVE-2021-1": [
                ReferenceDoc("https://a.example/x", FetchStatus.OK, ("p1", "p2")),
                ReferenceDoc("https://b.example/y", FetchStatus.TIMEOUT, ()),
            ]
        }
        path = tmp_path / "docs.jsonl"
        harvest.write_reference_docs(docs, path)
        assert harvest.read_reference_docs(path) == docs


class TestConfigValidation:
    def test_date_order(self):
        with pytest.raises(ValueError):
            HarvestConfig(dt.date(2021, 2, 1), dt.date(2021, 1, 1))

    def test_paragraph_limit_positive(self):
        with pytest.raises(ValueError):
            HarvestConfig(
                dt.date(2021, 1, 1), dt.date(2021, 1, 2), paragraph_limit=0
            )


class TestWindows:
    def test_wide_ranges_chunked(self):
        windows = harvest._windows(dt.date(2019, 1, 1), dt.date(2019, 12, 31))
        assert len(windows) == 4
        assert windows[0][0] == dt.date(2019, 1, 1)
        assert windows[-1][1] == dt.date(2019, 12, 31)
        for (s1, e1), (s2, _) in zip(windows, windows[1:]):
            assert (e1 - s1).days <= 119
            assert (s2 - e1).days == 1
