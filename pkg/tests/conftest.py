import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

import pytest

from vulnsum import harvest, semgate
from fixture_data import (
    E2E_CVES,
    E2E_END,
    E2E_START,
    PAGED_CVES,
    PAGES_END,
    PAGES_START,
    build_fixture_dir,
)

GOLDEN_DIR = Path(__file__).parent / "golden"

# Seeds must match the CLI's frozen deterministic-provider seeds.
DET_SEEDS = {"use": 11, "mpnet": 23}


def make_det_providers() -> dict[str, semgate.EmbeddingProvider]:
    return {
        name: semgate.DeterministicProvider(name, seed)
        for name, seed in DET_SEEDS.items()
    }


@pytest.fixture()
def det_providers():
    return make_det_providers()


def e2e_harvest_config(**overrides) -> harvest.HarvestConfig:
    defaults = dict(
        date_start=E2E_START,
        date_end=E2E_END,
        rate_limit=1000.0,
        retry_backoff=0.01,
    )
    defaults.update(overrides)
    return harvest.HarvestConfig(**defaults)


@pytest.fixture(scope="session")
def e2e_fixture_dir(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("fixtures") / "e2e10"
    return build_fixture_dir(root, E2E_CVES, e2e_harvest_config())


@pytest.fixture(scope="session")
def paged_fixture_dir(tmp_path_factory) -> Path:
    cfg = harvest.HarvestConfig(
        PAGES_START, PAGES_END, results_per_page=2, rate_limit=1000.0
    )
    root = tmp_path_factory.mktemp("fixtures") / "paged5"
    return build_fixture_dir(root, PAGED_CVES, cfg)


@pytest.fixture(scope="session")
def e2e_records_and_docs(e2e_fixture_dir):
    cfg = e2e_harvest_config()
    transport = harvest.FixtureTransport(e2e_fixture_dir)
    records = harvest.list_cves(cfg, transport)
    docs = harvest.scrape_references(records, cfg, transport)
    return records, docs


# ---------------------------------------------------------------------------
# Tiny configurable HTTP stub for wire-protocol client tests.

class _StubHandler(BaseHTTPRequestHandler):
    stub = None  # set on the subclass per server

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        body = json.loads(self.rfile.read(length) or b"{}")
        self.stub.requests.append((self.path, body))
        handler = self.stub.routes.get(self.path)
        if handler is None:
            status, payload = 404, {"error": "no route"}
        else:
            status, payload = handler(body)
        data = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


class HttpStub:
    """In-process HTTP server; routes map path -> fn(body) -> (status, dict)."""

    def __init__(self):
        self.routes = {}
        self.requests: list[tuple[str, dict]] = []
        handler = type("Handler", (_StubHandler,), {"stub": self})
        self.server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self) -> str:
        host, port = self.server.server_address[:2]
        return f"http://{host}:{port}"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


@pytest.fixture()
def http_stub():
    stub = HttpStub()
    yield stub
    stub.close()


# ---------------------------------------------------------------------------
# One visible pass/fail line per acceptance criterion.

def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    print(f"\nACCEPTANCE {name}: {'PASS' if report.passed else 'FAIL'}")
