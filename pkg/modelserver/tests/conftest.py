import random
import socket
import threading
import time

import pytest

from modelserver import models, tokenization, training
from modelserver.corpus import CorpusSample
from modelserver.service import ModelBundle, ServerState, create_app, load_bundle

PRODUCTS = [
    "Acme WebServer", "Nimbus CMS", "RouterOS", "PixelView", "MailGate",
    "DataBridge", "CloudKey", "CacheWorks", "OrionDB", "SmartMeter",
]
FLAWS = [
    "buffer overflow", "sql injection", "stored cross site scripting",
    "use after free", "path traversal", "race condition",
    "integer overflow", "deserialization flaw",
]
IMPACTS = [
    "remote code execution", "denial of service",
    "information disclosure", "privilege escalation",
]
VECTORS = [
    "crafted request", "malformed header", "special payload",
    "malicious upload", "oversized descriptor",
]


def synthetic_samples(n: int, seed: int = 7) -> list[CorpusSample]:
    rng = random.Random(seed)
    samples = []
    for i in range(n):
        product = rng.choice(PRODUCTS)
        flaw = rng.choice(FLAWS)
        impact = rng.choice(IMPACTS)
        vector = rng.choice(VECTORS)
        target = f"A {flaw} in {product} allows {impact} via a {vector}."
        extra = (
            f"Researchers confirmed the {flaw} affects {product} builds "
            f"before the current release. Attackers can reach {impact} by "
            f"sending a {vector} to the exposed service. Administrators "
            f"should apply the vendor update and monitor for unusual "
            f"activity across deployments."
        )
        samples.append(
            CorpusSample(
                cve_id=f"CVE-2021-{40000 + i}",
                input_text=target + " " + extra,
                target_summary=target,
            )
        )
    return samples


@pytest.fixture(scope="session")
def train_samples():
    return synthetic_samples(150, seed=7)


@pytest.fixture(scope="session")
def val_samples():
    return synthetic_samples(20, seed=99)


@pytest.fixture(scope="session")
def shared_tokenizer(train_samples):
    texts = [s.input_text for s in train_samples]
    texts += [s.target_summary for s in train_samples]
    texts.append(models.T5_TASK_PREFIX.strip())
    return tokenization.build_tokenizer(texts, vocab_size=800)


def _checkpoint(tmp_path_factory, family, tokenizer):
    out = tmp_path_factory.mktemp("checkpoints") / family
    model = models.build_model(family, vocab_size=len(tokenizer), seed=5)
    models.save_checkpoint(model, tokenizer, out)
    return out


@pytest.fixture(scope="session")
def bart_checkpoint(tmp_path_factory, shared_tokenizer):
    return _checkpoint(tmp_path_factory, "bart-like", shared_tokenizer)


@pytest.fixture(scope="session")
def t5_checkpoint(tmp_path_factory, shared_tokenizer):
    return _checkpoint(tmp_path_factory, "t5-like", shared_tokenizer)


@pytest.fixture(scope="session")
def tiny_config():
    return training.TrainConfig(epochs=1, batch_size=8, seed=3)


@pytest.fixture(scope="session")
def tuned_bart(tmp_path_factory, train_samples, val_samples, bart_checkpoint,
               tiny_config):
    out = tmp_path_factory.mktemp("tuned") / "bart"
    report = training.fine_tune(
        train_samples, val_samples, bart_checkpoint, tiny_config, out_dir=out,
        model_id="bart-like-tiny",
    )
    return out, report


@pytest.fixture(scope="session")
def tuned_t5(tmp_path_factory, train_samples, val_samples, t5_checkpoint,
             tiny_config):
    out = tmp_path_factory.mktemp("tuned") / "t5"
    report = training.fine_tune(
        train_samples, val_samples, t5_checkpoint, tiny_config, out_dir=out,
        model_id="t5-like-tiny",
    )
    return out, report


def start_server(app):
    import uvicorn

    sock = socket.socket()
    sock.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    sock.close()
    config = uvicorn.Config(app, host="127.0.0.1", port=port, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.monotonic() + 20
    while not server.started:
        if time.monotonic() > deadline:
            raise RuntimeError("uvicorn did not start in time")
        time.sleep(0.05)
    return server, thread, f"http://127.0.0.1:{port}"


@pytest.fixture(scope="session")
def served_url(tuned_bart):
    model_dir, _ = tuned_bart
    state = ServerState(bundle=load_bundle(model_dir))
    server, thread, url = start_server(create_app(state))
    yield url
    server.should_exit = True
    thread.join(timeout=10)


@pytest.fixture(scope="session")
def unloaded_url():
    server, thread, url = start_server(create_app(ServerState(bundle=None)))
    yield url
    server.should_exit = True
    thread.join(timeout=10)
