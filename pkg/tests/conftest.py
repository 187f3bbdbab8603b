import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest

from fedseqrec.embed_service import StubProvider, embed_items, stub_embed
from fedseqrec.ingest import synth_dataset


@pytest.fixture(scope="session")
def small_dataset():
    return synth_dataset(40, 30, 3.0, seed=7)


@pytest.fixture(scope="session")
def small_llm(small_dataset):
    return embed_items(small_dataset.catalog, StubProvider(16, 0))


class EmbedServer:
    """In-process ``/v1/embed`` server backed by the stub embedder.

    ``fail_first`` requests answer 503; ``mode`` can force malformed replies.
    """

    def __init__(self, dim=8, fail_first=0, mode="ok"):
        self.dim = dim
        self.fail_first = fail_first
        self.mode = mode
        self.requests = []
        server = self

        class Handler(BaseHTTPRequestHandler):
            def log_message(self, *args):
                pass

            def do_POST(self):
                body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
                server.requests.append((self.path, body))
                if len(server.requests) <= server.fail_first:
                    self.send_response(503)
                    self.end_headers()
                    return
                texts = body["texts"]
                vecs = [stub_embed(t, server.dim).tolist() for t in texts]
                if server.mode == "short":
                    vecs = vecs[:-1]
                elif server.mode == "garbage":
                    vecs = "nope"
                elif server.mode == "growing":
                    d = server.dim + len(server.requests)
                    vecs = [stub_embed(t, d).tolist() for t in texts]
                payload = json.dumps({"embeddings": vecs}).encode()
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

        self.httpd = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)

    @property
    def url(self):
        host, port = self.httpd.server_address
        return f"http://{host}:{port}"

    def __enter__(self):
        self.thread.start()
        return self

    def __exit__(self, *exc):
        self.httpd.shutdown()
        self.httpd.server_close()


@pytest.fixture
def embed_server():
    return EmbedServer


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance reporting ------------------------------------------------------
# Acceptance tests attach ("criterion", label) and ("detail", text) to their
# node; the terminal summary prints one PASS/FAIL line per criterion.

_ACCEPTANCE = []


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = "PASS" if report.outcome == "passed" else "FAIL"
        _ACCEPTANCE.append((props["criterion"], status, props.get("detail", "")))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, status, detail in sorted(_ACCEPTANCE, key=lambda r: int(r[0].split()[0][2:])):
        terminalreporter.write_line(f"{status} {label}: {detail}")
