import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from dragkit.intent import (
    IntentClientConfig,
    IntentConfigError,
    IntentParseError,
    IntentRequest,
    IntentResult,
    IntentServiceError,
    IntentTimeout,
    build_prompt,
    parse_response,
    request_intent,
)
from dragkit.schedule import TaskKind

from .conftest import FIXTURES

PNG_1PX = bytes.fromhex(
    "89504e470d0a1a0a0000000d49484452000000010000000108000000003a7e9b55"
    "0000000a49444154789c636000000002000148afa4710000000049454e44ae426082"
)


# --- prompt ---------------------------------------------------------------------


def test_prompt_contains_protocol_sentences():
    text = build_prompt()
    assert "ten most possible guesses" in text
    assert "{relocation, deformation, rotation}" in text
    assert "blue starting region" in text
    assert "estimated green target region" in text
    assert "- (a)" in text and "- (b)" in text
    assert len(text) > 400


def test_prompt_deterministic_with_meta():
    meta = {"background_prompt": "a beach", "region_count": 2}
    assert build_prompt(meta) == build_prompt(meta)
    assert "a beach" in build_prompt(meta)


# --- response parsing --------------------------------------------------------------


@pytest.mark.parametrize(
    "fixture,label,count",
    [
        ("response_rotation.txt", TaskKind.ROTATION, 10),
        ("response_relocation.txt", TaskKind.RELOCATION, 3),
        ("response_deformation.txt", TaskKind.DEFORMATION, 4),
    ],
)
def test_fixture_responses_parse(fixture, label, count):
    text = (FIXTURES / "intent" / fixture).read_text()
    result = parse_response(text)
    assert result.label is label
    assert len(result.candidates) == count
    assert result.truncated == ()


def test_invalid_label_named():
    with pytest.raises(IntentParseError) as exc:
        parse_response("Label: scaling\n1. something")
    assert "scaling" in str(exc.value)


def test_no_label_attaches_raw_text():
    raw = "1. no label anywhere in sight"
    with pytest.raises(IntentParseError) as exc:
        parse_response(raw)
    assert raw in str(exc.value)


def test_overlong_candidate_truncated_with_flag():
    words = " ".join(f"w{i}" for i in range(80))
    result = parse_response(f"Label: rotation\n1. {words}\n2. short one")
    assert len(result.candidates[0].split()) == 60
    assert result.truncated == (0,)


def test_more_than_ten_candidates_capped():
    lines = "\n".join(f"{i}. guess number {i}" for i in range(1, 14))
    result = parse_response(f"Label: deformation\n{lines}")
    assert len(result.candidates) == 10


def test_result_bounds():
    with pytest.raises(Exception):
        IntentResult(label=TaskKind.ROTATION, candidates=())


# --- mock-server integration ----------------------------------------------------------


class MockHandler(BaseHTTPRequestHandler):
    script: list = []  # (status, payload) pairs consumed per request
    requests: list = []

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        MockHandler.requests.append(json.loads(self.rfile.read(length)))
        status, payload = MockHandler.script.pop(0)
        body = json.dumps(payload).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def mock_server():
    server = HTTPServer(("127.0.0.1", 0), MockHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    MockHandler.script = []
    MockHandler.requests = []
    yield f"http://127.0.0.1:{server.server_port}/v1/chat/completions"
    server.shutdown()


def completion(text: str) -> dict:
    return {"choices": [{"message": {"content": text}}]}


def make_request() -> IntentRequest:
    return IntentRequest(
        original_image=PNG_1PX, overlay_image=PNG_1PX, prompt=build_prompt()
    )


def client_config(url: str) -> IntentClientConfig:
    return IntentClientConfig(
        endpoint_url=url, timeout_s=5.0, retry_jitter_s=(0.0, 0.01)
    )


def test_success_path(mock_server, monkeypatch):
    monkeypatch.setenv("DRAGKIT_INTENT_API_KEY", "test-key")
    fixture = (FIXTURES / "intent" / "response_rotation.txt").read_text()
    MockHandler.script = [(200, completion(fixture))]
    result = request_intent(client_config(mock_server), make_request())
    assert result.label is TaskKind.ROTATION
    assert len(result.candidates) == 10
    sent = MockHandler.requests[0]
    assert sent["messages"][0]["content"][0]["text"].startswith("Refer to the original")
    assert sent["messages"][0]["content"][1]["image_url"]["url"].startswith(
        "data:image/png;base64,"
    )


def test_500_retried_once_then_succeeds(mock_server, monkeypatch):
    monkeypatch.setenv("DRAGKIT_INTENT_API_KEY", "test-key")
    fixture = (FIXTURES / "intent" / "response_relocation.txt").read_text()
    MockHandler.script = [(500, {"error": "flaky"}), (200, completion(fixture))]
    result = request_intent(client_config(mock_server), make_request())
    assert result.label is TaskKind.RELOCATION
    assert len(MockHandler.requests) == 2


def test_persistent_500_surfaces_service_error(mock_server, monkeypatch):
    monkeypatch.setenv("DRAGKIT_INTENT_API_KEY", "test-key")
    MockHandler.script = [(500, {"error": "down"}), (500, {"error": "down"})]
    with pytest.raises(IntentServiceError) as exc:
        request_intent(client_config(mock_server), make_request())
    assert exc.value.status == 500
    assert len(MockHandler.requests) == 2


def test_4xx_not_retried(mock_server, monkeypatch):
    monkeypatch.setenv("DRAGKIT_INTENT_API_KEY", "test-key")
    MockHandler.script = [(403, {"error": "denied"})]
    with pytest.raises(IntentServiceError) as exc:
        request_intent(client_config(mock_server), make_request())
    assert exc.value.status == 403
    assert len(MockHandler.requests) == 1


def test_parse_error_distinguishable(mock_server, monkeypatch):
    monkeypatch.setenv("DRAGKIT_INTENT_API_KEY", "test-key")
    MockHandler.script = [(200, completion("no label, no list"))]
    with pytest.raises(IntentParseError):
        request_intent(client_config(mock_server), make_request())


def test_timeout_distinguishable(monkeypatch):
    monkeypatch.setenv("DRAGKIT_INTENT_API_KEY", "test-key")
    # unroutable address: connection attempt exceeds the tiny timeout
    config = IntentClientConfig(
        endpoint_url="http://10.255.255.1:9/v1/chat/completions",
        timeout_s=0.2,
        retry_jitter_s=(0.0, 0.01),
    )
    with pytest.raises((IntentTimeout, IntentServiceError)):
        request_intent(config, make_request())


def test_missing_api_key_fails_before_network(monkeypatch):
    monkeypatch.delenv("DRAGKIT_INTENT_API_KEY", raising=False)
    config = IntentClientConfig(endpoint_url="http://127.0.0.1:1/never")
    with pytest.raises(IntentConfigError):
        request_intent(config, make_request())


def test_optimizer_and_metrics_never_import_this_module():
    import sys

    for name in list(sys.modules):
        if name.startswith("dragkit"):
            del sys.modules[name]
    import dragkit.engine  # noqa: F401
    import dragkit.metrics  # noqa: F401

    assert "dragkit.intent" not in sys.modules
