import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from promptveil.errors import EvaluationAborted, TransportError, UnparseableJudgment
from promptveil.evaluation import (
    DEFAULT_TEMPLATES,
    CallableChatClient,
    ChatClient,
    TaskTemplate,
    judge_quality,
    run_task,
)


class ScriptedEndpoint:
    """A real HTTP server that captures requests and replays scripted replies."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.requests = []
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):
                length = int(self.headers["Content-Length"])
                body = json.loads(self.rfile.read(length))
                outer.requests.append({"body": body, "headers": dict(self.headers)})
                status, payload = outer.replies.pop(0) if outer.replies else (200, {})
                data = json.dumps(payload).encode()
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        self.server = HTTPServer(("127.0.0.1", 0), Handler)
        self.thread = threading.Thread(target=self.server.serve_forever, daemon=True)
        self.thread.start()

    @property
    def url(self):
        return f"http://127.0.0.1:{self.server.server_port}/v1/chat/completions"

    def close(self):
        self.server.shutdown()
        self.server.server_close()


def completion(content):
    return {"choices": [{"message": {"content": content}}]}


@pytest.fixture(autouse=True)
def fast_retries(monkeypatch):
    monkeypatch.setattr("promptveil.evaluation.time.sleep", lambda s: None)


class TestChatClientWireFormat:
    def test_request_and_response_shape(self, monkeypatch):
        endpoint = ScriptedEndpoint([(200, completion("Positive"))])
        monkeypatch.setenv("CHAT_API_KEY", "sk-test-123")
        try:
            client = ChatClient(base_url=endpoint.url, model="remote-model")
            answer = client.complete("be terse", "classify this")
            assert answer == "Positive"

            body = endpoint.requests[0]["body"]
            assert body["model"] == "remote-model"
            assert body["temperature"] == 0.0
            assert body["messages"] == [
                {"role": "system", "content": "be terse"},
                {"role": "user", "content": "classify this"},
            ]
            auth = endpoint.requests[0]["headers"].get("Authorization")
            assert auth == "Bearer sk-test-123"
        finally:
            endpoint.close()

    def test_no_key_sends_no_auth_header(self, monkeypatch):
        endpoint = ScriptedEndpoint([(200, completion("ok"))])
        monkeypatch.delenv("CHAT_API_KEY", raising=False)
        try:
            ChatClient(base_url=endpoint.url, model="m").complete("s", "u")
            assert "Authorization" not in endpoint.requests[0]["headers"]
        finally:
            endpoint.close()

    def test_transient_errors_retried_with_backoff(self):
        endpoint = ScriptedEndpoint([(500, {}), (429, {}), (200, completion("ok"))])
        try:
            client = ChatClient(base_url=endpoint.url, model="m", max_retries=3)
            assert client.complete("s", "u") == "ok"
            assert len(endpoint.requests) == 3
        finally:
            endpoint.close()

    def test_retries_exhausted(self):
        endpoint = ScriptedEndpoint([(503, {})] * 3)
        try:
            client = ChatClient(base_url=endpoint.url, model="m", max_retries=2)
            with pytest.raises(TransportError, match="gave up"):
                client.complete("s", "u")
        finally:
            endpoint.close()

    def test_hard_http_error_not_retried(self):
        endpoint = ScriptedEndpoint([(404, {})])
        try:
            client = ChatClient(base_url=endpoint.url, model="m")
            with pytest.raises(TransportError, match="404"):
                client.complete("s", "u")
            assert len(endpoint.requests) == 1
        finally:
            endpoint.close()

    def test_temperature_pinned_to_zero(self):
        with pytest.raises(ValueError):
            ChatClient(base_url="http://x", model="m", temperature=0.7)


class TestTaskTemplate:
    def test_render_substitutes_once(self):
        template = TaskTemplate("t", "sys", "before <<<TEXT>>> after")
        assert template.render(TEXT="X") == "before X after"

    def test_missing_placeholder_rejected(self):
        template = TaskTemplate("t", "sys", "no placeholders here")
        with pytest.raises(ValueError, match="exactly once"):
            template.render(TEXT="X")

    def test_duplicate_placeholder_rejected(self):
        template = TaskTemplate("t", "sys", "<<<TEXT>>> and <<<TEXT>>>")
        with pytest.raises(ValueError, match="exactly once"):
            template.render(TEXT="X")

    def test_default_templates_present(self):
        assert set(DEFAULT_TEMPLATES) == {
            "sentiment",
            "topic",
            "qa",
            "quality_judge",
            "portrait_generation",
        }
        for name in ("sentiment", "topic", "qa"):
            assert "<<<TEXT>>>" in DEFAULT_TEMPLATES[name].user_template
        for name in ("AGE", "GENDER", "OCCUPATION", "DISORDER", "LOCATION"):
            assert f"<<<{name}>>>" in DEFAULT_TEMPLATES["portrait_generation"].user_template
        judge = DEFAULT_TEMPLATES["quality_judge"]
        assert "<<<ORIGINAL TEXT>>>" in judge.user_template
        assert "<<<ANSWER>>>" in judge.user_template
        for dimension in ("Correctness", "Relevance", "Completeness", "Readability"):
            assert dimension in judge.system_prompt


def gold_echo_client(prompts_to_labels):
    return CallableChatClient(responder=lambda s, u: prompts_to_labels[u])


class TestRunTask:
    def test_oracle_endpoint_scores_one(self):
        prompts = ["great film", "awful film"]
        labels = ["Positive", "Negative"]
        mapping = dict(zip(prompts, labels))
        report = run_task(prompts, labels, DEFAULT_TEMPLATES["sentiment"], gold_echo_client(mapping))
        assert report.accuracy == 1.0
        assert report.evaluated == 2

    def test_constant_positive_on_half_positive_set(self):
        prompts = [f"p{i}" for i in range(4)]
        labels = ["Positive", "Negative", "Positive", "Negative"]
        client = CallableChatClient(responder=lambda s, u: "Positive")
        report = run_task(prompts, labels, DEFAULT_TEMPLATES["sentiment"], client)
        assert report.accuracy == 0.5

    def test_normalization_of_whitespace_and_case(self):
        client = CallableChatClient(responder=lambda s, u: "  negative\n")
        report = run_task(["p"], ["Negative"], DEFAULT_TEMPLATES["sentiment"], client)
        assert report.accuracy == 1.0

    def test_unknown_response_counts_as_wrong(self):
        client = CallableChatClient(responder=lambda s, u: "I refuse to answer")
        report = run_task(["p"], ["Positive"], DEFAULT_TEMPLATES["sentiment"], client)
        assert report.accuracy == 0.0
        assert report.evaluated == 1  # counted, not excluded

    def test_qa_containment_match(self):
        client = CallableChatClient(
            responder=lambda s, u: "The most likely diagnosis is Panic Disorder, given..."
        )
        report = run_task(["self report"], ["panic disorder"], DEFAULT_TEMPLATES["qa"], client)
        assert report.accuracy == 1.0

    def test_transport_errors_excluded_with_flag(self):
        calls = {"n": 0}

        def flaky(system, user):
            calls["n"] += 1
            if calls["n"] == 1:
                raise TransportError("socket hiccup")
            return "Positive"

        report = run_task(
            ["a", "b", "c"],
            ["Positive", "Positive", "Positive"],
            DEFAULT_TEMPLATES["sentiment"],
            CallableChatClient(responder=flaky),
        )
        assert report.evaluated == 2
        assert report.accuracy == 1.0
        assert len(report.failures) == 1

    def test_majority_failure_aborts(self):
        def broken(system, user):
            raise TransportError("down")

        with pytest.raises(EvaluationAborted):
            run_task(
                ["a", "b", "c"],
                ["Positive"] * 3,
                DEFAULT_TEMPLATES["sentiment"],
                CallableChatClient(responder=broken),
            )

    def test_mismatched_lengths_rejected(self):
        with pytest.raises(ValueError):
            run_task(["a"], [], DEFAULT_TEMPLATES["sentiment"], CallableChatClient(lambda s, u: ""))

    def test_deterministic_transcripts_with_mock(self):
        client = CallableChatClient(responder=lambda s, u: "Positive")
        args = (["x", "y"], ["Positive", "Negative"], DEFAULT_TEMPLATES["sentiment"], client)
        assert run_task(*args).to_record() == run_task(*args).to_record()


class TestJudgeQuality:
    def test_compact_score_line_parses(self):
        client = CallableChatClient(responder=lambda s, u: "5,5,5,5 Overall: 5")
        judgment = judge_quality("orig", "answer", DEFAULT_TEMPLATES["quality_judge"], client)
        assert judgment.overall == 5

    def test_labeled_dimensions_parse(self):
        response = (
            "Correctness: 4. Relevance: 5. Completeness: 3. Readability: 5. "
            "Overall Score: 4"
        )
        client = CallableChatClient(responder=lambda s, u: response)
        judgment = judge_quality("orig", "answer", DEFAULT_TEMPLATES["quality_judge"], client)
        assert (judgment.correctness, judgment.relevance, judgment.completeness,
                judgment.readability, judgment.overall) == (4, 5, 3, 5, 4)

    def test_prose_without_digits_retries_then_raises(self):
        calls = {"n": 0}

        def prose(system, user):
            calls["n"] += 1
            return "A thoughtful diagnosis, quite readable."

        with pytest.raises(UnparseableJudgment):
            judge_quality("o", "a", DEFAULT_TEMPLATES["quality_judge"], CallableChatClient(prose))
        assert calls["n"] == 2  # retried once

    def test_mean_over_batch(self):
        scripted = iter(["3,3,3,3 Overall: 3", "4,4,4,4 Overall: 4", "5,5,5,5 Overall: 5"])
        client = CallableChatClient(responder=lambda s, u: next(scripted))
        scores = [
            judge_quality("o", f"a{i}", DEFAULT_TEMPLATES["quality_judge"], client).overall
            for i in range(3)
        ]
        assert sum(scores) / len(scores) == 4.0
