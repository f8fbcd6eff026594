import json
import threading

import httpx
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bonrewrite.core import ConversationSession, Turn, load_pools, save_pools
from bonrewrite.errors import FixtureMissError, GenerationError, PromptError, SchemaError, TransportError
from bonrewrite.generation import (
    ChatCompletionsClient,
    FixtureClient,
    GenerationConfig,
    GenerationRequest,
    RetryPolicy,
    fixture_client,
    format_output,
    generate_pool,
    load_template,
    parse_output,
    render_prompt,
    save_fixtures,
)


def _session(turn=3):
    history = tuple(Turn(f"question {i}", f"answer {i}") for i in range(1, turn))
    return ConversationSession("s1", turn, history, "who designed it?")


def _fixtures(n, session=None, bad=()):
    s = session or _session()
    return {(s.session_id, s.turn_index, i): ("junk" if i in bad else format_output(f"rewrite {i}", f"resp {i}"))
            for i in range(n)}


def _req(i=0, s=None):
    s = s or _session()
    return GenerationRequest("p", s.session_id, s.turn_index, i, seed=i)


class TestParse:
    def test_table_format(self):
        raw = ("Rewrite: reason. So the question should be rewritten as: Who made the dime?\n"
               "Response: John R. Sinnock.")
        out = parse_output(raw)
        assert (out.rewrite, out.pseudo_response) == ("Who made the dime?", "John R. Sinnock.")

    def test_gibberish(self):
        out = parse_output("gibberish")
        assert not out.ok and out.raw_text == "gibberish"

    def test_empty_response(self):
        out = parse_output("so it should be REWRITTEN AS: where is it?\nRESPONSE:   ")
        assert out.ok and out.rewrite == "where is it?" and out.pseudo_response == ""

    @given(st.text(alphabet="abc xyz?.,'", min_size=1).filter(str.strip),
           st.text(alphabet="abc xyz?.,'\n"))
    def test_format_roundtrip(self, rewrite, response):
        out = parse_output(format_output(rewrite, response))
        assert (out.rewrite, out.pseudo_response) == (rewrite.strip(), response.strip())


class TestPrompt:
    template = load_template()

    def test_first_turn(self):
        s = ConversationSession("s", 1, (), "what is a dime?")
        text = render_prompt(self.template, s)
        ctx = text.split("Context:\n", 1)[1].split("Current Question:")[0]
        assert ctx.strip() == ""
        assert "Current Question: what is a dime?" in text

    def test_deterministic(self):
        assert render_prompt(self.template, _session()) == render_prompt(self.template, _session())

    def test_history_block(self):
        text = render_prompt(self.template, _session(3))
        ctx = text.split("Context:\n", 1)[1].split("Current Question:")[0]
        qs = [line for line in ctx.splitlines() if line.startswith("Question:")]
        assert qs == ["Question: question 1", "Question: question 2"]

    def test_empty_question(self):
        with pytest.raises(PromptError):
            render_prompt(self.template, ConversationSession("s", 1, (), "  "))

    def test_custom_template(self, tmp_path):
        (tmp_path / "t.json").write_text(json.dumps({"instruction": "Do it.", "demonstrations": [], "closing": ""}))
        t = load_template(tmp_path / "t.json")
        assert render_prompt(t, _session(1)).startswith("Do it.\n\nContext:")


class TestFixtureClient:
    def test_replay(self, tmp_path):
        outs = _fixtures(3)
        save_fixtures(tmp_path / "f.jsonl", outs)
        client = fixture_client(tmp_path / "f.jsonl")
        assert client.complete(_req(2)) == outs[("s1", 3, 2)]

    def test_miss_names_key(self):
        with pytest.raises(FixtureMissError, match="request_index=9"):
            FixtureClient(_fixtures(2)).complete(_req(9))

    def test_duplicate_record(self):
        rec = {"session_id": "s", "turn_index": 1, "request_index": 0, "raw_text": "x"}
        with pytest.raises(SchemaError, match="duplicate"):
            FixtureClient.from_records([rec, rec])


class TestGeneratePool:
    template = load_template()

    def test_fixture_order(self):
        pool = generate_pool(FixtureClient(_fixtures(4)), self.template, _session(), GenerationConfig(n=4))
        assert [c.rewrite for c in pool.candidates] == [f"rewrite {i}" for i in range(4)]
        assert [c.generation_seed for c in pool.candidates] == [0, 1, 2, 3]

    def test_retry_then_success(self):
        calls = []

        class Flaky:
            def complete(self, req):
                calls.append(req.request_index)
                if len(calls) < 3:
                    raise TransportError("503")
                return format_output("ok", "fine")

        sleeps = []
        cfg = GenerationConfig(n=1, retry=RetryPolicy(max_attempts=3, backoff_seconds=0.5))
        pool = generate_pool(Flaky(), self.template, _session(), cfg, sleep=sleeps.append)
        assert pool.candidates[0].rewrite == "ok"
        assert sleeps == [0.5, 1.0]

    def test_drop_and_reindex(self):
        cfg = GenerationConfig(n=5, retry=RetryPolicy(max_attempts=2, backoff_seconds=0))
        pool = generate_pool(FixtureClient(_fixtures(5, bad={1, 3})), self.template, _session(), cfg)
        assert [c.candidate_index for c in pool.candidates] == [0, 1, 2]
        assert [c.rewrite for c in pool.candidates] == ["rewrite 0", "rewrite 2", "rewrite 4"]
        assert [d.request_index for d in pool.dropped] == [1, 3]
        assert pool.dropped[0].raw_text == "junk"

    def test_all_failed(self):
        cfg = GenerationConfig(n=2, retry=RetryPolicy(max_attempts=1))
        with pytest.raises(GenerationError, match="all 2 requests failed"):
            generate_pool(FixtureClient(_fixtures(2, bad={0, 1})), self.template, _session(), cfg)

    def test_concurrency_is_deterministic(self, tmp_path):
        client = FixtureClient(_fixtures(16, bad={5}))
        cfg1 = GenerationConfig(n=16, concurrency=1, retry=RetryPolicy(1, 0))
        cfg8 = GenerationConfig(n=16, concurrency=8, retry=RetryPolicy(1, 0))
        save_pools(tmp_path / "a.jsonl", [generate_pool(client, self.template, _session(), cfg1)])
        save_pools(tmp_path / "b.jsonl", [generate_pool(client, self.template, _session(), cfg8)])
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_jsonl_roundtrip(self, tmp_path):
        pool = generate_pool(FixtureClient(_fixtures(16)), self.template, _session(), GenerationConfig(n=16))
        save_pools(tmp_path / "p.jsonl", [pool])
        assert load_pools(tmp_path / "p.jsonl") == [pool]


class TestHttpClient:
    def _client(self, handler):
        return ChatCompletionsClient("http://llm.test/v1", "m", api_key="k",
                                     transport=httpx.MockTransport(handler))

    def test_request_body(self):
        seen = {}

        def handler(request):
            seen["url"] = str(request.url)
            seen["auth"] = request.headers["authorization"]
            seen["body"] = json.loads(request.content)
            return httpx.Response(200, json={"choices": [{"message": {"content": "hello"}}]})

        assert self._client(handler).complete(_req(3)) == "hello"
        assert seen["url"] == "http://llm.test/v1/chat/completions"
        assert seen["auth"] == "Bearer k"
        assert seen["body"]["seed"] == 3 and seen["body"]["messages"][0]["content"] == "p"

    @pytest.mark.parametrize("status", [429, 500, 503])
    def test_retryable(self, status):
        with pytest.raises(TransportError):
            self._client(lambda r: httpx.Response(status)).complete(_req())

    def test_fatal_4xx(self):
        with pytest.raises(GenerationError) as err:
            self._client(lambda r: httpx.Response(401, text="no")).complete(_req())
        assert not isinstance(err.value, TransportError)

    def test_connection_error(self):
        def handler(request):
            raise httpx.ConnectError("refused")

        with pytest.raises(TransportError):
            self._client(handler).complete(_req())

    def test_pool_over_http_with_retries(self):
        lock = threading.Lock()
        attempts = {}

        def handler(request):
            seed = json.loads(request.content)["seed"]
            with lock:
                attempts[seed] = attempts.get(seed, 0) + 1
                first = attempts[seed] == 1
            if first:
                return httpx.Response(503)
            return httpx.Response(200, json={"choices": [{"message": {"content": format_output(f"r{seed}", "x")}}]})

        cfg = GenerationConfig(n=4, retry=RetryPolicy(3, 0))
        pool = generate_pool(self._client(handler), load_template(), _session(), cfg, sleep=lambda s: None)
        assert [c.rewrite for c in pool.candidates] == ["r0", "r1", "r2", "r3"]
        assert all(v == 2 for v in attempts.values())
