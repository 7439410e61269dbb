import json
import os
import signal
import subprocess
import sys
import textwrap
import threading
import time

import httpx
import pytest

from danadisinfo import llm_annotate as la
from danadisinfo.corpus import Post


def posts(n):
    return [Post(f"t{i:03d}", "x", f"tweet número {i} sobre la DANA {{json}}") for i in range(n)]


def label_for(prompt):
    """Deterministic answer derived from the tweet number embedded in the prompt."""
    num = int(prompt.split("número ")[1].split()[0])
    return str(num % 4)


def completion(text):
    return httpx.Response(200, json={"choices": [{"message": {"role": "assistant", "content": text}}]})


@pytest.fixture
def config():
    return la.EndpointConfig(url="https://annotator.test/v1/chat/completions", model="m",
                             max_retries=3, concurrency=4)


@pytest.fixture(autouse=True)
def api_key(monkeypatch):
    monkeypatch.setenv(la.API_KEY_ENV, "secret")


@pytest.mark.parametrize("raw, label", [("3", 3), (" 0\n", 0), ("2.", 2), ("1)", 1)])
def test_parse_label(raw, label):
    assert la.parse_label(raw) == label


@pytest.mark.parametrize("raw", ["", "4", "3 because", "Label: 3", "33", "three", "-1"])
def test_parse_label_rejects(raw):
    with pytest.raises(la.ParseError) as err:
        la.parse_label(raw)
    assert err.value.raw == raw


def test_collapse():
    assert [la.collapse_to_binary(i) for i in range(4)] == [0, 0, 0, 1]
    assert la.FourClassLabel(3).binary == 1
    with pytest.raises(ValueError):
        la.collapse_to_binary(5)


def test_prompt_structure():
    t = la.load_template()
    prompt = la.build_prompt("¡Ocultan {muertos} en $Bonaire!", t).render()
    assert prompt.startswith("Context:")
    assert "¡Ocultan {muertos} en $Bonaire!" in prompt
    assert la.TWEET_SLOT not in prompt
    assert prompt.rstrip().endswith(la.ANSWER_INSTRUCTION)
    positions = [prompt.index(h) for h in la.GUIDELINE_HEADERS]
    assert positions == sorted(positions)
    assert prompt.index("Labeling Guidelines:") < positions[0]
    with pytest.raises(ValueError):
        la.build_prompt("   ")


def test_template_loading(tmp_path):
    with pytest.raises(FileNotFoundError):
        la.load_template("es")
    p = tmp_path / "es.txt"
    p.write_text("Contexto\n%%%\nGuía\n%%%\nTweet: [TWEET HERE]\nDevuelve solo el número:")
    t = la.load_template("es", path=p)
    assert t.language == "es" and "hola" in la.build_prompt("hola", t).render()
    p.write_text("sin bloques")
    with pytest.raises(ValueError):
        la.load_template(path=p)


def test_request_shape(config, tmp_path):
    seen = []

    def handler(request):
        seen.append(request)
        return completion("1")

    result = la.annotate_batch(posts(1), config, tmp_path / "s.log", transport=httpx.MockTransport(handler))
    req = seen[0]
    assert req.headers["authorization"] == "Bearer secret"
    body = json.loads(req.content)
    assert body["temperature"] == 0 and body["model"] == "m"
    assert body["messages"][0]["role"] == "user"
    assert result.labels == {"t000": 1}


def test_missing_credentials(config, monkeypatch, tmp_path):
    monkeypatch.delenv(la.API_KEY_ENV)
    with pytest.raises(la.MissingCredentialsError, match=la.API_KEY_ENV):
        la.annotate_batch(posts(1), config, tmp_path / "s.log", transport=httpx.MockTransport(
            lambda r: completion("1")))
    assert not (tmp_path / "s.log").exists()


def test_retry_twice_then_succeed(config, tmp_path):
    calls = []

    def handler(request):
        calls.append(1)
        if len(calls) <= 2:
            raise httpx.ConnectError("boom")
        return completion("3")

    res = la.annotate_batch(posts(1), config, tmp_path / "s.log", transport=httpx.MockTransport(handler))
    rec = res.records["t000"]
    assert rec.status == "ok" and rec.retries == 2 and rec.label == 3 and rec.binary == 1
    assert len(calls) == 3


def test_retries_exhausted_record_failure(config, tmp_path):
    def handler(request):
        return completion("no sé")

    res = la.annotate_batch(posts(2), config, tmp_path / "s.log", transport=httpx.MockTransport(handler))
    assert res.labels == {}
    assert set(res.failures) == {"t000", "t001"}
    assert all("ParseError" in msg for msg in res.failures.values())
    assert res.records["t000"].retries == config.max_retries


def test_malformed_body_and_http_status(config, tmp_path):
    state = {"n": 0}

    def handler(request):
        state["n"] += 1
        if state["n"] == 1:
            return httpx.Response(200, json={"unexpected": True})
        if state["n"] == 2:
            return httpx.Response(503)
        return completion("0")

    cfg = la.EndpointConfig(url=config.url, model="m", concurrency=1)
    res = la.annotate_batch(posts(1), cfg, tmp_path / "s.log", transport=httpx.MockTransport(handler))
    assert res.records["t000"].retries == 2 and res.labels == {"t000": 0}


def test_batch_with_injected_failures(config, tmp_path):
    lock = threading.Lock()
    attempts = {}

    def handler(request):
        prompt = json.loads(request.content)["messages"][0]["content"]
        num = int(prompt.split("número ")[1].split()[0])
        with lock:
            attempts[num] = attempts.get(num, 0) + 1
            k = attempts[num]
        if num % 10 == 3 and k <= 2:
            raise httpx.ReadTimeout("slow")
        if num % 25 == 7:
            return completion("maybe")  # never parseable
        return completion(str(num % 4))

    state = tmp_path / "s.log"
    res = la.annotate_batch(posts(100), config, state, transport=httpx.MockTransport(handler))
    failed = {f"t{i:03d}" for i in range(100) if i % 25 == 7}
    assert set(res.failures) == failed
    assert len(res.labels) == 100 - len(failed)
    for i in range(100):
        rec = res.records[f"t{i:03d}"]
        if i % 25 == 7:
            assert rec.retries == config.max_retries
        elif i % 10 == 3:
            assert rec.retries == 2 and rec.label == i % 4
        else:
            assert rec.retries == 0
    assert len(state.read_text().splitlines()) == 100

    # rerun: only failed posts are retried
    again = la.annotate_batch(posts(100), config, state, transport=httpx.MockTransport(handler))
    assert again.resumed == 100 - len(failed)
    assert set(again.failures) == failed


def test_read_state_ignores_torn_line(tmp_path):
    rec = la.AnnotationRecord("a", "ok", 1, 0, "h", 0)
    p = tmp_path / "s.log"
    p.write_text(rec.to_json() + "\n" + '{"post_id": "b", "sta')
    assert list(la.read_state(p)) == ["a"]


def test_token_bucket_fake_clock():
    now = [0.0]
    slept = []

    def sleep(dt):
        slept.append(dt)
        now[0] += dt

    bucket = la.TokenBucket(2.0, capacity=1.0, clock=lambda: now[0], sleep=sleep)
    for _ in range(5):
        bucket.acquire()
    assert now[0] == pytest.approx(2.0)  # 4 refills at 2 tokens/s


def test_csv_and_agreement_roundtrip(config, tmp_path):
    res = la.annotate_batch(posts(40), config, tmp_path / "s.log", transport=httpx.MockTransport(
        lambda r: completion(label_for(json.loads(r.content)["messages"][0]["content"]))))
    la.write_annotations_csv(res, tmp_path / "a.csv")
    pred = la.read_annotations_csv(tmp_path / "a.csv")
    gold = {pid: int(v) for pid, v in pred.items()}
    gold["t001"] = 3  # one disagreement
    rep = la.agreement_report(gold, pred)
    assert 0.9 < rep.kappa_four_class < 1 and rep.four_class.total == 40
    assert rep.lines()[0].startswith("kappa (4-class) = ")
    binrep = la.agreement_report({k: la.collapse_to_binary(v) for k, v in gold.items()}, pred,
                                 gold_four_class=False)
    assert binrep.four_class is None and binrep.binary.labels == ("0", "1")
    with pytest.raises(ValueError):
        la.agreement_matrix({"zz": 0}, pred)


WORKER = textwrap.dedent("""
    import json, sys, time
    import httpx
    from danadisinfo import llm_annotate as la
    from danadisinfo.corpus import Post

    def handler(request):
        time.sleep(0.02)
        prompt = json.loads(request.content)["messages"][0]["content"]
        return httpx.Response(200, json={"choices": [{"message": {"content":
            str(int(prompt.split("número ")[1].split()[0]) % 4)}}]})

    posts = [Post(f"t{i:03d}", "x", f"tweet número {i} sobre la DANA") for i in range(100)]
    cfg = la.EndpointConfig(url="https://annotator.test", model="m", concurrency=2)
    la.annotate_batch(posts, cfg, sys.argv[1], transport=httpx.MockTransport(handler))
""")


def test_kill_and_resume(config, tmp_path):
    state = tmp_path / "s.log"
    env = {**os.environ, la.API_KEY_ENV: "secret"}
    proc = subprocess.Popen([sys.executable, "-c", WORKER, str(state)], env=env)
    deadline = time.time() + 30
    while time.time() < deadline:
        if state.exists() and len(state.read_text().splitlines()) >= 20:
            break
        time.sleep(0.01)
    proc.send_signal(signal.SIGKILL)
    proc.wait()
    done = {pid for pid, r in la.read_state(state).items() if r.status == "ok"}
    assert 20 <= len(done) < 100

    requested = []

    def handler(request):
        prompt = json.loads(request.content)["messages"][0]["content"]
        requested.append(int(prompt.split("número ")[1].split()[0]))
        return completion(label_for(prompt))

    batch = [Post(f"t{i:03d}", "x", f"tweet número {i} sobre la DANA") for i in range(100)]
    res = la.annotate_batch(batch, config, state, transport=httpx.MockTransport(handler))
    assert len(res.labels) == 100 and res.resumed == len(done)
    assert not {f"t{i:03d}" for i in requested} & done
    assert all(res.labels[f"t{i:03d}"] == i % 4 for i in range(100))


def test_constant_mock_and_prompt_properties(config, tmp_path):
    res = la.annotate_batch(posts(12), config, tmp_path / "s.log",
                            transport=httpx.MockTransport(lambda r: completion("1")))
    assert set(res.labels.values()) == {1} and not res.failures and len(res.labels) == 12
    text = la.build_prompt("hola").render()
    assert "False claims about dam openings or breaks" in text
    assert la.build_prompt("hola").render() == text


def test_collapse_two_ways_identical():
    import numpy as np
    rng = np.random.default_rng(0)
    gold = {f"p{i}": int(v) for i, v in enumerate(rng.integers(0, 4, 119))}
    pred = {f"p{i}": int(v) for i, v in enumerate(rng.integers(0, 4, 119))}
    m4 = la.agreement_matrix(gold, pred)
    via_matrix = la.collapse_matrix(m4, la.FOUR_TO_BINARY)
    per_item = la.agreement_matrix({k: la.collapse_to_binary(v) for k, v in gold.items()},
                                   {k: la.collapse_to_binary(v) for k, v in pred.items()},
                                   la.BINARY_LABELS)
    assert np.array_equal(via_matrix.counts, per_item.counts)
    assert la.cohen_kappa(via_matrix) == la.cohen_kappa(per_item)
