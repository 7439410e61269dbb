"""Few-shot annotation against a mock endpoint, with retries and resuming."""
import json
import os
import tempfile
import zlib
from pathlib import Path

import httpx

from danadisinfo import llm_annotate as la
from danadisinfo.corpus import Post

prompt = la.build_prompt("Dicen que abren las compuertas de Forata esta noche")
print(prompt.render()[-220:])

# The mock model answers 3 when the tweet mentions hiding something and
# fails the first request for about one post in five.
seen = {}


def handler(request):
    text = json.loads(request.content)["messages"][0]["content"].split("Tweet:")[-1]
    seen[text] = seen.get(text, 0) + 1
    if zlib.crc32(text.encode()) % 5 == 0 and seen[text] == 1:
        return httpx.Response(503)
    return httpx.Response(200, json={"choices": [{"message": {"content": "3" if "ocultan" in text else "1"}}]})


os.environ.setdefault(la.API_KEY_ENV, "demo-key")
posts = [Post(f"t{i}", "x", ("ocultan " if i % 3 == 0 else "voluntarios ") + f"mensaje {i}")
         for i in range(30)]
config = la.EndpointConfig(url="https://annotator.example/v1/chat/completions", model="few-shot",
                           concurrency=4, max_retries=3)
state = Path(tempfile.mkdtemp()) / "state.jsonl"
result = la.annotate_batch(posts, config, state, transport=httpx.MockTransport(handler))
print(len(result.labels), "labeled,", sum(r.retries for r in result.records.values()), "retries")

# Running again reads the state log and sends nothing
again = la.annotate_batch(posts, config, state, transport=httpx.MockTransport(handler))
print("resumed", again.resumed)

gold = {p.id: 3 if i % 3 == 0 else 1 for i, p in enumerate(posts)}
gold["t1"] = 2
for line in la.agreement_report(gold, result.labels).lines():
    print(line)
