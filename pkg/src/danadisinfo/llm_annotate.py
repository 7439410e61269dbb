"""Few-shot labeling through a chat-completion endpoint.

Each post is rendered into the versioned four-category prompt, sent once
(temperature 0) and the reply parsed strictly as a single digit 0-3.
Outcomes are appended to a JSON-lines state log as they complete, so an
interrupted batch resumes without redoing finished posts.
"""

from __future__ import annotations

import csv
import enum
import hashlib
import json
import os
import re
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import httpx

from .stats import ConfusionMatrix, cohen_kappa, collapse_matrix

API_KEY_ENV = "ANNOTATOR_API_KEY"
TEMPLATE_VERSION = "v1"
TWEET_SLOT = "[TWEET HERE]"
ANSWER_INSTRUCTION = "Return only the number:"
GUIDELINE_HEADERS = (
    "0 (Not related to DANA)",
    "1 (Related to DANA, but not disinformation)",
    "2 (Disinformation mentioned, but criticized)",
    "3 (Disinformation)",
)
_BLOCK_SEP = "\n%%%\n"


class FourClassLabel(enum.IntEnum):
    NOT_RELATED = 0
    RELATED = 1
    CRITICIZED = 2
    DISINFORMATION = 3

    @property
    def binary(self) -> int:
        return collapse_to_binary(self)


FOUR_TO_BINARY = {0: 0, 1: 0, 2: 0, 3: 1}


def collapse_to_binary(label) -> int:
    """Categories 0-2 are trustworthy (0); only 3 is disinformation (1)."""
    return FOUR_TO_BINARY[int(FourClassLabel(int(label)))]


class ParseError(ValueError):
    def __init__(self, raw: str):
        super().__init__(f"unparseable label response: {raw!r}")
        self.raw = raw


class MissingCredentialsError(RuntimeError):
    pass


class ResponseFormatError(RuntimeError):
    """Endpoint answered, but not with a chat-completion body."""


_LABEL_RE = re.compile(r"([0-3])[^\w\s]*")


def parse_label(raw: str) -> FourClassLabel:
    """Accept one digit 0-3, optionally followed by punctuation."""
    m = _LABEL_RE.fullmatch(raw.strip())
    if m is None:
        raise ParseError(raw)
    return FourClassLabel(int(m.group(1)))


# -- prompt ---------------------------------------------------------------

@dataclass(frozen=True)
class PromptTemplate:
    version: str
    language: str
    context_block: str
    guidelines_block: str
    tweet_block: str

    @classmethod
    def from_text(cls, text: str, version: str = TEMPLATE_VERSION, language: str = "en"):
        parts = text.strip("\n").split(_BLOCK_SEP)
        if len(parts) != 3:
            raise ValueError("template needs context, guidelines and tweet blocks separated by '%%%'")
        if TWEET_SLOT not in parts[2]:
            raise ValueError(f"template tweet block lacks the {TWEET_SLOT} slot")
        return cls(version, language, *parts)


def load_template(language: str = "en", version: str = TEMPLATE_VERSION,
                  path: str | Path | None = None) -> PromptTemplate:
    """Bundled template for ``language``/``version``, or one read from ``path``.

    Only the English template ships with the package; other languages must
    be supplied through ``path``.
    """
    if path is not None:
        return PromptTemplate.from_text(Path(path).read_text(encoding="utf-8"), version, language)
    res = resources.files("danadisinfo") / "resources" / "prompts" / f"{language}_{version}.txt"
    if not res.is_file():
        raise FileNotFoundError(f"no bundled {language!r} prompt template {version}; pass path=")
    return PromptTemplate.from_text(res.read_text(encoding="utf-8"), version, language)


@dataclass(frozen=True)
class AnnotationPrompt:
    context_block: str
    guidelines_block: str
    tweet_text: str
    tweet_block: str = f"Tweet: {TWEET_SLOT}\n{ANSWER_INSTRUCTION}"
    version: str = TEMPLATE_VERSION

    def render(self) -> str:
        # plain replace: braces or other markup in the tweet stay verbatim
        tail = self.tweet_block.replace(TWEET_SLOT, self.tweet_text)
        return f"{self.context_block}\n\n{self.guidelines_block}\n\n{tail}"


def build_prompt(tweet: str, template: PromptTemplate | None = None) -> AnnotationPrompt:
    if not tweet or not tweet.strip():
        raise ValueError("tweet text is empty")
    template = template or load_template()
    return AnnotationPrompt(template.context_block, template.guidelines_block, tweet,
                            template.tweet_block, template.version)


# -- endpoint -------------------------------------------------------------

@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    temperature: float = 0.0
    api_key_env: str = API_KEY_ENV
    max_retries: int = 3
    concurrency: int = 4
    requests_per_second: float | None = None
    timeout: float = 60.0

    @classmethod
    def from_mapping(cls, cfg: Mapping) -> "EndpointConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(cfg) - known
        if unknown:
            raise ValueError(f"unknown endpoint settings: {sorted(unknown)}")
        return cls(**cfg)


class TokenBucket:
    """Thread-safe token bucket; ``acquire`` blocks until a token is free."""

    def __init__(self, rate: float, capacity: float | None = None,
                 clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class ChatClient:
    """Minimal chat-completion client: one user message per call."""

    def __init__(self, config: EndpointConfig, api_key: str,
                 transport: httpx.BaseTransport | None = None):
        self.config = config
        self._http = httpx.Client(transport=transport, timeout=config.timeout,
                                  headers={"Authorization": f"Bearer {api_key}"})

    def payload(self, prompt: str) -> dict:
        return {"model": self.config.model, "temperature": self.config.temperature,
                "messages": [{"role": "user", "content": prompt}]}

    def complete(self, prompt: str) -> str:
        resp = self._http.post(self.config.url, json=self.payload(prompt))
        resp.raise_for_status()
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ResponseFormatError(f"malformed completion body: {resp.text[:200]!r}") from exc

    def close(self):
        self._http.close()


# -- batch ----------------------------------------------------------------

@dataclass(frozen=True)
class AnnotationRecord:
    post_id: str
    status: str  # "ok" | "failed"
    label: int | None
    binary: int | None
    raw_sha256: str | None
    retries: int
    error: str | None = None
    template_version: str = TEMPLATE_VERSION

    def to_json(self) -> str:
        return json.dumps(self.__dict__, ensure_ascii=False, sort_keys=True)


@dataclass
class BatchResult:
    records: dict[str, AnnotationRecord] = field(default_factory=dict)
    resumed: int = 0

    @property
    def labels(self) -> dict[str, FourClassLabel]:
        return {pid: FourClassLabel(r.label) for pid, r in self.records.items() if r.status == "ok"}

    @property
    def failures(self) -> dict[str, str]:
        return {pid: r.error for pid, r in self.records.items() if r.status != "ok"}


def read_state(path: str | Path) -> dict[str, AnnotationRecord]:
    """Latest record per post id; a torn final line from a crash is ignored."""
    out = {}
    p = Path(path)
    if not p.exists():
        return out
    with open(p, encoding="utf-8") as fh:
        for line in fh:
            try:
                rec = AnnotationRecord(**json.loads(line))
            except (json.JSONDecodeError, TypeError):
                continue
            out[rec.post_id] = rec
    return out


_RETRYABLE = (httpx.HTTPError, ParseError, ResponseFormatError)


def _annotate_one(post, client, template, max_retries, bucket) -> AnnotationRecord:
    prompt = build_prompt(post.text, template).render()
    error = None
    for attempt in range(max_retries + 1):
        if bucket is not None:
            bucket.acquire()
        try:
            raw = client.complete(prompt)
            label = parse_label(raw)
        except _RETRYABLE as exc:
            error = f"{type(exc).__name__}: {exc}"
            continue
        return AnnotationRecord(post.id, "ok", int(label), collapse_to_binary(label),
                                hashlib.sha256(raw.encode("utf-8")).hexdigest(), attempt,
                                template_version=template.version)
    return AnnotationRecord(post.id, "failed", None, None, None, max_retries, error,
                            template_version=template.version)


def annotate_batch(posts: Iterable, config: EndpointConfig, state_path: str | Path,
                   client=None, transport: httpx.BaseTransport | None = None,
                   template: PromptTemplate | None = None) -> BatchResult:
    """Label ``posts`` through the endpoint, resuming from ``state_path``.

    Posts already recorded as ``ok`` in the state log are skipped; failed
    ones are tried again. ``client`` (anything with ``complete(prompt)``)
    or ``transport`` can be injected for testing; the API key must be set
    in the environment either way.
    """
    api_key = os.environ.get(config.api_key_env)
    if not api_key:
        raise MissingCredentialsError(f"environment variable {config.api_key_env} is not set")
    template = template or load_template()
    posts = list(posts)
    state = read_state(state_path)
    result = BatchResult()
    todo = []
    for post in posts:
        prev = state.get(post.id)
        if prev is not None and prev.status == "ok":
            result.records[post.id] = prev
            result.resumed += 1
        else:
            todo.append(post)
    if not todo:
        return result

    own_client = client is None
    if own_client:
        client = ChatClient(config, api_key, transport)
    bucket = TokenBucket(config.requests_per_second) if config.requests_per_second else None
    try:
        with open(state_path, "a", encoding="utf-8") as log, \
                ThreadPoolExecutor(max_workers=max(1, config.concurrency)) as pool:
            futures = [pool.submit(_annotate_one, post, client, template, config.max_retries, bucket)
                       for post in todo]
            for fut in as_completed(futures):
                rec = fut.result()
                log.write(rec.to_json() + "\n")
                log.flush()
                os.fsync(log.fileno())
                result.records[rec.post_id] = rec
    finally:
        if own_client:
            client.close()
    return result


def write_annotations_csv(result: BatchResult, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["post_id", "four_class", "binary", "raw_sha256"])
        for pid in sorted(result.records):
            rec = result.records[pid]
            if rec.status == "ok":
                writer.writerow([pid, rec.label, rec.binary, rec.raw_sha256])


def read_annotations_csv(path: str | Path) -> dict[str, int]:
    with open(path, newline="", encoding="utf-8") as fh:
        return {row["post_id"]: int(row["four_class"]) for row in csv.DictReader(fh)}


# -- agreement ------------------------------------------------------------

FOUR_LABELS = ("0", "1", "2", "3")
BINARY_LABELS = ("0", "1")


def agreement_matrix(gold: Mapping[str, int], predicted: Mapping[str, int],
                     labels=FOUR_LABELS) -> ConfusionMatrix:
    """Rows are gold labels, columns predictions, over ids present in both."""
    common = sorted(set(gold) & set(predicted))
    if not common:
        raise ValueError("no post ids shared by gold and predicted labels")
    return ConfusionMatrix.from_pairs(((gold[i], predicted[i]) for i in common), labels)


@dataclass(frozen=True)
class AgreementReport:
    binary: ConfusionMatrix
    kappa_binary: float
    four_class: ConfusionMatrix | None = None
    kappa_four_class: float | None = None

    def lines(self) -> list[str]:
        out = []
        if self.four_class is not None:
            out.append(f"kappa (4-class) = {self.kappa_four_class:.3f} (n={self.four_class.total})")
        out.append(f"kappa (binary) = {self.kappa_binary:.3f} (n={self.binary.total})")
        return out


def agreement_report(gold: Mapping[str, int], predicted: Mapping[str, int],
                     gold_four_class: bool = True) -> AgreementReport:
    """Kappa of four-class predictions against gold labels.

    With four-class gold both the four-class matrix and its binary collapse
    are reported; with binary gold only the collapsed predictions are scored.
    """
    if gold_four_class:
        m4 = agreement_matrix(gold, predicted, FOUR_LABELS)
        m2 = collapse_matrix(m4, FOUR_TO_BINARY)
        return AgreementReport(m2, cohen_kappa(m2), m4, cohen_kappa(m4))
    collapsed = {pid: collapse_to_binary(v) for pid, v in predicted.items()}
    m2 = agreement_matrix(gold, collapsed, BINARY_LABELS)
    return AgreementReport(m2, cohen_kappa(m2))
