"""Post records, JSON-lines ingestion, text cleaning and stratified folds."""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

PLATFORMS = ("x", "tiktok")
LABELS = (0, 1)
LABEL_NAMES = {0: "Trustworthy", 1: "Disinformation"}
EMOTIONS = ("sadness", "joy", "anger", "surprise", "disgust", "fear", "others")

# Search keywords used to collect the DANA corpus.
DANA_KEYWORDS = (
    "DANA conspiración",
    "DANA fallecidos ocultación",
    "DANA engaño",
    "DANA manipulación",
    "DANA mentiras",
    "DANA ataque climático",
    "DANA manipular la verdad",
    "DANA desinformación",
    "DANA falsedades",
    "DANA ocultación",
    "DANA Rubén Gisbert",
    "DANA Alvise Pérez",
    "DANA Iker Jiménez",
    "DANA Vito Quiles",
    "DANA Cruz Roja falsa ayuda",
    "DANA Bonaire cementerio",
    "DANA ayuda rechazada",
    "DANA pronóstico incorrecto",
    "DANA radar sin funcionar",
    "DANA provocada presas",
)

_FIELDS = ("id", "platform", "text", "label", "emotions", "lexicon_scores",
           "audio_path", "embedding")


class CorpusError(ValueError):
    """Raised for malformed or inconsistent corpus records."""


@dataclass(frozen=True)
class Post:
    id: str
    platform: str
    text: str
    label: int | None = None
    emotions: Mapping[str, float] | None = None
    lexicon_scores: Mapping[str, float] | None = None
    audio_path: str | None = None
    embedding: tuple[float, ...] | None = None

    def __post_init__(self):
        if not isinstance(self.id, str) or not self.id:
            raise CorpusError(f"post id must be a non-empty string, got {self.id!r}")
        if self.platform not in PLATFORMS:
            raise CorpusError(f"post {self.id}: unknown platform {self.platform!r}")
        if not isinstance(self.text, str):
            raise CorpusError(f"post {self.id}: text must be a string")
        if self.label is not None and (isinstance(self.label, bool) or self.label not in LABELS):
            raise CorpusError(f"post {self.id}: label must be 0 or 1, got {self.label!r}")
        if self.emotions is not None:
            for name, score in self.emotions.items():
                if not _is_finite_number(score) or not 0.0 <= score <= 1.0:
                    raise CorpusError(
                        f"post {self.id}: emotion {name!r} score {score!r} outside [0, 1]")
        if self.lexicon_scores is not None:
            for name, score in self.lexicon_scores.items():
                if not _is_finite_number(score):
                    raise CorpusError(f"post {self.id}: lexicon score {name!r} is not finite")
        if self.embedding is not None:
            if any(not _is_finite_number(v) for v in self.embedding):
                raise CorpusError(f"post {self.id}: embedding has non-finite values")

    def to_record(self) -> dict:
        rec = {"id": self.id, "platform": self.platform, "text": self.text}
        if self.label is not None:
            rec["label"] = self.label
        if self.emotions is not None:
            rec["emotions"] = dict(self.emotions)
        if self.lexicon_scores is not None:
            rec["lexicon_scores"] = dict(self.lexicon_scores)
        if self.audio_path is not None:
            rec["audio_path"] = self.audio_path
        if self.embedding is not None:
            rec["embedding"] = list(self.embedding)
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "Post":
        if not isinstance(rec, Mapping):
            raise CorpusError("record must be a JSON object")
        unknown = set(rec) - set(_FIELDS)
        if unknown:
            raise CorpusError(f"unknown fields {sorted(unknown)}")
        for key in ("id", "platform", "text"):
            if key not in rec:
                raise CorpusError(f"missing required field {key!r}")
        emb = rec.get("embedding")
        return cls(
            id=rec["id"],
            platform=rec["platform"],
            text=rec["text"],
            label=rec.get("label"),
            emotions=_optional_map(rec.get("emotions"), "emotions"),
            lexicon_scores=_optional_map(rec.get("lexicon_scores"), "lexicon_scores"),
            audio_path=rec.get("audio_path"),
            embedding=None if emb is None else tuple(float(v) for v in _as_list(emb)),
        )


@dataclass(frozen=True)
class LabelCounts:
    """Post counts per (platform, label)."""

    counts: Mapping[tuple[str, int], int]

    def get(self, platform: str | None = None, label: int | None = None) -> int:
        return sum(n for (p, lab), n in self.counts.items()
                   if (platform is None or p == platform) and (label is None or lab == label))


@dataclass(frozen=True)
class Corpus:
    posts: tuple[Post, ...]
    embedding_dim: int | None = field(default=None)

    def __post_init__(self):
        object.__setattr__(self, "posts", tuple(self.posts))
        seen = set()
        dims = set()
        for post in self.posts:
            if post.id in seen:
                raise CorpusError(f"duplicate post id {post.id!r}")
            seen.add(post.id)
            if post.embedding is not None:
                dims.add(len(post.embedding))
        if len(dims) > 1:
            raise CorpusError(f"embedding dimensions differ across posts: {sorted(dims)}")
        if dims:
            (dim,) = dims
            if self.embedding_dim is None:
                object.__setattr__(self, "embedding_dim", dim)
            elif self.embedding_dim != dim:
                raise CorpusError(
                    f"embedding_dim={self.embedding_dim} but posts carry dimension {dim}")

    def __len__(self):
        return len(self.posts)

    def __iter__(self):
        return iter(self.posts)

    def __getitem__(self, i):
        return self.posts[i]

    @property
    def labels(self) -> np.ndarray:
        """Label array; raises if any post is unlabeled."""
        missing = [p.id for p in self.posts if p.label is None]
        if missing:
            raise CorpusError(f"post {missing[0]} has no label")
        return np.array([p.label for p in self.posts], dtype=int)

    def by_id(self, post_id: str) -> Post:
        for post in self.posts:
            if post.id == post_id:
                return post
        raise KeyError(post_id)

    def filter(self, platform: str | None = None, labeled: bool = False,
               has_audio: bool = False) -> "Corpus":
        keep = [p for p in self.posts
                if (platform is None or p.platform == platform)
                and (not labeled or p.label is not None)
                and (not has_audio or p.audio_path is not None)]
        return Corpus(tuple(keep), self.embedding_dim)

    def subset(self, indices: Iterable[int]) -> "Corpus":
        return Corpus(tuple(self.posts[i] for i in indices), self.embedding_dim)

    def label_counts(self) -> LabelCounts:
        counter = Counter((p.platform, p.label) for p in self.posts if p.label is not None)
        return LabelCounts(dict(counter))


def _is_finite_number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _optional_map(value, name):
    if value is None:
        return None
    if not isinstance(value, Mapping):
        raise CorpusError(f"{name} must be an object")
    return dict(value)


def _as_list(value):
    if not isinstance(value, (list, tuple)):
        raise CorpusError("embedding must be an array")
    return value


def load_corpus(path: str | Path) -> Corpus:
    """Read a JSON-lines post file.

    Blank lines are skipped. Errors carry the 1-based line number of the
    offending record.
    """
    posts = []
    seen: dict[str, int] = {}
    dim = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                post = Post.from_record(rec)
            except (json.JSONDecodeError, CorpusError, TypeError, ValueError) as exc:
                raise CorpusError(f"line {lineno}: {exc}") from exc
            if post.id in seen:
                raise CorpusError(
                    f"line {lineno}: duplicate post id {post.id!r} (first seen on line {seen[post.id]})")
            seen[post.id] = lineno
            if post.embedding is not None:
                if dim is None:
                    dim = len(post.embedding)
                elif len(post.embedding) != dim:
                    raise CorpusError(
                        f"line {lineno}: embedding dimension {len(post.embedding)} != {dim}")
            posts.append(post)
    return Corpus(tuple(posts), dim)


def dump_corpus(corpus: Corpus, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for post in corpus:
            fh.write(json.dumps(post.to_record(), ensure_ascii=False) + "\n")


def join_tiktok_text(transcript: str, ocr_text: str) -> str:
    """Combine a video's speech transcript and on-screen text into one field."""
    return " ".join(part for part in (transcript.strip(), ocr_text.strip()) if part)


_WS = re.compile(r"\s+")


def clean_text(text: str) -> str:
    """Drop whitespace-delimited tokens starting with '#' or '@'.

    >>> clean_text("Mira #DANA @user esto")
    'Mira esto'
    """
    return " ".join(tok for tok in _WS.split(text) if tok and tok[0] not in "#@")


def match_keywords(text: str, keywords: Sequence[str] = DANA_KEYWORDS) -> list[str]:
    """Return every keyword occurring in ``text`` (case-insensitive, accent-sensitive)."""
    if not keywords:
        raise ValueError("keywords must be non-empty")
    haystack = text.lower()
    return [kw for kw in keywords if kw.lower() in haystack]


def stratified_indices(labels: Sequence[int], k: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Stratified k-fold split of ``labels`` into (train, test) index arrays.

    Each class is shuffled with a seeded generator; the shuffled classes are
    then concatenated in label order and dealt round-robin, so the deal keeps
    going from the fold where the previous class stopped. That keeps fold
    sizes within one item of each other as well as the per-class counts.
    """
    labels = np.asarray(labels)
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if labels.size == 0:
        raise ValueError("no labels to split")
    rng = np.random.default_rng(seed)
    classes, sizes = np.unique(labels, return_counts=True)
    small = classes[sizes < k]
    if small.size:
        raise ValueError(f"class {small[0]} has fewer than k={k} members")
    order = np.concatenate([rng.permutation(np.flatnonzero(labels == c)) for c in classes])
    fold_of = np.empty(labels.size, dtype=int)
    fold_of[order] = np.arange(order.size) % k
    everything = np.arange(labels.size)
    return [(everything[fold_of != f], everything[fold_of == f]) for f in range(k)]


def stratified_folds(corpus: Corpus, k: int = 5, seed: int = 0):
    """Stratified folds over a labeled corpus; see :func:`stratified_indices`."""
    return stratified_indices(corpus.labels, k, seed)
