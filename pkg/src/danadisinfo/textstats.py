"""Tokenization, Weirdness Index, lexicon profiling and TF-IDF."""

from __future__ import annotations

import csv
import math
import re
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

_TOKEN = re.compile(r"[^\W_]+")


def tokenize(text: str) -> list[str]:
    """Lowercase and split on anything that is not a letter or digit.

    >>> tokenize("Año de DANA, año2")
    ['año', 'de', 'dana', 'año2']
    """
    return _TOKEN.findall(text.lower())


@dataclass(frozen=True)
class TokenCounts:
    counts: Mapping[str, int]
    total: int

    def __post_init__(self):
        if any(c < 0 for c in self.counts.values()):
            raise ValueError("token counts must be nonnegative")
        if self.total != sum(self.counts.values()):
            raise ValueError("total must equal the sum of counts")

    @classmethod
    def from_texts(cls, texts: Iterable[str]) -> "TokenCounts":
        counter = Counter()
        for text in texts:
            counter.update(tokenize(text))
        return cls(dict(counter), sum(counter.values()))


@dataclass(frozen=True)
class WiReport:
    per_word: Mapping[str, float]
    mean: float
    median: float
    std: float
    frac_above_2: float


def weirdness_index(target: TokenCounts, reference: TokenCounts) -> WiReport:
    """Add-one smoothed relative-frequency ratio of target over reference.

    ``WI(w) = ((c_t(w) + 1) / (N_t + V)) / ((c_r(w) + 1) / (N_r + V))`` where
    ``V`` is the size of the union vocabulary. Summary statistics (population
    std) cover the target vocabulary only.
    """
    if not target.counts or target.total <= 0:
        raise ValueError("target corpus has no tokens")
    if reference.total <= 0:
        raise ValueError("reference corpus has no tokens")
    vocab_size = len(set(target.counts) | set(reference.counts))
    t_denom = target.total + vocab_size
    r_denom = reference.total + vocab_size
    per_word = {
        w: ((c + 1) / t_denom) / ((reference.counts.get(w, 0) + 1) / r_denom)
        for w, c in target.counts.items()
    }
    values = np.fromiter(per_word.values(), dtype=float, count=len(per_word))
    return WiReport(
        per_word=per_word,
        mean=float(values.mean()),
        median=float(np.median(values)),
        std=float(values.std()),
        frac_above_2=float(np.count_nonzero(values > 2) / values.size),
    )


def write_wi_csv(report: WiReport, path: str | Path) -> None:
    """One row per target word, sorted by descending WI then word."""
    rows = sorted(report.per_word.items(), key=lambda kv: (-kv[1], kv[0]))
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["word", "wi"])
        for word, wi in rows:
            writer.writerow([word, repr(wi)])


# -- lexicon --------------------------------------------------------------

@dataclass(frozen=True)
class Lexicon:
    """Category -> entries; an entry ending in '*' is a prefix pattern."""

    categories: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        for cat, entries in self.categories.items():
            for entry in entries:
                if not entry or entry == "*":
                    raise ValueError(f"category {cat!r} has an empty entry")
                if entry != entry.lower():
                    raise ValueError(f"category {cat!r}: entry {entry!r} is not lowercase")

    def matches(self, category: str, token: str) -> bool:
        for entry in self.categories[category]:
            if entry.endswith("*"):
                if token.startswith(entry[:-1]):
                    return True
            elif token == entry:
                return True
        return False


def parse_lexicon(text: str) -> Lexicon:
    """Parse ``category: word1, word2, prefijo*`` lines.

    Blank lines and lines starting with ``#`` are ignored. A category that
    appears on several lines accumulates entries.
    """
    cats: dict[str, list[str]] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, sep, rest = line.partition(":")
        if not sep or not name.strip():
            raise ValueError(f"lexicon line {lineno}: expected 'category: entries'")
        entries = [e.strip().lower() for e in rest.split(",")]
        if any(not e for e in entries):
            raise ValueError(f"lexicon line {lineno}: empty entry")
        cats.setdefault(name.strip(), []).extend(entries)
    return Lexicon({k: tuple(v) for k, v in cats.items()})


def load_lexicon(path: str | Path) -> Lexicon:
    return parse_lexicon(Path(path).read_text(encoding="utf-8"))


def lexicon_profile(text: str, lexicon: Lexicon) -> dict[str, float]:
    """Percentage of tokens falling in each category (multi-membership allowed)."""
    tokens = tokenize(text)
    if not tokens:
        return {cat: 0.0 for cat in lexicon.categories}
    counts = Counter(tokens)
    out = {}
    for cat in lexicon.categories:
        hits = sum(n for tok, n in counts.items() if lexicon.matches(cat, tok))
        out[cat] = 100.0 * hits / len(tokens)
    return out


# -- TF-IDF ---------------------------------------------------------------

@dataclass(frozen=True)
class TfidfVocabulary:
    terms: tuple[str, ...]
    idf: np.ndarray

    @cached_property
    def index(self) -> dict[str, int]:
        return {t: i for i, t in enumerate(self.terms)}

    def __contains__(self, term):
        return term in self.index

    def __len__(self):
        return len(self.terms)


def tfidf_fit(texts: Sequence[str]) -> TfidfVocabulary:
    """Fit the vocabulary and ``idf(t) = ln((1 + N) / (1 + df(t))) + 1``."""
    if len(texts) == 0:
        raise ValueError("cannot fit TF-IDF on an empty document list")
    df = Counter()
    for text in texts:
        df.update(set(tokenize(text)))
    terms = tuple(sorted(df))
    n = len(texts)
    idf = np.array([math.log((1 + n) / (1 + df[t])) + 1.0 for t in terms])
    return TfidfVocabulary(terms, idf)


def tfidf_transform(texts: str | Sequence[str], vocab: TfidfVocabulary) -> sp.csr_matrix:
    """Raw-count tf times idf, L2-normalized per row; unseen tokens dropped.

    A single string yields a 1-row matrix.
    """
    if isinstance(texts, str):
        texts = [texts]
    index = vocab.index
    indptr = [0]
    indices: list[int] = []
    data: list[float] = []
    for text in texts:
        counts = Counter(index[t] for t in tokenize(text) if t in index)
        cols = sorted(counts)
        vals = np.array([counts[c] * vocab.idf[c] for c in cols], dtype=float)
        norm = np.linalg.norm(vals)
        if norm > 0:
            vals /= norm
        indices.extend(cols)
        data.extend(vals.tolist())
        indptr.append(len(indices))
    return sp.csr_matrix((data, indices, indptr), shape=(len(texts), len(vocab)))
