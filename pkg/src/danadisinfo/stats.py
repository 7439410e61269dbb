"""Rank-sum group comparisons and annotator agreement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy.special import ndtr
from scipy.stats import rankdata

DEFAULT_ALPHA = 0.05


@dataclass(frozen=True)
class MwResult:
    u: float
    p_two_sided: float
    n0: int
    n1: int


def _finite_array(values, name):
    arr = np.asarray(values, dtype=float).ravel()
    if arr.size == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def mann_whitney_u(group0: Sequence[float], group1: Sequence[float]) -> MwResult:
    """Mann-Whitney U test, normal approximation.

    ``u`` is the statistic of ``group0``: the number of (x, y) pairs with
    x > y, counting ties as one half. The two-sided p-value uses midranks,
    the tie-corrected variance and a 0.5 continuity correction. When every
    observation is tied the variance vanishes and p is 1.
    """
    x = _finite_array(group0, "group0")
    y = _finite_array(group1, "group1")
    n0, n1 = x.size, y.size
    n = n0 + n1
    ranks = rankdata(np.concatenate([x, y]))
    u = float(ranks[:n0].sum() - n0 * (n0 + 1) / 2.0)

    _, ties = np.unique(np.concatenate([x, y]), return_counts=True)
    tie_term = float(np.sum(ties.astype(float) ** 3 - ties)) / (n * (n - 1)) if n > 1 else 0.0
    var = n0 * n1 / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return MwResult(u, 1.0, n0, n1)
    z = (abs(u - n0 * n1 / 2.0) - 0.5) / math.sqrt(var)
    p = min(1.0, 2.0 * float(ndtr(-z)))
    return MwResult(u, p, n0, n1)


@dataclass(frozen=True)
class ComparisonRow:
    feature: str
    mean0: float
    std0: float
    mean1: float
    std1: float
    p: float
    u: float = float("nan")
    n0: int = 0
    n1: int = 0
    significant: bool = False


def compare_table(table: Mapping[str, Mapping[str, float]], labels: Mapping[str, int],
                  features: Iterable[str] | None = None,
                  alpha: float = DEFAULT_ALPHA) -> list[ComparisonRow]:
    """Compare feature values between label-0 and label-1 rows.

    ``table`` maps a row id (post id) to its named feature values and
    ``labels`` maps the same ids to 0/1. Rows come back ordered by ascending
    p-value, ties broken by feature name. Standard deviations are population
    (divide-by-n) values.
    """
    ids = list(table)
    if not ids:
        raise ValueError("nothing to compare")
    for pid in ids:
        if labels.get(pid) not in (0, 1):
            raise ValueError(f"post {pid} has no 0/1 label")
    if features is None:
        features = sorted(set().union(*(table[pid].keys() for pid in ids)))
    features = list(features)
    lab = np.array([labels[pid] for pid in ids])
    if not (lab == 0).any() or not (lab == 1).any():
        raise ValueError("both label groups must be non-empty")

    rows = []
    for feat in features:
        vals = np.empty(len(ids))
        for i, pid in enumerate(ids):
            try:
                vals[i] = table[pid][feat]
            except KeyError:
                raise ValueError(f"post {pid} is missing feature {feat!r}") from None
        g0, g1 = vals[lab == 0], vals[lab == 1]
        mw = mann_whitney_u(g0, g1)
        rows.append(ComparisonRow(
            feature=feat,
            mean0=float(g0.mean()), std0=float(g0.std()),
            mean1=float(g1.mean()), std1=float(g1.std()),
            p=mw.p_two_sided, u=mw.u, n0=mw.n0, n1=mw.n1,
            significant=mw.p_two_sided < alpha,
        ))
    rows.sort(key=lambda r: (r.p, r.feature))
    return rows


_FIELD_GETTERS: dict[str, Callable] = {
    "emotions": lambda post: post.emotions,
    "lexicon": lambda post: post.lexicon_scores,
}


def compare_groups(posts, feature: str | Callable = "emotions",
                   features: Iterable[str] | None = None,
                   alpha: float = DEFAULT_ALPHA) -> list[ComparisonRow]:
    """Per-feature label comparison over posts.

    ``feature`` is ``"emotions"``, ``"lexicon"`` or a callable returning a
    name -> value mapping for a post. Use :func:`compare_table` for tables
    keyed by post id, such as extracted audio features.
    """
    getter = _FIELD_GETTERS[feature] if isinstance(feature, str) else feature
    table, labels = {}, {}
    for post in posts:
        if post.label is None:
            raise ValueError(f"post {post.id} has no label")
        values = getter(post)
        if values is None:
            raise ValueError(f"post {post.id} is missing {feature if isinstance(feature, str) else 'the feature'}")
        table[post.id] = values
        labels[post.id] = post.label
    return compare_table(table, labels, features, alpha)


# -- agreement ------------------------------------------------------------

def _label_key(label) -> str:
    # int() first: str() of an IntEnum member is its qualified name on Python < 3.11
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        return str(int(label))
    return str(label)


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows index the first annotator, columns the second."""

    labels: tuple[str, ...]
    counts: np.ndarray

    def __post_init__(self):
        counts = np.asarray(self.counts)
        object.__setattr__(self, "labels", tuple(_label_key(lab) for lab in self.labels))
        if counts.ndim != 2 or counts.shape[0] != counts.shape[1]:
            raise ValueError(f"confusion matrix must be square, got shape {counts.shape}")
        if counts.shape[0] != len(self.labels):
            raise ValueError("number of labels does not match the matrix size")
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("labels must be unique")
        if not np.issubdtype(counts.dtype, np.integer):
            if not np.all(np.isfinite(counts)) or not np.all(counts == np.round(counts)):
                raise ValueError("counts must be integers")
            counts = counts.astype(np.int64)
        if (counts < 0).any():
            raise ValueError("counts must be nonnegative")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[Hashable, Hashable]],
                   labels: Sequence[Hashable]) -> "ConfusionMatrix":
        labels = tuple(_label_key(lab) for lab in labels)
        pos = {lab: i for i, lab in enumerate(labels)}
        counts = np.zeros((len(labels), len(labels)), dtype=np.int64)
        for a, b in pairs:
            counts[pos[_label_key(a)], pos[_label_key(b)]] += 1
        return cls(labels, counts)

    @property
    def T(self) -> "ConfusionMatrix":
        return ConfusionMatrix(self.labels, self.counts.T.copy())


def cohen_kappa(m: ConfusionMatrix) -> float:
    """Cohen's kappa ``(p_o - p_e) / (1 - p_e)`` of a confusion matrix."""
    total = m.total
    if total <= 0:
        raise ValueError("confusion matrix total must be positive")
    counts = m.counts.astype(float)
    p_o = np.trace(counts) / total
    p_e = float(counts.sum(axis=1) @ counts.sum(axis=0)) / total ** 2
    if p_e == 1.0:
        if p_o == 1.0:
            return 1.0
        raise ValueError("kappa undefined: chance agreement is 1")
    return float((p_o - p_e) / (1.0 - p_e))


def collapse_matrix(m: ConfusionMatrix, mapping: Mapping) -> ConfusionMatrix:
    """Merge categories by summing cells under ``mapping``.

    Mapping keys and values are compared as strings. Target categories keep
    the order in which they are first reached walking ``m.labels``.
    """
    mapping = {_label_key(k): _label_key(v) for k, v in mapping.items()}
    missing = [lab for lab in m.labels if lab not in mapping]
    if missing:
        raise ValueError(f"category {missing[0]!r} has no mapping")
    targets = list(dict.fromkeys(mapping[lab] for lab in m.labels))
    pos = {t: i for i, t in enumerate(targets)}
    idx = np.array([pos[mapping[lab]] for lab in m.labels])
    out = np.zeros((len(targets), len(targets)), dtype=np.int64)
    np.add.at(out, (idx[:, None], idx[None, :]), m.counts)
    return ConfusionMatrix(tuple(targets), out)
