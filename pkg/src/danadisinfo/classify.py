"""Linear detectors and the stratified cross-validation harness.

Two trainable heads:

* ``svm``: L2-regularized hinge-loss linear SVM over TF-IDF vectors of
  cleaned post text, trained by dual coordinate descent. The bias is folded
  in as a constant feature, so it is regularized like any other weight.
* ``fusion``: logistic-loss linear head over ``[embedding || z-scored audio]``.

A ``constant`` pseudo-model (always predicts one label) exists for baselines.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import minimize
from scipy.special import expit

from .corpus import Corpus, clean_text, stratified_indices
from .textstats import TfidfVocabulary, tfidf_fit, tfidf_transform

MODEL_FORMAT = "danadisinfo-linear-model"
MODEL_VERSION = 1


class TrainingError(ValueError):
    pass


@dataclass(frozen=True)
class NormStats:
    """Training-split z-score statistics for the audio block.

    Dimensions with zero training variance are ``flagged``; they are stored
    with mean 0 and std 1 and so pass through unscaled.
    """

    mean: np.ndarray
    std: np.ndarray
    flagged: np.ndarray

    @classmethod
    def fit(cls, A: np.ndarray) -> "NormStats":
        mean = A.mean(axis=0)
        std = A.std(axis=0)
        flagged = ~(std > 0)
        return cls(np.where(flagged, 0.0, mean), np.where(flagged, 1.0, std), flagged)

    def apply(self, A: np.ndarray) -> np.ndarray:
        return (A - self.mean) / self.std


@dataclass
class LinearModel:
    weights: np.ndarray
    bias: float
    feature_space: str  # "tfidf" | "fusion"
    norm_stats: NormStats | None = None
    vocabulary: TfidfVocabulary | None = None
    embedding_dim: int | None = None
    audio_features: tuple[str, ...] | None = None
    params: dict = field(default_factory=dict)
    history: list[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise TrainingError("model weights are not finite")
        if self.feature_space not in ("tfidf", "fusion"):
            raise ValueError(f"unknown feature space {self.feature_space!r}")

    def decision_function(self, X) -> np.ndarray:
        return np.asarray(X @ self.weights).ravel() + self.bias

    def predict(self, X) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)


# -- SVM ------------------------------------------------------------------

def svm_primal_objective(w, b, X, y, C):
    """``0.5 (|w|^2 + b^2) + C * sum(hinge)`` with labels y in {0, 1}."""
    s = 2.0 * np.asarray(y) - 1.0
    margins = s * (np.asarray(X @ w).ravel() + b)
    return 0.5 * (float(w @ w) + b * b) + C * float(np.maximum(0.0, 1.0 - margins).sum())


def train_svm(X, y, C: float = 1.0, tol: float = 1e-4, max_epochs: int = 1000,
              seed: int = 0) -> LinearModel:
    """Dual coordinate descent for the hinge-loss SVM.

    Epochs visit coordinates in a seeded random order and stop once the
    duality gap ``P(w) - D(alpha)`` drops to ``tol`` or after ``max_epochs``.
    ``history`` on the returned model holds the dual objective after each
    epoch.
    """
    X = sp.csr_matrix(X, dtype=float)
    y = np.asarray(y).astype(int).ravel()
    n, d = X.shape
    if y.size != n:
        raise TrainingError("X and y disagree on the number of examples")
    if not np.isin(y, (0, 1)).all():
        raise TrainingError("labels must be 0/1")
    if (y == 0).all() or (y == 1).all():
        raise TrainingError("training data contains a single class")
    s = 2.0 * y - 1.0
    indptr, indices, data = X.indptr, X.indices, X.data
    qii = np.asarray(X.multiply(X).sum(axis=1)).ravel() + 1.0
    alpha = np.zeros(n)
    w = np.zeros(d)
    b = 0.0
    rng = np.random.default_rng(seed)
    history = []
    converged = False
    for _ in range(max_epochs):
        for i in rng.permutation(n):
            lo, hi = indptr[i], indptr[i + 1]
            cols, vals = indices[lo:hi], data[lo:hi]
            g = s[i] * (vals @ w[cols] + b) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg != 0.0:
                new = min(max(a - g / qii[i], 0.0), C)
                step = (new - a) * s[i]
                alpha[i] = new
                w[cols] += step * vals
                b += step
        sq_norm = float(w @ w) + b * b
        dual = float(alpha.sum()) - 0.5 * sq_norm
        primal = svm_primal_objective(w, b, X, y, C)
        history.append(dual)
        if primal - dual <= tol:
            converged = True
            break
    return LinearModel(w, b, "tfidf", params={"C": C, "tol": tol, "seed": seed,
                                               "epochs": len(history), "converged": converged},
                       history=history)


# -- fusion head ----------------------------------------------------------

def fusion_loss_and_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray, l2: float):
    """Mean logistic loss plus ``l2/2 |w|^2``; the last entry of ``params`` is the bias."""
    w, b = params[:-1], params[-1]
    s = 2.0 * y - 1.0
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, -s * z))) + 0.5 * l2 * float(w @ w)
    coef = -s * expit(-s * z) / y.size
    grad = np.empty_like(params)
    grad[:-1] = X.T @ coef + l2 * w
    grad[-1] = coef.sum()
    return loss, grad


def _stack_modalities(embeddings, audio, ids):
    if len(embeddings) != len(audio):
        raise TrainingError("embeddings and audio rows differ in length")
    if ids is None:
        ids = [str(i) for i in range(len(embeddings))]
    for pid, e, a in zip(ids, embeddings, audio):
        if e is None:
            raise TrainingError(f"post {pid} has no embedding")
        if a is None:
            raise TrainingError(f"post {pid} has no audio features")
    E = np.asarray([np.asarray(e, dtype=float) for e in embeddings])
    A = np.asarray([np.asarray(a, dtype=float) for a in audio])
    if E.ndim != 2 or A.ndim != 2:
        raise TrainingError("embeddings and audio rows must have consistent dimensions")
    return E, A


def train_fusion(embeddings, audio, y, l2: float = 1e-2, gtol: float = 1e-5,
                 ids: Sequence[str] | None = None,
                 audio_features: Sequence[str] | None = None) -> LinearModel:
    """Fit the logistic fusion head.

    ``embeddings`` and ``audio`` are row-aligned sequences (``None`` marks a
    missing modality, reported with its entry of ``ids``). The audio block is
    z-scored with statistics of these rows only. L-BFGS runs until the
    gradient 2-norm is at most ``gtol``.
    """
    E, A = _stack_modalities(embeddings, audio, ids)
    y = np.asarray(y).astype(float).ravel()
    if (y == 0).all() or (y == 1).all():
        raise TrainingError("training data contains a single class")
    stats = NormStats.fit(A)
    X = np.hstack([E, stats.apply(A)])
    x0 = np.zeros(X.shape[1] + 1)
    res = minimize(fusion_loss_and_grad, x0, args=(X, y, l2), jac=True, method="L-BFGS-B",
                   options={"gtol": gtol * 1e-3, "ftol": 0.0, "maxiter": 20000, "maxcor": 20})
    grad_norm = float(np.linalg.norm(fusion_loss_and_grad(res.x, X, y, l2)[1]))
    return LinearModel(res.x[:-1], float(res.x[-1]), "fusion", norm_stats=stats,
                       embedding_dim=E.shape[1],
                       audio_features=None if audio_features is None else tuple(audio_features),
                       params={"l2": l2, "gtol": gtol, "grad_norm": grad_norm,
                               "converged": grad_norm <= gtol, "iterations": int(res.nit)})


def fusion_features(model: LinearModel, embeddings, audio, ids=None) -> np.ndarray:
    E, A = _stack_modalities(embeddings, audio, ids)
    return np.hstack([E, model.norm_stats.apply(A)])


# -- corpus-level plumbing ------------------------------------------------

@dataclass(frozen=True)
class ModelSpec:
    kind: str = "svm"  # "svm" | "fusion" | "constant"
    C: float = 1.0
    l2: float = 1e-2
    constant: int = 1

    def __post_init__(self):
        if self.kind not in ("svm", "fusion", "constant"):
            raise ValueError(f"unknown model kind {self.kind!r}")

    def describe(self) -> dict:
        if self.kind == "svm":
            return {"model": "svm", "C": self.C}
        if self.kind == "fusion":
            return {"model": "fusion", "l2": self.l2}
        return {"model": "constant", "label": self.constant}


def _audio_rows(corpus: Corpus, audio_table, names):
    rows = []
    for post in corpus:
        row = None if audio_table is None else audio_table.get(post.id)
        rows.append(None if row is None else [row[n] for n in names])
    return rows


def _audio_names(audio_table):
    if not audio_table:
        raise TrainingError("fusion model needs an audio feature table")
    first = next(iter(audio_table.values()))
    return tuple(first)


def fit_model(corpus: Corpus, spec: ModelSpec, audio_table: Mapping | None = None,
              seed: int = 0) -> LinearModel:
    """Fit ``spec`` on every post of ``corpus``; feature pipelines see only these posts."""
    y = corpus.labels
    if spec.kind == "svm":
        texts = [clean_text(p.text) for p in corpus]
        vocab = tfidf_fit(texts)
        model = train_svm(tfidf_transform(texts, vocab), y, C=spec.C, seed=seed)
        model.vocabulary = vocab
        return model
    if spec.kind == "fusion":
        names = _audio_names(audio_table)
        ids = [p.id for p in corpus]
        return train_fusion([p.embedding for p in corpus], _audio_rows(corpus, audio_table, names),
                            y, l2=spec.l2, ids=ids, audio_features=names)
    raise TrainingError("constant baselines have no fitted model")


def predict_corpus(model: LinearModel, corpus: Corpus, audio_table: Mapping | None = None) -> np.ndarray:
    if model.feature_space == "tfidf":
        return model.predict(tfidf_transform([clean_text(p.text) for p in corpus], model.vocabulary))
    names = model.audio_features or _audio_names(audio_table)
    X = fusion_features(model, [p.embedding for p in corpus],
                        _audio_rows(corpus, audio_table, names), ids=[p.id for p in corpus])
    return model.predict(X)


# -- metrics --------------------------------------------------------------

@dataclass(frozen=True)
class FoldMetrics:
    accuracy: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def binary_metrics(y_true, y_pred) -> FoldMetrics:
    """Accuracy / precision / recall / F1 with label 1 as the positive class.

    Any ratio with a zero denominator is 0.
    """
    y_true = np.asarray(y_true).astype(int)
    y_pred = np.asarray(y_pred).astype(int)
    tp = int(np.sum((y_true == 1) & (y_pred == 1)))
    fp = int(np.sum((y_true == 0) & (y_pred == 1)))
    fn = int(np.sum((y_true == 1) & (y_pred == 0)))
    tn = int(np.sum((y_true == 0) & (y_pred == 0)))
    total = tp + fp + fn + tn
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return FoldMetrics((tp + tn) / total if total else 0.0, precision, recall, f1, tp, fp, fn, tn)


METRIC_NAMES = ("accuracy", "f1", "precision", "recall")


@dataclass
class MetricsReport:
    folds: list[FoldMetrics]
    params: dict = field(default_factory=dict)
    fold_models: list = field(default_factory=list, repr=False, compare=False)
    fold_splits: list = field(default_factory=list, repr=False, compare=False)

    def _stat(self, name):
        vals = np.array([getattr(f, name) for f in self.folds])
        return float(vals.mean()), float(vals.std())

    @property
    def accuracy(self):
        return self._stat("accuracy")

    @property
    def f1(self):
        return self._stat("f1")

    @property
    def precision(self):
        return self._stat("precision")

    @property
    def recall(self):
        return self._stat("recall")


def evaluate_cv(corpus: Corpus, spec: ModelSpec | str = "svm", k: int = 5, seed: int = 0,
                audio_table: Mapping | None = None, workers: int = 1) -> MetricsReport:
    """Stratified k-fold evaluation; every feature pipeline is refit per training fold."""
    if isinstance(spec, str):
        spec = ModelSpec(spec)
    labels = corpus.labels
    splits = stratified_indices(labels, k, seed)

    def run(fold):
        train_idx, test_idx = splits[fold]
        test = corpus.subset(test_idx)
        if spec.kind == "constant":
            return None, binary_metrics(labels[test_idx], np.full(test_idx.size, spec.constant))
        model = fit_model(corpus.subset(train_idx), spec, audio_table, seed=seed + fold)
        return model, binary_metrics(labels[test_idx], predict_corpus(model, test, audio_table))

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        results = list(pool.map(run, range(k)))
    params = {**spec.describe(), "folds": k, "seed": seed}
    return MetricsReport([m for _, m in results], params,
                         fold_models=[mod for mod, _ in results], fold_splits=splits)


# -- persistence ----------------------------------------------------------

def save_model(model: LinearModel, path: str | Path) -> None:
    blob = {
        "format": MODEL_FORMAT,
        "version": MODEL_VERSION,
        "feature_space": model.feature_space,
        "weights": model.weights.tolist(),
        "bias": model.bias,
        "params": model.params,
    }
    if model.norm_stats is not None:
        blob["norm_stats"] = {"mean": model.norm_stats.mean.tolist(),
                              "std": model.norm_stats.std.tolist(),
                              "flagged": model.norm_stats.flagged.tolist()}
    if model.vocabulary is not None:
        blob["vocabulary"] = {"terms": list(model.vocabulary.terms),
                              "idf": model.vocabulary.idf.tolist()}
    if model.embedding_dim is not None:
        blob["embedding_dim"] = model.embedding_dim
    if model.audio_features is not None:
        blob["audio_features"] = list(model.audio_features)
    Path(path).write_text(json.dumps(blob, ensure_ascii=False, sort_keys=True), encoding="utf-8")


def load_model(path: str | Path) -> LinearModel:
    blob = json.loads(Path(path).read_text(encoding="utf-8"))
    if blob.get("format") != MODEL_FORMAT:
        raise ValueError(f"{path}: not a {MODEL_FORMAT} file")
    if blob.get("version") != MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {blob.get('version')!r}")
    ns = blob.get("norm_stats")
    vocab = blob.get("vocabulary")
    return LinearModel(
        weights=np.array(blob["weights"], dtype=float),
        bias=float(blob["bias"]),
        feature_space=blob["feature_space"],
        norm_stats=None if ns is None else NormStats(np.array(ns["mean"]), np.array(ns["std"]),
                                                     np.array(ns["flagged"], dtype=bool)),
        vocabulary=None if vocab is None else TfidfVocabulary(tuple(vocab["terms"]),
                                                              np.array(vocab["idf"])),
        embedding_dim=blob.get("embedding_dim"),
        audio_features=None if blob.get("audio_features") is None else tuple(blob["audio_features"]),
        params=blob.get("params", {}),
    )
