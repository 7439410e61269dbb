import numpy as np
import pytest
import scipy.sparse as sp
from scipy.optimize import minimize

from danadisinfo import classify as cl
from danadisinfo.corpus import Corpus, Post
from danadisinfo.synthetic import make_corpus
from danadisinfo.textstats import tokenize


def blobs(rng, n=100, gap=3.0, noise=1.0):
    X = np.vstack([rng.normal(-gap / 2, noise, (n, 2)), rng.normal(gap / 2, noise, (n, 2))])
    return X, np.array([0] * n + [1] * n)


def dual_oracle(X, y, C):
    """Solve the box-constrained dual with L-BFGS-B and return the primal optimum."""
    s = 2.0 * y - 1.0
    Z = np.hstack([X, np.ones((X.shape[0], 1))]) * s[:, None]
    Q = Z @ Z.T

    def neg_dual(a):
        return 0.5 * a @ Q @ a - a.sum(), Q @ a - 1.0

    res = minimize(neg_dual, np.zeros(len(y)), jac=True, method="L-BFGS-B",
                   bounds=[(0, C)] * len(y), options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 10000})
    wb = Z.T @ res.x
    return cl.svm_primal_objective(wb[:-1], wb[-1], X, y, C)


def test_svm_separable_training_accuracy(rng):
    X, y = blobs(rng, 50, gap=8.0, noise=0.5)
    model = cl.train_svm(X, y, C=10.0)
    assert (model.predict(sp.csr_matrix(X)) == y).all()
    assert model.params["converged"]


@pytest.mark.parametrize("C", [0.1, 1.0])
def test_svm_objective_matches_oracle(rng, C):
    X, y = blobs(rng)  # 200 points in 2-D, overlapping
    model = cl.train_svm(X, y, C=C)
    ours = cl.svm_primal_objective(model.weights, model.bias, X, y, C)
    best = dual_oracle(X, y, C)
    assert ours <= best * (1 + 1e-3)


def test_svm_dual_monotone_and_deterministic(rng):
    X, y = blobs(rng, 80, gap=1.0)
    a = cl.train_svm(X, y, seed=3)
    b = cl.train_svm(X, y, seed=3)
    assert np.all(np.diff(a.history) >= -1e-9)
    assert np.array_equal(a.weights, b.weights) and a.bias == b.bias


def test_svm_errors():
    X = np.eye(3)
    with pytest.raises(cl.TrainingError, match="single class"):
        cl.train_svm(X, [1, 1, 1])
    with pytest.raises(cl.TrainingError):
        cl.train_svm(X, [0, 1])
    with pytest.raises(cl.TrainingError):
        cl.train_svm(X, [0, 1, 2])


def test_fusion_gradient_finite_differences(rng):
    X = rng.standard_normal((40, 6))
    y = (rng.random(40) > 0.5).astype(float)
    params = rng.standard_normal(7)
    _, grad = cl.fusion_loss_and_grad(params, X, y, 0.1)
    h = 1e-6
    fd = np.empty_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h
        fd[i] = (cl.fusion_loss_and_grad(params + e, X, y, 0.1)[0]
                 - cl.fusion_loss_and_grad(params - e, X, y, 0.1)[0]) / (2 * h)
    assert np.abs(fd - grad).max() <= 1e-5 * max(1.0, np.abs(grad).max())


def audio_only_fixture(seed, n=100):
    """Random embeddings; the label lives in two of five audio features."""
    rng = np.random.default_rng(seed)
    y = np.array([0] * n + [1] * n)
    emb = rng.standard_normal((2 * n, 8))
    audio = rng.standard_normal((2 * n, 5)) * [50, 1, 1, 0, 3] + [0, 0, 0, 7, 0]
    audio[:, 1] += 2.5 * y
    audio[:, 4] -= 6.0 * y
    return emb, audio, y


def test_fusion_audio_signal_only():
    emb, audio, y = audio_only_fixture(0)
    model = cl.train_fusion(emb, audio, y)
    assert model.params["converged"]
    assert model.norm_stats.flagged.tolist() == [False, False, False, True, False]
    emb_t, audio_t, y_t = audio_only_fixture(1)
    acc = (model.predict(cl.fusion_features(model, emb_t, audio_t)) == y_t).mean()
    assert acc > 0.9


def test_fusion_missing_modality():
    with pytest.raises(cl.TrainingError, match="p1"):
        cl.train_fusion([[0.0], None], [[1.0], [2.0]], [0, 1], ids=["p0", "p1"])
    with pytest.raises(cl.TrainingError, match="p0"):
        cl.train_fusion([[0.0], [1.0]], [None, [2.0]], [0, 1], ids=["p0", "p1"])


def test_norm_stats_passthrough():
    A = np.array([[1.0, 5.0], [3.0, 5.0]])
    ns = cl.NormStats.fit(A)
    assert ns.flagged.tolist() == [False, True]
    assert np.allclose(ns.apply(A), [[-1.0, 5.0], [1.0, 5.0]])


def test_binary_metrics():
    m = cl.binary_metrics([1, 1, 0, 0], [1, 0, 1, 0])
    assert (m.accuracy, m.precision, m.recall, m.f1) == (0.5, 0.5, 0.5, 0.5)
    z = cl.binary_metrics([0, 0], [0, 0])
    assert (z.precision, z.recall, z.f1, z.accuracy) == (0.0, 0.0, 0.0, 1.0)


def test_constant_baseline_on_published_counts():
    posts = tuple(Post(f"p{i}", "x", "t", int(i >= 308)) for i in range(650))
    rep = cl.evaluate_cv(Corpus(posts), cl.ModelSpec("constant"), k=5, seed=0)
    assert rep.recall == (1.0, 0.0)
    assert rep.precision[0] == pytest.approx(342 / 650, abs=1e-4)
    assert rep.f1[0] == pytest.approx(2 * 342 / (342 + 650), abs=1e-4)


def test_cv_fold_vocabulary_has_no_test_tokens():
    corpus = make_corpus(30, 30, seed=5)
    posts = list(corpus)
    posts[7] = Post(posts[7].id, posts[7].platform, posts[7].text + " tokenunico",
                    posts[7].label, posts[7].emotions, embedding=posts[7].embedding)
    corpus = Corpus(tuple(posts), corpus.embedding_dim)
    rep = cl.evaluate_cv(corpus, "svm", k=5, seed=2)
    for model, (train_idx, test_idx) in zip(rep.fold_models, rep.fold_splits):
        train_tokens = {t for i in train_idx for t in tokenize(posts[i].text)}
        test_only = {t for i in test_idx for t in tokenize(posts[i].text)} - train_tokens
        assert not test_only & set(model.vocabulary.terms)
        assert set(model.vocabulary.terms) <= train_tokens
        if 7 in test_idx:
            assert "tokenunico" not in model.vocabulary


def test_svm_drops_hashtags_and_mentions():
    corpus = make_corpus(10, 10, seed=1)
    model = cl.fit_model(corpus, cl.ModelSpec("svm"))
    assert "dana" in model.vocabulary  # plain word survives
    posts = [Post(p.id, p.platform, p.text + f" #tag{i} @user{i}", p.label) for i, p in enumerate(corpus)]
    model = cl.fit_model(Corpus(tuple(posts)), cl.ModelSpec("svm"))
    assert not any(t.startswith(("tag", "user")) for t in model.vocabulary.terms)


def test_evaluate_cv_deterministic_and_parallel():
    corpus = make_corpus(40, 40, seed=2)
    a = cl.evaluate_cv(corpus, "svm", k=5, seed=7)
    b = cl.evaluate_cv(corpus, "svm", k=5, seed=7, workers=4)
    assert a.folds == b.folds and a.params == b.params
    assert a.f1[0] > 0.7


def test_model_roundtrip(tmp_path):
    corpus = make_corpus(20, 20, seed=4)
    svm = cl.fit_model(corpus, cl.ModelSpec("svm"))
    cl.save_model(svm, tmp_path / "svm.json")
    back = cl.load_model(tmp_path / "svm.json")
    assert np.array_equal(cl.predict_corpus(svm, corpus), cl.predict_corpus(back, corpus))

    audio = {p.id: {"f1": float(p.label) + 0.1 * i, "f2": 1.0} for i, p in enumerate(corpus)}
    fus = cl.fit_model(corpus, cl.ModelSpec("fusion"), audio)
    cl.save_model(fus, tmp_path / "fus.json")
    back = cl.load_model(tmp_path / "fus.json")
    assert back.audio_features == ("f1", "f2")
    assert np.array_equal(cl.predict_corpus(fus, corpus, audio), cl.predict_corpus(back, corpus, audio))

    (tmp_path / "bad.json").write_text('{"format": "other"}')
    with pytest.raises(ValueError):
        cl.load_model(tmp_path / "bad.json")


def test_fusion_needs_audio_table():
    with pytest.raises(cl.TrainingError):
        cl.fit_model(make_corpus(5, 5), cl.ModelSpec("fusion"), None)
    with pytest.raises(ValueError):
        cl.ModelSpec("forest")


def grid_search_min(X, y, C, levels=40, points=21):
    """Coarse-to-fine exhaustive search of the primal objective over (w1, w2, b)."""
    center, half = np.zeros(3), 4.0
    best = np.inf
    s = 2.0 * y - 1.0
    for _ in range(levels):
        axes = [np.linspace(c - half, c + half, points) for c in center]
        W1, W2, B = np.meshgrid(*axes, indexing="ij")
        P = np.stack([W1.ravel(), W2.ravel(), B.ravel()], axis=1)
        margins = s[None, :] * (P[:, :2] @ X.T + P[:, 2:3])
        obj = 0.5 * (P ** 2).sum(axis=1) + C * np.maximum(0.0, 1.0 - margins).sum(axis=1)
        i = int(np.argmin(obj))
        if obj[i] < best:
            best, center = float(obj[i]), P[i]
        half *= 0.6
    return best


def test_svm_objective_matches_grid_search(rng):
    X, y = blobs(rng)
    model = cl.train_svm(X, y, C=1.0)
    ours = cl.svm_primal_objective(model.weights, model.bias, X, y, 1.0)
    grid = grid_search_min(X, y, 1.0)
    assert abs(ours - grid) <= 1e-3 * grid


def test_svm_duplicated_data_same_signs(rng):
    X, y = blobs(rng, 40, gap=2.0)
    a = cl.train_svm(X, y)
    b = cl.train_svm(np.vstack([X, X]), np.concatenate([y, y]))
    probe = rng.normal(0, 2, (200, 2))
    da, db = a.decision_function(probe), b.decision_function(probe)
    clear = np.abs(da) > 0.05
    assert (np.sign(da[clear]) == np.sign(db[clear])).all()


def test_svm_order_invariant_predictions(rng):
    X, y = blobs(rng, 60, gap=2.0)
    perm = rng.permutation(y.size)
    a = cl.train_svm(X, y, tol=1e-8, max_epochs=5000)
    b = cl.train_svm(X[perm], y[perm], tol=1e-8, max_epochs=5000)
    probe = rng.normal(0, 2, (300, 2))
    assert np.allclose(a.decision_function(probe), b.decision_function(probe), atol=1e-3)
    assert (a.predict(probe) == b.predict(probe)).all()
    # inference is row-wise
    assert np.array_equal(a.predict(probe)[perm[:50] % 300], a.predict(probe[perm[:50] % 300]))


def test_fusion_single_audio_feature_500_points():
    rng = np.random.default_rng(11)
    n = 500
    y = rng.integers(0, 2, n)
    emb = rng.standard_normal((n, 16))
    audio = rng.standard_normal((n, 6)) * [1, 10, 0.1, 5, 1, 1]
    audio[:, 2] += 0.4 * y  # the only informative column
    model = cl.train_fusion(emb[:250], audio[:250], y[:250])
    pred = model.predict(cl.fusion_features(model, emb[250:], audio[250:]))
    assert (pred == y[250:]).mean() > 0.9


def test_perfect_separability_metrics():
    corpus = make_corpus(25, 25, seed=9, separation=0.5)
    rep = cl.evaluate_cv(corpus, "svm", k=5, seed=0)
    for name in cl.METRIC_NAMES:
        assert getattr(rep, name) == (1.0, 0.0)


def test_f1_identity(rng):
    for _ in range(50):
        t, p = rng.integers(0, 2, 30), rng.integers(0, 2, 30)
        m = cl.binary_metrics(t, p)
        if m.precision + m.recall:
            assert m.f1 == pytest.approx(2 * m.precision * m.recall / (m.precision + m.recall))
        assert m.tp + m.fp + m.fn + m.tn == 30
