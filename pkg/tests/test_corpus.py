import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from danadisinfo.corpus import (DANA_KEYWORDS, Corpus, CorpusError, Post, clean_text, dump_corpus,
                                join_tiktok_text, load_corpus, match_keywords, stratified_indices)
from danadisinfo.synthetic import make_corpus


def write_lines(path, records):
    path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
    return path


def test_roundtrip(tmp_path):
    c = make_corpus(5, 5, seed=3)
    dump_corpus(c, tmp_path / "c.jsonl")
    back = load_corpus(tmp_path / "c.jsonl")
    assert back.posts == c.posts
    assert back.embedding_dim == 8


def test_label_counts():
    c = make_corpus(7, 4, seed=0)
    counts = c.label_counts()
    assert counts.get() == 11
    assert counts.get(label=0) == 7
    assert counts.get("x") + counts.get("tiktok") == 11


@pytest.mark.parametrize("rec, msg", [
    ({"id": "a", "platform": "fb", "text": ""}, "platform"),
    ({"id": "a", "platform": "x", "text": "", "label": 2}, "label"),
    ({"id": "a", "platform": "x", "text": "", "emotions": {"joy": 1.5}}, "joy"),
    ({"id": "a", "platform": "x", "text": "", "color": "red"}, "unknown"),
    ({"id": "a", "platform": "x"}, "text"),
    ({"id": "a", "platform": "x", "text": "", "label": True}, "label"),
])
def test_invalid_records(tmp_path, rec, msg):
    with pytest.raises(CorpusError, match=msg):
        load_corpus(write_lines(tmp_path / "c.jsonl", [rec]))


def test_duplicate_id_names_lines(tmp_path):
    recs = [{"id": "a", "platform": "x", "text": "1"}, {"id": "a", "platform": "x", "text": "2"}]
    with pytest.raises(CorpusError, match="line 2.*line 1"):
        load_corpus(write_lines(tmp_path / "c.jsonl", recs))


def test_embedding_dim_mismatch(tmp_path):
    recs = [{"id": "a", "platform": "x", "text": "", "embedding": [0.1, 0.2]},
            {"id": "b", "platform": "x", "text": "", "embedding": [0.1]}]
    with pytest.raises(CorpusError, match="dimension"):
        load_corpus(write_lines(tmp_path / "c.jsonl", recs))


def test_bad_json_reports_line(tmp_path):
    p = tmp_path / "c.jsonl"
    p.write_text('{"id": "a", "platform": "x", "text": ""}\n\n{oops\n')
    with pytest.raises(CorpusError, match="line 3"):
        load_corpus(p)


def test_labels_require_labeled_posts():
    c = Corpus((Post("a", "x", "t", 0), Post("b", "x", "t")))
    with pytest.raises(CorpusError):
        c.labels
    assert c.filter(labeled=True).labels.tolist() == [0]


def test_clean_text_examples():
    assert clean_text("Mira #DANA @user esto") == "Mira esto"
    assert clean_text("  a\tb\n#c ") == "a b"
    assert clean_text("email@x.com sí") == "email@x.com sí"


@given(st.text(alphabet=st.sampled_from(list("ab #@\t\n")), max_size=40))
def test_clean_text_idempotent(text):
    once = clean_text(text)
    assert clean_text(once) == once
    assert all(tok[0] not in "#@" for tok in once.split())


def test_join_tiktok_text():
    assert join_tiktok_text(" hola ", "") == "hola"
    assert join_tiktok_text("hola", "texto") == "hola texto"


def test_match_keywords():
    assert match_keywords("la dana engaño total") == ["DANA engaño"]
    assert match_keywords("nada") == []
    with pytest.raises(ValueError):
        match_keywords("x", ())
    assert len(DANA_KEYWORDS) == 20


def test_full_size_folds():
    labels = np.array([0] * 308 + [1] * 342)
    folds = stratified_indices(labels, 5, seed=0)
    assert [te.size for _, te in folds] == [130] * 5
    for _, te in folds:
        assert abs(np.sum(labels[te] == 1) - 342 / 5) <= 1


@settings(max_examples=60)
@given(st.lists(st.integers(0, 1), min_size=10, max_size=80), st.integers(2, 5), st.integers(0, 99))
def test_folds_partition(labels, k, seed):
    labels = np.array(labels)
    present = np.unique(labels)
    if min(np.sum(labels == c) for c in present) < k:
        with pytest.raises(ValueError):
            stratified_indices(labels, k, seed)
        return
    folds = stratified_indices(labels, k, seed)
    tests = np.concatenate([te for _, te in folds])
    assert np.array_equal(np.sort(tests), np.arange(labels.size))
    for tr, te in folds:
        assert np.intersect1d(tr, te).size == 0 and tr.size + te.size == labels.size
        for c in present:
            assert abs(np.sum(labels[te] == c) - np.sum(labels == c) / k) < 1 + 1e-9
    again = stratified_indices(labels, k, seed)
    assert all(np.array_equal(a[1], b[1]) for a, b in zip(folds, again))


def test_folds_reject_small_k():
    with pytest.raises(ValueError):
        stratified_indices([0, 1, 0, 1], 1, 0)


def test_spec_examples_keywords_and_cleaning():
    assert match_keywords("La DANA conspiración es falsa") == ["DANA conspiración"]
    assert match_keywords("dana CONSPIRACIÓN") == ["DANA conspiración"]
    assert match_keywords("") == []
    assert clean_text("#a @b") == ""
    assert clean_text("sin menciones") == "sin menciones"


def test_full_size_fold_class_counts():
    labels = np.array([0] * 308 + [1] * 342)
    for _, te in stratified_indices(labels, 5, seed=11):
        assert np.sum(labels[te] == 0) in (61, 62) and np.sum(labels[te] == 1) in (68, 69)
