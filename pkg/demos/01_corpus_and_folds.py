"""Posts, label counts and stratified folds."""
import tempfile
from pathlib import Path

import numpy as np

from danadisinfo.corpus import (clean_text, dump_corpus, join_tiktok_text, load_corpus,
                                match_keywords, stratified_indices)
from danadisinfo.synthetic import make_corpus

# A small synthetic corpus with the same shape as the real one:
# posts from X and TikTok, binary labels, emotion scores and embeddings.
corpus = make_corpus(n0=30, n1=34, seed=0)
print(len(corpus), "posts,", corpus.embedding_dim, "-dim embeddings")

# Corpora live on disk as JSON lines, one post per line.
tmp = Path(tempfile.mkdtemp())
dump_corpus(corpus, tmp / "posts.jsonl")
corpus = load_corpus(tmp / "posts.jsonl")
print((tmp / "posts.jsonl").read_text().splitlines()[0][:120], "...")

counts = corpus.label_counts()
for platform in ("x", "tiktok"):
    print(platform, [counts.get(platform, lab) for lab in (0, 1)])

# TikTok text is the speech transcript plus the on-screen text.
print(join_tiktok_text("están ocultando los muertos", "PARKING BONAIRE"))

# Hashtags and mentions are dropped before TF-IDF.
print(clean_text("#DANA @vecina mira lo que pasa en la presa #Valencia"))

# Posts were collected with keyword searches.
print(match_keywords("dicen que la DANA provocada presas fue un plan"))

# Stratified 5-fold split: every fold keeps the class ratio.
# With the real label counts (308 trustworthy, 342 disinformation)
# each fold holds exactly 130 posts.
labels = np.array([0] * 308 + [1] * 342)
for f, (train, test) in enumerate(stratified_indices(labels, k=5, seed=0)):
    print(f"fold {f}: {test.size} test posts, {labels[test].sum()} disinformation")
