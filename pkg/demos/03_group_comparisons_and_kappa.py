"""Mann-Whitney comparisons by label and annotator agreement."""
import numpy as np

from danadisinfo.report import render_table
from danadisinfo.stats import (ConfusionMatrix, cohen_kappa, collapse_matrix, compare_groups,
                               mann_whitney_u)
from danadisinfo.synthetic import make_corpus

# The smallest interesting case: complete separation of three vs three.
r = mann_whitney_u([1, 2, 3], [4, 5, 6])
print(f"U = {r.u}, p = {r.p_two_sided:.6f}")  # exact permutation p would be 0.1

# Emotion scores by label. In the synthetic corpus anger is shifted
# upward for disinformation, so it should come out on top.
corpus = make_corpus(60, 60, seed=2)
rows = compare_groups(corpus, "emotions", alpha=0.05)
print(render_table(rows, "markdown", first_column="Emotion"))

# Agreement between the model and the human annotator, four categories
four = ConfusionMatrix(("0", "1", "2", "3"),
                       np.array([[15, 1, 0, 2], [1, 13, 1, 1], [3, 4, 28, 5], [4, 2, 3, 36]]))
print(f"kappa (4 categories) = {cohen_kappa(four):.3f}")

# Merge the three non-disinformation categories
two = collapse_matrix(four, {"0": "0", "1": "0", "2": "0", "3": "1"})
print(two.counts.tolist(), f"kappa (2 categories) = {cohen_kappa(two):.3f}")
