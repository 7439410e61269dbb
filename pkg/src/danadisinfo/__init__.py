"""Text, audio and annotation analysis of DANA flood posts.

Modules
-------
corpus        posts, label counts, stratified folds
textstats     Weirdness Index, lexicon profiles, TF-IDF
stats         Mann-Whitney comparisons, Cohen's kappa
audiofeat     per-clip acoustic summaries
classify      linear SVM and embedding+audio fusion head, cross-validation
llm_annotate  few-shot prompt, endpoint client, agreement
report        CSV/markdown tables and SVG plots
"""

__version__ = "0.1.0"
