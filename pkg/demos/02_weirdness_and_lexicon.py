"""Weirdness Index against a reference corpus and lexicon profiles."""
from danadisinfo.synthetic import make_corpus
from danadisinfo.textstats import (TokenCounts, lexicon_profile, parse_lexicon, tfidf_fit,
                                   tfidf_transform, weirdness_index)

corpus = make_corpus(40, 40, seed=1)

# The reference is ordinary Spanish without the event vocabulary.
reference = TokenCounts.from_texts([
    "la gente de la calle y el pueblo",
    "hoy en la zona todo el agua con los coches",
    "que los de las calles por la zona",
])
target = TokenCounts.from_texts(p.text for p in corpus)
wi = weirdness_index(target, reference)
print(f"WI mean {wi.mean:.2f}, median {wi.median:.2f}, std {wi.std:.2f}, "
      f"{100 * wi.frac_above_2:.1f}% of words above 2")

# Words most over-represented relative to the reference
top = sorted(wi.per_word.items(), key=lambda kv: -kv[1])[:8]
print([w for w, _ in top])

# The lexicon format is plain text: ``category: word, prefix*``.
lexicon = parse_lexicon("""
conspiracion: ocult*, mienten, haarp, manipulación
verificacion: bulo, falso, desmentido, verificado, oficial
""")
for post in list(corpus)[:4]:
    prof = lexicon_profile(post.text, lexicon)
    print(post.label, {k: round(v, 1) for k, v in prof.items()}, post.text[:50])

# TF-IDF: raw counts times ln((1 + N) / (1 + df)) + 1, rows L2-normalized
vocab = tfidf_fit(["a b", "a c", "a"])
print(vocab.terms, vocab.idf.round(4))
print(tfidf_transform(["a b"], vocab).toarray().round(4))
