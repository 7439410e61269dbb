"""``danadisinfo`` command line.

Settings come from flags, then the ``[<subcommand>]`` table of the TOML file
given with ``--config`` (endpoint settings live under ``[annotator]``), then
built-in defaults. Failures print one ``error: <Type>: <message>`` line to
stderr and exit 1; usage errors exit 2.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .audiofeat import read_audio_csv, summarize_corpus_audio, write_audio_csv
from .classify import (ModelSpec, MetricsReport, binary_metrics, evaluate_cv, fit_model,
                       load_model, predict_corpus, save_model)
from .corpus import LABEL_NAMES, Corpus, load_corpus
from .llm_annotate import (EndpointConfig, agreement_report, annotate_batch, load_template,
                           read_annotations_csv, write_annotations_csv)
from .report import (emit_plot, emit_table, group_series, render_table, write_word_frequencies)
from .stats import ConfusionMatrix, cohen_kappa, collapse_matrix, compare_groups, compare_table
from .textstats import (TokenCounts, lexicon_profile, load_lexicon, weirdness_index,
                        write_wi_csv)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

FIRST_COLUMN = {"emotions": "Emotion", "lexicon": "Category", "audio": "Feature"}


class CliError(Exception):
    pass


def _load_config(path):
    if path is None:
        return {}
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def _opt(args, name, default=None):
    value = getattr(args, name, None)
    if value is not None:
        return value
    section = args.config_data.get(args.command, {})
    key = name.replace("_", "-")
    for k in (name, key):
        if k in section:
            return section[k]
    return default


def _require(args, name):
    value = _opt(args, name)
    if value is None:
        raise CliError(f"--{name.replace('_', '-')} is required (flag or config)")
    return value


def _status(msg):
    print(msg, file=sys.stderr)


def _write_or_print(text, out):
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _read_texts(path, platform=None):
    path = Path(path)
    if path.suffix == ".jsonl":
        corpus = load_corpus(path)
        return [p.text for p in corpus if platform is None or p.platform == platform]
    return [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]


# -- subcommands ----------------------------------------------------------

def cmd_ingest(args):
    corpus = load_corpus(_require(args, "input"))
    counts = corpus.label_counts()
    print(f"posts={len(corpus)} x={len(corpus.filter('x'))} tiktok={len(corpus.filter('tiktok'))} "
          f"labeled={counts.get()} embedding_dim={corpus.embedding_dim}")
    if args.stats:
        sys.stdout.write(render_table(counts))


def cmd_wi(args):
    platform = _opt(args, "platform")
    target = TokenCounts.from_texts(_read_texts(_require(args, "target"), platform))
    reference = TokenCounts.from_texts(_read_texts(_require(args, "reference")))
    rep = weirdness_index(target, reference)
    print(f"mean={rep.mean:.2f} median={rep.median:.2f} std={rep.std:.2f} "
          f"above_2={100 * rep.frac_above_2:.2f}% words={len(rep.per_word)}")
    if args.out:
        write_wi_csv(rep, args.out)


def cmd_audio_extract(args):
    corpus_path = Path(_require(args, "corpus"))
    corpus = load_corpus(corpus_path)
    table = summarize_corpus_audio(corpus, workers=int(_opt(args, "workers", 1)),
                                   base_dir=corpus_path.parent)
    write_audio_csv(table.rows, _require(args, "out"))
    _status(table.summary())


def _lexicon_table(corpus, args):
    lex_path = _opt(args, "lexicon")
    if lex_path is not None:
        lex = load_lexicon(lex_path)
        return {p.id: lexicon_profile(p.text, lex) for p in corpus}
    missing = [p.id for p in corpus if p.lexicon_scores is None]
    if missing:
        raise CliError(f"post {missing[0]} has no lexicon_scores; pass --lexicon")
    return {p.id: dict(p.lexicon_scores) for p in corpus}


def _comparison(corpus, features, args, alpha):
    labels = {p.id: p.label for p in corpus}
    if features == "emotions":
        return compare_groups(corpus, "emotions", alpha=alpha)
    if features == "lexicon":
        return compare_table(_lexicon_table(corpus, args), labels, alpha=alpha)
    audio = read_audio_csv(_require(args, "audio"))
    audio = {pid: row for pid, row in audio.items() if pid in labels}
    return compare_table(audio, labels, alpha=alpha)


def cmd_compare(args):
    corpus = load_corpus(_require(args, "corpus")).filter(_opt(args, "platform"), labeled=True)
    features = _opt(args, "features", "emotions")
    alpha = float(_opt(args, "alpha", 0.05))
    rows = _comparison(corpus, features, args, alpha)
    if _opt(args, "significant_only", False):
        rows = [r for r in rows if r.significant]
    _write_or_print(render_table(rows, _opt(args, "format", "csv"),
                                 first_column=FIRST_COLUMN[features]), args.out)


def _endpoint_config(args):
    cfg = dict(args.config_data.get("annotator", {}))
    for flag in ("url", "model"):
        if getattr(args, flag, None) is not None:
            cfg[flag] = getattr(args, flag)
    if "url" not in cfg or "model" not in cfg:
        raise CliError("endpoint url and model are required ([annotator] config or --url/--model)")
    return EndpointConfig.from_mapping(cfg)


def cmd_annotate_llm(args):
    corpus = load_corpus(_require(args, "corpus")).filter(_opt(args, "platform"))
    config = _endpoint_config(args)
    template = load_template(_opt(args, "language", "en"), path=_opt(args, "template"))
    result = annotate_batch(corpus, config, _require(args, "state"), template=template)
    write_annotations_csv(result, _require(args, "out"))
    _status(f"labeled={len(result.labels)} failed={len(result.failures)} resumed={result.resumed}")


def _read_matrix(path):
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if rows and not _is_number(rows[0][0] if rows[0][0] else "x"):
        labels = rows[0][1:]
        counts = [[int(v) for v in r[1:]] for r in rows[1:]]
    else:
        counts = [[int(v) for v in r] for r in rows]
        labels = [str(i) for i in range(len(counts))]
    return ConfusionMatrix(labels, np.array(counts))


def _is_number(s):
    try:
        float(s)
    except ValueError:
        return False
    return True


def _parse_mapping(text):
    pairs = [item.split("=") for item in text.split(",") if item.strip()]
    if any(len(p) != 2 for p in pairs):
        raise CliError(f"bad mapping {text!r}; expected e.g. 0=0,1=0,2=0,3=1")
    return {a.strip(): b.strip() for a, b in pairs}


def _read_label_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        col = [c for c in reader.fieldnames if c != "post_id"][0]
        return {row["post_id"]: int(row[col]) for row in reader}


def cmd_agreement(args):
    matrix = _opt(args, "matrix")
    if matrix is not None:
        m = _read_matrix(matrix)
        print(f"kappa = {cohen_kappa(m):.3f}")
        collapse = _opt(args, "collapse")
        if collapse:
            c = collapse_matrix(m, _parse_mapping(collapse))
            print(f"kappa (collapsed) = {cohen_kappa(c):.3f}")
        return
    predicted = read_annotations_csv(_require(args, "predictions"))
    gold = _read_label_csv(_require(args, "gold"))
    rep = agreement_report(gold, predicted, gold_four_class=not args.gold_binary)
    for line in rep.lines():
        print(line)


def _spec(args):
    return ModelSpec(_opt(args, "model", "svm"), C=float(_opt(args, "C", 1.0)),
                     l2=float(_opt(args, "l2", 1e-2)))


def _model_corpus(args, spec):
    corpus = load_corpus(_require(args, "corpus")).filter(_opt(args, "platform"), labeled=True)
    audio = None
    if spec.kind == "fusion":
        audio = read_audio_csv(_require(args, "audio"))
        corpus = Corpus(tuple(p for p in corpus if p.id in audio), corpus.embedding_dim)
    return corpus, audio


def cmd_train(args):
    spec = _spec(args)
    corpus, audio = _model_corpus(args, spec)
    seed = args.seed
    folds = int(_opt(args, "folds", 5))
    report = evaluate_cv(corpus, spec, k=folds, seed=seed, audio_table=audio,
                         workers=int(_opt(args, "workers", 1)))
    name = {"svm": "SVM+TF-IDF", "fusion": "embedding + audio features"}.get(spec.kind, spec.kind)
    _write_or_print(render_table([(name, report)], notes=report.params), _opt(args, "metrics_out"))
    model_out = _opt(args, "model_out")
    if model_out:
        save_model(fit_model(corpus, spec, audio, seed=seed), model_out)


def cmd_evaluate(args):
    model = load_model(_require(args, "model_file"))
    spec = ModelSpec("svm" if model.feature_space == "tfidf" else "fusion")
    corpus, audio = _model_corpus(args, spec)
    m = binary_metrics(corpus.labels, predict_corpus(model, corpus, audio))
    report = MetricsReport([m], {"model_file": Path(args.model_file).name, "posts": len(corpus)})
    _write_or_print(render_table([(model.feature_space, report)], notes=report.params),
                    _opt(args, "out"))


def _emit_comparison(rows, out_dir, stem, first_column, table, labels):
    emit_table(rows, out_dir / f"{stem}_all.csv", first_column=first_column)
    sig = [r for r in rows if r.significant]
    if sig:
        emit_table(sig, out_dir / f"{stem}.csv", first_column=first_column)
    top = rows[0].feature
    series = group_series({pid: vals[top] for pid, vals in table.items()}, labels)
    if all(series.values()):
        emit_plot(series, out_dir / f"{stem}_{top}.svg", "box", title=top)


def cmd_report(args):
    corpus_path = Path(_require(args, "corpus"))
    corpus = load_corpus(corpus_path).filter(labeled=True)
    out_dir = Path(_require(args, "out_dir"))
    out_dir.mkdir(parents=True, exist_ok=True)
    alpha = float(_opt(args, "alpha", 0.05))
    emit_table(corpus.label_counts(), out_dir / "labels.csv")

    reference = _opt(args, "reference")
    if reference:
        ref = TokenCounts.from_texts(_read_texts(reference))
        reps = {}
        for platform, col in (("x", "Tweets"), ("tiktok", "TikToks")):
            texts = [p.text for p in corpus if p.platform == platform]
            if texts:
                reps[col] = weirdness_index(TokenCounts.from_texts(texts), ref)
        if reps:
            emit_table(reps, out_dir / "wi.csv")

    for platform in ("x", "tiktok"):
        sub = corpus.filter(platform)
        for lab in sorted(LABEL_NAMES):
            texts = [p.text for p in sub if p.label == lab]
            if texts:
                write_word_frequencies(texts, out_dir / f"wordfreq_{platform}_{lab}.csv")

    stems = {("emotions", "x"): "emotions_x", ("emotions", "tiktok"): "emotions_tiktok",
             ("lexicon", "tiktok"): "lexicon_tiktok", ("lexicon", "x"): "lexicon_x"}
    lex_path = _opt(args, "lexicon")
    lex = load_lexicon(lex_path) if lex_path else None
    for (kind, platform), stem in stems.items():
        sub = corpus.filter(platform)
        labels = {p.id: p.label for p in sub}
        if kind == "emotions":
            table = {p.id: p.emotions for p in sub if p.emotions is not None}
        elif lex is not None:
            table = {p.id: lexicon_profile(p.text, lex) for p in sub}
        else:
            table = {p.id: p.lexicon_scores for p in sub if p.lexicon_scores is not None}
        if len(table) < len(sub) or not table or len(set(labels.values())) < 2:
            continue
        rows = compare_table(table, labels, alpha=alpha)
        _emit_comparison(rows, out_dir, stem, FIRST_COLUMN[kind], table, labels)

    audio_path = _opt(args, "audio")
    if audio_path:
        audio = read_audio_csv(audio_path)
        labels = {p.id: p.label for p in corpus if p.id in audio}
        table = {pid: audio[pid] for pid in labels}
        if table and len(set(labels.values())) == 2:
            _emit_comparison(compare_table(table, labels, alpha=alpha), out_dir,
                             "audio_comparison", FIRST_COLUMN["audio"], table, labels)

    if _opt(args, "with_svm", False):
        report = evaluate_cv(corpus, ModelSpec("svm"), k=int(_opt(args, "folds", 5)), seed=args.seed)
        emit_table([("SVM+TF-IDF", report)], out_dir / "metrics.csv", notes=report.params)
    for path in sorted(out_dir.iterdir()):
        print(path.name)


# -- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML settings file")
    common.add_argument("--seed", type=int, default=0, help="seed for every random choice")

    parser = argparse.ArgumentParser(prog="danadisinfo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", parents=[common], help="validate a post file and count labels")
    p.add_argument("--input")
    p.add_argument("--stats", action="store_true", help="print the label distribution table")
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("wi", parents=[common], help="Weirdness Index of a target vs reference corpus")
    p.add_argument("--target", help=".jsonl corpus or text file (one document per line)")
    p.add_argument("--reference")
    p.add_argument("--platform", choices=("x", "tiktok"))
    p.add_argument("--out", help="per-word CSV (word, wi)")
    p.set_defaults(func=cmd_wi)

    p = sub.add_parser("audio-extract", parents=[common], help="audio features per post")
    p.add_argument("--corpus")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.set_defaults(func=cmd_audio_extract)

    p = sub.add_parser("compare", parents=[common], help="Mann-Whitney comparison by label")
    p.add_argument("--corpus")
    p.add_argument("--features", choices=("emotions", "lexicon", "audio"))
    p.add_argument("--alpha", type=float)
    p.add_argument("--platform", choices=("x", "tiktok"))
    p.add_argument("--lexicon", help="lexicon file; otherwise posts' lexicon_scores are used")
    p.add_argument("--audio", help="audio feature CSV from audio-extract")
    p.add_argument("--format", choices=("csv", "markdown"))
    p.add_argument("--significant-only", action="store_true", default=None)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("annotate-llm", parents=[common], help="few-shot labels from an endpoint")
    p.add_argument("--corpus")
    p.add_argument("--state", help="append-only state log (enables resuming)")
    p.add_argument("--out")
    p.add_argument("--url")
    p.add_argument("--model")
    p.add_argument("--platform", choices=("x", "tiktok"))
    p.add_argument("--language")
    p.add_argument("--template", help="prompt template file overriding the bundled one")
    p.set_defaults(func=cmd_annotate_llm)

    p = sub.add_parser("agreement", parents=[common], help="Cohen's kappa")
    p.add_argument("--matrix", help="confusion matrix CSV (optional label header row/column)")
    p.add_argument("--collapse", help="category mapping, e.g. 0=0,1=0,2=0,3=1")
    p.add_argument("--predictions", help="annotation CSV from annotate-llm")
    p.add_argument("--gold", help="CSV post_id,<label>")
    p.add_argument("--gold-binary", action="store_true", help="gold labels are 0/1")
    p.set_defaults(func=cmd_agreement)

    p = sub.add_parser("train", parents=[common], help="stratified CV metrics, optional final model")
    p.add_argument("--corpus")
    p.add_argument("--model", choices=("svm", "fusion"))
    p.add_argument("--folds", type=int)
    p.add_argument("--C", type=float)
    p.add_argument("--l2", type=float)
    p.add_argument("--audio")
    p.add_argument("--platform", choices=("x", "tiktok"))
    p.add_argument("--workers", type=int, help="folds trained in parallel")
    p.add_argument("--metrics-out")
    p.add_argument("--model-out")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", parents=[common], help="score a saved model on a corpus")
    p.add_argument("--model-file")
    p.add_argument("--corpus")
    p.add_argument("--audio")
    p.add_argument("--platform", choices=("x", "tiktok"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", parents=[common], help="write every table and plot")
    p.add_argument("--corpus")
    p.add_argument("--out-dir")
    p.add_argument("--audio")
    p.add_argument("--lexicon")
    p.add_argument("--reference")
    p.add_argument("--alpha", type=float)
    p.add_argument("--with-svm", action="store_true", default=None)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.config_data = _load_config(args.config)
        args.func(args)
    except Exception as exc:  # noqa: BLE001 - one-line machine-parsable failure
        msg = " ".join(str(exc).split())
        print(f"error: {type(exc).__name__}: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
