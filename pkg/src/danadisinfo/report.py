"""Tables and static plots in the layouts used for publication.

Tables: label distribution, Weirdness Index summary, group comparisons
(``Feature | Mean (0) | Std (0) | Mean (1) | Std (1) | p-value``) and
cross-validated metrics (``mean ± std`` cells). Plots are self-contained
SVG written without a plotting library so the bytes are reproducible.
"""

from __future__ import annotations

import csv
import io
from collections import Counter
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .classify import METRIC_NAMES, MetricsReport
from .corpus import LABEL_NAMES, LabelCounts
from .stats import ComparisonRow
from .textstats import WiReport, tokenize

COMPARISON_HEADER = ("Mean (0)", "Std (0)", "Mean (1)", "Std (1)", "p-value")
METRICS_HEADER = ("Model", "Accuracy", "F1-Score", "Precision", "Recall")
PLATFORM_COLUMNS = (("tiktok", "TikToks"), ("x", "Tweets"))


def fmt_stat(value: float) -> str:
    """Means and stds: three decimals below 1 in magnitude, two otherwise."""
    return f"{value:.3f}" if abs(value) < 1 else f"{value:.2f}"


def fmt_p(p: float) -> str:
    return f"{p:.6f}"


def fmt_pm(stat: tuple[float, float]) -> str:
    return f"{stat[0]:.4f} ± {stat[1]:.4f}"


# -- table builders -------------------------------------------------------

def comparison_table(rows: Sequence[ComparisonRow], first_column: str = "Feature"):
    header = (first_column, *COMPARISON_HEADER)
    body = [(r.feature, fmt_stat(r.mean0), fmt_stat(r.std0), fmt_stat(r.mean1),
             fmt_stat(r.std1), fmt_p(r.p)) for r in rows]
    return header, body


def metrics_table(reports: Sequence[tuple[str, MetricsReport]]):
    body = [(name, *(fmt_pm(getattr(rep, m)) for m in METRIC_NAMES)) for name, rep in reports]
    return METRICS_HEADER, body


def wi_table(reports: Mapping[str, WiReport]):
    names = list(reports)
    header = ("Metric", *names)
    body = [
        ("WI Global (Mean)", *(f"{reports[n].mean:.2f}" for n in names)),
        ("WI Global (Median)", *(f"{reports[n].median:.2f}" for n in names)),
        ("WI Standard Deviation", *(f"{reports[n].std:.2f}" for n in names)),
        ("Words with WI > 2", *(f"{100 * reports[n].frac_above_2:.2f}%" for n in names)),
    ]
    return header, body


def label_table(counts: LabelCounts):
    header = ("Label", *(col for _, col in PLATFORM_COLUMNS), "Total")
    body = []
    for lab in sorted(LABEL_NAMES):
        cells = [counts.get(p, lab) for p, _ in PLATFORM_COLUMNS]
        body.append((f"{lab} ({LABEL_NAMES[lab]})", *map(str, cells), str(counts.get(label=lab))))
    totals = [counts.get(p) for p, _ in PLATFORM_COLUMNS]
    body.append(("Total", *map(str, totals), str(counts.get())))
    return header, body


def _build(obj, first_column):
    if isinstance(obj, LabelCounts):
        return label_table(obj)
    if isinstance(obj, WiReport):
        return wi_table({"Corpus": obj})
    if isinstance(obj, MetricsReport):
        return metrics_table([(obj.params.get("model", "model"), obj)])
    if isinstance(obj, Mapping) and obj and all(isinstance(v, WiReport) for v in obj.values()):
        return wi_table(obj)
    obj = list(obj)
    if not obj:
        raise ValueError("nothing to tabulate")
    if all(isinstance(r, ComparisonRow) for r in obj):
        return comparison_table(obj, first_column)
    if all(isinstance(r, tuple) and len(r) == 2 and isinstance(r[1], MetricsReport) for r in obj):
        return metrics_table(obj)
    raise TypeError(f"cannot tabulate {type(obj[0]).__name__}")


def _markdown(header, body) -> str:
    lines = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    lines += ["| " + " | ".join(row) + " |" for row in body]
    return "\n".join(lines) + "\n"


def render_table(obj, fmt: str = "csv", first_column: str = "Feature",
                 notes: Mapping | None = None) -> str:
    """Render rows to CSV or markdown text.

    ``notes`` (e.g. hyperparameters) become a leading ``# key=value`` line in
    CSV output or an HTML comment in markdown.
    """
    header, body = _build(obj, first_column)
    note = " ".join(f"{k}={v}" for k, v in (notes or {}).items())
    if fmt == "markdown":
        return (f"<!-- {note} -->\n" if note else "") + _markdown(header, body)
    if fmt != "csv":
        raise ValueError(f"unknown table format {fmt!r}")
    buf = io.StringIO()
    if note:
        buf.write(f"# {note}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(body)
    return buf.getvalue()


def emit_table(obj, path: str | Path, fmt: str | None = None, first_column: str = "Feature",
               notes: Mapping | None = None) -> Path:
    """Write a table file; the format defaults to the file suffix (.md -> markdown)."""
    path = Path(path)
    if fmt is None:
        fmt = "markdown" if path.suffix in (".md", ".markdown") else "csv"
    path.write_text(render_table(obj, fmt, first_column, notes), encoding="utf-8")
    return path


def read_table_csv(path: str | Path) -> list[dict[str, str]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [line for line in fh if not line.startswith("#")]
    return list(csv.DictReader(lines))


def read_comparison_csv(path: str | Path) -> list[ComparisonRow]:
    rows = []
    for rec in read_table_csv(path):
        first = next(iter(rec))
        rows.append(ComparisonRow(rec[first], *(float(rec[h]) for h in COMPARISON_HEADER)))
    return rows


def word_frequencies(texts: Sequence[str]) -> list[tuple[str, int]]:
    counts = Counter()
    for t in texts:
        counts.update(tokenize(t))
    return sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))


def write_word_frequencies(texts: Sequence[str], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["word", "count"])
        writer.writerows(word_frequencies(texts))
    return path


# -- plots ----------------------------------------------------------------

_PALETTE = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860")


def _n(v: float) -> str:
    return f"{v:.2f}"


def _check_series(series):
    if not series:
        raise ValueError("no series to plot")
    clean = {}
    for name, values in series.items():
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise ValueError(f"series {name!r} is empty")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"series {name!r} contains NaN or infinite values")
        clean[str(name)] = arr
    return clean


def _box_stats(arr):
    q1, med, q3 = np.percentile(arr, [25, 50, 75])
    iqr = q3 - q1
    lo = arr[arr >= q1 - 1.5 * iqr].min()
    hi = arr[arr <= q3 + 1.5 * iqr].max()
    return q1, med, q3, lo, hi, arr[(arr < lo) | (arr > hi)]


def render_plot(series: Mapping[str, Sequence[float]], kind: str = "box",
                width: int = 640, height: int = 400, title: str | None = None) -> str:
    """SVG markup for a box plot (one box per series) or a bar chart of series means."""
    if kind not in ("box", "bar"):
        raise ValueError(f"unknown plot kind {kind!r}")
    data = _check_series(series)
    left, right, top, bottom = 60.0, 20.0, 40.0 if title else 20.0, 50.0
    plot_w, plot_h = width - left - right, height - top - bottom
    if kind == "bar":
        values = {k: float(v.mean()) for k, v in data.items()}
        vmin, vmax = min(0.0, *values.values()), max(0.0, *values.values())
    else:
        vmin = min(float(v.min()) for v in data.values())
        vmax = max(float(v.max()) for v in data.values())
    if vmax == vmin:
        vmin, vmax = vmin - 1.0, vmax + 1.0
    pad = 0.05 * (vmax - vmin)
    vmin, vmax = vmin - (pad if kind == "box" or vmin < 0 else 0.0), vmax + pad

    def y(v):
        return top + plot_h * (vmax - v) / (vmax - vmin)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    if title:
        out.append(f'<text x="{_n(width / 2)}" y="24" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="16">{escape(title)}</text>')
    out.append(f'<line x1="{_n(left)}" y1="{_n(top)}" x2="{_n(left)}" y2="{_n(top + plot_h)}" stroke="black"/>')
    out.append(f'<line x1="{_n(left)}" y1="{_n(top + plot_h)}" x2="{_n(left + plot_w)}" '
               f'y2="{_n(top + plot_h)}" stroke="black"/>')
    for i in range(5):
        v = vmin + (vmax - vmin) * i / 4
        out.append(f'<text x="{_n(left - 6)}" y="{_n(y(v) + 4)}" text-anchor="end" '
                   f'font-family="sans-serif" font-size="11">{v:.3g}</text>')
    slot = plot_w / len(data)
    for i, (name, arr) in enumerate(data.items()):
        cx = left + slot * (i + 0.5)
        half = min(40.0, slot * 0.3)
        color = _PALETTE[i % len(_PALETTE)]
        if kind == "bar":
            v = values[name]
            y0, y1 = sorted((y(0.0), y(v)))
            out.append(f'<rect class="bar" x="{_n(cx - half)}" y="{_n(y0)}" width="{_n(2 * half)}" '
                       f'height="{_n(y1 - y0)}" fill="{color}"/>')
        else:
            q1, med, q3, lo, hi, outliers = _box_stats(arr)
            out.append(f'<line x1="{_n(cx)}" y1="{_n(y(hi))}" x2="{_n(cx)}" y2="{_n(y(q3))}" stroke="black"/>')
            out.append(f'<line x1="{_n(cx)}" y1="{_n(y(q1))}" x2="{_n(cx)}" y2="{_n(y(lo))}" stroke="black"/>')
            out.append(f'<rect class="box" x="{_n(cx - half)}" y="{_n(y(q3))}" width="{_n(2 * half)}" '
                       f'height="{_n(y(q1) - y(q3))}" fill="{color}" stroke="black"/>')
            out.append(f'<line x1="{_n(cx - half)}" y1="{_n(y(med))}" x2="{_n(cx + half)}" '
                       f'y2="{_n(y(med))}" stroke="black" stroke-width="2"/>')
            for v in outliers:
                out.append(f'<circle cx="{_n(cx)}" cy="{_n(y(v))}" r="2.5" fill="none" stroke="black"/>')
        out.append(f'<text x="{_n(cx)}" y="{_n(top + plot_h + 18)}" text-anchor="middle" '
                   f'font-family="sans-serif" font-size="12">{escape(name)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plot(series: Mapping[str, Sequence[float]], path: str | Path, kind: str = "box",
              width: int = 640, height: int = 400, title: str | None = None) -> Path:
    path = Path(path)
    path.write_text(render_plot(series, kind, width, height, title), encoding="utf-8")
    return path


def group_series(values: Mapping[str, float], labels: Mapping[str, int]) -> dict[str, list[float]]:
    """Split a per-post feature into ``"0 (Trustworthy)"`` / ``"1 (Disinformation)"`` series."""
    out = {f"{lab} ({LABEL_NAMES[lab]})": [] for lab in sorted(LABEL_NAMES)}
    for pid in sorted(values):
        lab = labels[pid]
        out[f"{lab} ({LABEL_NAMES[lab]})"].append(float(values[pid]))
    return out

