"""SVG emission for metrics CSVs.

Plots are plain text SVG built by hand: no plotting dependency, diffable in
tests. Three charts per run: train loss + eval accuracy curves, one accuracy
line per noise decile, and an epoch-by-bucket accuracy heatmap (the bucket
charts appear only when the CSV has bucket rows, i.e. conditioned runs).
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .fileio import atomic_write_text

PALETTE = [
    "#4477aa", "#66ccee", "#228833", "#ccbb44", "#ee6677",
    "#aa3377", "#bbbbbb", "#ee8866", "#44bb99", "#222255",
]

_HEAT_ANCHORS = [
    (0.0, (68, 1, 84)),
    (0.5, (33, 145, 140)),
    (1.0, (253, 231, 37)),
]


def read_metrics_csv(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        expected = {"epoch", "split", "head", "metric", "value", "bucket"}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise ValidationError(f"{path}: expected columns {sorted(expected)}")
        for raw in reader:
            rows.append(
                {
                    "epoch": int(raw["epoch"]),
                    "split": raw["split"],
                    "head": raw["head"],
                    "metric": raw["metric"],
                    "value": float(raw["value"]),
                    "bucket": int(raw["bucket"]) if raw["bucket"] != "" else None,
                }
            )
    return rows


def _heat_color(v: float) -> str:
    v = min(max(v, 0.0), 1.0)
    for (lo, c0), (hi, c1) in zip(_HEAT_ANCHORS, _HEAT_ANCHORS[1:]):
        if v <= hi:
            f = (v - lo) / (hi - lo)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return f"rgb({rgb[0]},{rgb[1]},{rgb[2]})"
    return "rgb(253,231,37)"


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    return [lo + (hi - lo) * i / (n - 1) for i in range(n)]


def line_chart(series, title: str, xlabel: str, ylabel: str,
               width: int = 720, height: int = 420) -> str:
    """series: list of (label, xs, ys). Returns a standalone SVG document."""
    left, right, top, bottom = 64, 150, 36, 44
    pw, ph = width - left - right, height - top - bottom
    xs_all = [x for _, xs, _ in series for x in xs]
    ys_all = [y for _, _, ys in series for y in ys if np.isfinite(y)]
    x_lo, x_hi = (min(xs_all), max(xs_all)) if xs_all else (0.0, 1.0)
    y_lo, y_hi = (min(ys_all), max(ys_all)) if ys_all else (0.0, 1.0)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    pad = 0.05 * (y_hi - y_lo) or 0.5
    y_lo, y_hi = y_lo - pad, y_hi + pad

    def sx(x):
        return left + pw * (x - x_lo) / (x_hi - x_lo)

    def sy(y):
        return top + ph * (1.0 - (y - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-size="14" font-weight="bold">{title}</text>',
        f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        px = sx(tx)
        out.append(f'<line x1="{px:.1f}" y1="{top + ph}" x2="{px:.1f}" y2="{top + ph + 4}" stroke="#888"/>')
        out.append(f'<text x="{px:.1f}" y="{top + ph + 16}" text-anchor="middle">{tx:.3g}</text>')
    for ty in _ticks(y_lo, y_hi):
        py = sy(ty)
        out.append(f'<line x1="{left - 4}" y1="{py:.1f}" x2="{left}" y2="{py:.1f}" stroke="#888"/>')
        out.append(f'<text x="{left - 8}" y="{py + 4:.1f}" text-anchor="end">{ty:.3g}</text>')
    out.append(
        f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">{ylabel}</text>'
    )
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(
            f"{sx(x):.1f},{sy(y):.1f}" for x, y in zip(xs, ys) if np.isfinite(y)
        )
        out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = top + 14 + 16 * i
        lx = left + pw + 10
        out.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" stroke="{color}" stroke-width="3"/>')
        out.append(f'<text x="{lx + 24}" y="{ly}">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def bucket_heatmap(matrix: np.ndarray, title: str, width: int = 720, height: int = 340) -> str:
    """Rows = noise buckets (low t at the bottom), columns = epochs."""
    epochs, buckets = matrix.shape
    left, right, top, bottom = 64, 110, 36, 44
    pw, ph = width - left - right, height - top - bottom
    cw, ch = pw / epochs, ph / buckets
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="20" font-size="14" font-weight="bold">{title}</text>',
    ]
    for e in range(epochs):
        for b in range(buckets):
            v = matrix[e, b]
            if not np.isfinite(v):
                continue
            x = left + e * cw
            y = top + (buckets - 1 - b) * ch
            out.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw + 0.5:.2f}" height="{ch + 0.5:.2f}" '
                f'fill="{_heat_color(v)}"/>'
            )
    out.append(f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="#888"/>')
    for b in range(buckets):
        y = top + (buckets - 1 - b) * ch + ch / 2 + 4
        out.append(f'<text x="{left - 8}" y="{y:.1f}" text-anchor="end">{b / buckets:.1f}</text>')
    for e in range(0, epochs, max(1, epochs // 8)):
        x = left + e * cw + cw / 2
        out.append(f'<text x="{x:.1f}" y="{top + ph + 16}" text-anchor="middle">{e}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 8}" text-anchor="middle">epoch</text>')
    out.append(
        f'<text x="16" y="{top + ph / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2})">noise bucket (t)</text>'
    )
    # color key
    for i in range(40):
        out.append(
            f'<rect x="{left + pw + 20}" y="{top + ph - (i + 1) * ph / 40:.2f}" width="14" '
            f'height="{ph / 40 + 0.5:.2f}" fill="{_heat_color(i / 39)}"/>'
        )
    out.append(f'<text x="{left + pw + 40}" y="{top + 10}">1.0</text>')
    out.append(f'<text x="{left + pw + 40}" y="{top + ph}">0.0</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_plots(csv_path, out_dir=None) -> list[str]:
    """Write SVG charts next to (or into out_dir for) a metrics CSV."""
    csv_path = Path(csv_path)
    out = Path(out_dir) if out_dir is not None else csv_path.parent
    rows = read_metrics_csv(csv_path)
    written = []

    def pick(split, metric, head="", bucket=None):
        sel = [
            r for r in rows
            if r["split"] == split and r["metric"] == metric and r["head"] == head
            and r["bucket"] == bucket
        ]
        sel.sort(key=lambda r: r["epoch"])
        return [r["epoch"] for r in sel], [r["value"] for r in sel]

    loss_x, loss_y = pick("train", "loss")
    acc_x, acc_y = pick("eval", "accuracy", head="mean")
    series = [("train loss", loss_x, loss_y)]
    if acc_x:
        series.append(("eval accuracy", acc_x, acc_y))
    path = out / "learning_curves.svg"
    atomic_write_text(path, line_chart(series, "training curves", "epoch", "value"))
    written.append(str(path))

    buckets = sorted({r["bucket"] for r in rows if r["bucket"] is not None})
    if buckets:
        series = []
        for b in buckets:
            xs, ys = pick("train", "bucket_accuracy", bucket=b)
            series.append((f"t in [{b / 10:.1f},{(b + 1) / 10:.1f})", xs, ys))
        path = out / "bucket_curves.svg"
        atomic_write_text(
            path,
            line_chart(series, "train accuracy by noise bucket", "epoch", "accuracy"),
        )
        written.append(str(path))

        epochs = sorted({r["epoch"] for r in rows})
        matrix = np.full((len(epochs), len(buckets)), np.nan)
        index = {e: i for i, e in enumerate(epochs)}
        for r in rows:
            if r["metric"] == "bucket_accuracy" and r["bucket"] is not None:
                matrix[index[r["epoch"]], r["bucket"]] = r["value"]
        path = out / "bucket_heatmap.svg"
        atomic_write_text(path, bucket_heatmap(matrix, "bucket accuracy heatmap"))
        written.append(str(path))
    return written
