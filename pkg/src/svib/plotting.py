"""Metrics files to plot series: EMA smoothing, seed medians, CSV and a bare SVG."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError


class MetricsError(ValueError):
    pass


def load_metrics(path):
    """Parse a metrics JSONL file; a truncated or corrupt line is an error, never skipped."""
    path = Path(path)
    text = path.read_text()
    records = []
    lines = text.split("\n")
    for i, line in enumerate(lines, 1):
        if not line:
            continue
        last = i == len(lines)
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            what = "truncated final line" if last else "unparsable line"
            raise MetricsError(f"{path}:{i}: {what}") from None
        if last:
            # every record is newline-terminated, so a missing newline means a cut write
            raise MetricsError(f"{path}:{i}: truncated final line (no newline)")
    return records


@dataclass
class PlotSeries:
    x: np.ndarray
    y: np.ndarray
    label: str = ""
    ema: float = 0.0

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.x.shape != self.y.shape or self.x.ndim != 1:
            raise ContractError(f"x and y lengths differ: {self.x.shape} vs {self.y.shape}")
        if np.any(np.diff(self.x) <= 0):
            raise ContractError("x must be strictly increasing")

    def smoothed(self):
        return PlotSeries(self.x, ema(self.y, self.ema), self.label, self.ema)


def ema(values, factor):
    """``y'_t = factor * y'_{t-1} + (1 - factor) * y_t`` seeded with ``y'_0 = y_0``."""
    if not 0.0 <= factor < 1.0:
        raise ContractError("ema factor must lie in [0, 1)")
    values = np.asarray(values, dtype=np.float64)
    out = np.empty_like(values)
    acc = None
    for i, v in enumerate(values):
        acc = v if acc is None else factor * acc + (1.0 - factor) * v
        out[i] = acc
    return out


def series_from_records(records, field, record_type=None, label=""):
    """Pick ``(update, field)`` pairs, skipping rows where the field is null."""
    rows = [r for r in records if record_type is None or r.get("record_type") == record_type]
    available = sorted({k for r in rows for k, v in r.items() if isinstance(v, (int, float)) and not isinstance(v, bool)})
    if not any(field in r for r in rows):
        raise MetricsError(f"field {field!r} not found; available fields: {', '.join(available)}")
    pts = [(r["update"], r[field]) for r in rows if r.get(field) is not None]
    x = [p[0] for p in pts]
    y = [p[1] for p in pts]
    return PlotSeries(x, y, label)


def median_series(series, label="median"):
    """Pointwise median over the x values shared by every series."""
    if not series:
        raise ContractError("no series to aggregate")
    common = set(series[0].x.tolist())
    for s in series[1:]:
        common &= set(s.x.tolist())
    xs = np.array(sorted(common))
    ys = [np.median([s.y[np.searchsorted(s.x, x)] for s in series]) for x in xs]
    return PlotSeries(xs, ys, label)


def write_csv(path, series):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        for x, y in zip(series.x, series.y):
            w.writerow([repr(float(x)), repr(float(y))])
    return path


def read_csv(path, label=""):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["x", "y"]:
        raise MetricsError(f"{path}: not a series CSV")
    return PlotSeries([float(r[0]) for r in rows[1:]], [float(r[1]) for r in rows[1:]], label)


COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg(path, series, width=640, height=400, title=""):
    """Polylines on shared axes; enough to eyeball a learning curve."""
    pad = 50
    xs = np.concatenate([s.x for s in series]) if series else np.zeros(1)
    ys = np.concatenate([s.y for s in series]) if series else np.zeros(1)
    x0, x1 = float(xs.min()), float(xs.max())
    y0, y1 = float(ys.min()), float(ys.max())
    x1 = x1 if x1 > x0 else x0 + 1.0
    y1 = y1 if y1 > y0 else y0 + 1.0

    def px(x, y):
        return (pad + (x - x0) / (x1 - x0) * (width - 2 * pad), height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
        f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
        f'<text x="{pad}" y="{height - pad + 20}" font-size="12">{x0:g}</text>',
        f'<text x="{width - pad}" y="{height - pad + 20}" font-size="12" text-anchor="end">{x1:g}</text>',
        f'<text x="{pad - 5}" y="{height - pad}" font-size="12" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{pad - 5}" y="{pad + 4}" font-size="12" text-anchor="end">{y1:.3g}</text>',
        f'<text x="{width / 2}" y="{pad / 2}" font-size="14" text-anchor="middle">{title}</text>',
    ]
    for i, s in enumerate(series):
        color = COLORS[i % len(COLORS)]
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in (px(x, y) for x, y in zip(s.x, s.y)))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{width - pad}" y="{pad + 16 * (i + 1)}" font-size="12" fill="{color}" text-anchor="end">{s.label}</text>')
    parts.append("</svg>")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts) + "\n")
    return path
