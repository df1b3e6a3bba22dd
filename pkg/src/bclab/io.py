"""Artifact writers: CSV, canonical JSON, config hashes and small SVG plots."""
from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os

import numpy as np

__all__ = ["to_jsonable", "dumps", "config_hash", "rows_to_csv", "svg_lines", "worker_count"]


def to_jsonable(obj):
    """Convert numpy scalars/arrays, tuples and non-finite floats for JSON."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if hasattr(obj, "to_dict"):
        return to_jsonable(obj.to_dict())
    if hasattr(obj, "numerator") and hasattr(obj, "denominator") and not isinstance(obj, int):
        return f"{obj.numerator}/{obj.denominator}"
    return obj


def dumps(obj) -> str:
    """Deterministic JSON: sorted keys, fixed separators, trailing newline."""
    return json.dumps(to_jsonable(obj), sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def config_hash(config: dict) -> str:
    blob = json.dumps(to_jsonable(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def rows_to_csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_cell(r.get(c, "")) for c in columns])
    return buf.getvalue()


def worker_count(default: int | None = None) -> int:
    env = os.environ.get("BCLAB_WORKERS")
    if env:
        try:
            n = int(env)
        except ValueError:
            n = 0
        if n >= 1:
            return n
    if default is not None:
        return max(1, int(default))
    return min(4, os.cpu_count() or 1)


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf"]


def svg_lines(series, title: str = "", xlabel: str = "", ylabel: str = "",
              timestamp: str | None = None, width: int = 640, height: int = 420) -> str:
    """Scatter points joined by optional fit lines.

    ``series`` is a list of dicts with ``label``, ``x``, ``y`` and optional
    ``fit_x``/``fit_y``.
    """
    xs = [v for s in series for v in list(s["x"]) + list(s.get("fit_x", []))]
    ys = [v for s in series for v in list(s["y"]) + list(s.get("fit_y", []))]
    xs = [v for v in xs if math.isfinite(v)] or [0.0, 1.0]
    ys = [v for v in ys if math.isfinite(v)] or [0.0, 1.0]
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    ml, mr, mt, mb = 70, 20, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def X(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def Y(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">']
    if timestamp:
        out.append(f"<!-- generated {timestamp} -->")
    out.append(f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="#444"/>')
    out.append(f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>')
    out.append(f'<text x="{ml + pw / 2:.1f}" y="{height - 8}" text-anchor="middle">{_esc(xlabel)}</text>')
    out.append(f'<text x="14" y="{mt + ph / 2:.1f}" text-anchor="middle" transform="rotate(-90 14 {mt + ph / 2:.1f})">{_esc(ylabel)}</text>')
    for t in range(5):
        xv = x0 + (x1 - x0) * t / 4
        yv = y0 + (y1 - y0) * t / 4
        out.append(f'<text x="{X(xv):.1f}" y="{mt + ph + 14}" text-anchor="middle">{xv:.4g}</text>')
        out.append(f'<text x="{ml - 4}" y="{Y(yv) + 4:.1f}" text-anchor="end">{yv:.5g}</text>')
    for i, s in enumerate(series):
        c = _COLORS[i % len(_COLORS)]
        if len(s.get("fit_x", [])):
            pts = " ".join(f"{X(a):.2f},{Y(b):.2f}" for a, b in zip(s["fit_x"], s["fit_y"])
                           if math.isfinite(b))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-dasharray="4 3"/>')
        for a, b in zip(s["x"], s["y"]):
            if math.isfinite(a) and math.isfinite(b):
                out.append(f'<circle cx="{X(a):.2f}" cy="{Y(b):.2f}" r="3" fill="{c}"/>')
        out.append(f'<text x="{ml + 8}" y="{mt + 14 + 13 * i}" fill="{c}">{_esc(s["label"])}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return str(s).replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
