"""Deterministic CSV/JSON writers and a minimal log-log SVG plotter."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    return obj


def write_json(path, obj) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n")
    return path


def _cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return v


def write_csv(path, header, rows) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n", quoting=csv.QUOTE_MINIMAL)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


_COLOURS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg_loglog(path, series, xlabel="", ylabel="", title="", size=(640, 420)) -> Path:
    """Log-log line chart; ``series`` is a list of ``(label, xs, ys)``.  Nonpositive points are dropped."""
    W, H = size
    ml, mr, mt, mb = 70, 150, 30, 50
    pts = []
    for label, xs, ys in series:
        xy = [(math.log10(x), math.log10(y)) for x, y in zip(xs, ys) if x > 0 and y > 0]
        pts.append((label, xy))
    allx = [p[0] for _, xy in pts for p in xy] or [0.0, 1.0]
    ally = [p[1] for _, xy in pts for p in xy] or [0.0, 1.0]
    x0, x1 = math.floor(min(allx)), math.ceil(max(allx))
    y0, y1 = math.floor(min(ally)), math.ceil(max(ally))
    x1 = x1 if x1 > x0 else x0 + 1
    y1 = y1 if y1 > y0 else y0 + 1
    sx = lambda x: ml + (x - x0) / (x1 - x0) * (W - ml - mr)
    sy = lambda y: H - mb - (y - y0) / (y1 - y0) * (H - mt - mb)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{title}</text>',
        f'<rect x="{ml}" y="{mt}" width="{W - ml - mr}" height="{H - mt - mb}" fill="none" stroke="black"/>',
    ]
    for e in range(x0, x1 + 1):
        out.append(f'<text x="{sx(e):.1f}" y="{H - mb + 16}" text-anchor="middle" font-size="11">1e{e}</text>')
    for e in range(y0, y1 + 1):
        out.append(f'<text x="{ml - 6}" y="{sy(e) + 4:.1f}" text-anchor="end" font-size="11">1e{e}</text>')
    out.append(f'<text x="{(ml + W - mr) / 2:.1f}" y="{H - 12}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(
        f'<text x="16" y="{(mt + H - mb) / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 16 {(mt + H - mb) / 2:.1f})">{ylabel}</text>'
    )
    for i, (label, xy) in enumerate(pts):
        colour = _COLOURS[i % len(_COLOURS)]
        if xy:
            d = " ".join(f"{sx(x):.2f},{sy(y):.2f}" for x, y in xy)
            out.append(f'<polyline class="series" fill="none" stroke="{colour}" stroke-width="1.5" points="{d}"/>')
        ly = mt + 14 + 16 * i
        out.append(f'<line x1="{W - mr + 10}" y1="{ly}" x2="{W - mr + 30}" y2="{ly}" stroke="{colour}"/>')
        out.append(f'<text x="{W - mr + 34}" y="{ly + 4}" font-size="11">{label}</text>')
    out.append("</svg>")
    path = Path(path)
    path.write_text("\n".join(out) + "\n")
    return path
