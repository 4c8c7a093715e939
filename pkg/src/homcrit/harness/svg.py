"""Minimal SVG line plots with optional log axes and slope labels."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

W, H = 640, 420
ML, MR, MT, MB = 70, 20, 30, 55
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(lo), math.ceil(hi)
        return [float(k) for k in range(a, b + 1)]
    span = hi - lo or 1.0
    step = 10 ** math.floor(math.log10(span / 4))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= 6:
            step *= m
            break
    start = math.ceil(lo / step) * step
    out = []
    v = start
    while v <= hi + 1e-12 * span:
        out.append(v)
        v += step
    return out


def _label(v, log):
    if log:
        return f"1e{int(v)}"
    return f"{v:.4g}"


def line_plot(sweep) -> str:
    """Render a Sweep as an SVG document string."""
    log = sweep.loglog
    pts = []
    for _, xs, ys in sweep.series:
        for x, y in zip(xs, ys):
            if log and (x <= 0 or y <= 0):
                continue
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            pts.append((math.log10(x), math.log10(y)) if log else (x, y))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
           f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">',
           f'<rect width="{W}" height="{H}" fill="white"/>',
           f'<text x="{W / 2:.1f}" y="18" text-anchor="middle" font-size="14">{escape(sweep.name)}</text>']
    if not pts:
        out.append(f'<text x="{W / 2:.1f}" y="{H / 2:.1f}" text-anchor="middle">no data</text></svg>')
        return "\n".join(out) + "\n"
    x0 = min(p[0] for p in pts)
    x1 = max(p[0] for p in pts)
    y0 = min(p[1] for p in pts)
    y1 = max(p[1] for p in pts)
    if x1 == x0:
        x0, x1 = x0 - 0.5, x1 + 0.5
    if y1 - y0 < 1e-9 * max(1.0, abs(y0)):
        pad = 0.5 if log else max(0.5, 0.05 * abs(y0))
        y0, y1 = y0 - pad, y1 + pad
    else:
        pad = 0.05 * (y1 - y0)
        y0, y1 = y0 - pad, y1 + pad

    def X(v):
        return ML + (v - x0) / (x1 - x0) * (W - ML - MR)

    def Y(v):
        return H - MB - (v - y0) / (y1 - y0) * (H - MT - MB)

    out.append(f'<rect x="{ML}" y="{MT}" width="{W - ML - MR}" height="{H - MT - MB}" '
               f'fill="none" stroke="black"/>')
    for t in _ticks(x0, x1, log):
        if x0 - 1e-12 <= t <= x1 + 1e-12:
            out.append(f'<line x1="{X(t):.2f}" y1="{H - MB}" x2="{X(t):.2f}" y2="{H - MB + 5}" stroke="black"/>')
            out.append(f'<text x="{X(t):.2f}" y="{H - MB + 18}" text-anchor="middle">{_label(t, log)}</text>')
    for t in _ticks(y0, y1, log):
        if y0 - 1e-12 <= t <= y1 + 1e-12:
            out.append(f'<line x1="{ML - 5}" y1="{Y(t):.2f}" x2="{ML}" y2="{Y(t):.2f}" stroke="black"/>')
            out.append(f'<text x="{ML - 8}" y="{Y(t) + 4:.2f}" text-anchor="end">{_label(t, log)}</text>')
    out.append(f'<text x="{(ML + W - MR) / 2:.1f}" y="{H - 12}" text-anchor="middle">{escape(sweep.xlabel)}</text>')
    out.append(f'<text x="16" y="{(MT + H - MB) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(MT + H - MB) / 2:.1f})">{escape(sweep.ylabel)}</text>')
    for k, (label, xs, ys) in enumerate(sweep.series):
        c = COLORS[k % len(COLORS)]
        seq = []
        for x, y in sorted(zip(xs, ys)):
            if log and (x <= 0 or y <= 0):
                continue
            if not (math.isfinite(x) and math.isfinite(y)):
                continue
            px, py = (math.log10(x), math.log10(y)) if log else (x, y)
            seq.append((X(px), Y(py)))
        if seq:
            path = " ".join(f"{a:.2f},{b:.2f}" for a, b in seq)
            out.append(f'<polyline points="{path}" fill="none" stroke="{c}" stroke-width="1.8"/>')
            for a, b in seq:
                out.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" fill="{c}"/>')
        text = label
        if label in sweep.slopes:
            text += f" (slope {sweep.slopes[label]:.3f})"
        out.append(f'<text x="{ML + 10}" y="{MT + 16 + 15 * k}" fill="{c}">{escape(text)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
