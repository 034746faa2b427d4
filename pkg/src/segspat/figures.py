"""Static SVG of threshold effects, rendered from a scan CSV alone."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .scan import read_scan_csv

__all__ = ["effect_svg", "render_effect_svg"]

PANEL_W, PANEL_H = 260, 200
MARGIN = {"left": 56, "right": 12, "top": 30, "bottom": 40}


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    if span <= 0:
        return [lo]
    raw = span / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=raw)
    first = math.ceil(lo / step) * step
    ticks, t = [], first
    while t <= hi + 1e-9 * span:
        ticks.append(round(t, 10))
        t += step
    return ticks


def _num(x):
    return f"{x:.2f}"


def effect_svg(rows):
    """SVG text: one panel per (outcome, lag); x = threshold c, y = beta.

    Fitted cells are drawn as a point at the posterior mean with whiskers
    spanning the 95% interval; skipped cells are omitted.
    """
    outcomes = list(dict.fromkeys(r["outcome"] for r in rows))
    lags = sorted({r["lag"] for r in rows})
    ok = [r for r in rows if r["status"] == "ok"]
    cs = [r["c"] for r in rows]
    x_lo, x_hi = min(cs), max(cs)
    pad = (x_hi - x_lo) * 0.08 or 5.0
    x_lo, x_hi = x_lo - pad, x_hi + pad
    ys = [0.0] + [r["beta_low"] for r in ok] + [r["beta_high"] for r in ok]
    y_lo, y_hi = min(ys), max(ys)
    ypad = (y_hi - y_lo) * 0.08 or 1.0
    y_lo, y_hi = y_lo - ypad, y_hi + ypad

    pw = PANEL_W + MARGIN["left"] + MARGIN["right"]
    ph = PANEL_H + MARGIN["top"] + MARGIN["bottom"]
    width, height = pw * len(lags), ph * len(outcomes)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for row_k, outcome in enumerate(outcomes):
        for col_k, lag in enumerate(lags):
            ox = col_k * pw + MARGIN["left"]
            oy = row_k * ph + MARGIN["top"]

            def sx(x):
                return ox + (x - x_lo) / (x_hi - x_lo) * PANEL_W

            def sy(y):
                return oy + (y_hi - y) / (y_hi - y_lo) * PANEL_H

            out.append(f'<g class="panel" data-outcome="{escape(outcome)}" data-lag="{lag}">')
            out.append(
                f'<rect x="{ox}" y="{oy}" width="{PANEL_W}" height="{PANEL_H}" fill="none" stroke="#444"/>'
            )
            out.append(
                f'<text x="{ox + PANEL_W / 2:.1f}" y="{oy - 10}" text-anchor="middle">'
                f"{escape(outcome)}, lag = {lag}</text>"
            )
            out.append(
                f'<line class="zero" x1="{ox}" x2="{ox + PANEL_W}" y1="{_num(sy(0.0))}" y2="{_num(sy(0.0))}" '
                f'stroke="#999" stroke-dasharray="4 3"/>'
            )
            for t in _nice_ticks(y_lo, y_hi):
                out.append(
                    f'<text x="{ox - 6}" y="{_num(sy(t) + 4)}" text-anchor="end">{t:g}</text>'
                )
            for c in sorted(set(cs)):
                out.append(
                    f'<text x="{_num(sx(c))}" y="{oy + PANEL_H + 16}" text-anchor="middle">{c:g}</text>'
                )
            out.append(
                f'<text x="{ox + PANEL_W / 2:.1f}" y="{oy + PANEL_H + 32}" text-anchor="middle">threshold c (%)</text>'
            )
            out.append(
                f'<text transform="translate({ox - 40},{oy + PANEL_H / 2:.1f}) rotate(-90)" '
                f'text-anchor="middle">effect (beta)</text>'
            )
            for r in ok:
                if r["outcome"] != outcome or r["lag"] != lag:
                    continue
                x = _num(sx(r["c"]))
                out.append(
                    f'<line class="whisker" x1="{x}" x2="{x}" y1="{_num(sy(r["beta_low"]))}" '
                    f'y2="{_num(sy(r["beta_high"]))}" stroke="#1f4e79" stroke-width="1.5"/>'
                )
                out.append(f'<circle cx="{x}" cy="{_num(sy(r["beta_mean"]))}" r="3.5" fill="#1f4e79"/>')
            out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_effect_svg(scan_csv, svg_path):
    """Regenerate the effect figure from an emitted scan CSV."""
    text = effect_svg(read_scan_csv(scan_csv))
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write(text)
    return svg_path
