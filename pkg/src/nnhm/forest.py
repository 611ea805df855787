"""Static SVG forest plot of an analysis result."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape, quoteattr

import numpy as np

from .analysis import AnalysisResult

ROW_H = 24
LABEL_W = 190
PLOT_W = 420
TEXT_W = 230
TOP = 40
Z975 = 1.959963984540054


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _attr(v: float) -> str:
    return repr(float(v))


def _nice_ticks(lo, hi, target=6):
    span = hi - lo
    raw = span / target
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw), default=10 * mag)
    start = math.ceil(lo / step) * step
    return [round(t, 10) for t in np.arange(start, hi + 0.5 * step, step)]


def forest_svg(result: AnalysisResult) -> str:
    """SVG document: study estimates with 95% confidence segments and
    shrinkage intervals, then the effect diamond and the prediction bar."""
    data = result.data
    k = data.k
    ci_lo = data.y - Z975 * data.sigma
    ci_hi = data.y + Z975 * data.sigma
    shrink = [result.interval(i + 1, 0.95) for i in range(k)]
    shrink_med = [float(result.quantile(i + 1, 0.5)) for i in range(k)]
    mu_iv = result.interval("mu", 0.95)
    pred_iv = result.interval("predictive", 0.95)
    mu_med = float(result.quantile("mu", 0.5))
    pred_med = float(result.quantile("predictive", 0.5))

    xs = np.concatenate([ci_lo, ci_hi, [mu_iv.lo, mu_iv.hi, pred_iv.lo, pred_iv.hi, 0.0]])
    lo, hi = float(xs.min()), float(xs.max())
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad

    def px(v):
        return LABEL_W + (v - lo) / (hi - lo) * PLOT_W

    n_rows = k + 3
    height = TOP + n_rows * ROW_H + 40
    width = LABEL_W + PLOT_W + TEXT_W
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<text x="{LABEL_W + PLOT_W / 2:.2f}" y="20" text-anchor="middle">'
        'estimate (95% CI) and posterior shrinkage interval</text>',
    ]
    y_axis = TOP + n_rows * ROW_H
    out.append(f'<line class="zero-ref" x1="{px(0):.2f}" y1="{TOP}" x2="{px(0):.2f}" '
               f'y2="{y_axis}" stroke="black" stroke-dasharray="3,3"/>')

    for i in range(k):
        yc = TOP + (i + 0.5) * ROW_H
        lab = escape(data.labels[i])
        out.append(f'<g class="study" data-index="{i + 1}" data-label={quoteattr(data.labels[i])}>')
        out.append(f'<text x="8" y="{yc + 4:.2f}">{lab}</text>')
        out.append(f'<line class="ci" data-lo="{_attr(ci_lo[i])}" data-hi="{_attr(ci_hi[i])}" '
                   f'x1="{px(ci_lo[i]):.2f}" y1="{yc - 3:.2f}" x2="{px(ci_hi[i]):.2f}" '
                   f'y2="{yc - 3:.2f}" stroke="black" stroke-width="1.5"/>')
        size = 3 + 4 * (data.sigma.min() / data.sigma[i])
        out.append(f'<rect class="estimate" data-value="{_attr(data.y[i])}" x="{px(data.y[i]) - size / 2:.2f}" '
                   f'y="{yc - 3 - size / 2:.2f}" width="{size:.2f}" height="{size:.2f}" fill="black"/>')
        s = shrink[i]
        out.append(f'<line class="shrinkage" data-lo="{_attr(s.lo)}" data-hi="{_attr(s.hi)}" '
                   f'x1="{px(s.lo):.2f}" y1="{yc + 5:.2f}" x2="{px(s.hi):.2f}" y2="{yc + 5:.2f}" '
                   f'stroke="grey" stroke-width="1.5"/>')
        out.append(f'<circle class="shrinkage-median" cx="{px(shrink_med[i]):.2f}" cy="{yc + 5:.2f}" '
                   f'r="2.5" fill="grey"/>')
        out.append(f'<text x="{LABEL_W + PLOT_W + 10}" y="{yc + 4:.2f}">{_fmt(data.y[i])} '
                   f'[{_fmt(ci_lo[i])}, {_fmt(ci_hi[i])}]</text>')
        out.append('</g>')

    yc = TOP + (k + 1) * ROW_H
    dh = ROW_H * 0.35
    pts = [(px(mu_iv.lo), yc), (px(mu_med), yc - dh), (px(mu_iv.hi), yc), (px(mu_med), yc + dh)]
    out.append(f'<g class="summary" data-target="mu">')
    out.append(f'<text x="8" y="{yc + 4:.2f}">mean effect (mu)</text>')
    out.append('<polygon class="mu-diamond" data-lo="%s" data-hi="%s" points="%s" fill="black"/>'
               % (_attr(mu_iv.lo), _attr(mu_iv.hi), " ".join(f"{a:.2f},{b:.2f}" for a, b in pts)))
    out.append(f'<text x="{LABEL_W + PLOT_W + 10}" y="{yc + 4:.2f}">{_fmt(mu_med)} '
               f'[{_fmt(mu_iv.lo)}, {_fmt(mu_iv.hi)}]</text>')
    out.append('</g>')

    yc = TOP + (k + 2) * ROW_H
    out.append(f'<g class="summary" data-target="predictive">')
    out.append(f'<text x="8" y="{yc + 4:.2f}">prediction (theta new)</text>')
    out.append(f'<rect class="prediction-bar" data-lo="{_attr(pred_iv.lo)}" data-hi="{_attr(pred_iv.hi)}" '
               f'x="{px(pred_iv.lo):.2f}" y="{yc - 3:.2f}" width="{px(pred_iv.hi) - px(pred_iv.lo):.2f}" '
               f'height="6" fill="grey"/>')
    out.append(f'<text x="{LABEL_W + PLOT_W + 10}" y="{yc + 4:.2f}">{_fmt(pred_med)} '
               f'[{_fmt(pred_iv.lo)}, {_fmt(pred_iv.hi)}]</text>')
    out.append('</g>')

    out.append(f'<line class="axis" x1="{LABEL_W}" y1="{y_axis}" x2="{LABEL_W + PLOT_W}" '
               f'y2="{y_axis}" stroke="black"/>')
    for t in _nice_ticks(lo, hi):
        out.append(f'<line class="tick" x1="{px(t):.2f}" y1="{y_axis}" x2="{px(t):.2f}" '
                   f'y2="{y_axis + 5}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{y_axis + 18}" text-anchor="middle">{t:g}</text>')
    out.append('</svg>')
    return "\n".join(out) + "\n"


def render_forest(result: AnalysisResult, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(forest_svg(result))
