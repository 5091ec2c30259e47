"""Deterministic SVG line charts of waveforms."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .solver import WaveformSet

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b",
           "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")
WIDTH, HEIGHT = 800, 480
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 20, 50
MAX_POINTS = 4000


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for m in (1, 2, 5, 10):
        if span / (m * step) <= n:
            step *= m
            break
    first = math.ceil(lo / step) * step
    out, k = [], 0
    while first + k * step <= hi + 1e-9 * step:
        out.append(first + k * step)
        k += 1
    return out


def _num(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.6g}"


def _decimate(n: int) -> range:
    return range(0, n, max(1, math.ceil(n / MAX_POINTS)))


def emit_plot(w: WaveformSet, vars, path, title: str = "") -> None:
    """Write an SVG chart with one polyline per variable against time."""
    names = list(vars)
    if not names:
        raise ValueError("no variables selected for plotting")
    series = [(n, w.column(n)) for n in names]
    t = list(w.times)
    if not t:
        raise ValueError("waveform is empty")
    t0, t1 = t[0], t[-1]
    if t1 == t0:
        t1 = t0 + 1.0
    ys = [float(v) for _, col in series for v in col]
    y0, y1 = min(ys), max(ys)
    if y1 - y0 < 1e-12 * max(1.0, abs(y0)):
        y0, y1 = y0 - 0.5 * max(abs(y0), 1.0) * 0.1, y1 + 0.5 * max(abs(y1), 1.0) * 0.1
    pad = 0.05 * (y1 - y0)
    y0, y1 = y0 - pad, y1 + pad
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - t0) / (t1 - t0) * pw

    def sy(v):
        return TOP + (y1 - v) / (y1 - y0) * ph

    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" '
        f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    if title:
        out.append(f'<title>{escape(title)}</title>')
    out.append(f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" '
               'stroke="black"/>')
    for v in _ticks(t0, t1):
        x = _num(sx(v))
        out.append(f'<line x1="{x}" y1="{TOP + ph}" x2="{x}" y2="{TOP + ph + 5}" stroke="black"/>')
        out.append(f'<text x="{x}" y="{TOP + ph + 18}" font-size="11" '
                   f'text-anchor="middle">{_label(v)}</text>')
    for v in _ticks(y0, y1):
        y = _num(sy(v))
        out.append(f'<line x1="{LEFT - 5}" y1="{y}" x2="{LEFT}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{LEFT - 8}" y="{y}" font-size="11" text-anchor="end" '
                   f'dominant-baseline="middle">{_label(v)}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.2f}" y="{HEIGHT - 10}" font-size="12" '
               'text-anchor="middle">time (s)</text>')
    out.append(f'<text x="15" y="{TOP + ph / 2:.2f}" font-size="12" text-anchor="middle" '
               f'transform="rotate(-90 15 {TOP + ph / 2:.2f})">value</text>')
    for k, (name, col) in enumerate(series):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_num(sx(t[i]))},{_num(sy(float(col[i])))}" for i in _decimate(len(t)))
        if len(t) > 1 and (len(t) - 1) % max(1, math.ceil(len(t) / MAX_POINTS)):
            pts += f" {_num(sx(t[-1]))},{_num(sy(float(col[-1])))}"
        out.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>')
        ly = TOP + 15 + 18 * k
        lx = WIDTH - RIGHT + 10
        out.append(f'<line x1="{lx}" y1="{ly}" x2="{lx + 20}" y2="{ly}" stroke="{color}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{lx + 25}" y="{ly}" font-size="11" '
                   f'dominant-baseline="middle">{escape(name)}</text>')
    out.append("</svg>")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
