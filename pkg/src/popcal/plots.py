"""Minimal deterministic SVG output for band plots.

Hand-rolled rather than matplotlib so reruns are byte-identical across
machines: every float is formatted with a fixed format string and nothing
depends on fonts or backend state.
"""

from __future__ import annotations

import numpy as np

__all__ = ["band_svg", "write_band_svg", "panel_svg", "write_panel_svg"]

_W, _H = 640, 400
_MARGIN = 50
_FMT = "%.3f"


def _fmt(x):
    return _FMT % float(x)


def _scaler(lo, hi, a, b):
    span = hi - lo
    if span <= 0:
        span = 1.0
    return lambda v: a + (np.asarray(v, dtype=float) - lo) * (b - a) / span


def _polyline_points(xs, ys):
    return " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in zip(xs, ys))


def band_svg(table, title="", truth=None):
    """SVG text for a band plot: shaded 95% region, median line, and the
    observed/truth curves when present on ``table``."""
    grid = np.asarray(table.grid, dtype=float)
    curves = [table.lower, table.upper, table.median]
    if table.observed is not None:
        curves.append(table.observed)
    if truth is None:
        truth = table.truth
    if truth is not None:
        curves.append(truth)
    ymin = min(float(np.min(c)) for c in curves)
    ymax = max(float(np.max(c)) for c in curves)
    pad = 0.05 * (ymax - ymin or 1.0)
    sx = _scaler(grid[0], grid[-1], _MARGIN, _W - _MARGIN)
    sy = _scaler(ymin - pad, ymax + pad, _H - _MARGIN, _MARGIN)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
    ]
    # shaded band: lower curve forward, upper curve back
    poly = _polyline_points(
        np.concatenate([sx(grid), sx(grid)[::-1]]),
        np.concatenate([sy(table.lower), sy(table.upper)[::-1]]),
    )
    parts.append(f'<polygon points="{poly}" fill="#9ecae1" fill-opacity="0.6" stroke="none"/>')
    parts.append(
        f'<polyline points="{_polyline_points(sx(grid), sy(table.median))}"'
        ' fill="none" stroke="#08519c" stroke-width="1.5"/>'
    )
    if table.observed is not None:
        parts.append(
            f'<polyline points="{_polyline_points(sx(grid), sy(table.observed))}"'
            ' fill="none" stroke="#000000" stroke-width="1.2" stroke-dasharray="5,3"/>'
        )
    if truth is not None:
        parts.append(
            f'<polyline points="{_polyline_points(sx(grid), sy(truth))}"'
            ' fill="none" stroke="#d62728" stroke-width="1.2"/>'
        )
    ax = (
        f'<polyline points="{_fmt(_MARGIN)},{_fmt(_MARGIN)} {_fmt(_MARGIN)},{_fmt(_H - _MARGIN)}'
        f' {_fmt(_W - _MARGIN)},{_fmt(_H - _MARGIN)}" fill="none" stroke="#333333" stroke-width="1"/>'
    )
    parts.append(ax)
    for t in np.linspace(grid[0], grid[-1], 5):
        parts.append(
            f'<text x="{_fmt(sx(t))}" y="{_H - _MARGIN + 18}" font-size="11"'
            f' font-family="monospace" text-anchor="middle">{_fmt(t)}</text>'
        )
    for t in np.linspace(ymin, ymax, 5):
        parts.append(
            f'<text x="{_MARGIN - 6}" y="{_fmt(sy(t))}" font-size="11"'
            f' font-family="monospace" text-anchor="end">{_fmt(t)}</text>'
        )
    if title:
        parts.append(
            f'<text x="{_W // 2}" y="24" font-size="14" font-family="monospace"'
            f' text-anchor="middle">{title}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_band_svg(path, table, title="", truth=None):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(band_svg(table, title=title, truth=truth))


def panel_svg(panels, title=""):
    """Small-multiple SVG: one curve per panel, each with its own x scale.

    ``panels`` is a sequence of (label, grid, values[, marker_x]) tuples; the
    optional marker draws a vertical reference line (e.g. a true value).
    """
    if not panels:
        raise ValueError("need at least one panel")
    ncol = min(3, len(panels))
    nrow = -(-len(panels) // ncol)
    pw, ph = 220, 170
    width, height = ncol * pw, nrow * ph + 30
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if title:
        parts.append(
            f'<text x="{width // 2}" y="18" font-size="13" font-family="monospace" text-anchor="middle">{title}</text>'
        )
    for k, panel in enumerate(panels):
        label, grid, values = panel[0], np.asarray(panel[1], dtype=float), np.asarray(panel[2], dtype=float)
        marker = panel[3] if len(panel) > 3 else None
        x0 = (k % ncol) * pw + 30
        y0 = (k // ncol) * ph + 40
        sx = _scaler(grid[0], grid[-1], x0, x0 + pw - 45)
        vmax = float(np.max(values)) or 1.0
        sy = _scaler(0.0, 1.05 * vmax, y0 + ph - 55, y0)
        parts.append(
            f'<polyline points="{_polyline_points(sx(grid), sy(values))}"'
            ' fill="none" stroke="#08519c" stroke-width="1.2"/>'
        )
        if marker is not None:
            mx = _fmt(sx(marker))
            parts.append(
                f'<line x1="{mx}" y1="{_fmt(y0)}" x2="{mx}" y2="{_fmt(y0 + ph - 55)}"'
                ' stroke="#d62728" stroke-width="1" stroke-dasharray="4,2"/>'
            )
        parts.append(
            f'<line x1="{_fmt(x0)}" y1="{_fmt(y0 + ph - 55)}" x2="{_fmt(x0 + pw - 45)}"'
            f' y2="{_fmt(y0 + ph - 55)}" stroke="#333333" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_fmt(x0)}" y="{_fmt(y0 + ph - 38)}" font-size="10" font-family="monospace">{_fmt(grid[0])}</text>'
        )
        parts.append(
            f'<text x="{_fmt(x0 + pw - 45)}" y="{_fmt(y0 + ph - 38)}" font-size="10"'
            f' font-family="monospace" text-anchor="end">{_fmt(grid[-1])}</text>'
        )
        parts.append(
            f'<text x="{_fmt(x0 + (pw - 45) / 2)}" y="{_fmt(y0 - 8)}" font-size="11"'
            f' font-family="monospace" text-anchor="middle">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_panel_svg(path, panels, title=""):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(panel_svg(panels, title=title))
