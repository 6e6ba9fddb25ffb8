"""Minimal deterministic SVG line plots: mean curve plus SEM band per config.

No plotting library: matplotlib SVGs embed nondeterministic ids and metadata,
and byte-identical reruns are part of the logging contract. Coordinates are
formatted to fixed precision so output is a pure function of the input.
"""

from __future__ import annotations

import os

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 62, 16, 30, 46

PALETTE = ["#1f6fb4", "#d1495b", "#3a923a", "#8a5bb8", "#c07b1e",
           "#3aa0a0", "#b05fa0", "#6b6b6b"]


def _fmt(x: float) -> str:
    return f"{x:.3f}".rstrip("0").rstrip(".")


class _Axes:
    def __init__(self, x_lo, x_hi, y_lo, y_hi):
        if x_hi <= x_lo:
            x_hi = x_lo + 1.0
        if y_hi <= y_lo:
            pad = abs(y_lo) * 0.1 + 0.1
            y_lo, y_hi = y_lo - pad, y_lo + pad
        self.x_lo, self.x_hi, self.y_lo, self.y_hi = x_lo, x_hi, y_lo, y_hi

    def px(self, x):
        frac = (x - self.x_lo) / (self.x_hi - self.x_lo)
        return MARGIN_L + frac * (WIDTH - MARGIN_L - MARGIN_R)

    def py(self, y):
        frac = (y - self.y_lo) / (self.y_hi - self.y_lo)
        return HEIGHT - MARGIN_B - frac * (HEIGHT - MARGIN_T - MARGIN_B)


def _ticks(lo, hi, count=5):
    span = hi - lo
    return [lo + span * i / (count - 1) for i in range(count)]


def render_svg(title: str, xlabel: str, ylabel: str, series: list) -> str:
    """series: list of (label, xs, means, sems) tuples."""
    xs_all = [x for _, xs, _, _ in series for x in xs]
    ys_all = [m + s for _, _, ms, ss in series for m, s in zip(ms, ss)]
    ys_all += [m - s for _, _, ms, ss in series for m, s in zip(ms, ss)]
    ax = _Axes(min(xs_all), max(xs_all), min(ys_all), max(ys_all))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>',
        f'<text x="{WIDTH / 2:.0f}" y="18" text-anchor="middle" '
        f'font-family="sans-serif" font-size="13">{title}</text>',
    ]
    # frame and ticks
    x0, y0 = ax.px(ax.x_lo), ax.py(ax.y_lo)
    x1, y1 = ax.px(ax.x_hi), ax.py(ax.y_hi)
    parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" '
                 f'height="{_fmt(y0 - y1)}" fill="none" stroke="#333333"/>')
    for tx in _ticks(ax.x_lo, ax.x_hi):
        px = ax.px(tx)
        parts.append(f'<line x1="{_fmt(px)}" y1="{_fmt(y0)}" x2="{_fmt(px)}" '
                     f'y2="{_fmt(y0 + 4)}" stroke="#333333"/>')
        parts.append(f'<text x="{_fmt(px)}" y="{_fmt(y0 + 17)}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="10">{_fmt(tx)}</text>')
    for ty in _ticks(ax.y_lo, ax.y_hi):
        py = ax.py(ty)
        parts.append(f'<line x1="{_fmt(x0 - 4)}" y1="{_fmt(py)}" x2="{_fmt(x0)}" '
                     f'y2="{_fmt(py)}" stroke="#333333"/>')
        parts.append(f'<text x="{_fmt(x0 - 7)}" y="{_fmt(py + 3)}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="10">{_fmt(ty)}</text>')
    parts.append(f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 10}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11">{xlabel}</text>')
    parts.append(f'<text x="16" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
                 f'font-family="sans-serif" font-size="11" '
                 f'transform="rotate(-90 16 {(y0 + y1) / 2:.0f})">{ylabel}</text>')

    for i, (label, xs, means, sems) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        upper = [(ax.px(x), ax.py(m + s)) for x, m, s in zip(xs, means, sems)]
        lower = [(ax.px(x), ax.py(m - s)) for x, m, s in zip(xs, means, sems)]
        band = " ".join(f"{_fmt(px)},{_fmt(py)}" for px, py in upper + lower[::-1])
        parts.append(f'<polygon points="{band}" fill="{color}" fill-opacity="0.18" '
                     f'stroke="none"/>')
        line = " ".join(f"{_fmt(ax.px(x))},{_fmt(ax.py(m))}" for x, m in zip(xs, means))
        parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" '
                     f'stroke-width="1.6"/>')
        ly = MARGIN_T + 14 * i + 8
        parts.append(f'<line x1="{WIDTH - 150}" y1="{ly}" x2="{WIDTH - 130}" y2="{ly}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{WIDTH - 125}" y="{ly + 3}" font-family="sans-serif" '
                     f'font-size="10">{label}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def emit_plots(summaries, out_dir) -> list:
    """One SVG per metric: end-of-task mean line + SEM band per configuration.

    Returns the list of files written. Metrics absent from every summary are
    skipped rather than plotted empty."""
    summaries = list(summaries)
    if not summaries or not any(s.rows for s in summaries):
        raise ValueError("emit_plots needs at least one non-empty summary")
    os.makedirs(out_dir, exist_ok=True)
    metric_names = sorted({name for s in summaries for row in s.rows
                           for name in row["metrics"]})
    written = []
    for name in metric_names:
        series = []
        for s in summaries:
            rows = [r for r in s.rows if r["task_end"] and name in r["metrics"]]
            if not rows:
                rows = [r for r in s.rows if name in r["metrics"]]
            if not rows:
                continue
            xs = [float(r["task"]) for r in rows]
            means = [r["metrics"][name][0] for r in rows]
            sems = [r["metrics"][name][1] for r in rows]
            series.append((s.label, xs, means, sems))
        if not series:
            continue
        path = os.path.join(out_dir, f"{name}.svg")
        with open(path, "w", encoding="utf-8", newline="\n") as f:
            f.write(render_svg(name, "task", name, series))
        written.append(path)
    return written
