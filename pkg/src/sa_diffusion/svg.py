"""Tiny SVG writer for scatter plots and line charts."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf"]


class _Frame:
    def __init__(self, xs, ys, width, height, pad=40):
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        self.x0, self.x1 = float(xs.min()), float(xs.max())
        self.y0, self.y1 = float(ys.min()), float(ys.max())
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0
        self.w, self.h, self.pad = width, height, pad

    def px(self, x):
        return self.pad + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (self.w - 2 * self.pad)

    def py(self, y):
        return self.h - self.pad - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.pad)

    def axes(self, title):
        p, w, h = self.pad, self.w, self.h
        return [
            f'<rect x="{p}" y="{p}" width="{w - 2 * p}" height="{h - 2 * p}" fill="none" stroke="#888"/>',
            f'<text x="{w / 2:.1f}" y="{p / 2:.1f}" text-anchor="middle" font-size="13">{escape(title)}</text>',
            f'<text x="{p}" y="{h - p / 3:.1f}" font-size="10">{self.x0:.3g}</text>',
            f'<text x="{w - p}" y="{h - p / 3:.1f}" text-anchor="end" font-size="10">{self.x1:.3g}</text>',
            f'<text x="{p / 8:.1f}" y="{h - p:.1f}" font-size="10">{self.y0:.3g}</text>',
            f'<text x="{p / 8:.1f}" y="{p + 10:.1f}" font-size="10">{self.y1:.3g}</text>',
        ]


def _write(path, width, height, body) -> None:
    head = f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">'
    Path(path).write_text("\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n")


def scatter(path, groups: dict, title: str = "", width: int = 480, height: int = 480, radius: float = 1.5) -> None:
    """``groups`` maps a label to an (n, 2) array."""
    allpts = np.concatenate([np.asarray(v, float) for v in groups.values()])
    fr = _Frame(allpts[:, 0], allpts[:, 1], width, height)
    body = fr.axes(title)
    for k, (label, pts) in enumerate(groups.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = np.asarray(pts, float)
        for x, y in zip(fr.px(pts[:, 0]), fr.py(pts[:, 1])):
            body.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="{radius}" fill="{color}" fill-opacity="0.5"/>')
        body.append(f'<text x="{width - 45}" y="{55 + 14 * k}" font-size="11" fill="{color}">{escape(str(label))}</text>')
    _write(path, width, height, body)


def lines(path, x, series: dict, title: str = "", width: int = 560, height: int = 400) -> None:
    """``series`` maps a label to y-values aligned with ``x``."""
    ys = np.concatenate([np.asarray(v, float) for v in series.values()])
    fr = _Frame(x, ys, width, height)
    body = fr.axes(title)
    for k, (label, y) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(fr.px(x), fr.py(y)))
        body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        body.append(f'<text x="{width - 140}" y="{55 + 14 * k}" font-size="11" fill="{color}">{escape(str(label))}</text>')
    _write(path, width, height, body)
