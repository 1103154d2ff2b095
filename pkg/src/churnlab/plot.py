"""Minimal SVG line plot of ROC curves (no plotting library needed)."""

from __future__ import annotations

from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from .evaluation import RocPoint

PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f")


def roc_svg(curves: Mapping[str, Sequence[RocPoint]], size: int = 420, margin: int = 48) -> str:
    """One polyline per curve on the unit square, with a chance diagonal and a legend."""
    inner = size - 2 * margin

    def xy(fpr: float, tpr: float) -> str:
        return f"{margin + fpr * inner:.2f},{margin + (1.0 - tpr) * inner:.2f}"

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size + 180}" height="{size}" font-family="sans-serif" font-size="12">',
        f'<rect x="{margin}" y="{margin}" width="{inner}" height="{inner}" fill="none" stroke="#000"/>',
        f'<line x1="{margin}" y1="{margin + inner}" x2="{margin + inner}" y2="{margin}" stroke="#bbb" stroke-dasharray="4 4"/>',
    ]
    for k in range(6):
        v = k / 5
        parts.append(f'<text x="{margin + v * inner:.1f}" y="{size - margin + 16}" text-anchor="middle">{v:.1f}</text>')
        parts.append(f'<text x="{margin - 6}" y="{margin + (1 - v) * inner + 4:.1f}" text-anchor="end">{v:.1f}</text>')
    parts.append(f'<text x="{margin + inner / 2}" y="{size - 8}" text-anchor="middle">False positive rate</text>')
    parts.append(
        f'<text x="14" y="{margin + inner / 2}" text-anchor="middle" transform="rotate(-90 14 {margin + inner / 2})">True positive rate</text>'
    )
    for i, (name, pts) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(xy(p.fpr, p.tpr) for p in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        y = margin + 10 + 18 * i
        parts.append(f'<line x1="{size - margin + 60}" y1="{y}" x2="{size - margin + 80}" y2="{y}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{size - margin + 86}" y="{y + 4}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
