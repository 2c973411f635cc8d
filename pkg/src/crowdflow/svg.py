"""Minimal deterministic SVG charts (no graphics dependency)."""

from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT, PAD = 640, 400, 48


def _doc(body: list[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}">'
    )
    return "\n".join([
        '<?xml version="1.0" encoding="UTF-8"?>',
        head,
        f"<title>{escape(title)}</title>",
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.2f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        *body,
        "</svg>",
        "",
    ])


def _scale(lo: float, hi: float, out_lo: float, out_hi: float):
    span = hi - lo if hi > lo else 1.0
    return lambda v: out_lo + (v - lo) / span * (out_hi - out_lo)


def stations_svg(stations: Sequence, title: str = "stations") -> str:
    lats = [s.lat for s in stations]
    lngs = [s.lng for s in stations]
    sx = _scale(min(lngs), max(lngs), PAD, WIDTH - PAD)
    sy = _scale(min(lats), max(lats), HEIGHT - PAD, PAD)
    body = []
    for s in stations:
        x, y = sx(s.lng), sy(s.lat)
        body.append(f'<circle class="station" cx="{x:.2f}" cy="{y:.2f}" r="4" fill="steelblue"/>')
        body.append(f'<text x="{x + 6:.2f}" y="{y - 6:.2f}" font-size="10">{escape(s.id)}</text>')
    return _doc(body, title)


def series_svg(slots: Sequence[int], predicted: Sequence[float], actual: Sequence[float],
               title: str = "predicted vs actual") -> str:
    values = list(predicted) + list(actual)
    sx = _scale(min(slots), max(slots), PAD, WIDTH - PAD)
    sy = _scale(min(values), max(values), HEIGHT - PAD, PAD)

    def line(ys, cls, color):
        pts = " ".join(f"{sx(t):.2f},{sy(v):.2f}" for t, v in zip(slots, ys))
        return f'<polyline class="{cls}" points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'

    body = [
        line(actual, "actual", "black"),
        line(predicted, "predicted", "crimson"),
        f'<text x="{PAD}" y="{HEIGHT - 12}" font-size="10">slots {min(slots)}-{max(slots)}</text>',
    ]
    return _doc(body, title)


def bars_svg(labels: Sequence[str], values: Sequence[float], title: str = "") -> str:
    top = max(max(values), 1e-12) if values else 1.0
    n = max(len(values), 1)
    slot = (WIDTH - 2 * PAD) / n
    sy = _scale(0.0, top, HEIGHT - PAD, PAD)
    body = []
    for i, (label, v) in enumerate(zip(labels, values)):
        x = PAD + i * slot
        y = sy(v)
        body.append(
            f'<rect class="bar" x="{x + slot * 0.1:.2f}" y="{y:.2f}" width="{slot * 0.8:.2f}" '
            f'height="{HEIGHT - PAD - y:.2f}" fill="steelblue"><title>{escape(label)}: {v:.6g}</title></rect>'
        )
        body.append(
            f'<text x="{x + slot / 2:.2f}" y="{HEIGHT - PAD + 14}" font-size="9" '
            f'text-anchor="middle">{escape(label)}</text>'
        )
    return _doc(body, title)
