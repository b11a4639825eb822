"""Deterministic text output: 17-digit JSON and hand-written SVG plots."""
from __future__ import annotations

import enum
import json
import math
from typing import Iterable, Sequence

import numpy as np


def format_float(v: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    return format(float(v), ".17g")


def _encode(obj, indent: int, level: int) -> str:
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None or obj is True or obj is False:
        return json.dumps(obj)
    if isinstance(obj, enum.Enum):
        return _encode(obj.value, indent, level)
    if isinstance(obj, (int, np.integer)) and not isinstance(obj, bool):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        # JSON has no infinities or NaN
        return format_float(obj) if math.isfinite(obj) else "null"
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {_encode(v, indent, level + 1)}" for k, v in obj.items()]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, np.ndarray):
        obj = obj.tolist()
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        if all(not isinstance(v, (list, tuple, dict, np.ndarray)) for v in obj):
            return "[" + ", ".join(_encode(v, indent, level + 1) for v in obj) + "]"
        return "[\n" + ",\n".join(pad + _encode(v, indent, level + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot encode {type(obj).__name__}")


def to_json(obj, indent: int = 2) -> str:
    return _encode(obj, indent, 0) + "\n"


# ----------------------------------------------------------------------------
# SVG
# ----------------------------------------------------------------------------


class _Frame:
    """Maps data coordinates to a square viewport with equal or free aspect."""

    def __init__(self, xs, ys, size=480, margin=40, equal=True):
        xs, ys = np.asarray(xs, float), np.asarray(ys, float)
        x0, x1 = float(xs.min()), float(xs.max())
        y0, y1 = float(ys.min()), float(ys.max())
        sx, sy = max(x1 - x0, 1e-12), max(y1 - y0, 1e-12)
        if equal:
            s = max(sx, sy)
            x0, y0 = x0 - (s - sx) / 2, y0 - (s - sy) / 2
            sx = sy = s
        self.x0, self.y0, self.sx, self.sy = x0, y0, sx, sy
        self.size, self.margin = size, margin

    def __call__(self, x, y):
        span = self.size - 2 * self.margin
        u = self.margin + (x - self.x0) / self.sx * span
        v = self.size - self.margin - (y - self.y0) / self.sy * span
        return u, v


def _pts(frame, xs, ys) -> str:
    return " ".join("{:.2f},{:.2f}".format(*frame(x, y)) for x, y in zip(xs, ys))


def _doc(size: int, body: Iterable[str], title: str) -> str:
    head = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
        f'viewBox="0 0 {size} {size}">\n'
        f'<rect width="{size}" height="{size}" fill="white"/>\n'
        f'<text x="10" y="20" font-family="sans-serif" font-size="13">{title}</text>\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


def path_svg(waypoints: Sequence[Sequence[float]], title: str = "path", tick: float | None = None) -> str:
    """x-y curve of an SE(2) path with a heading tick at every waypoint."""
    wp = np.asarray(waypoints, float)
    xs, ys, th = wp[:, 0], wp[:, 1], wp[:, 2]
    ext = max(np.ptp(xs), np.ptp(ys), 1e-3)
    tick = 0.08 * ext if tick is None else tick
    tx, ty = xs + tick * np.cos(th), ys + tick * np.sin(th)
    frame = _Frame(np.concatenate([xs, tx]), np.concatenate([ys, ty]))
    body = [f'<polyline fill="none" stroke="black" stroke-width="1.5" points="{_pts(frame, xs, ys)}"/>']
    for i in range(len(wp)):
        color = "green" if i == 0 else "red" if i == len(wp) - 1 else "steelblue"
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.2" '
                    f'points="{_pts(frame, [xs[i], tx[i]], [ys[i], ty[i]])}"/>')
    return _doc(frame.size, body, title)


def boundary_svg(points: Sequence[tuple[float, float, bool]], curves: Sequence[Sequence[tuple[float, float]]],
                 title: str = "wrenches") -> str:
    """Reduced wrenches (F, T) coloured by label with boundary polylines."""
    pts = np.asarray([(p[0], p[1]) for p in points], float).reshape(-1, 2)
    allc = [np.asarray(c, float) for c in curves if len(c)]
    stack = np.concatenate([pts] + allc) if allc else pts
    frame = _Frame(np.append(stack[:, 0], 0.0), np.append(stack[:, 1], 0.0), equal=False)
    body = []
    for i, c in enumerate(allc):
        color = "darkred" if i % 2 == 0 else "darkgreen"
        body.append(f'<polyline fill="none" stroke="{color}" stroke-width="1" points="{_pts(frame, c[:, 0], c[:, 1])}"/>')
    for (f, t, slipped) in points:
        u, v = frame(f, t)
        body.append(f'<circle cx="{u:.2f}" cy="{v:.2f}" r="2" fill="{"red" if slipped else "green"}"/>')
    return _doc(frame.size, body, title)
