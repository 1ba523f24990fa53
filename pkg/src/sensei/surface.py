"""Decision-surface dumps for 2-D models: a probability grid as CSV and an
SVG with the p = 0.5 level set and the training points."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .nn import MlpModel, ShapeError, forward, softmax


@dataclass(frozen=True)
class GridSpec:
    n: int = 200
    lo: float = -1.0
    hi: float = 1.0

    def axis(self) -> np.ndarray:
        return np.linspace(self.lo, self.hi, self.n)


def grid_probs(model: MlpModel, grid: GridSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(xs, ys, p)`` with ``p[i, j] = P(class 1 | xs[j], ys[i])``."""
    if model.n_in != 2:
        raise ShapeError(f"surface needs a 2-D input model, got {model.n_in}-D")
    if grid.n < 2:
        raise ValueError("grid needs at least 2 points per axis")
    xs = ys = grid.axis()
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel()])
    p = softmax(forward(model, pts))[:, 1].reshape(grid.n, grid.n)
    return xs, ys, p


def _lerp(a, b, va, vb, level):
    t = (level - va) / (vb - va)
    return a + t * (b - a)


def marching_squares(xs, ys, f, level: float = 0.5) -> list:
    """Line segments ``((x0, y0), (x1, y1))`` of the ``level`` set of ``f[i, j]``
    sampled at ``(xs[j], ys[i])``.  Saddle cells are split by the cell mean."""
    segs = []
    above = f > level
    for i in range(len(ys) - 1):
        for j in range(len(xs) - 1):
            corners = [(i, j), (i, j + 1), (i + 1, j + 1), (i + 1, j)]
            flags = [above[c] for c in corners]
            if all(flags) or not any(flags):
                continue
            pts = []
            for e in range(4):
                (ia, ja), (ib, jb) = corners[e], corners[(e + 1) % 4]
                if above[ia, ja] != above[ib, jb]:
                    px = _lerp(xs[ja], xs[jb], f[ia, ja], f[ib, jb], level)
                    py = _lerp(ys[ia], ys[ib], f[ia, ja], f[ib, jb], level)
                    pts.append((e, (float(px), float(py))))
            if len(pts) == 2:
                segs.append((pts[0][1], pts[1][1]))
            else:
                # four crossings: pair edges according to the centre value
                centre = np.mean([f[c] for c in corners]) > level
                e = [p for _, p in pts]
                if centre == flags[0]:
                    segs += [(e[0], e[1]), (e[2], e[3])]
                else:
                    segs += [(e[3], e[0]), (e[1], e[2])]
    return segs


def _svg(grid, segs, points, labels, size=400) -> str:
    span = grid.hi - grid.lo

    def sx(v):
        return (v - grid.lo) / span * size

    def sy(v):
        return size - (v - grid.lo) / span * size

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           f'<rect width="{size}" height="{size}" fill="white" stroke="black"/>']
    if points is not None:
        colors = ("#1f77b4", "#d62728")
        for (px, py), y in zip(points, labels):
            out.append(f'<circle cx="{sx(px):.2f}" cy="{sy(py):.2f}" r="1.5" fill="{colors[int(y) % 2]}"/>')
    for (x0, y0), (x1, y1) in segs:
        out.append(f'<line x1="{sx(x0):.2f}" y1="{sy(y0):.2f}" x2="{sx(x1):.2f}" y2="{sy(y1):.2f}" '
                   'stroke="black" stroke-width="2"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_surface(model: MlpModel, grid: GridSpec, path, points=None, labels=None) -> list:
    """Write ``path`` (.csv, columns x,y,p1) and its .svg sibling; return the
    contour segments."""
    xs, ys, p = grid_probs(model, grid)
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "y", "p1"])
        for i, yv in enumerate(ys):
            for j, xv in enumerate(xs):
                w.writerow([repr(float(xv)), repr(float(yv)), repr(float(p[i, j]))])
    segs = marching_squares(xs, ys, p, 0.5)
    path.with_suffix(".svg").write_text(_svg(grid, segs, points, labels))
    return segs
