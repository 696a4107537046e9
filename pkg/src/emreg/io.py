"""Whitespace-delimited point-set files.

One point per line, D columns, '#' starts a comment. Values are written with
17 significant digits so a save/load round trip is bit-exact.
"""

from __future__ import annotations

import numpy as np

from .pointset import as_points

__all__ = ["load_pointset", "save_pointset"]


def load_pointset(path) -> np.ndarray:
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            tokens = line.split()
            try:
                values = [float(t) for t in tokens]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: non-numeric token in {tokens!r}") from exc
            if width is None:
                width = len(values)
            elif len(values) != width:
                raise ValueError(f"{path}:{lineno}: expected {width} columns, got {len(values)}")
            rows.append(values)
    if not rows:
        raise ValueError(f"{path}: no points")
    return as_points(np.asarray(rows), str(path))


def save_pointset(points, path) -> None:
    pts = as_points(points)
    with open(path, "w", encoding="utf-8") as fh:
        for row in pts:
            fh.write(" ".join(f"{v:.17g}" for v in row) + "\n")
