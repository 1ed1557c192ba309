"""Hand-built worlds shared by the test modules."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from eifbench.registry import default_registry, default_rules
from eifbench.world import LandmarkInstance, ObjectInstance, WorldGrid

Box = tuple[int, int, int, int]


def make_world(size: tuple[int, int] = (60, 60),
               landmarks: Sequence[tuple[str, Box]] = (),
               objects: Sequence[tuple[str, tuple[int, int], str | None]] = (),
               start: tuple[int, int] = (7, 7), heading: int = 0,
               walls: Sequence[tuple[int, int]] = (), hidden: Sequence[str] = (),
               border: bool = True) -> WorldGrid:
    """Room with border walls; objects are (type, cell, parent landmark id), ids numbered per type."""
    w, h = size
    reg = default_registry()
    grid = np.zeros((h, w), dtype=bool)
    if border:
        grid[0, :] = grid[-1, :] = True
        grid[:, 0] = grid[:, -1] = True
    for x, y in walls:
        grid[y, x] = True
    lms, counts = [], {}
    for t, box in landmarks:
        k = counts.get(t, 0)
        counts[t] = k + 1
        lms.append(LandmarkInstance(f"{t}_{k}", t, box, reg.landmarks[t].openable))
    objs, counts = [], {}
    for t, cell, parent in objects:
        k = counts.get(t, 0)
        counts[t] = k + 1
        oid = f"{t}_{k}"
        objs.append(ObjectInstance(oid, t, cell, parent=parent,
                                   hidden_in=parent if parent in hidden else None))
    return WorldGrid(w, h, grid, lms, objs, default_rules(), reg, start_cell=start, start_heading=heading, seed=0)
