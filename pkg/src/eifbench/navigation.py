"""Collision-free planning on the obstacle map: disk inflation and optimal 4-connected search."""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np
from scipy import ndimage

Cell = tuple[int, int]

_HEADING_OF = {(1, 0): 0, (0, 1): 90, (-1, 0): 180, (0, -1): 270}
_DIRS = ((1, 0), (0, 1), (-1, 0), (0, -1))
_VEC_OF = {h: v for v, h in _HEADING_OF.items()}


class PathError(ValueError):
    pass


def disk_offsets(radius_cells: float) -> list[Cell]:
    r = int(math.floor(radius_cells + 1e-9))
    lim = radius_cells * radius_cells + 1e-9
    return [(dx, dy) for dy in range(-r, r + 1) for dx in range(-r, r + 1) if dx * dx + dy * dy <= lim]


@dataclass
class InflatedGrid:
    blocked: np.ndarray
    radius: float
    cell_size: float = 0.05
    source_id: str | None = None
    _edges: dict[int, list[list[bool]]] = field(default_factory=dict, repr=False, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.blocked.shape

    def is_blocked(self, cell: Cell) -> bool:
        x, y = cell
        h, w = self.blocked.shape
        return not (0 <= x < w and 0 <= y < h) or bool(self.blocked[y, x])

    def forbid(self, cell: Cell, heading: int, stride: int) -> None:
        """Drop one straight move from the edge table (e.g. a move that was seen to collide)."""
        k = _DIRS.index(_VEC_OF[heading])
        self.edges(stride)[k][cell[1] * self.blocked.shape[1] + cell[0]] = False

    def edges(self, stride: int) -> list[list[bool]]:
        """Per direction, flat table of whether a ``stride``-cell straight move from each cell stays unblocked."""
        table = self._edges.get(stride)
        if table is None:
            table = [_edge_table(self.blocked, d, stride).ravel().tolist() for d in _DIRS]
            self._edges[stride] = table
        return table


def _edge_table(blocked: np.ndarray, direction: Cell, stride: int) -> np.ndarray:
    h, w = blocked.shape
    free = ~blocked
    ok = np.zeros((h, w), dtype=bool)
    dx, dy = direction
    # moving +x by stride from column x needs columns x+1..x+stride free
    if dx:
        if stride >= w:
            return ok
        run = np.ones((h, w - stride), dtype=bool)
        for k in range(1, stride + 1):
            run &= free[:, k: w - stride + k] if dx > 0 else free[:, stride - k: w - k]
        if dx > 0:
            ok[:, : w - stride] = run
        else:
            ok[:, stride:] = run
    else:
        if stride >= h:
            return ok
        run = np.ones((h - stride, w), dtype=bool)
        for k in range(1, stride + 1):
            run &= free[k: h - stride + k, :] if dy > 0 else free[stride - k: h - k, :]
        if dy > 0:
            ok[: h - stride, :] = run
        else:
            ok[stride:, :] = run
    return ok


def inflate(obstacles: np.ndarray, radius: float, cell_size: float = 0.05, source_id: str | None = None) -> InflatedGrid:
    """Dilate the obstacle mask by a Euclidean disk: a cell is blocked iff an obstacle center lies within ``radius``."""
    if radius < 0:
        raise ValueError("inflation radius must be non-negative")
    obstacles = np.asarray(obstacles, dtype=bool)
    offsets = disk_offsets(radius / cell_size)
    r = max(max(abs(dx), abs(dy)) for dx, dy in offsets)
    footprint = np.zeros((2 * r + 1, 2 * r + 1), dtype=bool)
    for dx, dy in offsets:
        footprint[dy + r, dx + r] = True
    if r == 0:
        blocked = obstacles.copy()
    else:
        blocked = ndimage.binary_dilation(obstacles, structure=footprint, border_value=0)
    return InflatedGrid(blocked=blocked, radius=radius, cell_size=cell_size, source_id=source_id)


@dataclass
class PathPlan:
    waypoints: list[Cell]
    actions: list[str]
    length: float
    goal: Cell
    exact: bool  # False when the goal was unreachable and the nearest reachable cell was used

    @property
    def end(self) -> Cell:
        return self.waypoints[-1]

    @property
    def cells(self) -> int:
        return len(self.waypoints) - 1


def _nearest(cells: Iterable[Cell], goal: Cell) -> Cell:
    gx, gy = goal
    return min(cells, key=lambda c: ((c[0] - gx) ** 2 + (c[1] - gy) ** 2, c[1], c[0]))


def lattice_reachable(blocked: np.ndarray | InflatedGrid, start: Cell, stride: int = 1) -> dict[Cell, int]:
    """Breadth-first flood over ``stride``-cell moves; returns move counts from ``start``."""
    grid = blocked if isinstance(blocked, InflatedGrid) else InflatedGrid(np.asarray(blocked, dtype=bool), 0.0)
    if grid.is_blocked(start):
        raise PathError(f"start cell {start} is blocked")
    h, w = grid.shape
    edges = grid.edges(stride)
    dist = {start: 0}
    queue = deque([start])
    while queue:
        x, y = queue.popleft()
        i = y * w + x
        d = dist[(x, y)] + 1
        for k, (dx, dy) in enumerate(_DIRS):
            if edges[k][i]:
                nxt = (x + dx * stride, y + dy * stride)
                if nxt not in dist:
                    dist[nxt] = d
                    queue.append(nxt)
    return dist


def shortest_path(grid: InflatedGrid, start: Cell, goal: Cell, stride: int = 1, heading: int = 0) -> PathPlan:
    """Optimal 4-connected path from ``start`` toward ``goal`` on an inflated grid.

    Motion is restricted to straight moves of ``stride`` cells, so reachable cells
    form a lattice through ``start``. If ``goal`` is blocked, off that lattice or
    cut off, the plan ends at the reachable cell nearest to it (Euclidean, then
    row-major). ``actions`` assumes one MoveAhead covers one stride.
    """
    if grid.is_blocked(start):
        raise PathError(f"start cell {start} lies inside the inflated obstacle zone")
    h, w = grid.shape
    gx, gy = goal
    on_lattice = (gx - start[0]) % stride == 0 and (gy - start[1]) % stride == 0
    edges = grid.edges(stride)
    parent: dict[Cell, Cell | None] = {start: None}
    g_cost = {start: 0}
    target_ok = on_lattice and not grid.is_blocked(goal)

    # A* with a Manhattan heuristic (consistent, so expanded nodes carry optimal costs);
    # without a usable goal it degenerates to a full flood of the reachable lattice.
    def hfun(x: int, y: int) -> int:
        return (abs(x - gx) + abs(y - gy)) if target_ok else 0

    counter = 0
    heap = [(hfun(*start), 0, counter, start)]
    closed: set[Cell] = set()
    found = False
    while heap:
        _, g, _, cell = heapq.heappop(heap)
        if cell in closed:
            continue
        closed.add(cell)
        if target_ok and cell == goal:
            found = True
            break
        x, y = cell
        i = y * w + x
        ng = g + stride
        for k, (dx, dy) in enumerate(_DIRS):
            if not edges[k][i]:
                continue
            nxt = (x + dx * stride, y + dy * stride)
            if nxt in closed:
                continue
            if ng < g_cost.get(nxt, 1 << 60):
                g_cost[nxt] = ng
                parent[nxt] = cell
                counter += 1
                heapq.heappush(heap, (ng + hfun(*nxt), ng, counter, nxt))

    end = goal if found else _nearest(closed, goal)
    nodes = [end]
    while parent[nodes[-1]] is not None:
        nodes.append(parent[nodes[-1]])
    nodes.reverse()
    return _build_plan(nodes, goal, found, grid.cell_size, heading)


def _build_plan(nodes: list[Cell], goal: Cell, exact: bool, cell_size: float, heading: int) -> PathPlan:
    waypoints = [nodes[0]]
    actions: list[str] = []
    cur = heading
    for a, b in zip(nodes, nodes[1:]):
        dx, dy = b[0] - a[0], b[1] - a[1]
        n = abs(dx) + abs(dy)
        ux, uy = (dx // n, dy // n)
        want = _HEADING_OF[(ux, uy)]
        actions.extend(rotations(cur, want))
        cur = want
        actions.append("MoveAhead")
        waypoints.extend((a[0] + ux * k, a[1] + uy * k) for k in range(1, n + 1))
    return PathPlan(waypoints=waypoints, actions=actions, length=(len(waypoints) - 1) * cell_size,
                    goal=goal, exact=exact)


def rotations(current: int, wanted: int) -> list[str]:
    diff = (wanted - current) % 360
    return {0: [], 90: ["RotateRight"], 180: ["RotateRight", "RotateRight"], 270: ["RotateLeft"]}[diff]


def path_blocked(grid: InflatedGrid, cells: Iterable[Cell]) -> bool:
    return any(grid.is_blocked(c) for c in cells)
