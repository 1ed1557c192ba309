"""Ground-truth egocentric sensing and the allocentric semantic map.

Only wall cells occlude sight: landmarks sit below camera height, so rays pass
over their tops. Landmarks are detected out to ``max_range``; small objects
only within ``object_range``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .registry import Registry
from .world import AgentPose, LandmarkInstance, WorldGrid

Cell = tuple[int, int]


@dataclass(frozen=True)
class SensorConfig:
    hfov: float = 90.0  # degrees
    max_range: float = 5.0  # meters
    object_range: float = 1.5  # meters
    ray_step: float = 0.5  # cells between samples along a ray
    ray_spacing: float = 0.7  # cells between neighbouring rays at max range


DEFAULT_SENSOR = SensorConfig()


@dataclass
class VisibleInstance:
    id: str
    type: str
    depth: float  # meters along the camera's optical axis
    bearing: float  # degrees, positive to the right of the heading
    footprint: list[Cell]
    flat: np.ndarray | None = field(default=None, repr=False, compare=False)  # footprint as flat indices


@dataclass
class Observation:
    shape: tuple[int, int]  # (height, width)
    cells: np.ndarray  # flat indices of visible cells
    obstacle: np.ndarray  # ground-truth obstacle flag per visible cell
    detail: np.ndarray  # flat indices of visible cells within object range
    instances: list[VisibleInstance]
    pose: AgentPose

    def visible(self, cell: Cell) -> bool:
        return cell[1] * self.shape[1] + cell[0] in self._cell_set()

    def _cell_set(self) -> set[int]:
        cache = self.__dict__.get("_set")
        if cache is None:
            cache = set(self.cells.tolist())
            self.__dict__["_set"] = cache
        return cache

    def by_type(self, category: str) -> list[VisibleInstance]:
        return [i for i in self.instances if i.type == category]

    def labels(self) -> dict[Cell, tuple[str, ...]]:
        """Per-cell channel labels for every visible cell that carries one."""
        w = self.shape[1]
        out: dict[Cell, list[str]] = {}
        for idx, obst in zip(self.cells.tolist(), self.obstacle.tolist()):
            if obst:
                out.setdefault((idx % w, idx // w), []).append("obstacle")
        shown = set(self.cells.tolist())
        for inst in self.instances:
            for c in inst.footprint:
                if c[1] * w + c[0] in shown:
                    out.setdefault(c, []).append(inst.type)
        return {c: tuple(v) for c, v in sorted(out.items(), key=lambda kv: (kv[0][1], kv[0][0]))}


@lru_cache(maxsize=64)
def _ray_table(sensor: SensorConfig, heading: int, cell_size: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per ray, the integer cell offsets sampled from the agent's cell center, and whether each lies in the view."""
    rng_cells = sensor.max_range / cell_size
    n_rays = max(2, int(math.ceil(math.radians(sensor.hfov) * rng_cells / sensor.ray_spacing)) + 1)
    angles = np.radians(heading + np.linspace(-sensor.hfov / 2, sensor.hfov / 2, n_rays))
    dists = np.arange(0.0, rng_cells + 1e-9, sensor.ray_step)
    ox = np.floor(0.5 + np.cos(angles)[:, None] * dists[None, :]).astype(np.int64)
    oy = np.floor(0.5 + np.sin(angles)[:, None] * dists[None, :]).astype(np.int64)
    # drop repeated consecutive cells along each ray, padding with the ray's last cell
    rows = []
    for rx, ry in zip(ox, oy):
        step = np.ones(len(rx), dtype=bool)
        step[1:] = (rx[1:] != rx[:-1]) | (ry[1:] != ry[:-1])
        rows.append((rx[step], ry[step]))
    n = max(len(rx) for rx, _ in rows)
    ox = np.array([np.pad(rx, (0, n - len(rx)), mode="edge") for rx, _ in rows])
    oy = np.array([np.pad(ry, (0, n - len(ry)), mode="edge") for _, ry in rows])
    # a cell is kept only if its center lies inside the field of view and range
    dist = np.hypot(ox, oy)
    ang = np.degrees(np.arctan2(oy, ox)) - heading
    ang = (ang + 180.0) % 360.0 - 180.0
    in_view = (dist <= rng_cells + 1e-9) & ((np.abs(ang) <= sensor.hfov / 2 + 1e-9) | (dist == 0))
    return ox, oy, in_view


def visible_cells(world: WorldGrid, cell: Cell, heading: int, sensor: SensorConfig = DEFAULT_SENSOR) -> np.ndarray:
    """Flat indices of cells seen from the center of ``cell``; depends only on the static walls, so it is cached."""
    key = ("vis", sensor, cell, heading)
    cached = world._cache.get(key)
    if cached is not None:
        return cached
    h, w = world.height, world.width
    ox, oy, in_view = _ray_table(sensor, heading, world.cell_size)
    xs = cell[0] + ox
    ys = cell[1] + oy
    inb = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    flat_all = np.where(inb, ys * w + xs, 0)
    stop = world.walls.reshape(-1)[flat_all] | ~inb
    n = stop.shape[1]
    first = np.where(stop.any(axis=1), stop.argmax(axis=1), n)
    keep = (np.arange(n)[None, :] <= first[:, None]) & inb & in_view
    mask = np.zeros(h * w, dtype=bool)
    mask[flat_all[keep]] = True
    flat = np.flatnonzero(mask)
    flat.setflags(write=False)
    world._cache[key] = flat
    return flat


def _bearing(pose: AgentPose, cell: Cell, cell_size: float) -> float:
    px, py = pose.x / cell_size - 0.5, pose.y / cell_size - 0.5
    ang = math.degrees(math.atan2(cell[1] - py, cell[0] - px)) - pose.heading
    return (ang + 180.0) % 360.0 - 180.0


def _depth(horizontal: float, pitch: float) -> float:
    return horizontal / math.cos(math.radians(pitch))


def observe(world: WorldGrid, pose: AgentPose, sensor: SensorConfig | None = None) -> Observation:
    sensor = sensor or DEFAULT_SENSOR
    w = world.width
    cell = pose.cell
    flat = visible_cells(world, cell, pose.heading, sensor)
    xs, ys = flat % w, flat // w
    obstacle = world.obstacles[ys, xs]
    near = np.hypot(xs - cell[0], ys - cell[1]) <= sensor.object_range / world.cell_size + 1e-9
    detail = flat[near]
    detail_set = set(detail.tolist())
    cs = world.cell_size
    px, py = pose.x / cs - 0.5, pose.y / cs - 0.5
    instances: list[VisibleInstance] = []

    lm_ids = np.unique(world.landmark_index[ys, xs])
    for i in lm_ids.tolist():
        if i < 0:
            continue
        lm = world.landmarks[i]
        near_cell = _nearest_cell(lm, px, py)
        hd = math.hypot(near_cell[0] - px, near_cell[1] - py) * cs
        cells, fp = _footprint(world, lm)
        instances.append(VisibleInstance(lm.id, lm.type, _depth(hd, pose.pitch), _bearing(pose, near_cell, cs),
                                         cells, fp))
    for ob in world.objects:
        if ob.cell is None or ob.cell[1] * w + ob.cell[0] not in detail_set or world.is_concealed(ob):
            continue
        hd = math.hypot(ob.cell[0] - px, ob.cell[1] - py) * cs
        instances.append(VisibleInstance(ob.id, ob.type, _depth(hd, pose.pitch), _bearing(pose, ob.cell, cs), [ob.cell]))
    return Observation((world.height, world.width), flat, obstacle, detail, instances, pose)


def _footprint(world: WorldGrid, lm: LandmarkInstance) -> tuple[list[Cell], np.ndarray]:
    # landmark boxes are static, so their cell lists are cached on the world
    key = ("fp", lm.id, lm.bbox)
    hit = world._cache.get(key)
    if hit is None:
        cells = lm.cells()
        flat = np.array([c[1] * world.width + c[0] for c in cells], dtype=np.int64)
        hit = world._cache[key] = (cells, flat)
    return list(hit[0]), hit[1]


def _nearest_cell(lm: LandmarkInstance, px: float, py: float) -> Cell:
    x0, y0, x1, y1 = lm.bbox
    return (int(min(max(round(px), x0), x1 - 1)), int(min(max(round(py), y0), y1 - 1)))


@dataclass
class SemanticMap:
    """(C+1) x H x W evidence grid: object channels, landmark channels, then obstacles."""

    channels: list[str]
    grid: np.ndarray
    explored: np.ndarray  # cells ever observed
    detail_explored: np.ndarray  # cells ever observed within object range
    cell_size: float = 0.05
    n_objects: int = 0

    @classmethod
    def empty(cls, registry: Registry, height: int, width: int, cell_size: float = 0.05) -> "SemanticMap":
        channels = registry.channels
        return cls(
            channels=channels,
            grid=np.zeros((len(channels), height, width), dtype=np.float32),
            explored=np.zeros((height, width), dtype=bool),
            detail_explored=np.zeros((height, width), dtype=bool),
            cell_size=cell_size,
            n_objects=len(registry.objects),
        )

    @classmethod
    def for_world(cls, world: WorldGrid) -> "SemanticMap":
        return cls.empty(world.registry, world.height, world.width, world.cell_size)

    @property
    def shape(self) -> tuple[int, int]:
        return self.grid.shape[1:]

    @property
    def obstacle(self) -> np.ndarray:
        return self.grid[-1]

    def channel(self, category: str) -> np.ndarray:
        return self.grid[self.channels.index(category)]

    @property
    def landmark_slice(self) -> slice:
        return slice(self.n_objects, len(self.channels) - 1)

    @property
    def landmark_names(self) -> list[str]:
        return self.channels[self.landmark_slice]

    def copy(self) -> "SemanticMap":
        return SemanticMap(list(self.channels), self.grid.copy(), self.explored.copy(),
                           self.detail_explored.copy(), self.cell_size, self.n_objects)


def update_map(semantic_map: SemanticMap, obs: Observation, pose: AgentPose | None = None) -> SemanticMap:
    """Fold an observation into the map in place; latest observation wins on every observed cell."""
    grid = semantic_map.grid
    nch = grid.shape[0]
    flat_grid = grid.reshape(nch, -1)
    cells, detail = obs.cells, obs.detail
    semantic_map.explored.reshape(-1)[cells] = True
    semantic_map.detail_explored.reshape(-1)[detail] = True
    flat_grid[-1, cells] = obs.obstacle.astype(np.float32)
    lms = semantic_map.landmark_slice
    # basic slices are views, so these writes land in the map
    flat_grid[lms][:, cells] = 0.0
    flat_grid[: semantic_map.n_objects][:, detail] = 0.0
    w = semantic_map.shape[1]
    index = {name: i for i, name in enumerate(semantic_map.channels)}
    for inst in obs.instances:
        ch = index.get(inst.type)
        if ch is None:
            continue
        idx = inst.flat if inst.flat is not None else \
            np.fromiter((c[1] * w + c[0] for c in inst.footprint), dtype=np.int64, count=len(inst.footprint))
        flat_grid[ch, idx] = 1.0
        if lms.start <= ch < lms.stop:
            flat_grid[-1, idx] = 1.0
    return semantic_map
