"""Ground-truth grid environment.

Cells are addressed as ``(x, y)`` integer tuples; arrays are indexed ``[y, x]``.
Heading 0 points along +x, 90 along +y. With +y drawn downwards, RotateRight
adds 90 degrees. Camera pitch is positive when looking down.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
import random
import zlib
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .registry import PlacementRules, Registry, default_registry, default_rules
from .robot import DEFAULT_ROBOT, PhysicalConstraints

CELL_SIZE = 0.05
MOVE_STEP = 0.25
STEP_CELLS = 5
LATTICE_OFFSET = 2
ROTATE_STEP = 90
PITCH_STEP = 15.0
PITCH_LIMIT = 60.0
MAX_STEPS = 1000
MAX_FAILURES = 10
FORMAT_VERSION = 1

NAVIGATION_ACTIONS = ("RotateRight", "RotateLeft", "MoveAhead", "LookUp", "LookDown")
INTERACTION_ACTIONS = (
    "PickupObject",
    "PutObject",
    "OpenObject",
    "CloseObject",
    "ToggleObjectOn",
    "ToggleObjectOff",
    "SliceObject",
)
HEADING_VECTORS = {0: (1, 0), 90: (0, 1), 180: (-1, 0), 270: (0, -1)}

RUNNING = "running"
SUCCESS = "success"
STEP_LIMIT = "step_limit"
FAILURE_LIMIT = "failure_limit"

Cell = tuple[int, int]


class GenerationError(ValueError):
    pass


class EpisodeError(RuntimeError):
    """Acting on an episode that has already terminated."""


def derive_seed(seed: int, tag: str) -> int:
    # stable across processes, unlike hash()
    return (int(seed) * 0x9E3779B1 ^ zlib.crc32(tag.encode("utf-8"))) & 0xFFFFFFFF


@dataclass(frozen=True)
class Action:
    kind: str
    target: str | None = None

    def __post_init__(self) -> None:
        if self.kind in NAVIGATION_ACTIONS:
            if self.target is not None:
                raise ValueError(f"navigation action {self.kind} takes no target")
        elif self.kind in INTERACTION_ACTIONS:
            if not self.target:
                raise ValueError(f"interaction action {self.kind} needs a target instance id")
        else:
            raise ValueError(f"unknown action kind {self.kind!r}")

    @property
    def is_interaction(self) -> bool:
        return self.kind in INTERACTION_ACTIONS


@dataclass(frozen=True)
class AgentPose:
    x: float
    y: float
    heading: int = 0
    pitch: float = 0.0
    camera_height: float = DEFAULT_ROBOT.camera_height
    cell_size: float = CELL_SIZE

    def __post_init__(self) -> None:
        if self.heading not in HEADING_VECTORS:
            raise ValueError(f"heading must be one of {sorted(HEADING_VECTORS)}, got {self.heading}")
        if not -PITCH_LIMIT <= self.pitch <= PITCH_LIMIT:
            raise ValueError(f"pitch {self.pitch} outside [-{PITCH_LIMIT}, {PITCH_LIMIT}]")

    @classmethod
    def at_cell(cls, cell: Cell, heading: int = 0, pitch: float = 0.0,
                camera_height: float = DEFAULT_ROBOT.camera_height, cell_size: float = CELL_SIZE) -> "AgentPose":
        return cls((cell[0] + 0.5) * cell_size, (cell[1] + 0.5) * cell_size, heading, pitch, camera_height, cell_size)

    @property
    def cell(self) -> Cell:
        return (int(round(self.x / self.cell_size - 0.5)), int(round(self.y / self.cell_size - 0.5)))

    def moved(self, cell: Cell) -> "AgentPose":
        return AgentPose.at_cell(cell, self.heading, self.pitch, self.camera_height, self.cell_size)

    def turned(self, delta: int) -> "AgentPose":
        return AgentPose(self.x, self.y, (self.heading + delta) % 360, self.pitch, self.camera_height, self.cell_size)

    def tilted(self, pitch: float) -> "AgentPose":
        return AgentPose(self.x, self.y, self.heading, pitch, self.camera_height, self.cell_size)

    def as_list(self) -> list[float]:
        return [round(self.x, 6), round(self.y, 6), self.heading, self.pitch]


@dataclass
class LandmarkInstance:
    id: str
    type: str
    bbox: tuple[int, int, int, int]  # x0, y0, x1, y1 (exclusive)
    openable: bool = False
    is_open: bool = False
    toggled_on: bool = False

    def cells(self) -> list[Cell]:
        x0, y0, x1, y1 = self.bbox
        return [(x, y) for y in range(y0, y1) for x in range(x0, x1)]

    def contains(self, cell: Cell) -> bool:
        x0, y0, x1, y1 = self.bbox
        return x0 <= cell[0] < x1 and y0 <= cell[1] < y1


@dataclass
class ObjectInstance:
    id: str
    type: str
    cell: Cell | None
    parent: str | None = None  # landmark or movable receptacle it rests on / in
    hidden_in: str | None = None  # openable landmark concealing it while closed
    held: bool = False
    sliced: bool = False
    clean: bool = False
    hot: bool = False
    cold: bool = False

    def cells(self) -> list[Cell]:
        return [] if self.cell is None else [self.cell]


@dataclass
class GenerationConfig:
    width: int = 100
    height: int = 100
    cell_size: float = CELL_SIZE
    landmarks: list[str] | None = None  # explicit types, one instance each
    landmark_count: int = 6
    landmark_pool: list[str] | None = None
    object_count: int = 10
    object_pool: list[str] | None = None
    rules: PlacementRules = field(default_factory=default_rules)
    hide_probability: float = 0.0
    min_gap: int = 10
    pillars: int = 0
    pillar_size: int = 2
    trap_alignment: bool = False
    agent_radius: float = DEFAULT_ROBOT.agent_radius
    reach_distance: float = DEFAULT_ROBOT.reach_distance
    max_attempts: int = 200

    def to_dict(self) -> dict[str, Any]:
        doc = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "rules"}
        doc["rules"] = self.rules.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "GenerationConfig":
        doc = dict(doc)
        rules = doc.pop("rules", None)
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown generation parameters: {sorted(unknown)}")
        cfg = cls(**doc)
        if rules is not None:
            cfg.rules = rules if isinstance(rules, PlacementRules) else PlacementRules.from_dict(rules)
        return cfg


@dataclass
class WorldGrid:
    width: int
    height: int
    walls: np.ndarray  # opaque, non-landmark obstacle cells
    landmarks: list[LandmarkInstance]
    objects: list[ObjectInstance]
    rules: PlacementRules
    registry: Registry = field(default_factory=default_registry)
    cell_size: float = CELL_SIZE
    start_cell: Cell = (LATTICE_OFFSET, LATTICE_OFFSET)
    start_heading: int = 0
    seed: int | None = None
    held: str | None = None
    events: list[dict[str, Any]] = field(default_factory=list)
    _cache: dict[Any, Any] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        for lm in self.landmarks:
            x0, y0, x1, y1 = lm.bbox
            if not (0 <= x0 < x1 <= self.width and 0 <= y0 < y1 <= self.height):
                raise ValueError(f"landmark {lm.id} footprint out of bounds")
        for ob in self.objects:
            if ob.cell is not None and not self.in_bounds(ob.cell):
                raise ValueError(f"object {ob.id} out of bounds")

    # -- geometry -----------------------------------------------------------

    def in_bounds(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.width and 0 <= cell[1] < self.height

    @property
    def landmark_index(self) -> np.ndarray:
        idx = self._cache.get("landmark_index")
        if idx is None:
            idx = np.full((self.height, self.width), -1, dtype=np.int32)
            for i, lm in enumerate(self.landmarks):
                x0, y0, x1, y1 = lm.bbox
                idx[y0:y1, x0:x1] = i
            self._cache["landmark_index"] = idx
        return idx

    @property
    def obstacles(self) -> np.ndarray:
        obs = self._cache.get("obstacles")
        if obs is None:
            obs = self.walls | (self.landmark_index >= 0)
            self._cache["obstacles"] = obs
        return obs

    def true_clearance(self, radius: float) -> np.ndarray:
        """Cells whose center has no obstacle center within ``radius``: where the agent may stand."""
        key = f"clear:{radius:.6f}"
        free = self._cache.get(key)
        if free is None:
            from .navigation import inflate

            free = ~inflate(self.obstacles, radius, self.cell_size).blocked
            self._cache[key] = free
        return free

    def start_pose(self, robot: PhysicalConstraints = DEFAULT_ROBOT) -> AgentPose:
        return AgentPose.at_cell(self.start_cell, self.start_heading, 0.0, robot.camera_height, self.cell_size)

    # -- instances ----------------------------------------------------------

    def instance(self, instance_id: str) -> LandmarkInstance | ObjectInstance | None:
        table = self._cache.get("ids")
        if table is None:
            table = {i.id: i for i in [*self.landmarks, *self.objects]}
            self._cache["ids"] = table
        return table.get(instance_id)

    def landmark_at(self, cell: Cell) -> LandmarkInstance | None:
        i = int(self.landmark_index[cell[1], cell[0]])
        return self.landmarks[i] if i >= 0 else None

    def children(self, parent_id: str) -> list[ObjectInstance]:
        return [o for o in self.objects if o.parent == parent_id]

    def descendants(self, parent_id: str) -> list[ObjectInstance]:
        out, frontier = [], [parent_id]
        while frontier:
            pid = frontier.pop()
            for o in self.objects:
                if o.parent == pid:
                    out.append(o)
                    frontier.append(o.id)
        return out

    def is_concealed(self, ob: ObjectInstance) -> bool:
        if ob.held or ob.cell is None:
            return True
        if ob.hidden_in is None:
            return False
        container = self.instance(ob.hidden_in)
        return not (isinstance(container, LandmarkInstance) and container.is_open)

    def container_landmark(self, ob: ObjectInstance) -> LandmarkInstance | None:
        node: Any = ob
        while node is not None and isinstance(node, ObjectInstance):
            node = self.instance(node.parent) if node.parent else None
        return node

    def copy(self) -> "WorldGrid":
        clone = copy.deepcopy(self)
        # geometry caches depend only on static walls and landmark boxes
        clone._cache = {k: v for k, v in self._cache.items() if k != "ids"}
        return clone

    # -- serialization ------------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        wall_rows = ["".join("#" if v else "." for v in row) for row in self.walls]
        return {
            "format": "eifbench.world",
            "version": FORMAT_VERSION,
            "seed": self.seed,
            "width": self.width,
            "height": self.height,
            "cell_size": self.cell_size,
            "start": {"cell": list(self.start_cell), "heading": self.start_heading},
            "walls": wall_rows,
            "landmarks": [
                {"id": lm.id, "type": lm.type, "bbox": list(lm.bbox), "openable": lm.openable,
                 "open": lm.is_open, "toggled_on": lm.toggled_on}
                for lm in self.landmarks
            ],
            "objects": [
                {"id": o.id, "type": o.type, "cell": None if o.cell is None else list(o.cell),
                 "parent": o.parent, "hidden_in": o.hidden_in, "held": o.held, "sliced": o.sliced,
                 "clean": o.clean, "hot": o.hot, "cold": o.cold}
                for o in self.objects
            ],
            "held": self.held,
            "rules": self.rules.to_dict(),
            "registry": self.registry.to_dict(),
            "events": self.events,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "WorldGrid":
        if doc.get("format") != "eifbench.world":
            raise ValueError("not an eifbench world document")
        if int(doc.get("version", 0)) != FORMAT_VERSION:
            raise ValueError(f"unsupported world format version {doc.get('version')}")
        walls = np.array([[ch == "#" for ch in row] for row in doc["walls"]], dtype=bool)
        landmarks = [
            LandmarkInstance(d["id"], d["type"], tuple(d["bbox"]), d["openable"], d["open"], d["toggled_on"])
            for d in doc["landmarks"]
        ]
        objects = [
            ObjectInstance(d["id"], d["type"], None if d["cell"] is None else tuple(d["cell"]), d["parent"],
                           d["hidden_in"], d["held"], d["sliced"], d["clean"], d["hot"], d["cold"])
            for d in doc["objects"]
        ]
        return cls(
            width=int(doc["width"]),
            height=int(doc["height"]),
            walls=walls,
            landmarks=landmarks,
            objects=objects,
            rules=PlacementRules.from_dict(doc["rules"]),
            registry=Registry.from_dict(doc["registry"]),
            cell_size=float(doc["cell_size"]),
            start_cell=tuple(doc["start"]["cell"]),
            start_heading=int(doc["start"]["heading"]),
            seed=doc.get("seed"),
            held=doc.get("held"),
            events=list(doc.get("events", [])),
        )

    @classmethod
    def loads(cls, text: str) -> "WorldGrid":
        return cls.from_dict(json.loads(text))


# -- generation -------------------------------------------------------------


def sample_landmark_type(rng: random.Random, rules: PlacementRules, target: str,
                         present: Iterable[str] | None = None) -> str | None:
    """Draw a landmark type for ``target`` by placement weight, limited to ``present`` types."""
    row = rules.allowed(target)
    if present is not None:
        keep = set(present)
        row = {l: w for l, w in row.items() if l in keep}
    if not row:
        return None
    types = sorted(row)
    return rng.choices(types, weights=[row[t] for t in types], k=1)[0]


def _gap_ok(box: tuple[int, int, int, int], placed: Sequence[tuple[int, int, int, int]], gap: int) -> bool:
    x0, y0, x1, y1 = box
    for a0, b0, a1, b1 in placed:
        dx = max(a0 - x1 + 1, x0 - a1 + 1, 0)
        dy = max(b0 - y1 + 1, y0 - b1 + 1, 0)
        if max(dx, dy) <= gap:
            return False
    return True


def _place_boxes(rng: random.Random, cfg: GenerationConfig, sizes: list[tuple[int, int]],
                 label: list[str]) -> list[tuple[int, int, int, int]] | None:
    placed: list[tuple[int, int, int, int]] = []
    lo = 1 + cfg.min_gap
    for (w, h), name in zip(sizes, label):
        for _ in range(cfg.max_attempts):
            if rng.random() < 0.5:
                w, h = h, w
            hi_x = cfg.width - 1 - cfg.min_gap - w
            hi_y = cfg.height - 1 - cfg.min_gap - h
            if hi_x < lo or hi_y < lo:
                continue
            x0 = rng.randint(lo, hi_x)
            y0 = rng.randint(lo, hi_y)
            if cfg.trap_alignment:
                # leading edges sit 3 cells past a lattice line: clear at 0.10 m inflation, not at 0.20 m
                x0 -= (x0 - LATTICE_OFFSET - 3) % STEP_CELLS
                y0 -= (y0 - LATTICE_OFFSET - 3) % STEP_CELLS
                if x0 < lo or y0 < lo:
                    continue
            box = (x0, y0, x0 + w, y0 + h)
            if _gap_ok(box, placed, cfg.min_gap):
                placed.append(box)
                break
        else:
            return None
    return placed


def generate_world(seed: int, config: GenerationConfig | None = None, registry: Registry | None = None) -> WorldGrid:
    cfg = config or GenerationConfig()
    reg = registry or default_registry()
    cfg.rules.validate(reg)
    if cfg.width < 10 or cfg.height < 10:
        raise GenerationError("room must be at least 10x10 cells")
    rng = random.Random(derive_seed(seed, "layout"))

    if cfg.landmarks is not None:
        types = list(cfg.landmarks)
    else:
        pool = cfg.landmark_pool or sorted({l for row in cfg.rules.weights.values() for l in row})
        if cfg.landmark_count <= len(pool):
            types = rng.sample(pool, cfg.landmark_count)
        else:
            types = [rng.choice(pool) for _ in range(cfg.landmark_count)]
    for t in types:
        if t not in reg.landmarks:
            raise GenerationError(f"unregistered landmark type {t!r}")

    walls = np.zeros((cfg.height, cfg.width), dtype=bool)
    walls[0, :] = walls[-1, :] = True
    walls[:, 0] = walls[:, -1] = True

    from .navigation import lattice_reachable

    sizes = [(reg.landmarks[t].size[1], reg.landmarks[t].size[0]) for t in types]
    sizes += [(cfg.pillar_size, cfg.pillar_size)] * cfg.pillars
    labels = types + ["pillar"] * cfg.pillars
    area = sum((w + cfg.min_gap) * (h + cfg.min_gap) for w, h in sizes)
    if area > (cfg.width - 2) * (cfg.height - 2):
        raise GenerationError(
            f"infeasible config: {len(types)} landmarks and {cfg.pillars} pillars need ~{area} cells "
            f"with min_gap={cfg.min_gap}, room interior has {(cfg.width - 2) * (cfg.height - 2)}")

    for _attempt in range(cfg.max_attempts):
        boxes = _place_boxes(rng, cfg, sizes, labels)
        if boxes is None:
            continue
        landmarks = []
        counts: dict[str, int] = {}
        for t, box in zip(types, boxes):
            k = counts.get(t, 0)
            counts[t] = k + 1
            landmarks.append(LandmarkInstance(f"{t}_{k}", t, box, reg.landmarks[t].openable))
        pillar_walls = walls.copy()
        for x0, y0, x1, y1 in boxes[len(types):]:
            pillar_walls[y0:y1, x0:x1] = True
        world = WorldGrid(cfg.width, cfg.height, pillar_walls, landmarks, [], cfg.rules, reg, cfg.cell_size, seed=seed)
        free = world.true_clearance(cfg.agent_radius)
        lattice = np.zeros_like(free)
        lattice[LATTICE_OFFSET::STEP_CELLS, LATTICE_OFFSET::STEP_CELLS] = True
        candidates = [(int(x), int(y)) for y, x in zip(*np.nonzero(free & lattice))]
        if not candidates:
            continue
        start = rng.choice(candidates)
        reach = lattice_reachable(~free, start, STEP_CELLS)
        if not _all_landmarks_reachable(world, reach, cfg.reach_distance):
            continue
        world.start_cell = start
        world.start_heading = rng.choice(sorted(HEADING_VECTORS))
        _place_objects(world, cfg, random.Random(derive_seed(seed, "objects")))
        return world
    raise GenerationError(
        f"infeasible config: could not place {len(types)} landmarks ({', '.join(types)}) "
        f"in a {cfg.width}x{cfg.height} room with min_gap={cfg.min_gap} and every landmark "
        f"reachable within {cfg.reach_distance} m after {cfg.max_attempts} attempts")


def _all_landmarks_reachable(world: WorldGrid, reach: set[Cell] | dict[Cell, int], reach_m: float) -> bool:
    limit = (reach_m / world.cell_size) ** 2
    pts = np.array(list(reach), dtype=float) if reach else np.zeros((0, 2))
    for lm in world.landmarks:
        x0, y0, x1, y1 = lm.bbox
        if not len(pts):
            return False
        dx = np.maximum(np.maximum(x0 - pts[:, 0], pts[:, 0] - (x1 - 1)), 0)
        dy = np.maximum(np.maximum(y0 - pts[:, 1], pts[:, 1] - (y1 - 1)), 0)
        if not np.any(dx * dx + dy * dy <= limit):
            return False
    return True


def _place_objects(world: WorldGrid, cfg: GenerationConfig, rng: random.Random) -> None:
    pool = cfg.object_pool or sorted(cfg.rules.weights)
    by_type: dict[str, list[LandmarkInstance]] = {}
    for lm in world.landmarks:
        if world.registry.landmarks[lm.type].receptacle:
            by_type.setdefault(lm.type, []).append(lm)
    placeable = [t for t in pool if any(l in by_type for l in cfg.rules.allowed(t))]
    occupied: set[Cell] = set()
    counts: dict[str, int] = {}
    for _ in range(cfg.object_count):
        if not placeable:
            break
        otype = rng.choice(placeable)
        ltype = sample_landmark_type(rng, cfg.rules, otype, by_type)
        lm = rng.choice(by_type[ltype])
        cells = [c for c in lm.cells() if c not in occupied] or lm.cells()
        cell = rng.choice(cells)
        occupied.add(cell)
        hidden = None
        if ltype in cfg.rules.hideable and rng.random() < cfg.hide_probability:
            hidden = lm.id
        k = counts.get(otype, 0)
        counts[otype] = k + 1
        world.objects.append(ObjectInstance(f"{otype}_{k}", otype, cell, parent=lm.id, hidden_in=hidden))
    world._cache.pop("ids", None)


# -- episode ----------------------------------------------------------------


@dataclass
class EpisodeState:
    plan: Any = None  # language.SubtaskPlan
    steps: int = 0
    failures: int = 0
    collisions: int = 0
    goal_flags: list[bool] = field(default_factory=list)
    status: str = RUNNING
    trace: list[dict[str, Any]] = field(default_factory=list)
    max_steps: int = MAX_STEPS
    max_failures: int = MAX_FAILURES

    def __post_init__(self) -> None:
        if self.plan is not None and not self.goal_flags:
            self.goal_flags = [False] * len(self.plan)

    @property
    def running(self) -> bool:
        return self.status == RUNNING

    def trace_hash(self) -> str:
        return hashlib.sha256(self.trace_jsonl().encode()).hexdigest()

    def trace_jsonl(self) -> str:
        """Golden trace: one (step, action, outcome, pose) record per line."""
        return "".join(json.dumps(rec, sort_keys=True, separators=(",", ":")) + "\n" for rec in self.trace)


def load_trace(text: str) -> list[dict[str, Any]]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


@dataclass
class StepResult:
    pose: AgentPose
    ok: bool
    reason: str = ""

    @property
    def outcome(self) -> str:
        return "ok" if self.ok else "failed"


def _horizontal_distance(world: WorldGrid, pose: AgentPose, inst: LandmarkInstance | ObjectInstance) -> float:
    cells = inst.cells()
    if not cells:
        return math.inf
    px, py = pose.x / world.cell_size - 0.5, pose.y / world.cell_size - 0.5
    if isinstance(inst, LandmarkInstance):
        x0, y0, x1, y1 = inst.bbox
        dx = max(x0 - px, px - (x1 - 1), 0.0)
        dy = max(y0 - py, py - (y1 - 1), 0.0)
    else:
        dx, dy = abs(cells[0][0] - px), abs(cells[0][1] - py)
    return math.hypot(dx, dy) * world.cell_size


def interaction_distance(world: WorldGrid, pose: AgentPose, instance_id: str) -> float:
    """Horizontal distance from the agent center to the nearest footprint cell center of an instance."""
    inst = world.instance(instance_id)
    if inst is None:
        raise KeyError(instance_id)
    return _horizontal_distance(world, pose, inst)


def step(world: WorldGrid, pose: AgentPose, state: EpisodeState, action: Action,
         robot: PhysicalConstraints = DEFAULT_ROBOT, sensor: Any = None) -> StepResult:
    """Execute one action. ``world`` and ``state`` are updated in place; the new pose is returned."""
    if not state.running:
        raise EpisodeError(f"episode already terminated ({state.status})")
    state.steps += 1
    if action.kind in NAVIGATION_ACTIONS:
        result = _navigate(world, pose, action, robot)
    else:
        result = _interact(world, pose, action, robot, sensor)
        if result.ok:
            world.events[-1]["step"] = state.steps
    if not result.ok:
        state.failures += 1
        if result.reason == "collision":
            state.collisions += 1
    state.trace.append({
        "step": state.steps,
        "action": action.kind,
        "target": action.target,
        "outcome": result.outcome,
        "reason": result.reason,
        "pose": result.pose.as_list(),
    })
    if state.plan is not None and result.ok and action.is_interaction:
        state.goal_flags = check_goal_conditions(world, state.plan)
    if state.plan is not None and state.goal_flags and all(state.goal_flags):
        state.status = SUCCESS
    elif state.failures >= state.max_failures:
        state.status = FAILURE_LIMIT
    elif state.steps >= state.max_steps:
        state.status = STEP_LIMIT
    return result


def swept_cells(cell: Cell, heading: int, n: int = STEP_CELLS) -> list[Cell]:
    dx, dy = HEADING_VECTORS[heading]
    return [(cell[0] + dx * k, cell[1] + dy * k) for k in range(1, n + 1)]


def _navigate(world: WorldGrid, pose: AgentPose, action: Action, robot: PhysicalConstraints) -> StepResult:
    kind = action.kind
    if kind == "RotateRight":
        return StepResult(pose.turned(ROTATE_STEP), True)
    if kind == "RotateLeft":
        return StepResult(pose.turned(-ROTATE_STEP), True)
    if kind in ("LookUp", "LookDown"):
        pitch = pose.pitch + (PITCH_STEP if kind == "LookDown" else -PITCH_STEP)
        if abs(pitch) > PITCH_LIMIT:
            return StepResult(pose, False, "pitch_limit")
        return StepResult(pose.tilted(pitch), True)
    free = world.true_clearance(robot.agent_radius)
    path = swept_cells(pose.cell, pose.heading)
    for c in path:
        if not world.in_bounds(c) or not free[c[1], c[0]]:
            return StepResult(pose, False, "collision")
    return StepResult(pose.moved(path[-1]), True)


def _visible_ids(world: WorldGrid, pose: AgentPose, sensor: Any) -> set[str]:
    from .perception import observe

    return {inst.id for inst in observe(world, pose, sensor).instances}


def _interact(world: WorldGrid, pose: AgentPose, action: Action, robot: PhysicalConstraints, sensor: Any) -> StepResult:
    target = world.instance(action.target or "")
    if target is None:
        return StepResult(pose, False, "unknown_target")
    if action.target not in _visible_ids(world, pose, sensor):
        return StepResult(pose, False, "not_visible")
    dist = _horizontal_distance(world, pose, target)
    if dist > robot.reach_distance + 1e-9:
        return StepResult(pose, False, "out_of_reach")
    reg = world.registry
    held = world.instance(world.held) if world.held else None
    kind = action.kind
    event: dict[str, Any] = {"action": kind, "target_id": target.id, "target_type": target.type,
                             "object_id": None, "object_type": None, "source_type": None}

    if kind == "PickupObject":
        if not isinstance(target, ObjectInstance):
            return StepResult(pose, False, "not_pickupable")
        if held is not None:
            return StepResult(pose, False, "hands_full")
        source = world.container_landmark(target)
        parent = world.instance(target.parent) if target.parent else None
        event.update(object_id=target.id, object_type=target.type,
                     source_type=parent.type if parent is not None else None,
                     source_landmark=source.type if source is not None else None)
        target.held, target.cell, target.parent, target.hidden_in = True, None, None, None
        for child in world.descendants(target.id):
            child.cell = None
            child.hidden_in = None
        world.held = target.id
    elif kind == "PutObject":
        if held is None:
            return StepResult(pose, False, "hands_empty")
        if isinstance(target, LandmarkInstance):
            lt = reg.landmarks[target.type]
            if not lt.receptacle:
                return StepResult(pose, False, "not_receptacle")
            if lt.openable and not target.is_open:
                return StepResult(pose, False, "container_closed")
            px, py = pose.cell
            taken = {o.cell for o in world.objects if o.cell is not None}
            spots = [c for c in target.cells() if c not in taken] or target.cells()
            cell = min(spots, key=lambda c: ((c[0] - px) ** 2 + (c[1] - py) ** 2, c[1], c[0]))
            hidden = target.id if lt.openable else None
        else:
            if not reg.objects[target.type].movable_receptacle or target.id == held.id or target.cell is None:
                return StepResult(pose, False, "not_receptacle")
            cell = target.cell
            hidden = target.hidden_in
        held.held = False
        held.cell, held.parent, held.hidden_in = cell, target.id, hidden
        for child in world.descendants(held.id):
            child.cell, child.hidden_in = cell, hidden
        world.held = None
        moved = [held, *world.descendants(held.id)]
        if target.type == "Fridge":
            for o in moved:
                o.cold = True
        if isinstance(target, LandmarkInstance) and target.toggled_on:
            _apply_toggle_effects(target, moved)
        event.update(object_id=held.id, object_type=held.type)
    elif kind in ("OpenObject", "CloseObject"):
        if not isinstance(target, LandmarkInstance) or not target.openable:
            return StepResult(pose, False, "not_openable")
        if kind == "OpenObject":
            if target.is_open:
                return StepResult(pose, False, "already_open")
            if dist < reg.landmarks[target.type].open_clearance - 1e-9:
                return StepResult(pose, False, "door_blocked")
            target.is_open = True
        else:
            if not target.is_open:
                return StepResult(pose, False, "already_closed")
            target.is_open = False
    elif kind in ("ToggleObjectOn", "ToggleObjectOff"):
        if not isinstance(target, LandmarkInstance) or not reg.landmarks[target.type].toggleable:
            return StepResult(pose, False, "not_toggleable")
        on = kind == "ToggleObjectOn"
        if target.toggled_on == on:
            return StepResult(pose, False, "already_in_state")
        target.toggled_on = on
        if on:
            _apply_toggle_effects(target, [o for o in world.objects if world.container_landmark(o) is target])
    elif kind == "SliceObject":
        if not isinstance(target, ObjectInstance) or not reg.objects[target.type].sliceable or target.sliced:
            return StepResult(pose, False, "not_sliceable")
        if held is None or not reg.objects[held.type].cuts:
            return StepResult(pose, False, "no_knife")
        target.sliced = True
        event.update(object_id=target.id, object_type=target.type)
    world.events.append(event)
    return StepResult(pose, True)


def _apply_toggle_effects(landmark: LandmarkInstance, objects: Iterable[ObjectInstance]) -> None:
    for o in objects:
        if landmark.type == "Microwave":
            o.hot = True
        elif landmark.type == "Sink":
            o.clean = True


def check_goal_conditions(world: WorldGrid, plan: Any) -> list[bool]:
    """Match the plan, in order, against the world's record of successful interactions.

    A pickup taken off the plan's final destination receptacle never counts, so
    repeated pick-and-place subtasks need distinct objects.
    """
    pairs = list(plan.pairs)
    flags = [False] * len(pairs)
    final_recep = next((obj for obj, act in reversed(pairs) if act == "PutObject"), None)
    events = world.events
    k = 0
    for i, (category, act) in enumerate(pairs):
        while k < len(events):
            ev = events[k]
            k += 1
            if ev["action"] != act:
                continue
            kind = ev["object_type"] if act == "PickupObject" else ev["target_type"]
            if kind != category:
                continue
            if act == "PickupObject" and ev.get("source_landmark") == final_recep \
                    and _follows_final_put(pairs, i, final_recep):
                continue
            flags[i] = True
            break
        if not flags[i]:
            break
    return flags


def _follows_final_put(pairs: list[tuple[str, str]], i: int, final_recep: str) -> bool:
    return any(obj == final_recep and act == "PutObject" for obj, act in pairs[:i])


class Episode:
    """Convenience bundle of world, pose and episode state."""

    def __init__(self, world: WorldGrid, plan: Any = None, robot: PhysicalConstraints = DEFAULT_ROBOT,
                 sensor: Any = None, pose: AgentPose | None = None,
                 max_steps: int = MAX_STEPS, max_failures: int = MAX_FAILURES):
        self.world = world
        self.robot = robot
        self.sensor = sensor
        self.pose = pose or world.start_pose(robot)
        self.state = EpisodeState(plan=plan, max_steps=max_steps, max_failures=max_failures)

    def step(self, action: Action) -> StepResult:
        result = step(self.world, self.pose, self.state, action, self.robot, self.sensor)
        self.pose = result.pose
        return result

    def observe(self):
        from .perception import observe

        return observe(self.world, self.pose, self.sensor)
