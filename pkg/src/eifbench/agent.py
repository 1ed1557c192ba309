"""The modular agent: map, select a planner, adjust locally or navigate, then act."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import controller as ctl
from .controller import aim_pitch, local_adjust, relative_position, select_planner
from .language import SubtaskPlan, current_index
from .navigation import InflatedGrid, PathError, disk_offsets, inflate, lattice_reachable, shortest_path
from .perception import DEFAULT_SENSOR, Observation, SemanticMap, SensorConfig, observe, update_map
from .robot import DEFAULT_ROBOT, PhysicalConstraints
from .semsearch import CollocationMatrix, next_search_goal, random_goal, search_prior
from .world import (FAILURE_LIMIT, HEADING_VECTORS, MOVE_STEP, PITCH_STEP, STEP_CELLS, SUCCESS, Action,
                    EpisodeState, WorldGrid, derive_seed, step, swept_cells)

Cell = tuple[int, int]

GOAL_NOT_FOUND = "goal_not_found"
INTERACTION_FAILURE = "interaction_failure"
COLLISION = "collision"
CLOSED_CONFINEMENT = "closed_confinement"
LANGUAGE = "language"
OTHER = "other"
FAILURE_MODES = (GOAL_NOT_FOUND, INTERACTION_FAILURE, COLLISION, CLOSED_CONFINEMENT, LANGUAGE, OTHER)


@dataclass(frozen=True)
class AgentConfig:
    inflation: float = 0.20  # obstacle enlargement used for planning, meters
    corrected_reach: bool = True
    use_offsets: bool = True
    search: str = "semantic"  # "semantic" | "random"
    initial_scan: bool = True
    open_containers: bool = True  # open closed openables while searching
    max_repositions: int = 3
    view_distance: float = 1.0  # search viewpoints sit this close to the goal cell, meters

    def to_dict(self) -> dict[str, Any]:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class EpisodeOutcome:
    state: EpisodeState
    path_length: float  # meters actually driven
    first_sighting: int | None  # step at which the first target category was first seen
    failure_mode: str | None
    visited: list[Cell]
    semantic_map: SemanticMap
    repositions: int = 0
    interaction_failures: int = 0

    @property
    def success(self) -> bool:
        return self.state.status == SUCCESS


_BAND: dict[int, list[Cell]] = {}


def _band_offsets(heading: int, radius_cells: float) -> list[Cell]:
    key = heading * 1000 + int(round(radius_cells * 10))
    out = _BAND.get(key)
    if out is None:
        disk = disk_offsets(radius_cells)
        cells = {(sx + dx, sy + dy) for sx, sy in swept_cells((0, 0), heading) for dx, dy in disk}
        out = sorted(cells, key=lambda c: (c[1], c[0]))
        _BAND[key] = out
    return out


@dataclass
class _Nav:
    key: Any
    target: Cell
    actions: list[str]
    cells: list[Cell]  # lattice cells visited after each MoveAhead


class Agent:
    def __init__(self, world: WorldGrid, plan: SubtaskPlan, colloc: CollocationMatrix | None,
                 robot: PhysicalConstraints = DEFAULT_ROBOT, sensor: SensorConfig = DEFAULT_SENSOR,
                 config: AgentConfig = AgentConfig(), seed: int = 0,
                 max_steps: int | None = None, max_failures: int | None = None):
        self.world = world
        self.plan = plan
        self.colloc = colloc
        self.robot = robot
        # the controller's view of the robot; the world always enforces the real one
        self.belief_robot = robot if config.use_offsets else robot.without_offsets()
        self.sensor = sensor
        self.cfg = config
        self.rng = random.Random(derive_seed(seed, "search"))
        kwargs = {}
        if max_steps is not None:
            kwargs["max_steps"] = max_steps
        if max_failures is not None:
            kwargs["max_failures"] = max_failures
        self.state = EpisodeState(plan=plan, **kwargs)
        self.pose = world.start_pose(robot)
        self.map = SemanticMap.for_world(world)
        self.grid: InflatedGrid | None = None
        self.forbidden: set[tuple[Cell, int]] = set()  # moves that collided
        self.gave_up = np.zeros((world.height, world.width), dtype=bool)
        self.nav: _Nav | None = None
        self.search_goal: Cell | None = None
        self.path_length = 0.0
        self.first_sighting: int | None = None
        self.visited: list[Cell] = [self.pose.cell]
        self.repositions = 0
        self.interaction_failures = 0
        self._aimed: Any = None
        self._reposition_count: dict[Any, int] = {}
        self._lookup_visits: dict[Cell, int] = {}
        self._offset_bump: dict[str, float] = {}
        self._bad_ids: set[str] = set()
        self._opened: set[str] = set()
        self._peeked: set[tuple[Cell, int]] = set()
        self._queue: list[Action] = []
        self.obs = self._sense()

    # -- sensing and bookkeeping ---------------------------------------------

    def _sense(self) -> Observation:
        obs = observe(self.world, self.pose, self.sensor)
        before = self.map.grid[-1].reshape(-1)[obs.cells].copy()
        update_map(self.map, obs, self.pose)
        after = self.map.grid[-1].reshape(-1)[obs.cells]
        if self.grid is None or not np.array_equal(before, after):
            self.grid = None
        if self.first_sighting is None:
            want = self.plan.pairs[0][0]
            if any(i.type == want for i in obs.instances):
                self.first_sighting = self.state.steps
        self.obs = obs
        return obs

    def _planning_grid(self) -> InflatedGrid:
        if self.grid is None:
            self.grid = self._inflate(self.cfg.inflation)
        return self.grid

    def _inflate(self, radius: float) -> InflatedGrid:
        grid = inflate(self.map.obstacle > 0, radius, self.world.cell_size, source_id=f"step{self.state.steps}")
        for cell, heading in self.forbidden:
            grid.forbid(cell, heading, STEP_CELLS)
        return grid

    def _do(self, action: Action) -> bool:
        if not self.state.running:
            return False
        res = step(self.world, self.pose, self.state, action, self.robot, self.sensor)
        if res.ok and action.kind == "MoveAhead":
            self.path_length += MOVE_STEP
            self.visited.append(res.pose.cell)
        if not res.ok:
            if res.reason == "collision":
                # remember the failed move so the next plan avoids it
                self.forbidden.add((self.pose.cell, self.pose.heading))
                self.grid = None
                self.nav = None
            elif action.is_interaction:
                self.interaction_failures += 1
        self.pose = res.pose
        self._last_reason = res.reason
        if self.state.running:
            self._sense()
        return res.ok

    # -- main loop --------------------------------------------------------------

    def run(self) -> EpisodeOutcome:
        if self.cfg.initial_scan:
            for _ in range(3):
                if not self.state.running:
                    break
                self._do(Action("RotateRight"))
        while self.state.running:
            self._tick()
        return EpisodeOutcome(self.state, self.path_length, self.first_sighting, self._failure_mode(),
                              self.visited, self.map, self.repositions, self.interaction_failures)

    def _tick(self) -> None:
        if self._queue:
            self._do(self._queue.pop(0))
            return
        idx = current_index(_flags_plan(self.plan, self.state.goal_flags))
        if idx is None:  # pragma: no cover - success ends the loop first
            return
        category, action = self.plan.pairs[idx]
        nav = self.nav
        if nav is not None and nav.key[0] == "adj" and nav.key[2] == idx:
            # a reposition in progress commits even if the target drops out of view on the way
            self._continue()
            return
        exclude, ignore = self._exclusions(idx)
        choice = select_planner(self.obs, self.map, (category, action), exclude=exclude, ignore=ignore)
        if choice.kind == ctl.LOCAL_ADJUSTMENT:
            self._local(choice.instance, action, idx)
        elif choice.kind == ctl.MAP_LOOKUP:
            self._lookup(choice.goal, category, action)
        else:
            self._search(category, action)

    def _exclusions(self, idx: int) -> tuple[set[str], np.ndarray | None]:
        pairs = self.plan.pairs
        category, action = pairs[idx]
        bad = set(self._bad_ids)
        ignore = self.gave_up.copy() if self.gave_up.any() else None
        if action == "PickupObject":
            final = next((o for o, a in reversed(pairs) if a == "PutObject"), None)
            if final is not None and final in self.map.channels and \
                    any(o == final and a == "PutObject" for o, a in pairs[:idx]):
                on_final = self.map.channel(final) > 0
                ignore = on_final if ignore is None else (ignore | on_final)
                w = self.world.width
                flat = on_final.reshape(-1)
                for inst in self.obs.instances:
                    if inst.type == category and any(flat[c[1] * w + c[0]] for c in inst.footprint):
                        bad.add(inst.id)
        return bad, ignore

    # -- local adjustment ------------------------------------------------------

    def _surface_height(self, inst) -> float:
        reg = self.world.registry
        if inst.type in reg.landmarks:
            return reg.landmarks[inst.type].surface_height
        lm = self.world.landmark_at(inst.footprint[0])
        return reg.landmarks[lm.type].surface_height if lm is not None else 0.0

    def _local(self, inst, action: str, idx: int) -> None:
        nav = self.nav
        if nav is not None and nav.key[0] == "adj" and nav.key[1] == inst.id and nav.key[2] == idx:
            self._continue()
            return
        robot = self.belief_robot
        corrected = self.cfg.corrected_reach
        est = relative_position(inst, self.pose, robot, corrected)
        aim_key = (inst.id, self.pose.cell, idx)
        if self._aimed != aim_key:
            self._aimed = aim_key
            want = aim_pitch(est, self._surface_height(inst), robot)
            n = int(round((want - self.pose.pitch) / PITCH_STEP))
            kind = "LookDown" if n > 0 else "LookUp"
            self._queue.extend(Action(kind) for _ in range(abs(n)))
            if self._queue:
                self._do(self._queue.pop(0))
                return
        # put/open on a closed container: open first
        if action == "PutObject" and inst.type in self.world.registry.landmarks:
            lt = self.world.registry.landmarks[inst.type]
            if lt.openable and not self._believed_open(inst.id):
                action = "OpenObject"
        adj = local_adjust(inst, self.pose, robot, action, corrected)
        bump = self._offset_bump.get(inst.id, 0.0)
        ready = adj.ready and (bump == 0.0 or adj.distance >= bump - 1e-9)
        attempts = self._reposition_count.get((inst.id, idx), 0)
        if ready or attempts >= self.cfg.max_repositions:
            ok = self._do(Action(action, inst.id))
            if ok:
                if action == "OpenObject":
                    self._opened.add(inst.id)
                elif action == "CloseObject":
                    self._opened.discard(inst.id)
                return
            reason = self._last_reason
            if reason == "door_blocked":
                # the door needs more room than we left; back off before retrying
                self._offset_bump[inst.id] = max(bump, adj.distance) + MOVE_STEP
                self._reposition(inst, action, idx, extra_lo=self._offset_bump[inst.id])
            elif reason == "already_open":
                self._opened.add(inst.id)
            elif reason == "container_closed":
                self._opened.discard(inst.id)
            elif reason in ("out_of_reach", "not_visible"):
                self._reposition(inst, action, idx)
            else:
                self._bad_ids.add(inst.id)
            return
        self._reposition(inst, action, idx)

    def _believed_open(self, landmark_id: str) -> bool:
        return landmark_id in self._opened

    def _reposition(self, inst, action: str, idx: int, extra_lo: float = 0.0) -> None:
        key = (inst.id, idx)
        self._reposition_count[key] = self._reposition_count.get(key, 0) + 1
        self.repositions += 1
        lo = max(self.belief_robot.offset(action), extra_lo, self._offset_bump.get(inst.id, 0.0))
        hi = self._reach_for(inst.type)
        target = self._pick_standoff(inst.footprint, lo, hi, avoid_current=True)
        if target is None:
            self._bad_ids.add(inst.id)
            return
        self._travel(("adj", inst.id, idx, target), target, face=inst.footprint)

    def _reach_for(self, category: str) -> float:
        hi = self.belief_robot.reach_distance
        if category in self.world.registry.objects:
            hi = min(hi, self.sensor.object_range)
        return hi

    # -- map lookup and search -------------------------------------------------

    def _lookup(self, goal: Cell, category: str, action: str) -> None:
        if self.nav is None or self.nav.key[0] != "map" or self.nav.key[1] != goal:
            visits = self._lookup_visits.get(goal, 0)
            if visits >= 2:
                self.gave_up[goal[1], goal[0]] = True
                return
            self._lookup_visits[goal] = visits + 1
            lo = max(self.belief_robot.offset(action), self._offset_bump.get(category, 0.0))
            target = self._pick_standoff([goal], lo, self._reach_for(category))
            if target is None:
                self.gave_up[goal[1], goal[0]] = True
                return
            self._travel(("map", goal, target), target, face=[goal])
            return
        self._continue()

    def _search(self, category: str, action: str) -> None:
        g = self.search_goal
        explored = self.map.detail_explored
        if g is not None and (explored[g[1], g[0]] or self.gave_up[g[1], g[0]]):
            g = None
        if g is None:
            g = self._new_search_goal(category)
            if g is None:
                # nothing left to look at: wander to refresh
                self._do(Action("RotateRight"))
                return
            self.search_goal = g
            self.nav = None
        if self.nav is None or self.nav.key[:2] != ("search", g):
            target = self._pick_viewpoint(g)
            if target is None:
                self.gave_up[g[1], g[0]] = True
                self.search_goal = None
                self._do(Action("RotateRight"))
                return
            self._travel(("search", g, target), target, face=[g])
            return
        self._continue()

    def _new_search_goal(self, category: str) -> Cell | None:
        unexplored = ~self.map.detail_explored & ~self.gave_up
        if self.cfg.search == "random" or self.colloc is None or category not in self.colloc.targets:
            return random_goal(unexplored, self.rng)
        prior = search_prior(self.map, self.colloc, category)
        prior = np.where(unexplored, prior, 0.0)
        return next_search_goal(prior, self.pose, self.rng, unexplored)

    # -- motion ---------------------------------------------------------------

    def _lattice(self) -> dict[Cell, int]:
        grid = self._planning_grid()
        try:
            return lattice_reachable(grid, self.pose.cell, STEP_CELLS)
        except PathError:
            return {self.pose.cell: 0}

    def _pick_standoff(self, footprint: list[Cell], lo: float, hi: float,
                       avoid_current: bool = False) -> Cell | None:
        reach = self._lattice()
        cs = self.world.cell_size
        fp = np.array(footprint, dtype=float)
        best = None
        for c, moves in reach.items():
            if avoid_current and c == self.pose.cell and len(reach) > 1:
                continue
            d = float(np.min(np.hypot(fp[:, 0] - c[0], fp[:, 1] - c[1]))) * cs
            if lo - 1e-9 <= d <= hi + 1e-9:
                key = (int(round((d - lo) / MOVE_STEP)), moves, c[1], c[0])
                if best is None or key < best[0]:
                    best = (key, c)
        return None if best is None else best[1]

    def _pick_viewpoint(self, goal: Cell) -> Cell | None:
        reach = self._lattice()
        cs = self.world.cell_size
        limit = self.cfg.view_distance / cs
        best = None
        for c, moves in reach.items():
            d = math.hypot(c[0] - goal[0], c[1] - goal[1])
            key = (0 if d <= limit else 1, moves if d <= limit else d, c[1], c[0])
            if best is None or key < best[0]:
                best = (key, c)
        return None if best is None else best[1]

    def _travel(self, key: Any, target: Cell, face: list[Cell]) -> None:
        grid = self._planning_grid()
        try:
            plan = shortest_path(grid, self.pose.cell, target, STEP_CELLS, self.pose.heading)
        except PathError:
            # standing inside the planning margin; fall back to the body radius alone
            try:
                plan = shortest_path(self._inflate(min(self.cfg.inflation, self.robot.agent_radius)),
                                     self.pose.cell, target, STEP_CELLS, self.pose.heading)
            except PathError:
                self._do(Action("RotateRight"))
                return
        actions = list(plan.actions)
        heading = self.pose.heading
        for a in actions:
            if a == "RotateRight":
                heading = (heading + 90) % 360
            elif a == "RotateLeft":
                heading = (heading - 90) % 360
        actions += _face_actions(plan.end, heading, face)
        cells = [plan.waypoints[i] for i in range(STEP_CELLS, len(plan.waypoints), STEP_CELLS)]
        self.nav = _Nav(key, target, actions, cells)
        if not actions:
            self.nav = None
            self._arrived(key)
            return
        self._continue()

    def _continue(self) -> None:
        nav = self.nav
        if nav is None or not nav.actions:
            key = nav.key if nav is not None else None
            self.nav = None
            self._arrived(key)
            return
        action = nav.actions[0]
        if action == "MoveAhead":
            grid = self._planning_grid()
            # replan when a remaining waypoint became blocked
            if any(grid.is_blocked(c) for c in nav.cells):
                self.nav = None
                self._travel(nav.key, nav.target, self._face_of(nav))
                return
            if self._needs_peek():
                return
        nav.actions.pop(0)
        if action == "MoveAhead":
            nav.cells.pop(0)
        self._do(Action(action))
        if self.nav is nav and not nav.actions:
            self.nav = None
            self._arrived(nav.key)

    def _face_of(self, nav: _Nav) -> list[Cell]:
        key = nav.key
        if key[0] == "map" or key[0] == "search":
            return [key[1]]
        inst = next((i for i in self.obs.instances if i.id == key[1]), None)
        if inst is not None:
            return inst.footprint
        found = self.world.instance(key[1])
        return found.cells() if found is not None and found.cells() else [nav.target]

    def _needs_peek(self) -> bool:
        """Look sideways before moving if any cell the body could sweep is still unexplored."""
        here = self.pose.cell
        radius_cells = self.cfg.inflation / self.world.cell_size
        h, w = self.map.shape
        explored = self.map.explored
        unseen = False
        for dx, dy in _band_offsets(self.pose.heading, radius_cells):
            x, y = here[0] + dx, here[1] + dy
            if 0 <= x < w and 0 <= y < h and not explored[y, x]:
                unseen = True
                break
        if not unseen or (here, self.pose.heading) in self._peeked:
            return False
        self._peeked.add((here, self.pose.heading))
        self._queue.extend([Action("RotateRight"), Action("RotateLeft"), Action("RotateLeft"),
                            Action("RotateRight")])
        self.nav = None
        self._do(self._queue.pop(0))
        return True

    def _arrived(self, key: Any) -> None:
        if key is None:
            return
        if key[0] == "search":
            goal = key[1]
            if not self.map.detail_explored[goal[1], goal[0]]:
                self.gave_up[goal[1], goal[0]] = True
            self.search_goal = None
            self._container_check(goal)
        elif key[0] == "map":
            goal = key[1]
            if self._lookup_visits.get(goal, 0) >= 2:
                self.gave_up[goal[1], goal[0]] = True

    def _container_check(self, goal: Cell) -> None:
        if not self.cfg.open_containers:
            return
        lm = self.world.landmark_at(goal) if self.map.obstacle[goal[1], goal[0]] > 0 else None
        if lm is None or not lm.openable or lm.id in self._opened:
            return
        idx = current_index(_flags_plan(self.plan, self.state.goal_flags))
        if idx is None or self.plan.pairs[idx][1] != "PickupObject":
            return
        inst = next((i for i in self.obs.instances if i.id == lm.id), None)
        if inst is None:
            return
        self._opened.add(lm.id)  # one attempt per container, successful or not
        adj = local_adjust(inst, self.pose, self.belief_robot, "OpenObject", self.cfg.corrected_reach)
        if adj.ready and not lm.is_open:
            self._do(Action("OpenObject", lm.id))

    # -- outcome ---------------------------------------------------------------

    def _failure_mode(self) -> str | None:
        st = self.state
        if st.status == SUCCESS:
            return None
        if st.status == FAILURE_LIMIT:
            return COLLISION if st.collisions * 2 >= st.failures else INTERACTION_FAILURE
        idx = current_index(_flags_plan(self.plan, st.goal_flags))
        category = self.plan.pairs[idx][0] if idx is not None else None
        if category is not None and category in self.world.registry.objects:
            seen = self.map.channel(category).any() or any(i.type == category for i in self.obs.instances)
            if not seen:
                if any(o.type == category and o.hidden_in is not None and self.world.is_concealed(o)
                       for o in self.world.objects):
                    return CLOSED_CONFINEMENT
                return GOAL_NOT_FOUND
        if self.interaction_failures:
            return INTERACTION_FAILURE
        if category is not None and not self.map.channel(category).any():
            return GOAL_NOT_FOUND
        return OTHER


def _flags_plan(plan: SubtaskPlan, flags: list[bool]) -> SubtaskPlan:
    plan.done = list(flags)
    return plan


def _face_actions(cell: Cell, heading: int, footprint: list[Cell]) -> list[str]:
    """Turns that point the agent at the nearest footprint cell."""
    tx, ty = min(footprint, key=lambda c: ((c[0] - cell[0]) ** 2 + (c[1] - cell[1]) ** 2, c[1], c[0]))
    dx, dy = tx - cell[0], ty - cell[1]
    if dx == 0 and dy == 0:
        return []
    want = math.degrees(math.atan2(dy, dx))
    best = min(HEADING_VECTORS, key=lambda h: (abs((want - h + 180) % 360 - 180), h))
    diff = (best - heading) % 360
    return {0: [], 90: ["RotateRight"], 180: ["RotateRight", "RotateRight"], 270: ["RotateLeft"]}[diff]


def run_episode(world: WorldGrid, plan: SubtaskPlan, colloc: CollocationMatrix | None = None,
                robot: PhysicalConstraints = DEFAULT_ROBOT, sensor: SensorConfig = DEFAULT_SENSOR,
                config: AgentConfig = AgentConfig(), seed: int = 0, **limits: int) -> EpisodeOutcome:
    return Agent(world, plan, colloc, robot, sensor, config, seed, **limits).run()
