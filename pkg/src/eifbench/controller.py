"""Deterministic planner selection and local-adjustment geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .perception import Observation, SemanticMap, VisibleInstance
from .robot import DEFAULT_ROBOT, PhysicalConstraints
from .world import PITCH_LIMIT, PITCH_STEP, AgentPose

__all__ = [
    "LOCAL_ADJUSTMENT", "MAP_LOOKUP", "SEMANTIC_SEARCH", "PhysicalConstraints", "DEFAULT_ROBOT",
    "PlannerChoice", "Adjustment", "select_planner", "relative_position", "local_adjust",
    "nearest_channel_cell", "aim_pitch",
]

LOCAL_ADJUSTMENT = "LocalAdjustment"
MAP_LOOKUP = "MapLookup"
SEMANTIC_SEARCH = "SemanticSearch"

Cell = tuple[int, int]


@dataclass(frozen=True)
class PlannerChoice:
    kind: str
    goal: Cell | None = None
    instance: VisibleInstance | None = None  # set for LocalAdjustment

    def __post_init__(self) -> None:
        if self.kind == LOCAL_ADJUSTMENT:
            if self.instance is None or self.goal is not None:
                raise ValueError("LocalAdjustment carries a visible instance and no goal cell")
        elif self.kind == MAP_LOOKUP:
            if self.goal is None:
                raise ValueError("MapLookup needs a goal cell")
        elif self.kind != SEMANTIC_SEARCH:
            raise ValueError(f"unknown planner {self.kind!r}")


def nearest_channel_cell(channel: np.ndarray, origin: Cell, ignore: np.ndarray | None = None) -> Cell | None:
    """Nonzero cell nearest to ``origin`` (Euclidean), ties broken row-major."""
    mask = channel > 0
    if ignore is not None:
        mask &= ~ignore
    ys, xs = np.nonzero(mask)
    if not len(xs):
        return None
    d2 = (xs - origin[0]) ** 2 + (ys - origin[1]) ** 2
    # np.nonzero is already row-major, so argmin keeps the first of equal distances
    k = int(np.argmin(d2))
    return (int(xs[k]), int(ys[k]))


def select_planner(obs: Observation, semantic_map: SemanticMap, subtask: tuple[str, str],
                   exclude: Iterable[str] = (), ignore: np.ndarray | None = None) -> PlannerChoice:
    """LocalAdjustment if the target is in sight, else MapLookup if mapped, else SemanticSearch.

    ``exclude`` drops instance ids the caller already knows are unusable; ``ignore``
    masks map cells for the same reason.
    """
    category = subtask[0]
    skip = set(exclude)
    seen = [i for i in obs.instances if i.type == category and i.id not in skip]
    if seen:
        best = min(seen, key=lambda i: (i.depth, i.id))
        return PlannerChoice(LOCAL_ADJUSTMENT, instance=best)
    if category in semantic_map.channels:
        goal = nearest_channel_cell(semantic_map.channel(category), obs.pose.cell, ignore)
        if goal is not None:
            return PlannerChoice(MAP_LOOKUP, goal=goal)
    return PlannerChoice(SEMANTIC_SEARCH)


def relative_position(inst: VisibleInstance, pose: AgentPose, constraints: PhysicalConstraints = DEFAULT_ROBOT,
                      corrected: bool = True) -> float:
    """Horizontal agent-to-target distance in meters.

    The depth reading lies along the tilted optical axis; projecting it with the
    camera pitch gives the floor-plane distance. Uncorrected mode uses the raw depth.
    """
    if not corrected:
        return inst.depth
    return inst.depth * math.cos(math.radians(pose.pitch))


@dataclass(frozen=True)
class Adjustment:
    ready: bool
    distance: float  # estimated horizontal distance, meters
    move: str | None = None  # "closer" | "farther" | None
    goal: Cell | None = None  # standoff point nearest the agent
    standoff: float = 0.0  # minimum allowed distance for the action


def local_adjust(inst: VisibleInstance, pose: AgentPose, constraints: PhysicalConstraints, action: str,
                 corrected: bool = True) -> Adjustment:
    """Ready iff ``offset(action) <= distance <= reach``; otherwise a reposition target."""
    dist = relative_position(inst, pose, constraints, corrected)
    lo = constraints.offset(action)
    hi = constraints.reach_distance
    if lo - 1e-9 <= dist <= hi + 1e-9:
        return Adjustment(True, dist, standoff=lo)
    move = "closer" if dist > hi else "farther"
    return Adjustment(False, dist, move, _standoff_point(inst, pose, lo), lo)


def _standoff_point(inst: VisibleInstance, pose: AgentPose, standoff: float) -> Cell:
    # nearest footprint cell along the sensed bearing, then back off by the standoff
    cs = pose.cell_size
    px, py = pose.x / cs - 0.5, pose.y / cs - 0.5
    tx, ty = min(inst.footprint, key=lambda c: ((c[0] - px) ** 2 + (c[1] - py) ** 2, c[1], c[0]))
    vx, vy = px - tx, py - ty
    norm = math.hypot(vx, vy)
    if norm == 0:
        return (tx, ty)
    r = standoff / cs
    return (int(round(tx + vx / norm * r)), int(round(ty + vy / norm * r)))


def aim_pitch(horizontal: float, surface_height: float,
              constraints: PhysicalConstraints = DEFAULT_ROBOT) -> float:
    """Camera pitch, snapped to the tilt step, that points at a surface ``horizontal`` meters away."""
    drop = constraints.camera_height - surface_height
    angle = math.degrees(math.atan2(drop, max(horizontal, 1e-6)))
    snapped = PITCH_STEP * round(angle / PITCH_STEP)
    return float(max(-PITCH_LIMIT, min(PITCH_LIMIT, snapped)))
