from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eifbench.controller import (LOCAL_ADJUSTMENT, MAP_LOOKUP, SEMANTIC_SEARCH, PlannerChoice, aim_pitch,
                                 local_adjust, nearest_channel_cell, relative_position, select_planner)
from eifbench.perception import SemanticMap, VisibleInstance, observe
from eifbench.robot import DEFAULT_ROBOT, PhysicalConstraints
from eifbench.world import AgentPose

from fixtures import make_world


def _inst(depth: float, footprint=((40, 30),)) -> VisibleInstance:
    return VisibleInstance("Mug_0", "Mug", depth, 0.0, list(footprint))


def test_visible_target_selects_local_adjustment():
    w = make_world(landmarks=[("SideTable", (30, 25, 40, 35))], objects=[("Mug", (30, 30), "SideTable_0")])
    pose = AgentPose.at_cell((22, 30), 0)
    obs = observe(w, pose)
    choice = select_planner(obs, SemanticMap.for_world(w), ("Mug", "PickupObject"))
    assert choice.kind == LOCAL_ADJUSTMENT and choice.instance.id == "Mug_0"


def test_mapped_target_selects_map_lookup():
    w = make_world()
    m = SemanticMap.for_world(w)
    m.channel("Mug")[30, 12] = 1.0
    obs = observe(w, AgentPose.at_cell((7, 7), 0))
    choice = select_planner(obs, m, ("Mug", "PickupObject"))
    assert choice == PlannerChoice(MAP_LOOKUP, goal=(12, 30))


def test_unknown_target_selects_search():
    w = make_world()
    obs = observe(w, AgentPose.at_cell((7, 7), 0))
    assert select_planner(obs, SemanticMap.for_world(w), ("Mug", "PickupObject")).kind == SEMANTIC_SEARCH


def test_ignore_mask_skips_mapped_cell():
    w = make_world()
    m = SemanticMap.for_world(w)
    m.channel("Mug")[30, 12] = 1.0
    ignore = np.zeros((w.height, w.width), dtype=bool)
    ignore[30, 12] = True
    obs = observe(w, AgentPose.at_cell((7, 7), 0))
    assert select_planner(obs, m, ("Mug", "PickupObject"), ignore=ignore).kind == SEMANTIC_SEARCH


def test_nearest_channel_cell_ties_row_major():
    ch = np.zeros((10, 10))
    ch[5, 3] = ch[3, 5] = 1
    assert nearest_channel_cell(ch, (4, 4)) == (5, 3)
    assert nearest_channel_cell(np.zeros((3, 3)), (0, 0)) is None


def test_planner_choice_validation():
    with pytest.raises(ValueError):
        PlannerChoice(MAP_LOOKUP)
    with pytest.raises(ValueError):
        PlannerChoice(LOCAL_ADJUSTMENT, goal=(1, 1))
    with pytest.raises(ValueError):
        PlannerChoice("Teleport")


def test_relative_position_projection():
    flat = AgentPose.at_cell((0, 0), 0, pitch=0)
    tilted = AgentPose.at_cell((0, 0), 0, pitch=60)
    assert relative_position(_inst(2.0), flat) == pytest.approx(2.0)
    assert relative_position(_inst(2.0), tilted) == pytest.approx(1.0)
    assert relative_position(_inst(2.0), tilted, corrected=False) == pytest.approx(2.0)


def test_local_adjust_ready_within_reach():
    pose = AgentPose.at_cell((0, 0), 0)
    adj = local_adjust(_inst(1.4), pose, DEFAULT_ROBOT, "PickupObject")
    assert adj.ready and adj.move is None


def test_local_adjust_backs_off_for_open():
    pose = AgentPose.at_cell((36, 30), 0)
    adj = local_adjust(_inst(0.2), pose, DEFAULT_ROBOT, "OpenObject")
    assert not adj.ready and adj.move == "farther" and adj.standoff == pytest.approx(0.5)
    # standoff point is 0.5 m (10 cells) from the nearest footprint cell, on the agent's side
    assert adj.goal == (30, 30)


def test_local_adjust_closes_in_beyond_reach():
    pose = AgentPose.at_cell((8, 30), 0)
    adj = local_adjust(_inst(1.6), pose, DEFAULT_ROBOT, "PickupObject")
    assert not adj.ready and adj.move == "closer"


def test_offsets_disabled_accepts_close_open():
    adj = local_adjust(_inst(0.2), AgentPose.at_cell((36, 30), 0), DEFAULT_ROBOT.without_offsets(), "OpenObject")
    assert adj.ready


def test_aim_pitch_snaps_to_step():
    # camera 1.6 m above floor, surface at 0.9 m, 0.7 m away -> 45 degrees down
    assert aim_pitch(0.7, 0.9) == 45.0
    assert aim_pitch(0.01, 0.0) == 60.0
    assert aim_pitch(10.0, 1.6) == 0.0


def test_robot_validation():
    with pytest.raises(ValueError):
        PhysicalConstraints(reach_distance=0)
    with pytest.raises(ValueError):
        PhysicalConstraints(interaction_offsets={"OpenObject": 2.0})
    doc = DEFAULT_ROBOT.to_dict()
    assert PhysicalConstraints.from_dict(doc) == DEFAULT_ROBOT


@given(st.floats(0.05, 5.0), st.sampled_from([-60, -45, -30, -15, 0, 15, 30, 45, 60]))
def test_corrected_distance_never_exceeds_depth(depth, pitch):
    pose = AgentPose.at_cell((0, 0), 0, pitch=pitch)
    d = relative_position(_inst(depth), pose)
    assert d <= depth + 1e-12
    assert d == pytest.approx(depth * math.cos(math.radians(pitch)))
