from __future__ import annotations

from eifbench.agent import AgentConfig, run_episode
from eifbench.language import TaskSpec, expand_template
from eifbench.semsearch import uniform_provider
from eifbench.world import RUNNING, check_goal_conditions

from fixtures import make_world


def _room():
    return make_world(size=(80, 80),
                      landmarks=[("CounterTop", (30, 5, 45, 12)), ("Shelf", (55, 55, 70, 62))],
                      objects=[("Mug", (38, 11), "CounterTop_0")], start=(12, 12))


def _plan():
    return expand_template(TaskSpec("pick_and_place", {"Obj1": "Mug", "Recep": "Shelf"}))


def test_agent_completes_pick_and_place():
    w = _room()
    plan = _plan()
    out = run_episode(w, plan, uniform_provider())
    assert out.success, out.failure_mode
    assert all(check_goal_conditions(w, plan))
    assert out.state.collisions == 0 and out.path_length > 0
    assert out.first_sighting is not None


def test_agent_is_deterministic():
    a = run_episode(_room(), _plan(), uniform_provider(), seed=5)
    b = run_episode(_room(), _plan(), uniform_provider(), seed=5)
    assert a.state.trace_hash() == b.state.trace_hash()
    assert a.visited == b.visited


def test_random_search_also_runs_to_a_verdict():
    out = run_episode(_room(), _plan(), None, config=AgentConfig(search="random"), seed=2)
    assert out.state.status != RUNNING
    assert out.success or out.failure_mode is not None
