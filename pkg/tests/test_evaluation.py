from __future__ import annotations

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eifbench.evaluation import (EpisodeResult, ExpertError, MetricError, MetricsReport, SuiteConfig, aggregate,
                                 check_report, expert_length, hidden_distribution, hidden_kl, kl_divergence,
                                 matrix_metrics, plw, probability_ratio, receptacle_ratio,
                                 run_suite, top_landmarks, write_report)
from eifbench.language import SubtaskPlan, TaskSpec, expand_template
from eifbench.registry import PlacementRules, default_rules
from eifbench.semsearch import CollocationMatrix, placement_matrix, uniform_provider
from eifbench.world import GenerationConfig

from fixtures import make_world

SMALL = GenerationConfig(width=70, height=70, landmark_count=3, object_count=4, min_gap=8)


def _result(seed=0, success=True, gc=1.0, path=2.0, expert=1.0, **kw) -> EpisodeResult:
    return EpisodeResult(seed, None, success, gc, path, expert, None if success else "goal_not_found", 10, **kw)


# -- path-length weighting ---------------------------------------------------------


def test_plw_cases():
    assert plw(1.0, 2.0, 1.0) == 1.0
    assert plw(1.0, 2.0, 2.0) == 1.0
    assert plw(1.0, 2.0, 4.0) == 0.5
    assert plw(0.5, 1.0, 4.0) == 0.125
    with pytest.raises(ValueError):
        plw(1.0, 0.0, 1.0)


@given(st.floats(0, 1), st.floats(0.01, 100), st.floats(0, 100))
def test_plw_never_exceeds_raw_score(s, expert, agent):
    v = plw(s, expert, agent)
    assert 0 <= v <= s
    if agent <= expert:
        assert v == s


def test_zero_motion_episode_is_defined():
    sr, gc = _result(path=0.0, expert=0.0).weighted()
    assert sr == 1.0 and gc == 1.0


# -- collocation analyses ----------------------------------------------------------


RULES = PlacementRules({"Mug": {"CounterTop": 1.0}, "Book": {"Shelf": 1.0}})


def test_probability_ratio_fixture():
    m = CollocationMatrix(("Mug", "Book"), ("CounterTop", "Shelf"), np.array([[0.8, 0.2], [0.2, 0.8]]))
    assert probability_ratio(m, RULES) == pytest.approx(4.0)


def test_probability_ratio_needs_both_sets():
    m = CollocationMatrix(("Mug",), ("CounterTop",), np.array([[1.0]]))
    with pytest.raises(MetricError):
        probability_ratio(m, RULES)


def test_uniform_ratios_are_one():
    m = uniform_provider()
    rules = default_rules()
    assert abs(probability_ratio(m, rules) - 1.0) <= 1e-9
    assert abs(receptacle_ratio(m, rules) - 1.0) <= 1e-9


def test_top_quarter_of_landmarks():
    names = [f"L{i:02d}" for i in range(24)]
    rules = PlacementRules({"t": {n: 1.0 for n in names[:3]}, "u": {names[5]: 1.0}})
    top = top_landmarks(names, rules)
    assert len(top) == 6
    assert top[:4] == ["L00", "L01", "L02", "L05"]


def test_zero_denominator_is_degenerate():
    m = CollocationMatrix(("Mug", "Book"), ("CounterTop", "Shelf"), np.array([[0.5, 0.0], [0.0, 0.5]]))
    mm = matrix_metrics(m, RULES)
    assert mm["pr"] is None and "pr_degenerate" in mm


def test_kl_ln2_case():
    assert kl_divergence([1.0, 0.0], [0.5, 0.5]) == pytest.approx(math.log(2))
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf


def _kl_oracle(g, q):
    return float(sum(a * math.log(a / b) for a, b in zip(g, q) if a > 0))


@settings(max_examples=60)
@given(st.lists(st.floats(0.01, 1), min_size=2, max_size=6), st.lists(st.floats(0.01, 1), min_size=6, max_size=6))
def test_kl_matches_oracle_and_is_nonnegative(a, b):
    g = np.array(a) / sum(a)
    q = np.array(b[: len(a)]) / sum(b[: len(a)])
    v = kl_divergence(g.tolist(), q.tolist())
    assert v == pytest.approx(_kl_oracle(g, q), abs=1e-12)
    assert v >= -1e-12
    assert abs(kl_divergence(g.tolist(), g.tolist())) <= 1e-12


def test_hidden_kl_of_generator_weights_is_zero():
    rules = default_rules()
    targets = [t for t in rules.targets if hidden_distribution(rules, [t])]
    m = placement_matrix(rules, targets, sorted(rules.hideable))
    assert hidden_kl(m, hidden_distribution(rules, targets), rules.hideable) <= 1e-12


def test_generator_matrix_prefers_allowed_pairs():
    rules = default_rules()
    u = uniform_provider()
    m = placement_matrix(rules, u.targets, u.landmarks)
    # disallowed pairs are zero, so PR is degenerate; smooth to keep it finite
    smoothed = CollocationMatrix(m.targets, m.landmarks, 0.9 * m.values + 0.01, m.provenance)
    assert probability_ratio(smoothed, rules) > 1.0


# -- expert path length ------------------------------------------------------------


def _corridor():
    return make_world(size=(120, 20), landmarks=[("SideTable", (100, 2, 110, 6))],
                      objects=[("Mug", (100, 5), "SideTable_0")], start=(7, 7))


def test_expert_length_hand_fixture():
    # first lattice cell on row 7 within 1.5 m of the mug is x = 72: 65 cells = 13 moves
    w = _corridor()
    plan = expand_template(TaskSpec("pick_and_place", {"Obj1": "Mug", "Recep": "SideTable"}))
    assert expert_length(w, plan) == pytest.approx(3.25)


def test_expert_length_zero_when_in_place():
    w = make_world(landmarks=[("SideTable", (20, 2, 30, 8))], objects=[("Mug", (20, 7), "SideTable_0")])
    assert expert_length(w, SubtaskPlan((("Mug", "PickupObject"),))) == 0.0


def test_expert_length_unreachable_raises():
    w = _corridor()
    with pytest.raises(ExpertError):
        expert_length(w, SubtaskPlan((("Fridge", "OpenObject"),)))


# -- reports ----------------------------------------------------------------------


def test_empty_suite_reports_undefined():
    metrics, _ = aggregate([])
    assert metrics["sr"] is None and "sr" in metrics["undefined"]


def test_aggregate_values():
    eps = [_result(0), _result(1, success=False, gc=0.5, path=1.0)]
    m, modes = aggregate(eps)
    assert m["sr"] == 0.5 and m["gc"] == 0.75
    assert m["plwsr"] == pytest.approx(0.25) and m["plwgc"] == pytest.approx(0.5)
    assert modes["goal_not_found"] == 1


def test_check_report_flags_violations():
    eps = [_result(0, path=0.5, expert=1.0), _result(1, success=True, gc=0.5)]
    rep = MetricsReport({}, {}, [0, 1], aggregate(eps)[0], {}, {}, eps)
    bad = check_report(rep, {"min_sr": 1.0})
    assert any("shorter than expert" in b for b in bad)
    assert any("disagrees" in b for b in bad)
    with pytest.raises(ValueError):
        check_report(rep, {"bogus": 1})


def test_suite_hash_is_deterministic_and_job_independent(tmp_path):
    cfg = SuiteConfig(generation=SMALL, provider="uniform")
    a = run_suite(cfg, range(6))
    b = run_suite(cfg, range(6))
    c = run_suite(cfg, range(6), jobs=3)
    assert a.hash() == b.hash() == c.hash()
    assert check_report(a) == [] and a.metrics["errors"] == 0
    m = a.metrics
    assert m["plwsr"] <= m["sr"] and m["plwgc"] <= m["gc"]
    paths = write_report(a, tmp_path)
    assert MetricsReport.from_dict(json.loads(paths["report"].read_text())).hash() == a.hash()
    assert [l for l in paths["table"].read_text().splitlines() if not l.startswith("#")][0].split()[:7] == ["SR", "|", "GC", "|", "PLWSR", "|", "PLWGC"]


def test_flags_change_the_hash():
    a = run_suite(SuiteConfig(generation=SMALL, provider="uniform"), range(3))
    b = run_suite(SuiteConfig(generation=SMALL, provider="uniform", inflation=0.1), range(3))
    assert a.hash() != b.hash()


def test_suite_config_round_trip():
    cfg = SuiteConfig(generation=SMALL, provider="random", inflation=0.1, task_types=["pick_and_place"])
    assert SuiteConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()
    with pytest.raises(ValueError):
        SuiteConfig.from_dict({"nonsense": 1})
