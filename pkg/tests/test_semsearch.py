from __future__ import annotations

import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eifbench.perception import SemanticMap
from eifbench.registry import default_rules
from eifbench.semsearch import (CollocationMatrix, ContextPair, PromptConfigError, PromptSpec, ScoreError, ScoreRecord,
                                aggregate_scores, argmax_cell, build_prompts, empirical_provider, join_list,
                                load_names, next_search_goal, prompt_records, read_scores, search_prior,
                                uniform_provider, write_scores)
from eifbench.world import GenerationConfig, generate_world

from fixtures import make_world

NAMES = load_names([
    {"category": "Fork", "phrase": "fork", "article": "a"},
    {"category": "Sink", "phrase": "sink", "article": "the", "preposition": "in"},
    {"category": "Shelf", "phrase": "shelf", "article": "the", "preposition": "on"},
])


def _records(table):
    return [ScoreRecord(t, l, r, 0, s) for (t, l), runs in table.items() for r, s in enumerate(runs)]


# -- matrices and providers ---------------------------------------------------------


def test_matrix_validates_shape_and_range():
    with pytest.raises(ValueError):
        CollocationMatrix(("a",), ("x", "y"), np.ones((2, 2)))
    with pytest.raises(ValueError):
        CollocationMatrix(("a",), ("x",), np.array([[1.5]]))
    m = CollocationMatrix(("a",), ("x", "y"), np.array([[0.2, 1.0]]))
    assert CollocationMatrix.from_dict(m.to_dict()).row("a") == {"x": 0.2, "y": 1.0}
    with pytest.raises(KeyError):
        m.row("b")


def test_uniform_provider_is_all_ones():
    m = uniform_provider()
    assert np.all(m.values == 1.0) and "Fridge" in m.landmarks and "FloorLamp" not in m.landmarks


def test_empirical_provider_counts_fixed_placement():
    # the mug always sits on the counter: hits 3 of 3 counters, 0 of 3 shelves
    worlds = [make_world(landmarks=[("CounterTop", (20, 2, 32, 8)), ("Shelf", (40, 30, 50, 36))],
                         objects=[("Mug", (25, 7), "CounterTop_0")]) for _ in range(3)]
    m = empirical_provider(worlds, targets=["Mug"], landmarks=["CounterTop", "Shelf"])
    assert m.value("Mug", "CounterTop") == pytest.approx(4 / 5)
    assert m.value("Mug", "Shelf") == pytest.approx(1 / 5)
    assert m.values.min() > 0


def test_empirical_provider_recovers_placement_weights():
    rules = default_rules()
    allowed = sorted(rules.allowed("Mug"))
    cfg = GenerationConfig(landmarks=allowed, object_pool=["Mug"], object_count=1)
    m = empirical_provider((generate_world(s, cfg) for s in range(500)), targets=["Mug"], landmarks=allowed)
    for l, p in rules.normalized("Mug").items():
        assert abs(m.value("Mug", l) - p) <= 0.05


def test_empirical_provider_needs_corpus():
    with pytest.raises(ValueError):
        empirical_provider([])


# -- score aggregation ------------------------------------------------------------


def test_aggregate_mean_then_row_max():
    recs = _records({("Fork", "Sink"): [0.2, 0.4], ("Fork", "Shelf"): [0.1, 0.2]})
    m = aggregate_scores(recs)
    # means 0.3 and 0.15, divided by the row max 0.3
    assert m.value("Fork", "Sink") == pytest.approx(1.0)
    assert m.value("Fork", "Shelf") == pytest.approx(0.5)


def test_aggregate_equal_scores_is_uniform():
    recs = _records({("Fork", l): [0.7] * 20 for l in ("Sink", "Shelf")})
    assert np.all(aggregate_scores(recs).values == 1.0)


def test_aggregate_names_missing_pair():
    recs = _records({("Fork", "Sink"): [0.3]})
    with pytest.raises(ScoreError, match=r"\(Fork, Shelf\)"):
        aggregate_scores(recs, targets=["Fork"], landmarks=["Sink", "Shelf"])


def test_aggregate_rejects_negative_score():
    with pytest.raises(ScoreError):
        aggregate_scores(_records({("Fork", "Sink"): [-1.0]}))


def test_aggregate_matches_hand_oracle():
    table = {("Fork", "Sink"): [0.9, 0.6, 0.3], ("Fork", "Shelf"): [0.05, 0.1, 0.15],
             ("Spoon", "Sink"): [0.2, 0.2, 0.2], ("Spoon", "Shelf"): [0.4, 0.4, 0.4]}
    m = aggregate_scores(_records(table), targets=["Fork", "Spoon"], landmarks=["Sink", "Shelf"])
    oracle = np.array([[1.0, 0.1 / 0.6], [0.5, 1.0]])
    assert np.max(np.abs(m.values - oracle)) <= 1e-12


def test_scores_file_round_trip(tmp_path):
    recs = _records({("Fork", "Sink"): [0.25, 0.5]})
    path = tmp_path / "scores.jsonl"
    write_scores(path, recs)
    assert read_scores(path) == recs
    path.write_text('{"target": "Fork"}\n')
    with pytest.raises(ScoreError, match=":1:"):
        read_scores(path)


# -- prompts ----------------------------------------------------------------------


def test_zero_context_prompt_text():
    spec = PromptSpec(NAMES, ("Sink",), num_contexts=0, num_runs=1)
    assert build_prompts(spec, "Fork", "Sink") == ["If I can search from the sink, I might find a fork in the sink."]


def test_landmark_list_joining():
    assert join_list(["a"]) == "a"
    assert join_list(["a", "b"]) == "a and b"
    assert join_list(["a", "b", "c"]) == "a, b, and c"


def test_prompts_are_deterministic_across_runs():
    spec = PromptSpec.default(num_runs=20, seed=7)
    a = build_prompts(spec, "Fork", "Sink")
    assert a == build_prompts(PromptSpec.default(num_runs=20, seed=7), "Fork", "Sink")
    assert len(a) == 20 and len(set(a)) > 1
    assert all(p.endswith("I might find a fork in the sink.") for p in a)


def test_context_guard_rejects_environment_words():
    bad = (ContextPair("a fork", "the toolbox", "in"),)
    with pytest.raises(PromptConfigError, match="fork"):
        PromptSpec(NAMES, ("Sink",), bad)
    with pytest.raises(PromptConfigError):
        PromptSpec(NAMES, ("Sink",), num_contexts=1)


def test_prompt_records_split_prefix_and_completion():
    spec = PromptSpec(NAMES, ("Sink", "Shelf"), num_runs=2)
    recs = prompt_records(spec, ["Fork"], ["Sink", "Shelf"])
    assert len(recs) == 4
    for r in recs:
        assert r["prefix"] + r["completion"] == r["prompt"]
    assert recs[0]["completion"] == "find a fork in the sink."


# -- search -----------------------------------------------------------------------


def _map_with(lm_cells):
    w = make_world()
    m = SemanticMap.for_world(w)
    for name, (x, y) in lm_cells:
        m.channel(name)[y, x] = 1.0
    return m


def test_search_prior_prefers_likely_landmark():
    m = _map_with([("Sink", (10, 10)), ("Shelf", (40, 40))])
    colloc = CollocationMatrix(("Fork",), ("Sink", "Shelf"), np.array([[1.0, 0.2]]))
    prior = search_prior(m, colloc, "Fork")
    assert prior[10, 10] == pytest.approx(1.0) and prior[40, 40] == pytest.approx(0.2)
    assert argmax_cell(prior) == (10, 10)


def test_argmax_ties_break_row_major():
    prior = np.zeros((5, 5))
    prior[3, 1] = prior[1, 3] = 0.5
    assert argmax_cell(prior) == (3, 1)
    assert argmax_cell(np.zeros((3, 3))) is None


def test_zero_prior_falls_back_to_seeded_random():
    prior = np.zeros((8, 8))
    a = next_search_goal(prior, rng=random.Random(3))
    assert a == next_search_goal(prior, rng=random.Random(3))
    unexplored = np.zeros((8, 8), dtype=bool)
    unexplored[2, 5] = True
    assert next_search_goal(prior, rng=random.Random(0), unexplored=unexplored) == (5, 2)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (6, 6), elements=st.floats(0, 1, allow_subnormal=False)), st.floats(0.01, 100))
def test_argmax_is_scale_invariant(prior, scale):
    assert argmax_cell(prior) == argmax_cell(prior * scale)


def test_uniform_prior_equals_landmark_evidence():
    m = _map_with([("Sink", (10, 10)), ("Shelf", (40, 40)), ("Shelf", (10, 10))])
    prior = search_prior(m, uniform_provider(), "Fork")
    assert np.array_equal(prior, m.grid[m.landmark_slice].sum(axis=0))


def test_new_target_vocabulary_plugs_in():
    # an unregistered target: only names and scores are added, the search code is untouched
    names = dict(NAMES)
    names.update(load_names([{"category": "Hammer", "phrase": "hammer", "article": "a"}]))
    spec = PromptSpec(names, ("Sink", "Shelf"), num_runs=2)
    assert build_prompts(spec, "Hammer", "Shelf")[0].endswith("I might find a hammer on the shelf.")
    recs = _records({("Hammer", "Sink"): [0.1, 0.1], ("Hammer", "Shelf"): [0.4, 0.6]})
    colloc = aggregate_scores(recs)
    m = _map_with([("Sink", (10, 10)), ("Shelf", (40, 40))])
    assert next_search_goal(search_prior(m, colloc, "Hammer")) == (40, 40)
