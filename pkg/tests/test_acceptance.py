"""End-to-end acceptance criteria; each test prints one PASS/FAIL line."""

from __future__ import annotations

import json
import math
import random
import re
import time
from collections import deque
from functools import lru_cache

import numpy as np

from eifbench.agent import AgentConfig, run_episode
from eifbench.cli import main
from eifbench.evaluation import (MetricsReport, SuiteConfig, check_report, collision_trap_config, hidden_distribution,
                                 hidden_kl, kl_divergence, plw, probability_ratio, receptacle_ratio, run_suite,
                                 skewed_config)
from eifbench.language import SubtaskPlan
from eifbench.navigation import InflatedGrid, lattice_reachable, shortest_path
from eifbench.perception import SemanticMap, observe, update_map
from eifbench.registry import default_rules
from eifbench.semsearch import (PromptSpec, build_prompts, placement_matrix, read_scores, uniform_provider,
                                write_scores, ScoreRecord)
from eifbench.world import STEP_CELLS, AgentPose, generate_world

from fixtures import make_world

TRAP_SEEDS = range(200)
SEARCH_SEEDS = range(500)


@lru_cache(maxsize=None)
def _trap(inflation: float) -> tuple[MetricsReport, float]:
    t = time.perf_counter()
    rep = run_suite(SuiteConfig(generation=collision_trap_config(), provider="uniform", inflation=inflation), TRAP_SEEDS)
    return rep, time.perf_counter() - t


@lru_cache(maxsize=None)
def _search(provider: str) -> tuple[MetricsReport, float]:
    t = time.perf_counter()
    rep = run_suite(SuiteConfig(generation=skewed_config(3.0), provider=provider), SEARCH_SEEDS)
    return rep, time.perf_counter() - t


# -- 1 ---------------------------------------------------------------------------


def test_criterion_1_inflation_ablation(verdict):
    safe, t_safe = _trap(0.20)
    thin, t_thin = _trap(0.10)
    n = len(TRAP_SEEDS)
    frac = thin.metrics["collision_episodes"] / n
    runtime = t_safe + t_thin
    ok = safe.metrics["collision_failures"] == 0 and frac >= 0.10 and runtime <= 60
    verdict(1, "inflation ablation", ok,
            f"0.20 m collisions={safe.metrics['collision_failures']}, 0.10 m collision episodes={frac:.0%}, "
            f"{runtime:.1f}s")


# -- 2 ---------------------------------------------------------------------------


def test_criterion_2_search_ablation(verdict):
    emp, t_emp = _search("empirical")
    rnd, t_rnd = _search("random")
    ratio = emp.metrics["mean_first_sighting"] / rnd.metrics["mean_first_sighting"]
    runtime = t_emp + t_rnd
    ok = ratio <= 0.9 and emp.metrics["plwsr"] > rnd.metrics["plwsr"] and runtime <= 300
    verdict(2, "search ablation", ok,
            f"first sighting ratio={ratio:.3f}, PLWSR {emp.metrics['plwsr']:.3f} vs {rnd.metrics['plwsr']:.3f}, "
            f"{runtime:.1f}s")


# -- 3 ---------------------------------------------------------------------------


def test_criterion_3_metric_identities(verdict):
    rules = default_rules()
    u = uniform_provider()
    pr, rr = probability_ratio(u, rules), receptacle_ratio(u, rules)
    g = hidden_distribution(rules)
    self_kl = max(abs(kl_divergence(list(d.values()), list(d.values()))) for d in g.values())
    gm = placement_matrix(rules, list(g), sorted(rules.hideable))
    matrix_kl = hidden_kl(gm, g, rules.hideable)
    rng = np.random.default_rng(0)
    worst = math.inf
    for _ in range(1000):
        k = int(rng.integers(2, 10))
        a, b = rng.dirichlet(np.ones(k)), rng.dirichlet(np.ones(k))
        worst = min(worst, kl_divergence(a.tolist(), b.tolist()))
    ok = abs(pr - 1) <= 1e-9 and abs(rr - 1) <= 1e-9 and self_kl <= 1e-12 and abs(matrix_kl) <= 1e-12 and worst >= 0
    verdict(3, "metric identities", ok,
            f"PR={pr:.12f}, RR={rr:.12f}, max KL(g||g)={self_kl:.1e}, min KL over 1000 pairs={worst:.2e}")


# -- 4 ---------------------------------------------------------------------------


def _bfs(blocked: np.ndarray, start, goal) -> int | None:
    h, w = blocked.shape
    seen = np.zeros_like(blocked)
    seen[start[1], start[0]] = True
    q = deque([(start, 0)])
    while q:
        (x, y), d = q.popleft()
        if (x, y) == goal:
            return d
        for nx, ny in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
            if 0 <= nx < w and 0 <= ny < h and not blocked[ny, nx] and not seen[ny, nx]:
                seen[ny, nx] = True
                q.append(((nx, ny), d + 1))
    return None


def test_criterion_4_path_optimality(verdict):
    rng = np.random.default_rng(4)
    mismatches = reachable = 0
    for _ in range(1000):
        blocked = rng.random((100, 100)) < rng.uniform(0.05, 0.4)
        free = np.argwhere(~blocked)
        sy, sx = free[rng.integers(len(free))]
        gy, gx = free[rng.integers(len(free))]
        start, goal = (int(sx), int(sy)), (int(gx), int(gy))
        ref = _bfs(blocked, start, goal)
        plan = shortest_path(InflatedGrid(blocked, 0.0), start, goal)
        if ref is None:
            mismatches += plan.exact
        else:
            reachable += 1
            mismatches += not (plan.exact and plan.cells == ref)
    verdict(4, "path optimality", mismatches == 0, f"{mismatches} mismatches on 1000 grids ({reachable} reachable)")


# -- 5 ---------------------------------------------------------------------------


def test_criterion_5_map_fidelity(verdict):
    bad = []
    for seed in range(50):
        w = generate_world(seed)
        free = w.true_clearance(0.20)
        m = SemanticMap.for_world(w)
        for c in sorted(lattice_reachable(~free, w.start_cell, STEP_CELLS), key=lambda c: (c[1], c[0])):
            for h in (0, 90, 180, 270):
                p = AgentPose.at_cell(c, h)
                update_map(m, observe(w, p), p)
        gt = np.zeros_like(m.grid[: m.n_objects])
        for o in w.objects:
            if not w.is_concealed(o):
                gt[m.channels.index(o.type), o.cell[1], o.cell[0]] = 1.0
        if not np.array_equal(m.grid[: m.n_objects], gt):
            bad.append(seed)
    verdict(5, "map fidelity", not bad, f"{50 - len(bad)}/50 worlds exact" + (f", mismatched {bad}" if bad else ""))


# -- 6 ---------------------------------------------------------------------------


def test_criterion_6_geometry_ablations(verdict):
    # a mug 1.3 m away on a side table; the agent tilts 45 degrees down, so raw depth reads 1.84 m
    def reach_world():
        return make_world(size=(80, 60), landmarks=[("SideTable", (40, 25, 50, 35))],
                          objects=[("Mug", (40, 30), "SideTable_0")], start=(14, 30), heading=0)

    pick = SubtaskPlan((("Mug", "PickupObject"),))
    good = run_episode(reach_world(), pick, uniform_provider())
    raw = run_episode(reach_world(), pick, uniform_provider(), config=AgentConfig(corrected_reach=False))
    reach_ok = good.success and (raw.repositions > good.repositions or raw.interaction_failures > 0
                                 or not raw.success)

    # the agent starts 0.40 m from a fridge whose door needs 0.45 m
    def door_world():
        return make_world(size=(70, 70), landmarks=[("Fridge", (40, 30, 54, 45))], start=(47, 52), heading=270)

    open_plan = SubtaskPlan((("Fridge", "OpenObject"),))
    offset = run_episode(door_world(), open_plan, uniform_provider())
    bare = run_episode(door_world(), open_plan, uniform_provider(), config=AgentConfig(use_offsets=False))
    door_ok = offset.success and offset.interaction_failures == 0 and bare.interaction_failures >= 1
    verdict(6, "geometry ablations", reach_ok and door_ok,
            f"repositions corrected={good.repositions} uncorrected={raw.repositions}; "
            f"failed opens with offset={offset.interaction_failures} without={bare.interaction_failures}")


# -- 7 ---------------------------------------------------------------------------


def test_criterion_7_determinism(verdict, tmp_path, capsys):
    cfg = SuiteConfig(provider="empirical", inflation=0.15, uncorrected_reach=True)
    seeds = range(12)
    h = [run_suite(cfg, seeds).hash(), run_suite(cfg, seeds).hash(), run_suite(cfg, seeds, jobs=3).hash()]
    cli = []
    for jobs in ("1", "3"):
        capsys.readouterr()
        main(["run", "--seeds", "0..11", "--provider", "empirical", "--inflation", "0.15", "--uncorrected-reach",
              "--jobs", jobs, "--no-artifacts", "--out", str(tmp_path / jobs)])
        cli.append(capsys.readouterr().out.split("sha256: ")[1].strip())
    ok = len(set(h)) == 1 and len(set(cli)) == 1 and cli[0] == h[0]
    verdict(7, "determinism", ok, f"api hashes {len(set(h))} distinct, cli hashes {len(set(cli))} distinct, "
                                  f"{h[0][:16]}")


# -- 8 ---------------------------------------------------------------------------


def test_criterion_8_plw_dominance(verdict):
    reports = [_trap(0.20)[0], _trap(0.10)[0], _search("empirical")[0], _search("random")[0]]
    violations = sum(len(check_report(r)) for r in reports)
    rng = random.Random(8)
    exact = 0
    for _ in range(10_000):
        s = rng.random()
        expert = rng.uniform(0.25, 50)
        exact += plw(s, expert, rng.uniform(0, expert)) == s and plw(s, expert, expert) == s
    ok = violations == 0 and exact == 10_000
    verdict(8, "PLW dominance and cap", ok, f"{violations} report violations over {len(reports)} reports, "
                                            f"{exact}/10000 exact caps")


# -- 9 ---------------------------------------------------------------------------


def test_criterion_9_prompt_fidelity(verdict, tmp_path, capsys):
    spec = PromptSpec.default(num_runs=20, seed=9)
    phrases = {spec.names[l].with_article for l in spec.landmarks}
    query = re.compile(r"If I can search from (?P<list>[^.]+), I might find (?P<t>[^.]+) (?P<p>in|on|under|inside|next to) "
                       r"(?P<l>[^.]+)\.$")
    bad_prompts = 0
    targets, landmarks = spec.targets(), list(spec.landmarks)
    for t in targets:
        for l in landmarks:
            for p in build_prompts(spec, t, l):
                m = query.search(p)
                if not m or m.group("t") != spec.names[t].with_article or m.group("l") != spec.names[l].with_article \
                        or m.group("p") != spec.names[l].preposition:
                    bad_prompts += 1
                    continue
                items = set(re.split(r", and |, | and ", m.group("list")))
                bad_prompts += items != phrases

    # dump, score every record, ingest and compare against a hand-rolled mean/max sheet
    dump = tmp_path / "prompts.jsonl"
    sub_t, sub_l = targets[:4], landmarks[:5]
    main(["prompts", "--targets", ",".join(sub_t), "--landmarks", ",".join(sub_l), "--out", str(dump)])
    rng = random.Random(99)
    records = []
    for line in dump.read_text().splitlines():
        r = json.loads(line)
        records.append(ScoreRecord(r["pair"][0], r["pair"][1], r["run_index"], r["seed"], rng.random()))
    scores = tmp_path / "scores.jsonl"
    write_scores(scores, records)
    out = tmp_path / "matrix.json"
    main(["ingest", str(scores), "--targets", ",".join(sub_t), "--landmarks", ",".join(sub_l), "--out", str(out)])
    capsys.readouterr()
    got = json.loads(out.read_text())
    sheet = []
    for t in sub_t:
        row = []
        for l in sub_l:
            vals = [r.score for r in read_scores(scores) if (r.target, r.landmark) == (t, l)]
            row.append(sum(vals) / len(vals))
        top = max(row)
        sheet.append([v / top for v in row])
    err = float(np.max(np.abs(np.array(got["values"]) - np.array(sheet))))
    ok = bad_prompts == 0 and len(records) == len(sub_t) * len(sub_l) * 20 and err <= 1e-12
    verdict(9, "prompt fidelity", ok, f"{bad_prompts} malformed of {len(targets) * len(landmarks) * 20} prompts, "
                                      f"ingest max error {err:.1e}")
