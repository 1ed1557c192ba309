"""Benchmark metrics, collocation-matrix analyses and the seeded suite runner."""

from __future__ import annotations

import csv
import hashlib
import heapq
import io
import json
import math
import random
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .agent import FAILURE_MODES, LANGUAGE, OTHER, AgentConfig, run_episode
from .language import SubtaskPlan, TemplateError, expand_template, sample_task
from .navigation import PathError, lattice_reachable
from .perception import DEFAULT_SENSOR, SensorConfig
from .registry import PlacementRules
from .robot import DEFAULT_ROBOT, PhysicalConstraints
from .semsearch import (RANDOM, CollocationMatrix, empirical_provider, uniform_provider)
from .world import (MOVE_STEP, STEP_CELLS, GenerationConfig, GenerationError, WorldGrid,
                    derive_seed, generate_world)

Cell = tuple[int, int]
REPORT_FORMAT = "eifbench.report"
KL_DIRECTION = "KL(g || q): generator hidden-placement distribution g as reference, matrix q over H"


class MetricError(ValueError):
    """A ratio whose denominator (or pair set) is empty or zero."""


class ExpertError(ValueError):
    pass


# -- path-length weighting ---------------------------------------------------


def plw(s: float, expert: float, agent: float) -> float:
    """``s * L* / max(L*, L_agent)``: the weight never exceeds one."""
    if not expert > 0:
        raise ValueError("expert path length must be positive")
    if agent <= expert:
        return s  # exact, without a rounding round trip
    return s * expert / agent


# -- collocation matrix analyses ------------------------------------------------


def collocation_mean(matrix: CollocationMatrix, pairs: Iterable[tuple[str, str]]) -> float:
    pairs = list(pairs)
    if not pairs:
        raise MetricError("collocation mean over an empty pair set")
    return float(sum(matrix.value(t, l) for t, l in pairs) / len(pairs))


def split_allowed(matrix: CollocationMatrix, rules: PlacementRules) -> tuple[list, list]:
    allowed = rules.allowed_pairs()
    g, gc = [], []
    for t in matrix.targets:
        for l in matrix.landmarks:
            (g if (t, l) in allowed else gc).append((t, l))
    return g, gc


def _ratio(num: float, den: float, name: str) -> float:
    if den == 0:
        raise MetricError(f"{name} is degenerate: denominator mean is zero")
    return num / den


def probability_ratio(matrix: CollocationMatrix, rules: PlacementRules) -> float:
    g, gc = split_allowed(matrix, rules)
    if not g or not gc:
        raise MetricError("PR needs both allowed and disallowed pairs")
    return _ratio(collocation_mean(matrix, g), collocation_mean(matrix, gc), "PR")


def top_landmarks(landmarks: Sequence[str], rules: PlacementRules, fraction: float = 0.25) -> list[str]:
    """Most permissive landmarks by allowed-pair count (ties by name), ceiling of ``fraction``."""
    ranked = sorted(landmarks, key=lambda l: (-rules.allowed_count(l), l))
    return ranked[: math.ceil(fraction * len(ranked))]


def receptacle_ratio(matrix: CollocationMatrix, rules: PlacementRules) -> float:
    if len(matrix.landmarks) < 4:
        raise MetricError("RR needs at least four landmarks")
    top = set(top_landmarks(matrix.landmarks, rules))
    inside = [(t, l) for t in matrix.targets for l in matrix.landmarks if l in top]
    outside = [(t, l) for t in matrix.targets for l in matrix.landmarks if l not in top]
    if not inside or not outside:
        raise MetricError("RR split is degenerate")
    return _ratio(collocation_mean(matrix, inside), collocation_mean(matrix, outside), "RR")


def kl_divergence(g: Sequence[float], q: Sequence[float]) -> float:
    """``sum g ln(g/q)`` with zero-g terms dropped; ``inf`` where q vanishes under positive g."""
    total = 0.0
    for gi, qi in zip(g, q):
        if gi <= 0:
            continue
        if qi <= 0:
            return math.inf
        total += gi * math.log(gi / qi)
    return total


def hidden_distribution(rules: PlacementRules, targets: Iterable[str] | None = None) -> dict[str, dict[str, float]]:
    """Per target, placement weights restricted to the hideable set and renormalized."""
    out = {}
    for t in targets if targets is not None else rules.targets:
        row = {l: w for l, w in rules.allowed(t).items() if l in rules.hideable}
        total = sum(row.values())
        if total > 0:
            out[t] = {l: w / total for l, w in sorted(row.items())}
    return out


def hidden_kl(matrix: CollocationMatrix, g: Mapping[str, Mapping[str, float]], hideable: Iterable[str]) -> float:
    """Mean over targets of KL(g || q), q being the matrix row renormalized over ``hideable``."""
    H = [l for l in sorted(hideable) if l in matrix.landmarks]
    if not H:
        raise MetricError("no hideable landmark appears in the matrix")
    vals = []
    for t, dist in g.items():
        if t not in matrix.targets:
            continue
        total = sum(dist.values())
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"hidden distribution for {t} sums to {total}, not 1")
        row = np.array([matrix.value(t, l) for l in H])
        z = row.sum()
        q = row / z if z > 0 else np.zeros_like(row)
        vals.append(kl_divergence([dist.get(l, 0.0) for l in H], q.tolist()))
    if not vals:
        raise MetricError("no target overlaps between g and the matrix")
    return float(np.mean(vals)) if all(math.isfinite(v) for v in vals) else math.inf


# -- expert path length ------------------------------------------------------------


def _lattice_graph(world: WorldGrid, robot: PhysicalConstraints) -> tuple[list[Cell], dict[Cell, int], list[list[int]]]:
    free = world.true_clearance(robot.agent_radius)
    reach = lattice_reachable(~free, world.start_cell, STEP_CELLS)
    nodes = sorted(reach, key=lambda c: (c[1], c[0]))
    index = {c: i for i, c in enumerate(nodes)}
    adj = []
    for x, y in nodes:
        nbrs = []
        for dx, dy in ((1, 0), (0, 1), (-1, 0), (0, -1)):
            j = index.get((x + dx * STEP_CELLS, y + dy * STEP_CELLS))
            if j is not None and all(free[y + dy * k, x + dx * k] for k in range(1, STEP_CELLS + 1)):
                nbrs.append(j)
        adj.append(nbrs)
    return nodes, index, adj


def _candidate_footprints(world: WorldGrid, pairs: Sequence[tuple[str, str]], i: int) -> list[list[Cell]]:
    category, action = pairs[i]
    reg = world.registry
    out: list[list[Cell]] = []
    if category in reg.landmarks:
        out += [lm.cells() for lm in world.landmarks if lm.type == category]
    else:
        out += [o.cells() for o in world.objects if o.type == category and o.cell is not None]
    if category in reg.objects:
        # the object may have been moved by an earlier Put; any earlier destination qualifies
        for dest, act in pairs[:i]:
            if act != "PutObject":
                continue
            if dest in reg.landmarks:
                out += [lm.cells() for lm in world.landmarks if lm.type == dest]
            else:
                out += [o.cells() for o in world.objects if o.type == dest and o.cell is not None]
    return [fp for fp in out if fp]


def _valid_nodes(world: WorldGrid, nodes: list[Cell], footprints: list[list[Cell]], lo: float, hi: float) -> set[int]:
    if not footprints or not nodes:
        return set()
    pts = np.array(nodes, dtype=float)
    cs = world.cell_size
    ok = np.zeros(len(nodes), dtype=bool)
    for fp in footprints:
        arr = np.array(fp, dtype=float)
        x0, y0 = arr.min(axis=0)
        x1, y1 = arr.max(axis=0)
        dx = np.maximum(np.maximum(x0 - pts[:, 0], pts[:, 0] - x1), 0)
        dy = np.maximum(np.maximum(y0 - pts[:, 1], pts[:, 1] - y1), 0)
        d = np.hypot(dx, dy) * cs
        ok |= (d >= lo - 1e-9) & (d <= hi + 1e-9)
    return set(np.flatnonzero(ok).tolist())


def expert_length(world: WorldGrid, plan: SubtaskPlan, robot: PhysicalConstraints = DEFAULT_ROBOT,
                  sensor: SensorConfig = DEFAULT_SENSOR) -> float:
    """Shortest lattice distance visiting, in order, a valid interaction cell for every subtask.

    Valid cells are relaxed (any instance of the category, any earlier Put destination,
    no field-of-view or visibility requirement), so the value is a lower bound on the
    path of any agent that completes the plan.
    """
    nodes, index, adj = _lattice_graph(world, robot)
    reg = world.registry
    start = index[world.start_cell]
    dist = {start: 0}
    pairs = list(plan.pairs)
    for i, (category, action) in enumerate(pairs):
        lo = reg.landmarks[category].open_clearance if action == "OpenObject" and category in reg.landmarks else 0.0
        hi = robot.reach_distance
        if category in reg.objects:
            hi = min(hi, sensor.object_range)
        valid = _valid_nodes(world, nodes, _candidate_footprints(world, pairs, i), lo, hi)
        if not valid:
            raise ExpertError(f"subtask {i} ({category}, {action}) has no reachable interaction cell")
        dist = _multi_source(adj, dist)
        dist = {n: d for n, d in dist.items() if n in valid}
        if not dist:
            raise ExpertError(f"subtask {i} ({category}, {action}) cannot be reached from the previous one")
    return min(dist.values()) * MOVE_STEP


def _multi_source(adj: list[list[int]], seeds: Mapping[int, int]) -> dict[int, int]:
    dist = dict(seeds)
    heap = [(d, n) for n, d in seeds.items()]
    heapq.heapify(heap)
    while heap:
        d, n = heapq.heappop(heap)
        if d > dist[n]:
            continue
        for m in adj[n]:
            if d + 1 < dist.get(m, 1 << 60):
                dist[m] = d + 1
                heapq.heappush(heap, (d + 1, m))
    return dist


# -- episodes and reports ----------------------------------------------------------


@dataclass
class EpisodeResult:
    seed: int
    task: dict[str, Any] | None
    success: bool
    goal_fraction: float
    path_length: float  # meters
    expert_length: float  # meters
    failure_mode: str | None
    steps: int
    failures: int = 0
    collisions: int = 0
    first_sighting: int | None = None
    repositions: int = 0
    trace_hash: str = ""
    error: str | None = None

    def weighted(self) -> tuple[float, float]:
        # both lengths are floored at one step so that zero-motion episodes stay defined
        ls = max(self.expert_length, MOVE_STEP)
        la = max(self.path_length, MOVE_STEP)
        return plw(float(self.success), ls, la), plw(self.goal_fraction, ls, la)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass
class SuiteConfig:
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    robot: PhysicalConstraints = DEFAULT_ROBOT
    sensor: SensorConfig = DEFAULT_SENSOR
    provider: str = "empirical"  # uniform | random | empirical | llm-cache
    inflation: float | None = None  # override of the planning radius; None uses the robot radius
    uncorrected_reach: bool = False
    no_interaction_offset: bool = False
    task_types: list[str] | None = None
    corpus_size: int = 200
    corpus_seed: int = 1_000_000
    matrix_path: str | None = None
    max_steps: int | None = None

    def agent_config(self) -> AgentConfig:
        return AgentConfig(
            inflation=self.robot.agent_radius if self.inflation is None else self.inflation,
            corrected_reach=not self.uncorrected_reach,
            use_offsets=not self.no_interaction_offset,
            search="random" if self.provider == RANDOM else "semantic",
        )

    def labels(self) -> dict[str, Any]:
        return {
            "provider": self.provider,
            "inflation": self.agent_config().inflation,
            "inflation_override": self.inflation is not None,
            "uncorrected_reach": self.uncorrected_reach,
            "no_interaction_offset": self.no_interaction_offset,
            "task_types": self.task_types,
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "generation": self.generation.to_dict(),
            "robot": self.robot.to_dict(),
            "sensor": asdict(self.sensor),
            **{k: getattr(self, k) for k in ("provider", "inflation", "uncorrected_reach", "no_interaction_offset",
                                             "task_types", "corpus_size", "corpus_seed", "matrix_path", "max_steps")},
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "SuiteConfig":
        doc = dict(doc)
        gen = GenerationConfig.from_dict(doc.pop("generation", {}))
        robot = PhysicalConstraints.from_dict(doc.pop("robot", {}))
        sensor = SensorConfig(**doc.pop("sensor", {}))
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown run parameters: {sorted(unknown)}")
        return cls(generation=gen, robot=robot, sensor=sensor, **doc)


def collision_trap_config(**overrides: Any) -> GenerationConfig:
    """Worlds whose landmark edges sit on the lattice, so a thin inflation grazes them."""
    return replace(GenerationConfig(trap_alignment=True, landmark_count=4), **overrides)


def skewed_config(ratio: float = 3.0, **overrides: Any) -> GenerationConfig:
    """Default worlds with every target's favourite landmark weighted ``ratio`` to one."""
    base = GenerationConfig()
    return replace(base, rules=base.rules.skewed(ratio), **overrides)


PRESETS = {"default": GenerationConfig, "trap": collision_trap_config, "skewed": skewed_config}


def build_matrix(cfg: SuiteConfig) -> CollocationMatrix | None:
    if cfg.provider == RANDOM:
        return None
    if cfg.provider == "uniform":
        return uniform_provider()
    if cfg.provider == "empirical":
        # corpus seeds are offset far from evaluation seeds so the prior never sees test worlds
        corpus = [generate_world(cfg.corpus_seed + k, cfg.generation) for k in range(cfg.corpus_size)]
        return empirical_provider(corpus)
    if cfg.provider in ("llm", "llm-cache"):
        if not cfg.matrix_path:
            raise ValueError("the llm-cache provider needs a matrix file (see the ingest command)")
        return CollocationMatrix.load(cfg.matrix_path)
    raise ValueError(f"unknown provider {cfg.provider!r}")


@dataclass
class EpisodeArtifacts:
    """Per-episode files kept in memory so the parent process is the only writer."""

    seed: int
    trace: list[dict[str, Any]]
    visited: list[Cell]
    render_png: bytes


def run_one(cfg: SuiteConfig, seed: int, matrix: CollocationMatrix | None) -> EpisodeResult:
    """One seeded episode; every error becomes a failure tag instead of escaping."""
    return _episode(cfg, seed, matrix, keep=False)[0]


def _episode(cfg: SuiteConfig, seed: int, matrix: CollocationMatrix | None, keep: bool,
             world_text: str | None = None) -> tuple[EpisodeResult, EpisodeArtifacts | None]:
    task = None
    try:
        world = WorldGrid.loads(world_text) if world_text else generate_world(seed, cfg.generation)
        try:
            spec = sample_task(world, random.Random(derive_seed(seed, "task")), task_types=cfg.task_types)
            plan = expand_template(spec, world.registry)
        except TemplateError as exc:
            return EpisodeResult(seed, None, False, 0.0, 0.0, 0.0, LANGUAGE, 0, error=str(exc)), None
        task = spec.to_dict()
        lstar = expert_length(world, plan, cfg.robot, cfg.sensor)
        limits = {"max_steps": cfg.max_steps} if cfg.max_steps else {}
        out = run_episode(world, plan, matrix, cfg.robot, cfg.sensor, cfg.agent_config(), seed, **limits)
        flags = out.state.goal_flags
        result = EpisodeResult(
            seed=seed, task=task, success=out.success,
            goal_fraction=sum(flags) / len(flags),
            path_length=out.path_length, expert_length=lstar, failure_mode=out.failure_mode,
            steps=out.state.steps, failures=out.state.failures, collisions=out.state.collisions,
            first_sighting=out.first_sighting, repositions=out.repositions, trace_hash=out.state.trace_hash(),
        )
        art = None
        if keep:
            from .render import composite, png_bytes

            png = png_bytes(composite(out.semantic_map, out.visited, world.start_cell))
            art = EpisodeArtifacts(seed, list(out.state.trace), list(out.visited), png)
        return result, art
    except (GenerationError, ExpertError, PathError, ValueError, KeyError, IndexError) as exc:
        return EpisodeResult(seed, task, False, 0.0, 0.0, 0.0, OTHER, 0, error=f"{type(exc).__name__}: {exc}"), None


def _run_chunk(args: tuple[SuiteConfig, list[int], CollocationMatrix | None, bool, Mapping[int, str]]):
    cfg, seeds, matrix, keep, worlds = args
    return [_episode(cfg, s, matrix, keep, worlds.get(s)) for s in seeds]


@dataclass
class MetricsReport:
    config: dict[str, Any]
    labels: dict[str, Any]
    seeds: list[int]
    metrics: dict[str, Any]
    matrix_metrics: dict[str, Any]
    failure_modes: dict[str, int]
    episodes: list[EpisodeResult]

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": REPORT_FORMAT,
            "version": 1,
            "config": self.config,
            "labels": self.labels,
            "seeds": self.seeds,
            "metrics": self.metrics,
            "matrix_metrics": self.matrix_metrics,
            "failure_modes": self.failure_modes,
            "episodes": [e.to_dict() for e in self.episodes],
        }

    def canonical_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"), allow_nan=False,
                          default=_json_default)

    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def text_table(self) -> str:
        m = self.metrics
        cols = ["SR", "GC", "PLWSR", "PLWGC"]
        vals = [m.get(k.lower()) for k in cols]
        head = " | ".join(f"{c:>7}" for c in cols)
        row = " | ".join(f"{100 * v:7.2f}" if v is not None else f"{'n/a':>7}" for v in vals)
        label = ", ".join(f"{k}={v}" for k, v in self.labels.items() if v not in (None, False))
        lines = [f"# {label}", head, row, "", f"episodes: {m['episodes']}"]
        mm = self.matrix_metrics
        if mm:
            keys = [k for k in ("provenance", "pr", "rr", "kl") if k in mm]
            keys += sorted(k for k in mm if k not in keys and k != "kl_direction")
            lines.append("matrix: " + ", ".join(f"{k}={_fmt(mm[k])}" for k in keys))
        modes = [m for m in FAILURE_MODES if m in self.failure_modes]
        modes += sorted(m for m in self.failure_modes if m not in modes)
        lines.append("failures: " + ", ".join(f"{k}={self.failure_modes[k]}" for k in modes))
        return "\n".join(lines) + "\n"

    def episodes_csv(self) -> str:
        buf = io.StringIO()
        fields = ["seed", "task_type", "success", "goal_fraction", "path_length", "expert_length", "plwsr",
                  "plwgc", "failure_mode", "steps", "failures", "collisions", "first_sighting", "repositions",
                  "trace_hash"]
        w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
        w.writeheader()
        for e in self.episodes:
            ps, pg = e.weighted()
            w.writerow({
                "seed": e.seed, "task_type": (e.task or {}).get("task_type", ""), "success": int(e.success),
                "goal_fraction": f"{e.goal_fraction:.6f}", "path_length": f"{e.path_length:.2f}",
                "expert_length": f"{e.expert_length:.2f}", "plwsr": f"{ps:.6f}", "plwgc": f"{pg:.6f}",
                "failure_mode": e.failure_mode or "", "steps": e.steps, "failures": e.failures,
                "collisions": e.collisions, "first_sighting": "" if e.first_sighting is None else e.first_sighting,
                "repositions": e.repositions, "trace_hash": e.trace_hash,
            })
        return buf.getvalue()

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "MetricsReport":
        if doc.get("format") != REPORT_FORMAT:
            raise ValueError("not an eifbench report")
        return cls(doc["config"], doc["labels"], list(doc["seeds"]), doc["metrics"], doc["matrix_metrics"],
                   doc["failure_modes"], [EpisodeResult(**e) for e in doc["episodes"]])


def _fmt(v: Any) -> str:
    return f"{v:.4f}" if isinstance(v, float) else str(v)


def _json_default(o: Any) -> Any:
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (set, frozenset, tuple)):
        return sorted(o) if isinstance(o, (set, frozenset)) else list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def aggregate(episodes: Sequence[EpisodeResult]) -> tuple[dict[str, Any], dict[str, int]]:
    n = len(episodes)
    modes = {m: 0 for m in FAILURE_MODES}
    for e in episodes:
        if e.failure_mode:
            modes[e.failure_mode] = modes.get(e.failure_mode, 0) + 1
    if n == 0:
        return {"episodes": 0, "sr": None, "gc": None, "plwsr": None, "plwgc": None,
                "undefined": ["sr", "gc", "plwsr", "plwgc"]}, modes
    w = [e.weighted() for e in episodes]
    sightings = [e.first_sighting if e.first_sighting is not None else e.steps for e in episodes]
    metrics = {
        "episodes": n,
        "sr": sum(e.success for e in episodes) / n,
        "gc": sum(e.goal_fraction for e in episodes) / n,
        "plwsr": sum(a for a, _ in w) / n,
        "plwgc": sum(b for _, b in w) / n,
        "mean_steps": sum(e.steps for e in episodes) / n,
        "mean_first_sighting": sum(sightings) / n,
        "mean_path_length": sum(e.path_length for e in episodes) / n,
        "collision_episodes": sum(1 for e in episodes if e.collisions > 0),
        "collision_failures": sum(e.collisions for e in episodes),
        "repositions": sum(e.repositions for e in episodes),
        "errors": sum(1 for e in episodes if e.error),
    }
    return metrics, modes


def matrix_metrics(matrix: CollocationMatrix | None, rules: PlacementRules) -> dict[str, Any]:
    if matrix is None:
        return {}
    out: dict[str, Any] = {"provenance": matrix.provenance, "kl_direction": KL_DIRECTION}
    for name, fn in (("pr", lambda: probability_ratio(matrix, rules)), ("rr", lambda: receptacle_ratio(matrix, rules)),
                     ("kl", lambda: hidden_kl(matrix, hidden_distribution(rules, matrix.targets), rules.hideable))):
        try:
            v = fn()
            out[name] = v if math.isfinite(v) else "inf"
        except MetricError as exc:
            out[name] = None
            out[f"{name}_degenerate"] = str(exc)
    return out


def run_suite(cfg: SuiteConfig, seeds: Sequence[int], jobs: int = 1, matrix: CollocationMatrix | None = None,
              artifacts: list[EpisodeArtifacts] | None = None,
              worlds: Mapping[int, WorldGrid] | None = None) -> MetricsReport:
    """Run every seed; pass a list as ``artifacts`` to also collect traces and renders.

    ``worlds`` supplies prebuilt worlds by seed instead of generating them.
    """
    seeds = list(seeds)
    texts = {s: w.dumps() for s, w in (worlds or {}).items()}
    keep = artifacts is not None
    if matrix is None and cfg.provider != RANDOM:
        matrix = build_matrix(cfg)
    if jobs > 1 and len(seeds) > 1:
        chunks = [seeds[i::jobs] for i in range(jobs)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(_run_chunk, [(cfg, c, matrix, keep, {s: texts[s] for s in c if s in texts})
                                                for c in chunks if c]))
        order = {s: i for i, s in enumerate(seeds)}
        pairs = sorted((p for part in parts for p in part), key=lambda p: order[p[0].seed])
    else:
        pairs = [_episode(cfg, s, matrix, keep, texts.get(s)) for s in seeds]
    episodes = [r for r, _ in pairs]
    if keep:
        artifacts.extend(a for _, a in pairs if a is not None)
    metrics, modes = aggregate(episodes)
    return MetricsReport(cfg.to_dict(), cfg.labels(), seeds, metrics,
                         matrix_metrics(matrix, cfg.generation.rules), modes, episodes)


def check_report(report: MetricsReport, thresholds: Mapping[str, float] | None = None) -> list[str]:
    """Violated report properties, empty when all hold."""
    bad = []
    m = report.metrics
    if m["episodes"]:
        if m["plwsr"] > m["sr"] + 1e-12:
            bad.append(f"PLWSR {m['plwsr']} exceeds SR {m['sr']}")
        if m["plwgc"] > m["gc"] + 1e-12:
            bad.append(f"PLWGC {m['plwgc']} exceeds GC {m['gc']}")
    for e in report.episodes:
        if e.success and e.path_length + 1e-9 < e.expert_length:
            bad.append(f"seed {e.seed}: agent path {e.path_length} shorter than expert bound {e.expert_length}")
        if e.success != (e.goal_fraction == 1.0):
            bad.append(f"seed {e.seed}: success flag disagrees with goal fraction {e.goal_fraction}")
    t = dict(thresholds or {})
    n = m["episodes"]
    if "min_sr" in t and (m["sr"] is None or m["sr"] < t["min_sr"]):
        bad.append(f"SR {m['sr']} below {t['min_sr']}")
    if "max_collision_episodes" in t and n and m["collision_episodes"] > t["max_collision_episodes"]:
        bad.append(f"{m['collision_episodes']} episodes collided, allowed {t['max_collision_episodes']}")
    if "min_collision_fraction" in t and n and m["collision_episodes"] / n < t["min_collision_fraction"]:
        bad.append(f"collision fraction {m['collision_episodes'] / n} below {t['min_collision_fraction']}")
    unknown = set(t) - {"min_sr", "max_collision_episodes", "min_collision_fraction"}
    if unknown:
        raise ValueError(f"unknown acceptance thresholds: {sorted(unknown)}")
    return bad


def write_report(report: MetricsReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "report.json", "table": out / "report.txt", "episodes": out / "episodes.csv"}
    paths["report"].write_text(report.canonical_json() + "\n", encoding="utf-8")
    paths["table"].write_text(report.text_table(), encoding="utf-8")
    paths["episodes"].write_text(report.episodes_csv(), encoding="utf-8")
    return paths
