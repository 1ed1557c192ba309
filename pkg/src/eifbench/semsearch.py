"""Landmark-based semantic search.

The prior over cells is ``p_x(t) = sum_l p(t | l) * p_x(l)``, where the landmark
channels of the semantic map stand in for ``p_x(l)``. Collocation probabilities
come from interchangeable providers: uniform, empirical counts over a world
corpus, or language-model scores consumed from a cache file.
"""

from __future__ import annotations

import json
import random
import re
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .perception import SemanticMap
from .registry import Registry, default_contexts, default_names, default_registry
from .world import WorldGrid

UNIFORM = "uniform"
EMPIRICAL = "empirical"
LLM = "llm"
RANDOM = "random"

QUERY_TEMPLATE = "If I can search from [LANDMARKS], I might find [n_t] [PREP] [n_l]."
TIE_RTOL = 1e-9

Cell = tuple[int, int]


class ScoreError(ValueError):
    pass


class PromptConfigError(ValueError):
    pass


@dataclass(frozen=True)
class CollocationMatrix:
    targets: tuple[str, ...]
    landmarks: tuple[str, ...]
    values: np.ndarray  # (targets, landmarks), entries in [0, 1]
    provenance: str = UNIFORM

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.shape != (len(self.targets), len(self.landmarks)):
            raise ValueError(f"matrix shape {vals.shape} does not match "
                             f"{len(self.targets)} targets x {len(self.landmarks)} landmarks")
        if vals.size and (np.any(~np.isfinite(vals)) or vals.min() < 0 or vals.max() > 1):
            raise ValueError("collocation entries must lie in [0, 1]")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    def _t(self, target: str) -> int:
        try:
            return self.targets.index(target)
        except ValueError:
            raise KeyError(f"target {target!r} has no collocation row") from None

    def value(self, target: str, landmark: str) -> float:
        return float(self.values[self._t(target), self.landmarks.index(landmark)])

    def row(self, target: str) -> dict[str, float]:
        r = self.values[self._t(target)]
        return {l: float(v) for l, v in zip(self.landmarks, r)}

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": "eifbench.collocation",
            "version": 1,
            "provenance": self.provenance,
            "targets": list(self.targets),
            "landmarks": list(self.landmarks),
            "values": [[float(v) for v in row] for row in self.values],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "CollocationMatrix":
        return cls(tuple(doc["targets"]), tuple(doc["landmarks"]),
                   np.array(doc["values"], dtype=np.float64).reshape(len(doc["targets"]), len(doc["landmarks"])),
                   doc.get("provenance", LLM))

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CollocationMatrix":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _axes(registry: Registry | None, targets: Sequence[str] | None, landmarks: Sequence[str] | None):
    reg = registry or default_registry()
    t = tuple(targets) if targets is not None else tuple(reg.objects)
    l = tuple(landmarks) if landmarks is not None else tuple(n for n, lt in reg.landmarks.items() if lt.receptacle)
    return t, l


def uniform_provider(registry: Registry | None = None, targets: Sequence[str] | None = None,
                     landmarks: Sequence[str] | None = None) -> CollocationMatrix:
    t, l = _axes(registry, targets, landmarks)
    return CollocationMatrix(t, l, np.ones((len(t), len(l))), UNIFORM)


def empirical_provider(corpus: Iterable[WorldGrid], registry: Registry | None = None,
                       targets: Sequence[str] | None = None,
                       landmarks: Sequence[str] | None = None) -> CollocationMatrix:
    """Laplace-smoothed fraction of landmark instances of type l that hold at least one t."""
    worlds = list(corpus)
    if not worlds:
        raise ValueError("empirical provider needs a non-empty world corpus")
    t_axis, l_axis = _axes(registry or worlds[0].registry, targets, landmarks)
    ti = {t: i for i, t in enumerate(t_axis)}
    li = {l: j for j, l in enumerate(l_axis)}
    hits = np.zeros((len(t_axis), len(l_axis)))
    seen = np.zeros(len(l_axis))
    for w in worlds:
        holding: dict[str, set[str]] = {}
        for o in w.objects:
            lm = w.container_landmark(o)
            if lm is not None:
                holding.setdefault(lm.id, set()).add(o.type)
        for lm in w.landmarks:
            j = li.get(lm.type)
            if j is None:
                continue
            seen[j] += 1
            for t in holding.get(lm.id, ()):
                i = ti.get(t)
                if i is not None:
                    hits[i, j] += 1
    return CollocationMatrix(t_axis, l_axis, (hits + 1.0) / (seen[None, :] + 2.0), EMPIRICAL)


def placement_matrix(rules, targets: Sequence[str], landmarks: Sequence[str]) -> CollocationMatrix:
    """Row-normalized generator placement weights; zero outside the allowed pairs."""
    vals = np.zeros((len(targets), len(landmarks)))
    for i, t in enumerate(targets):
        row = rules.normalized(t) if rules.allowed(t) else {}
        for j, l in enumerate(landmarks):
            vals[i, j] = row.get(l, 0.0)
    return CollocationMatrix(tuple(targets), tuple(landmarks), vals, EMPIRICAL)


# -- language-model scores ---------------------------------------------------


@dataclass(frozen=True)
class ScoreRecord:
    target: str
    landmark: str
    run_index: int
    seed: int
    score: float


def read_scores(path: str | Path) -> list[ScoreRecord]:
    out = []
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(ScoreRecord(str(d["target"]), str(d["landmark"]), int(d["run_index"]),
                                   int(d.get("seed", 0)), float(d["score"])))
        except (KeyError, ValueError, TypeError) as exc:
            raise ScoreError(f"{path}:{n}: malformed score record ({exc})") from None
    return out


def write_scores(path: str | Path, records: Iterable[ScoreRecord]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps({"target": r.target, "landmark": r.landmark, "run_index": r.run_index,
                                 "seed": r.seed, "score": r.score}, sort_keys=True) + "\n")


def aggregate_scores(records: Iterable[ScoreRecord | Mapping[str, Any]], targets: Sequence[str] | None = None,
                     landmarks: Sequence[str] | None = None) -> CollocationMatrix:
    """Mean score per pair, then each target row divided by its maximum."""
    sums: dict[tuple[str, str], float] = {}
    counts: dict[tuple[str, str], int] = {}
    for r in records:
        if isinstance(r, Mapping):
            r = ScoreRecord(r["target"], r["landmark"], int(r["run_index"]), int(r.get("seed", 0)), float(r["score"]))
        if not np.isfinite(r.score) or r.score < 0:
            raise ScoreError(f"score for ({r.target}, {r.landmark}) run {r.run_index} must be finite and >= 0")
        key = (r.target, r.landmark)
        sums[key] = sums.get(key, 0.0) + r.score
        counts[key] = counts.get(key, 0) + 1
    t_axis = tuple(targets) if targets is not None else tuple(sorted({t for t, _ in counts}))
    l_axis = tuple(landmarks) if landmarks is not None else tuple(sorted({l for _, l in counts}))
    missing = [(t, l) for t in t_axis for l in l_axis if (t, l) not in counts]
    if missing:
        raise ScoreError("no score entries for pair(s): " + ", ".join(f"({t}, {l})" for t, l in missing))
    means = np.array([[sums[(t, l)] / counts[(t, l)] for l in l_axis] for t in t_axis], dtype=np.float64)
    means = means.reshape(len(t_axis), len(l_axis))
    peak = means.max(axis=1, keepdims=True) if means.size else means
    safe = np.where(peak > 0, peak, 1.0)
    return CollocationMatrix(t_axis, l_axis, means / safe, LLM)


def mean_scores(records: Iterable[ScoreRecord]) -> dict[tuple[str, str], float]:
    acc: dict[tuple[str, str], list[float]] = {}
    for r in records:
        acc.setdefault((r.target, r.landmark), []).append(r.score)
    return {k: sum(v) / len(v) for k, v in acc.items()}


# -- prompts ----------------------------------------------------------------


@dataclass(frozen=True)
class NameEntry:
    category: str
    phrase: str
    article: str | None
    preposition: str | None

    @property
    def with_article(self) -> str:
        return f"{self.article} {self.phrase}" if self.article else self.phrase


@dataclass(frozen=True)
class ContextPair:
    target: str
    landmark: str
    preposition: str


def load_names(entries: Iterable[Mapping[str, Any]]) -> dict[str, NameEntry]:
    return {e["category"]: NameEntry(e["category"], e["phrase"], e.get("article"), e.get("preposition"))
            for e in entries}


@dataclass
class PromptSpec:
    names: dict[str, NameEntry]
    landmarks: tuple[str, ...]  # categories listed in [LANDMARKS]
    contexts: tuple[ContextPair, ...] = ()
    template: str = QUERY_TEMPLATE
    num_contexts: int = 0
    num_runs: int = 20
    seed: int = 0
    registered: tuple[str, ...] = field(default=())  # extra environment vocabulary for the context guard

    def __post_init__(self) -> None:
        if self.num_runs < 1:
            raise PromptConfigError("num_runs must be at least 1")
        if not 0 <= self.num_contexts <= len(self.contexts):
            raise PromptConfigError(f"num_contexts={self.num_contexts} but only {len(self.contexts)} context pairs")
        for ph in ("[LANDMARKS]", "[n_t]", "[PREP]", "[n_l]"):
            if ph not in self.template:
                raise PromptConfigError(f"query template lacks placeholder {ph}")
        for l in self.landmarks:
            entry = self.names.get(l)
            if entry is None:
                raise PromptConfigError(f"landmark {l!r} has no name registration")
            if not entry.preposition:
                raise PromptConfigError(f"landmark {l!r} has no preposition")
        self._guard()

    def _guard(self) -> None:
        vocab = {e.phrase.lower() for e in self.names.values()} | {e.category.lower() for e in self.names.values()}
        vocab |= {v.lower() for v in self.registered}
        pats = [re.compile(rf"\b{re.escape(v)}\b") for v in sorted(vocab)]
        for c in self.contexts:
            for text in (c.target.lower(), c.landmark.lower()):
                for p in pats:
                    if p.search(text):
                        raise PromptConfigError(f"context pair ({c.target!r}, {c.landmark!r}) mentions "
                                          f"environment vocabulary {p.pattern[2:-2]!r}")

    @classmethod
    def default(cls, registry: Registry | None = None, num_contexts: int = 3, num_runs: int = 20,
                seed: int = 0) -> "PromptSpec":
        reg = registry or default_registry()
        names = load_names(default_names())
        lms = tuple(n for n, lt in reg.landmarks.items() if lt.receptacle)
        ctx = tuple(ContextPair(c["target"], c["landmark"], c["preposition"]) for c in default_contexts())
        return cls(names, lms, ctx, num_contexts=num_contexts, num_runs=num_runs, seed=seed,
                   registered=tuple(reg.objects) + tuple(reg.landmarks))

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any], registry: Registry | None = None) -> "PromptSpec":
        base = cls.default(registry)
        names = load_names(doc["names"]) if "names" in doc else base.names
        ctx = tuple(ContextPair(c["target"], c["landmark"], c["preposition"]) for c in doc["contexts"]) \
            if "contexts" in doc else base.contexts
        return cls(
            names=names,
            landmarks=tuple(doc.get("landmarks", base.landmarks)),
            contexts=ctx,
            template=doc.get("template", QUERY_TEMPLATE),
            num_contexts=int(doc.get("num_contexts", min(3, len(ctx)))),
            num_runs=int(doc.get("num_runs", 20)),
            seed=int(doc.get("seed", 0)),
            registered=tuple(doc.get("registered", base.registered)),
        )

    @classmethod
    def load(cls, path: str | Path, registry: Registry | None = None) -> "PromptSpec":
        from .config import load_mapping

        return cls.from_dict(load_mapping(path), registry)

    def targets(self) -> list[str]:
        return [c for c, e in self.names.items() if e.preposition is None]


def join_list(items: Sequence[str]) -> str:
    """``a``, ``a and b``, ``a, b, and c``."""
    if len(items) <= 1:
        return "".join(items)
    if len(items) == 2:
        return f"{items[0]} and {items[1]}"
    return ", ".join(items[:-1]) + f", and {items[-1]}"


def fill(template: str, landmarks: Sequence[str], target: str, prep: str, landmark: str) -> str:
    return (template.replace("[LANDMARKS]", join_list(landmarks)).replace("[n_t]", target)
            .replace("[PREP]", prep).replace("[n_l]", landmark))


def run_rng(seed: int, run_index: int) -> random.Random:
    return random.Random(zlib.crc32(f"prompt:{seed}:{run_index}".encode()))


def _query_parts(spec: PromptSpec, target: str, landmark: str, run_index: int) -> tuple[str, str]:
    t = spec.names.get(target)
    if t is None:
        raise PromptConfigError(f"target {target!r} has no name registration")
    l = spec.names.get(landmark)
    if l is None or not l.preposition:
        raise PromptConfigError(f"landmark {landmark!r} needs a name and preposition registration")
    rng = run_rng(spec.seed, run_index)
    order = rng.sample(list(spec.landmarks), len(spec.landmarks))
    picks = rng.sample(list(spec.contexts), spec.num_contexts)
    ctx_landmarks = [c.landmark for c in spec.contexts]
    sentences = []
    for c in picks:
        ctx_order = rng.sample(ctx_landmarks, len(ctx_landmarks))
        sentences.append(fill(spec.template, ctx_order, c.target, c.preposition, c.landmark))
    query = fill(spec.template, [spec.names[x].with_article for x in order], t.with_article, l.preposition,
                 l.with_article)
    return " ".join(sentences), query


def build_prompts(spec: PromptSpec, target: str, landmark: str) -> list[str]:
    out = []
    for r in range(spec.num_runs):
        ctx, query = _query_parts(spec, target, landmark, r)
        out.append(f"{ctx} {query}" if ctx else query)
    return out


def completion_segment(spec: PromptSpec, target: str, landmark: str) -> str:
    """The scored tail of each prompt: ``find [n_t] [PREP] [n_l].``"""
    t, l = spec.names[target], spec.names[landmark]
    return f"find {t.with_article} {l.preposition} {l.with_article}."


def prompt_records(spec: PromptSpec, targets: Sequence[str], landmarks: Sequence[str]) -> list[dict[str, Any]]:
    out = []
    for t in targets:
        for l in landmarks:
            tail = completion_segment(spec, t, l)
            for r, prompt in enumerate(build_prompts(spec, t, l)):
                out.append({"pair": [t, l], "run_index": r, "seed": spec.seed, "prompt": prompt,
                            "prefix": prompt[: len(prompt) - len(tail)], "completion": tail})
    return out


# -- search -------------------------------------------------------------------


def search_prior(semantic_map: SemanticMap, colloc: CollocationMatrix, target: str) -> np.ndarray:
    """Cell-wise Bayes sum over landmark channels; zero where no landmark evidence exists."""
    row = colloc.row(target)
    names = semantic_map.landmark_names
    weights = np.array([row.get(l, 0.0) for l in names], dtype=np.float64)
    land = semantic_map.grid[semantic_map.landmark_slice].astype(np.float64)
    return np.tensordot(weights, land, axes=(0, 0))


def argmax_cell(prior: np.ndarray) -> Cell | None:
    """Row-major first cell attaining the maximum; values within a relative 1e-9 of it count as ties."""
    top = float(prior.max()) if prior.size else 0.0
    if top <= 0:
        return None
    idx = int(np.flatnonzero(prior >= top * (1 - TIE_RTOL))[0])
    y, x = divmod(idx, prior.shape[1])
    return (x, y)


def random_goal(candidates: np.ndarray, rng: random.Random) -> Cell | None:
    ys, xs = np.nonzero(candidates)
    if not len(xs):
        return None
    k = rng.randrange(len(xs))
    return (int(xs[k]), int(ys[k]))


def next_search_goal(prior: np.ndarray, pose=None, rng: random.Random | None = None,
                     unexplored: np.ndarray | None = None) -> Cell | None:
    """Argmax of the prior; an all-zero prior falls back to a seeded random unexplored cell."""
    goal = argmax_cell(prior)
    if goal is not None:
        return goal
    mask = unexplored if unexplored is not None else np.ones(prior.shape, dtype=bool)
    return random_goal(mask, rng or random.Random(0))
