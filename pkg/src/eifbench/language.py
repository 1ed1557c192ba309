"""Structured task specs and their templated expansion into object-action subtasks."""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

from .registry import Registry, default_registry, default_templates
from .world import INTERACTION_ACTIONS, WorldGrid


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class Template:
    name: str
    slots: dict[str, str]  # slot name -> kind (object | receptacle | movable_receptacle)
    pairs: tuple[tuple[str, str], ...]

    @property
    def fixed_landmarks(self) -> list[str]:
        """Literal (non-slot) categories the template always refers to."""
        return sorted({obj for obj, _ in self.pairs if obj not in self.slots})


@dataclass
class TemplateRegistry:
    templates: dict[str, Template]

    def __getitem__(self, name: str) -> Template:
        try:
            return self.templates[name]
        except KeyError:
            raise TemplateError(f"unknown task type {name!r}; registered: {sorted(self.templates)}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.templates

    @property
    def names(self) -> list[str]:
        return list(self.templates)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TemplateRegistry":
        out = {}
        for name, body in doc["task_types"].items():
            pairs = tuple((str(o), str(a)) for o, a in body["pairs"])
            if not pairs:
                raise TemplateError(f"template {name!r} has no pairs")
            for _, act in pairs:
                if act not in INTERACTION_ACTIONS:
                    raise TemplateError(f"template {name!r} uses non-interaction action {act!r}")
            out[name] = Template(name, dict(body["slots"]), pairs)
        return cls(out)

    @classmethod
    def load(cls, path: str | Path) -> "TemplateRegistry":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


_DEFAULT: TemplateRegistry | None = None


def default_template_registry() -> TemplateRegistry:
    global _DEFAULT
    if _DEFAULT is None:
        _DEFAULT = TemplateRegistry.from_dict(default_templates())
    return _DEFAULT


@dataclass(frozen=True)
class TaskSpec:
    task_type: str
    slots: Mapping[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {"task_type": self.task_type, "slots": dict(sorted(self.slots.items()))}

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TaskSpec":
        return cls(str(doc["task_type"]), dict(doc.get("slots", {})))

    @classmethod
    def load(cls, path: str | Path) -> "TaskSpec":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass
class SubtaskPlan:
    pairs: tuple[tuple[str, str], ...]
    done: list[bool] = field(default_factory=list)
    task_type: str = ""

    def __post_init__(self) -> None:
        if not self.pairs:
            raise TemplateError("a subtask plan needs at least one pair")
        for _, act in self.pairs:
            if act not in INTERACTION_ACTIONS:
                raise TemplateError(f"{act!r} is not an interaction action")
        if not self.done:
            self.done = [False] * len(self.pairs)
        elif len(self.done) != len(self.pairs):
            raise TemplateError("completion flags must match the pair count")

    def __len__(self) -> int:
        return len(self.pairs)

    def mark(self, flags: list[bool]) -> None:
        self.done = list(flags)

    @property
    def categories(self) -> list[str]:
        return sorted({obj for obj, _ in self.pairs})


DONE = None


def validate_spec(spec: TaskSpec, registry: Registry | None = None,
                  templates: TemplateRegistry | None = None) -> Template:
    reg = registry or default_registry()
    tpl = (templates or default_template_registry())[spec.task_type]
    missing = [s for s in tpl.slots if s not in spec.slots]
    if missing:
        raise TemplateError(f"task {spec.task_type!r} has unbound slot(s): {', '.join(missing)}")
    extra = [s for s in spec.slots if s not in tpl.slots]
    if extra:
        raise TemplateError(f"task {spec.task_type!r} has no slot(s) named: {', '.join(extra)}")
    for slot, kind in tpl.slots.items():
        name = spec.slots[slot]
        if kind == "object":
            ok = name in reg.objects
        elif kind == "receptacle":
            ok = name in reg.landmarks and reg.landmarks[name].receptacle
        elif kind == "movable_receptacle":
            ok = name in reg.objects and reg.objects[name].movable_receptacle
        else:
            raise TemplateError(f"template {tpl.name!r} declares unknown slot kind {kind!r}")
        if not ok:
            raise TemplateError(f"slot {slot}={name!r} is not a registered {kind.replace('_', ' ')}")
    for lit in tpl.fixed_landmarks:
        if lit not in reg:
            raise TemplateError(f"template {tpl.name!r} refers to unregistered category {lit!r}")
    return tpl


def expand_template(spec: TaskSpec, registry: Registry | None = None,
                    templates: TemplateRegistry | None = None) -> SubtaskPlan:
    tpl = validate_spec(spec, registry, templates)
    pairs = tuple((spec.slots.get(obj, obj), act) for obj, act in tpl.pairs)
    return SubtaskPlan(pairs=pairs, task_type=spec.task_type)


def current_subtask(plan: SubtaskPlan) -> tuple[str, str] | None:
    """First pair not yet completed, or ``None`` (done)."""
    for pair, flag in zip(plan.pairs, plan.done):
        if not flag:
            return pair
    return DONE


def current_index(plan: SubtaskPlan) -> int | None:
    for i, flag in enumerate(plan.done):
        if not flag:
            return i
    return None


def feasible_specs(world: WorldGrid, templates: TemplateRegistry | None = None,
                   task_types: list[str] | None = None) -> list[TaskSpec]:
    """Every slot binding a world can support, in a stable order."""
    tpls = templates or default_template_registry()
    reg = world.registry
    present_lm = sorted({lm.type for lm in world.landmarks})
    obj_counts: dict[str, int] = {}
    for o in world.objects:
        obj_counts[o.type] = obj_counts.get(o.type, 0) + 1
    recep_lm = [l for l in present_lm if reg.landmarks[l].receptacle]
    out = []
    for name in task_types or tpls.names:
        tpl = tpls[name]
        if any(l not in present_lm for l in tpl.fixed_landmarks if l in reg.landmarks):
            continue
        need = _distinct_pickups(tpl)
        choices: dict[str, list[str]] = {}
        for slot, kind in tpl.slots.items():
            if kind == "object":
                choices[slot] = sorted(t for t in obj_counts if not reg.objects[t].movable_receptacle)
            elif kind == "movable_receptacle":
                choices[slot] = sorted(t for t in obj_counts if reg.objects[t].movable_receptacle)
            else:
                choices[slot] = [l for l in recep_lm if l not in tpl.fixed_landmarks]
        combos: list[dict[str, str]] = [{}]
        for slot in tpl.slots:
            combos = [{**c, slot: v} for c in combos for v in choices[slot]]
        for c in combos:
            plan = expand_template(TaskSpec(name, c), reg, tpls)
            if all(_spare(world, cat, _final_put(plan.pairs)) >= n for cat, n in need(c).items()):
                out.append(TaskSpec(name, c))
    return out


def _final_put(pairs: tuple[tuple[str, str], ...]) -> str | None:
    return next((o for o, a in reversed(pairs) if a == "PutObject"), None)


def _spare(world: WorldGrid, category: str, final_recep: str | None) -> int:
    """Instances of ``category`` not already resting on the final receptacle type."""
    n = 0
    for o in world.objects:
        if o.type != category:
            continue
        lm = world.container_landmark(o)
        if lm is None or lm.type != final_recep:
            n += 1
    return n


def _distinct_pickups(tpl: Template):
    """Slot binding -> number of distinct instances each picked category needs."""
    final = _final_put(tpl.pairs)
    demand: dict[str, int] = {}
    for i, (obj, act) in enumerate(tpl.pairs):
        if act != "PickupObject":
            continue
        after_final = any(o == final and a == "PutObject" for o, a in tpl.pairs[:i])
        if obj not in demand:
            demand[obj] = 1
        elif after_final:
            demand[obj] += 1

    def resolve(binding: Mapping[str, str]) -> dict[str, int]:
        out: dict[str, int] = {}
        for obj, n in demand.items():
            cat = binding.get(obj, obj)
            out[cat] = max(out.get(cat, 0), n)
        return out

    return resolve


def sample_task(world: WorldGrid, rng: random.Random, templates: TemplateRegistry | None = None,
                task_types: list[str] | None = None) -> TaskSpec:
    specs = feasible_specs(world, templates, task_types)
    if not specs:
        raise TemplateError("no registered task is feasible in this world")
    return rng.choice(specs)
