"""Category registry: landmark and object types, placement rules, and the map channel layout."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping


class RegistryError(ValueError):
    pass


@dataclass(frozen=True)
class LandmarkType:
    name: str
    size: tuple[int, int]  # (rows, cols) in cells
    surface_height: float  # meters
    receptacle: bool = True
    openable: bool = False
    toggleable: bool = False
    open_clearance: float = 0.0  # door swing; OpenObject fails when the agent is closer


@dataclass(frozen=True)
class ObjectType:
    name: str
    sliceable: bool = False
    cuts: bool = False
    movable_receptacle: bool = False


@dataclass
class Registry:
    landmarks: dict[str, LandmarkType]
    objects: dict[str, ObjectType]

    @property
    def channels(self) -> list[str]:
        """Semantic map channel names: objects, then landmarks, then the obstacle channel."""
        return [*self.objects, *self.landmarks, "obstacle"]

    def channel(self, category: str) -> int:
        try:
            return self.channels.index(category)
        except ValueError:
            raise RegistryError(f"unknown category {category!r}") from None

    def is_landmark(self, category: str) -> bool:
        return category in self.landmarks

    def is_object(self, category: str) -> bool:
        return category in self.objects

    def __contains__(self, category: str) -> bool:
        return category in self.landmarks or category in self.objects

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": 1,
            "landmarks": [
                {
                    "name": lt.name,
                    "size": list(lt.size),
                    "surface_height": lt.surface_height,
                    "receptacle": lt.receptacle,
                    "openable": lt.openable,
                    "toggleable": lt.toggleable,
                    "open_clearance": lt.open_clearance,
                }
                for lt in self.landmarks.values()
            ],
            "objects": [
                {
                    "name": ot.name,
                    "sliceable": ot.sliceable,
                    "cuts": ot.cuts,
                    "movable_receptacle": ot.movable_receptacle,
                }
                for ot in self.objects.values()
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "Registry":
        landmarks = {}
        for entry in doc["landmarks"]:
            lt = LandmarkType(
                name=entry["name"],
                size=(int(entry["size"][0]), int(entry["size"][1])),
                surface_height=float(entry.get("surface_height", 0.75)),
                receptacle=bool(entry.get("receptacle", True)),
                openable=bool(entry.get("openable", False)),
                toggleable=bool(entry.get("toggleable", False)),
                open_clearance=float(entry.get("open_clearance", 0.0)),
            )
            landmarks[lt.name] = lt
        objects = {}
        for entry in doc["objects"]:
            ot = ObjectType(
                name=entry["name"],
                sliceable=bool(entry.get("sliceable", False)),
                cuts=bool(entry.get("cuts", False)),
                movable_receptacle=bool(entry.get("movable_receptacle", False)),
            )
            objects[ot.name] = ot
        overlap = set(landmarks) & set(objects)
        if overlap:
            raise RegistryError(f"categories registered as both landmark and object: {sorted(overlap)}")
        return cls(landmarks=landmarks, objects=objects)


@dataclass
class PlacementRules:
    """Allowed target/landmark pairs G with per-pair placement weights, plus the hideable subset H."""

    weights: dict[str, dict[str, float]]
    hideable: frozenset[str] = field(default_factory=frozenset)

    @property
    def targets(self) -> list[str]:
        return list(self.weights)

    def allowed(self, target: str) -> dict[str, float]:
        return {l: w for l, w in self.weights.get(target, {}).items() if w > 0}

    def allowed_pairs(self) -> set[tuple[str, str]]:
        return {(t, l) for t, row in self.weights.items() for l, w in row.items() if w > 0}

    def allowed_count(self, landmark: str) -> int:
        return sum(1 for row in self.weights.values() if row.get(landmark, 0) > 0)

    def normalized(self, target: str) -> dict[str, float]:
        row = self.allowed(target)
        total = sum(row.values())
        return {l: w / total for l, w in row.items()}

    def validate(self, registry: Registry) -> None:
        for t, row in self.weights.items():
            if t not in registry.objects:
                raise RegistryError(f"placement rule for unregistered object {t!r}")
            if not self.allowed(t):
                raise RegistryError(f"object {t!r} has no allowed landmark")
            for l, w in row.items():
                if l not in registry.landmarks:
                    raise RegistryError(f"placement rule {t!r} -> unregistered landmark {l!r}")
                if w < 0:
                    raise RegistryError(f"negative placement weight for ({t}, {l})")
        for l in self.hideable:
            lt = registry.landmarks.get(l)
            if lt is None or not lt.openable:
                raise RegistryError(f"hideable landmark {l!r} is not a registered openable landmark")

    def restricted(self, targets: Iterable[str] | None = None, landmarks: Iterable[str] | None = None) -> "PlacementRules":
        keep_t = set(targets) if targets is not None else None
        keep_l = set(landmarks) if landmarks is not None else None
        weights = {}
        for t, row in self.weights.items():
            if keep_t is not None and t not in keep_t:
                continue
            weights[t] = {l: w for l, w in row.items() if keep_l is None or l in keep_l}
        hideable = self.hideable if keep_l is None else frozenset(self.hideable & keep_l)
        return PlacementRules(weights=weights, hideable=hideable)

    def skewed(self, ratio: float = 3.0) -> "PlacementRules":
        """Each target's heaviest landmark (ties by name) reweighted to ``ratio`` times every other."""
        if ratio < 1:
            raise RegistryError("skew ratio must be at least 1")
        weights = {}
        for t, row in self.weights.items():
            allowed = self.allowed(t)
            if not allowed:
                weights[t] = dict(row)
                continue
            top = min(allowed, key=lambda l: (-allowed[l], l))
            weights[t] = {l: (ratio if l == top else 1.0) if w > 0 else w for l, w in row.items()}
        return PlacementRules(weights=weights, hideable=self.hideable)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": 1,
            "hideable": sorted(self.hideable),
            "weights": {t: dict(row) for t, row in self.weights.items()},
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PlacementRules":
        weights = {t: {l: float(w) for l, w in row.items()} for t, row in doc["weights"].items()}
        return cls(weights=weights, hideable=frozenset(doc.get("hideable", ())))


def _load_json(name: str) -> dict[str, Any]:
    return json.loads(resources.files("eifbench.data").joinpath(name).read_text(encoding="utf-8"))


def load_json_file(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))


_DEFAULT_REGISTRY: Registry | None = None


def default_registry() -> Registry:
    global _DEFAULT_REGISTRY
    if _DEFAULT_REGISTRY is None:
        _DEFAULT_REGISTRY = Registry.from_dict(_load_json("categories.json"))
    return _DEFAULT_REGISTRY


def default_rules() -> PlacementRules:
    return PlacementRules.from_dict(_load_json("placement.json"))


def default_names() -> list[dict[str, Any]]:
    return _load_json("names.json")["names"]


def default_contexts() -> list[dict[str, Any]]:
    return _load_json("contexts.json")["contexts"]


def default_templates() -> dict[str, Any]:
    return _load_json("templates.json")
