"""Robot profiles: the physical constraints shared by the simulator and the controller."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

from .config import load_mapping


@dataclass(frozen=True)
class PhysicalConstraints:
    camera_height: float = 1.6
    reach_distance: float = 1.5
    agent_radius: float = 0.20
    interaction_offsets: Mapping[str, float] = field(default_factory=lambda: {"OpenObject": 0.5})

    def __post_init__(self) -> None:
        for name in ("camera_height", "reach_distance", "agent_radius"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")
        for action, offset in self.interaction_offsets.items():
            if not offset > 0:
                raise ValueError(f"interaction offset for {action} must be strictly positive")
            if offset > self.reach_distance:
                raise ValueError(f"interaction offset for {action} exceeds reach distance")

    def offset(self, action: str) -> float:
        return float(self.interaction_offsets.get(action, 0.0))

    def without_offsets(self) -> "PhysicalConstraints":
        return replace(self, interaction_offsets={})

    def to_dict(self) -> dict[str, Any]:
        return {
            "camera_height": self.camera_height,
            "reach_distance": self.reach_distance,
            "agent_radius": self.agent_radius,
            "interaction_offsets": dict(sorted(self.interaction_offsets.items())),
        }

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "PhysicalConstraints":
        base = cls()
        return cls(
            camera_height=float(doc.get("camera_height", base.camera_height)),
            reach_distance=float(doc.get("reach_distance", base.reach_distance)),
            agent_radius=float(doc.get("agent_radius", base.agent_radius)),
            interaction_offsets={k: float(v) for k, v in doc.get("interaction_offsets", base.interaction_offsets).items()},
        )

    @classmethod
    def load(cls, path: str | Path) -> "PhysicalConstraints":
        doc = load_mapping(path)
        return cls.from_dict(doc.get("robot", doc))


DEFAULT_ROBOT = PhysicalConstraints()
