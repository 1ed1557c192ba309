"""Gridworld benchmark harness for modular embodied instruction following."""

from __future__ import annotations

from .agent import AgentConfig, EpisodeOutcome, run_episode
from .evaluation import MetricsReport, SuiteConfig, expert_length, plw, run_suite
from .language import TaskSpec, expand_template, sample_task
from .navigation import inflate, shortest_path
from .perception import SemanticMap, SensorConfig, observe, update_map
from .robot import DEFAULT_ROBOT, PhysicalConstraints
from .semsearch import CollocationMatrix, empirical_provider, uniform_provider
from .world import GenerationConfig, WorldGrid, generate_world

__version__ = "0.1.0"

__all__ = [
    "AgentConfig", "CollocationMatrix", "DEFAULT_ROBOT", "EpisodeOutcome", "GenerationConfig", "MetricsReport",
    "PhysicalConstraints", "SemanticMap", "SensorConfig", "SuiteConfig", "TaskSpec", "WorldGrid",
    "empirical_provider", "expand_template", "expert_length", "generate_world", "inflate", "observe", "plw",
    "run_episode", "run_suite", "sample_task", "shortest_path", "uniform_provider", "update_map",
]
