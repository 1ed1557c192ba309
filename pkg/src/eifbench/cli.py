"""Command line: generate worlds, run suites, dump prompts, ingest scores, report and render."""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

from .config import load_mapping
from .evaluation import (PRESETS, EpisodeArtifacts, MetricsReport, SuiteConfig, check_report, run_suite,
                         write_report)
from .perception import SensorConfig
from .robot import PhysicalConstraints
from .semsearch import (LLM, PromptConfigError, PromptSpec, ScoreError, aggregate_scores,
                        prompt_records, read_scores)
from .world import EpisodeState, GenerationConfig, GenerationError, WorldGrid, generate_world

CONFIG_ENV = "EIFBENCH_CONFIG"
EXIT_OK, EXIT_HARNESS, EXIT_ACCEPTANCE = 0, 1, 2
PROVIDERS = ("uniform", "random", "empirical", "llm-cache")

ABLATIONS = """\
ablation rows, one flag combination each:
  full pipeline                       (no flags)
  incorrect obstacle enlargement      --inflation 0.10
  uncorrected reach distance          --uncorrected-reach
  no interaction offset               --no-interaction-offset
  random search                       --provider random
  uniform collocation prior           --provider uniform
  empirical collocation prior         --provider empirical
  language-model collocation prior    --provider llm-cache --matrix MATRIX.json
"""


class HarnessError(Exception):
    pass


def parse_seeds(text: str | Sequence[int]) -> list[int]:
    """``1..100``, ``3,5,9`` or a mix such as ``1..5,10``; ranges are inclusive."""
    if not isinstance(text, str):
        seeds = [int(s) for s in text]
    else:
        seeds = []
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if ".." in part:
                lo, hi = part.split("..", 1)
                lo_i, hi_i = int(lo), int(hi)
                if hi_i < lo_i:
                    raise HarnessError(f"empty seed range {part!r}")
                seeds.extend(range(lo_i, hi_i + 1))
            else:
                seeds.append(int(part))
    if not seeds:
        raise HarnessError("seed list is empty")
    return seeds


@dataclass
class RunConfig:
    suite: SuiteConfig
    seeds: list[int]
    out: Path
    jobs: int = 1
    robot_path: str | None = None
    world_path: str | None = None
    artifacts: bool = True
    acceptance: dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.seeds:
            raise HarnessError("seed list is empty")
        for p in (self.robot_path, self.world_path, self.suite.matrix_path):
            if p and not Path(p).is_file():
                raise HarnessError(f"referenced file does not exist: {p}")
        if self.jobs < 1:
            raise HarnessError("--jobs must be at least 1")


def _config_doc(path: str | None) -> dict[str, Any]:
    path = path or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    if not Path(path).is_file():
        raise HarnessError(f"config file not found: {path}")
    return load_mapping(path)


def _generation(doc: Mapping[str, Any], preset: str | None) -> GenerationConfig:
    name = preset or doc.get("preset", "default")
    if name not in PRESETS:
        raise HarnessError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    base = PRESETS[name]()
    overrides = dict(doc.get("generation", {}))
    return GenerationConfig.from_dict({**base.to_dict(), **overrides}) if overrides else base


def build_run_config(args: argparse.Namespace) -> RunConfig:
    doc = _config_doc(args.config)
    gen = _generation(doc, args.preset)
    robot_path = args.robot or (doc["robot"] if isinstance(doc.get("robot"), str) else None)
    if robot_path:
        if not Path(robot_path).is_file():
            raise HarnessError(f"robot profile not found: {robot_path}")
        robot = PhysicalConstraints.load(robot_path)
    else:
        robot = PhysicalConstraints.from_dict(doc.get("robot", {}) if isinstance(doc.get("robot"), dict) else {})
    gen = replace(gen, agent_radius=robot.agent_radius, reach_distance=robot.reach_distance)

    def pick(name: str, default: Any) -> Any:
        val = getattr(args, name, None)
        return val if val not in (None, False) else doc.get(name, default)

    provider = pick("provider", "empirical")
    if provider not in PROVIDERS:
        raise HarnessError(f"unknown provider {provider!r}; choose from {', '.join(PROVIDERS)}")
    inflation = pick("inflation", None)
    suite = SuiteConfig(
        generation=gen, robot=robot, sensor=SensorConfig(**doc.get("sensor", {})), provider=provider,
        inflation=None if inflation is None else float(inflation),
        uncorrected_reach=bool(pick("uncorrected_reach", False)),
        no_interaction_offset=bool(pick("no_interaction_offset", False)),
        task_types=pick("task_type", None) or doc.get("task_types"),
        corpus_size=int(doc.get("corpus_size", 200)),
        matrix_path=pick("matrix", None),
        max_steps=pick("max_steps", None),
    )
    if provider == "llm-cache" and not suite.matrix_path:
        raise HarnessError("--provider llm-cache needs --matrix (produced by the ingest command)")
    seeds_src = args.seeds if args.seeds is not None else doc.get("seeds", "1..100")
    return RunConfig(
        suite=suite, seeds=parse_seeds(seeds_src), out=Path(pick("out", "runs/latest")),
        jobs=int(pick("jobs", 1)), robot_path=robot_path, world_path=args.world,
        artifacts=not args.no_artifacts, acceptance=dict(doc.get("acceptance", {})),
    )


# -- subcommands --------------------------------------------------------------------


def cmd_generate(args: argparse.Namespace) -> int:
    doc = _config_doc(args.config)
    gen = _generation(doc, args.preset)
    out = Path(args.out or f"world_{args.seed}.json")
    world = generate_world(args.seed, gen)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(world.dumps(), encoding="utf-8")
    print(out)
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    rc = build_run_config(args)
    worlds = None
    if rc.world_path:
        world = WorldGrid.loads(Path(rc.world_path).read_text(encoding="utf-8"))
        seed = world.seed if world.seed is not None else rc.seeds[0]
        rc.seeds, worlds = [seed], {seed: world}
    arts: list[EpisodeArtifacts] | None = [] if rc.artifacts else None
    report = run_suite(rc.suite, rc.seeds, jobs=rc.jobs, artifacts=arts, worlds=worlds)
    paths = write_report(report, rc.out)
    for a in arts or []:
        _write(rc.out / "traces" / f"seed_{a.seed:06d}.jsonl", EpisodeState(trace=a.trace).trace_jsonl().encode())
        _write(rc.out / "renders" / f"seed_{a.seed:06d}.png", a.render_png)
    print(report.text_table(), end="")
    print(f"report: {paths['report']}  sha256: {report.hash()}")
    return _verdict(report, rc.acceptance)


def _write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(data)


def _verdict(report: MetricsReport, thresholds: Mapping[str, float]) -> int:
    bad = check_report(report, thresholds)
    for msg in bad:
        print(f"acceptance failure: {msg}", file=sys.stderr)
    return EXIT_ACCEPTANCE if bad else EXIT_OK


def cmd_report(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    report = MetricsReport.from_dict(doc)
    print(report.text_table(), end="")
    print(f"sha256: {report.hash()}")
    if args.csv:
        Path(args.csv).write_text(report.episodes_csv(), encoding="utf-8")
    thresholds = dict(_config_doc(args.config).get("acceptance", {})) if args.config else {}
    return _verdict(report, thresholds)


def _axes(args: argparse.Namespace, spec: PromptSpec | None = None) -> tuple[list[str] | None, list[str] | None]:
    targets = args.targets.split(",") if args.targets else (spec.targets() if spec else None)
    landmarks = args.landmarks.split(",") if args.landmarks else (list(spec.landmarks) if spec else None)
    return targets, landmarks


def cmd_prompts(args: argparse.Namespace) -> int:
    spec = PromptSpec.load(args.spec) if args.spec else PromptSpec.default()
    if args.runs:
        spec = replace(spec, num_runs=args.runs)
    targets, landmarks = _axes(args, spec)
    records = prompt_records(spec, targets, landmarks)
    lines = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
    if args.out:
        _write(Path(args.out), lines.encode("utf-8"))
        print(f"{len(records)} prompt records -> {args.out}")
    else:
        sys.stdout.write(lines)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    targets, landmarks = _axes(args)
    matrix = aggregate_scores(read_scores(args.scores), targets, landmarks)
    if matrix.provenance != LLM:
        raise HarnessError("aggregated matrix lost its provenance tag")
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    matrix.save(out)
    print(f"{len(matrix.targets)}x{len(matrix.landmarks)} matrix -> {out}")
    return EXIT_OK


def cmd_render(args: argparse.Namespace) -> int:
    from .render import export_map, load_map, save_world_png

    out = Path(args.out)
    if args.map:
        written = export_map(load_map(Path(args.map).read_bytes()), out, scale=args.scale)
    else:
        if args.world:
            world = WorldGrid.loads(Path(args.world).read_text(encoding="utf-8"))
        else:
            doc = _config_doc(args.config)
            world = generate_world(args.seed, _generation(doc, args.preset))
        written = [save_world_png(world, out / "world.png", scale=args.scale)]
    for p in written:
        print(p)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="eifbench", description="Gridworld benchmark for modular embodied instruction following.",
        epilog=f"The {CONFIG_ENV} environment variable names a default config file. "
               "Exit codes: 0 ok, 1 harness error, 2 acceptance-suite failure.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp: argparse.ArgumentParser) -> None:
        sp.add_argument("--config", help=f"TOML or JSON config (default: ${CONFIG_ENV})")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="world generation preset")

    g = sub.add_parser("generate", help="write one serialized world")
    common(g)
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--out", help="output file (default world_SEED.json)")
    g.set_defaults(func=cmd_generate)

    r = sub.add_parser("run", help="run a seeded suite and write report, traces and renders",
                       epilog=ABLATIONS, formatter_class=argparse.RawDescriptionHelpFormatter)
    common(r)
    r.add_argument("--provider", choices=PROVIDERS, help="collocation prior source (default empirical)")
    r.add_argument("--matrix", help="collocation matrix file for --provider llm-cache")
    r.add_argument("--inflation", type=float, help="obstacle inflation radius override in meters")
    r.add_argument("--uncorrected-reach", action="store_true", help="use raw depth instead of the pitch-corrected distance")
    r.add_argument("--no-interaction-offset", action="store_true", help="ignore per-action standoff distances")
    r.add_argument("--robot", help="robot profile (TOML or JSON)")
    r.add_argument("--seeds", help="seed list such as 1..100 or 1,4,9 (default 1..100)")
    r.add_argument("--jobs", type=int, help="parallel worker processes")
    r.add_argument("--task-type", action="append", help="restrict sampled task types (repeatable)")
    r.add_argument("--max-steps", type=int, help="per-episode step limit")
    r.add_argument("--world", help="run one episode on a world written by the generate command")
    r.add_argument("--no-artifacts", action="store_true", help="skip traces and renders")
    r.add_argument("--out", help="output directory (default runs/latest)")
    r.set_defaults(func=cmd_run)

    pr = sub.add_parser("prompts", help="dump completion prompts for offline scoring")
    pr.add_argument("--spec", help="prompt spec file (names, landmarks, contexts, runs, seed)")
    pr.add_argument("--targets", help="comma-separated target categories")
    pr.add_argument("--landmarks", help="comma-separated landmark categories")
    pr.add_argument("--runs", type=int, help="override the number of runs per pair")
    pr.add_argument("--out", help="JSON-lines output (default stdout)")
    pr.set_defaults(func=cmd_prompts)

    ig = sub.add_parser("ingest", help="aggregate a score file into a collocation matrix")
    ig.add_argument("scores", help="JSON-lines score records")
    ig.add_argument("--targets", help="comma-separated targets that must be covered")
    ig.add_argument("--landmarks", help="comma-separated landmarks that must be covered")
    ig.add_argument("--out", required=True, help="matrix JSON output")
    ig.set_defaults(func=cmd_ingest)

    rp = sub.add_parser("report", help="print a saved report and check its properties")
    rp.add_argument("report", help="report.json written by the run command")
    rp.add_argument("--config", help="config whose [acceptance] thresholds to check")
    rp.add_argument("--csv", help="also write the per-episode CSV here")
    rp.set_defaults(func=cmd_report)

    rd = sub.add_parser("render", help="render a world or a map dump to PNG")
    common(rd)
    src = rd.add_mutually_exclusive_group(required=True)
    src.add_argument("--world", help="world file")
    src.add_argument("--map", help="raw map dump")
    src.add_argument("--seed", type=int, help="generate and render this seed")
    rd.add_argument("--scale", type=int, default=4, help="pixels per cell")
    rd.add_argument("--out", required=True, help="output directory")
    rd.set_defaults(func=cmd_render)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (HarnessError, ScoreError, PromptConfigError, GenerationError, OSError, ValueError, KeyError) as exc:
        print(f"eifbench: error: {exc}", file=sys.stderr)
        return EXIT_HARNESS


if __name__ == "__main__":
    sys.exit(main())
