"""Problem-instance generation and JSON serialization.

Five scenario families at two profiles.  "paper" matches the original
benchmark sizes (21-40 agents); "desk" shrinks agent and obstacle counts so a
full train/evaluate cycle fits on a laptop CPU.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import AgentSpec, Obstacle, Point2, World, dist, in_free_space

BASE_SPEED = 1 / 32
BASE_RADIUS = 1 / 64
OBSTACLE_RADIUS_RANGE = (1 / 64, 1 / 16)
HETERO_MULTIPLIERS = (1.0, 1.25, 1.5)


class GenerationTimeout(RuntimeError):
    """Rejection sampling exceeded its attempt budget (over-constrained config)."""


class ParseError(ValueError):
    """Instance document malformed; message names the offending field."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    agent_count_range: tuple[int, int]
    obstacle_count: int
    base_speed: float = BASE_SPEED
    base_radius: float = BASE_RADIUS
    hetero_multipliers: tuple[float, ...] = ()  # empty means homogeneous agents
    obstacle_radius_range: tuple[float, float] = OBSTACLE_RADIUS_RANGE
    rng_seed: int = 0
    max_attempts: int = 100_000

    def __post_init__(self) -> None:
        lo, hi = self.agent_count_range
        if not (1 <= lo <= hi <= 1000):
            raise ValueError(f"agent_count_range must sit inside [1,1000], got {lo}..{hi}")
        if self.obstacle_count < 0:
            raise ValueError("obstacle_count must be >= 0")


_PAPER_SCENARIOS = {
    "basic": ScenarioConfig("basic", (21, 30), 10),
    "more_agents": ScenarioConfig("more_agents", (31, 40), 10),
    "no_obstacles": ScenarioConfig("no_obstacles", (21, 30), 0),
    "more_obstacles": ScenarioConfig("more_obstacles", (21, 30), 20),
    "hetero_agents": ScenarioConfig(
        "hetero_agents", (21, 30), 10, hetero_multipliers=HETERO_MULTIPLIERS
    ),
}

_DESK_SCENARIOS = {
    "basic": ScenarioConfig("basic", (4, 6), 2),
    "more_agents": ScenarioConfig("more_agents", (6, 8), 2),
    "no_obstacles": ScenarioConfig("no_obstacles", (4, 6), 0),
    "more_obstacles": ScenarioConfig("more_obstacles", (4, 6), 4),
    "hetero_agents": ScenarioConfig(
        "hetero_agents", (4, 6), 2, hetero_multipliers=HETERO_MULTIPLIERS
    ),
}

SCENARIO_NAMES = tuple(_PAPER_SCENARIOS)
PROFILES = ("desk", "paper")


def scenario_config(name: str, profile: str = "desk", **overrides) -> ScenarioConfig:
    """Look up a named scenario at the given profile, optionally overriding fields."""
    table = {"paper": _PAPER_SCENARIOS, "desk": _DESK_SCENARIOS}.get(profile)
    if table is None:
        raise ValueError(f"unknown profile {profile!r}, expected one of {PROFILES}")
    cfg = table.get(name)
    if cfg is None:
        raise ValueError(f"unknown scenario {name!r}, expected one of {SCENARIO_NAMES}")
    return replace(cfg, **overrides) if overrides else cfg


@dataclass(frozen=True)
class ProblemInstance:
    world: World
    agents: tuple[AgentSpec, ...]
    starts: tuple[Point2, ...]
    goals: tuple[Point2, ...]
    scenario: str = ""
    seed: int | None = None

    @property
    def num_agents(self) -> int:
        return len(self.agents)


def validate_instance(inst: ProblemInstance) -> list[str]:
    """Collect human-readable invariant violations (empty list = valid)."""
    problems: list[str] = []
    n = len(inst.agents)
    if n < 1:
        problems.append("agents: must contain at least one agent")
    if len(inst.starts) != n or len(inst.goals) != n:
        problems.append(
            f"starts/goals: lengths {len(inst.starts)}/{len(inst.goals)} do not match {n} agents"
        )
        return problems
    for i, (agent, s, g) in enumerate(zip(inst.agents, inst.starts, inst.goals)):
        for label, p in (("start", s), ("goal", g)):
            if not (math.isfinite(p[0]) and math.isfinite(p[1])):
                problems.append(f"{label}[{i}]: coordinates must be finite")
            elif not in_free_space(p, agent, inst.world):
                problems.append(f"{label}[{i}]: not in the agent's free space")
    for i in range(n):
        for j in range(i + 1, n):
            rsum = inst.agents[i].radius + inst.agents[j].radius
            if dist(inst.starts[i], inst.starts[j]) < rsum:
                problems.append(f"starts[{i}]/starts[{j}]: discs overlap")
            if dist(inst.goals[i], inst.goals[j]) < rsum:
                problems.append(f"goals[{i}]/goals[{j}]: discs overlap")
    return problems


def _place_discs(
    agents: tuple[AgentSpec, ...],
    world: World,
    rng: np.random.Generator,
    budget: int,
) -> tuple[Point2, ...]:
    """Rejection-sample one non-overlapping free-space point per agent."""
    placed: list[Point2] = []
    attempts = 0
    for agent in agents:
        r = agent.radius
        while True:
            attempts += 1
            if attempts > budget:
                raise GenerationTimeout(
                    f"placed {len(placed)}/{len(agents)} discs in {budget} attempts"
                )
            p = (
                float(rng.uniform(r, 1.0 - r)),
                float(rng.uniform(r, 1.0 - r)),
            )
            if not in_free_space(p, agent, world):
                continue
            if any(
                dist(p, q) < r + other.radius for q, other in zip(placed, agents)
            ):
                continue
            placed.append(p)
            break
    return tuple(placed)


def generate_instance(cfg: ScenarioConfig, rng: np.random.Generator) -> ProblemInstance:
    """Draw one random instance: obstacles first, then agents, then endpoints."""
    n = int(rng.integers(cfg.agent_count_range[0], cfg.agent_count_range[1] + 1))
    lo, hi = cfg.obstacle_radius_range
    obstacles = tuple(
        Obstacle((float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 1.0))), float(rng.uniform(lo, hi)))
        for _ in range(cfg.obstacle_count)
    )
    world = World(obstacles)
    if cfg.hetero_multipliers:
        mults = [float(rng.choice(cfg.hetero_multipliers)) for _ in range(n)]
    else:
        mults = [1.0] * n
    agents = tuple(AgentSpec(m * cfg.base_radius, m * cfg.base_speed) for m in mults)
    starts = _place_discs(agents, world, rng, cfg.max_attempts)
    goals = _place_discs(agents, world, rng, cfg.max_attempts)
    return ProblemInstance(world, agents, starts, goals, scenario=cfg.name, seed=cfg.rng_seed)


def instance_to_dict(inst: ProblemInstance) -> dict:
    return {
        "scenario": inst.scenario,
        "seed": inst.seed,
        "obstacles": [
            {"cx": ob.center[0], "cy": ob.center[1], "r": ob.radius}
            for ob in inst.world.obstacles
        ],
        "agents": [{"radius": a.radius, "speed": a.max_speed} for a in inst.agents],
        "starts": [[p[0], p[1]] for p in inst.starts],
        "goals": [[p[0], p[1]] for p in inst.goals],
    }


def save_instance(inst: ProblemInstance, extra: dict | None = None) -> str:
    """Serialize to JSON text; extra keys (e.g. run config) are merged in."""
    doc = instance_to_dict(inst)
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True)


def _require(doc: dict, key: str, kind: type) -> object:
    if key not in doc:
        raise ParseError(f"missing field {key!r}")
    value = doc[key]
    if not isinstance(value, kind):
        raise ParseError(f"field {key!r}: expected {kind.__name__}, got {type(value).__name__}")
    return value


def _point(raw: object, where: str) -> Point2:
    if (
        not isinstance(raw, (list, tuple))
        or len(raw) != 2
        or not all(isinstance(v, (int, float)) for v in raw)
    ):
        raise ParseError(f"field {where}: expected [x, y] pair")
    return (float(raw[0]), float(raw[1]))


def load_instance(text: str) -> ProblemInstance:
    """Parse and fully validate an instance document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ParseError(f"invalid JSON at line {err.lineno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise ParseError("top level: expected an object")
    obstacles = []
    for idx, raw in enumerate(_require(doc, "obstacles", list)):
        if not isinstance(raw, dict):
            raise ParseError(f"field obstacles[{idx}]: expected an object")
        try:
            obstacles.append(
                Obstacle((float(raw["cx"]), float(raw["cy"])), float(raw["r"]))
            )
        except KeyError as err:
            raise ParseError(f"field obstacles[{idx}]: missing key {err.args[0]!r}") from err
        except (TypeError, ValueError) as err:
            raise ParseError(f"field obstacles[{idx}]: {err}") from err
    agents = []
    raw_agents = _require(doc, "agents", list)
    if not raw_agents:
        raise ParseError("field 'agents': must contain at least one agent")
    for idx, raw in enumerate(raw_agents):
        if not isinstance(raw, dict):
            raise ParseError(f"field agents[{idx}]: expected an object")
        try:
            agents.append(AgentSpec(float(raw["radius"]), float(raw["speed"])))
        except KeyError as err:
            raise ParseError(f"field agents[{idx}]: missing key {err.args[0]!r}") from err
        except (TypeError, ValueError) as err:
            raise ParseError(f"field agents[{idx}]: {err}") from err
    starts = tuple(
        _point(raw, f"starts[{i}]") for i, raw in enumerate(_require(doc, "starts", list))
    )
    goals = tuple(
        _point(raw, f"goals[{i}]") for i, raw in enumerate(_require(doc, "goals", list))
    )
    seed = doc.get("seed")
    if seed is not None and not isinstance(seed, int):
        raise ParseError("field 'seed': expected integer or null")
    inst = ProblemInstance(
        World(tuple(obstacles)),
        tuple(agents),
        starts,
        goals,
        scenario=str(doc.get("scenario", "")),
        seed=seed,
    )
    problems = validate_instance(inst)
    if problems:
        raise ParseError("; ".join(problems))
    return inst
