"""Fixture files mirroring the planner's documented output formats."""
import json

import pytest

CONFIG_LINE = {"record": "config", "command": "evaluate", "methods": "ctrm-25,random-3000",
               "seed": 7}

METRICS_RECORDS = [
    {"record": "metrics", "method": "ctrm-25", "instance": "i0000", "success": True,
     "agents": 4, "roadmap_build_ms": 5.0, "planning_ms": 2.0, "sum_of_costs": 10.5,
     "expanded_nodes": 80, "vertices_per_agent_per_timestep": 12.0},
    {"record": "metrics", "method": "ctrm-25", "instance": "i0001", "success": True,
     "agents": 5, "roadmap_build_ms": 7.0, "planning_ms": 3.0, "sum_of_costs": 12.0,
     "expanded_nodes": 120, "vertices_per_agent_per_timestep": 14.0},
    {"record": "metrics", "method": "random-3000", "instance": "i0000", "success": True,
     "agents": 4, "roadmap_build_ms": 40.0, "planning_ms": 30.0, "sum_of_costs": 9.0,
     "expanded_nodes": 900, "vertices_per_agent_per_timestep": 3002.0},
    {"record": "metrics", "method": "random-3000", "instance": "i0001", "success": False,
     "agents": 5, "roadmap_build_ms": 42.0, "planning_ms": 55.0},
]

ROADMAP_STATIC = {
    "kind": "static",
    "agents": [
        {"points": [[0.3, 0.3], [0.5, 0.5], [0.7, 0.7], [0.2, 0.2], [0.8, 0.8]],
         "edges": [[0, 1], [1, 2], [0, 3], [2, 4]],
         "base_count": 3},
        {"points": [[0.5, 0.3], [0.8, 0.2], [0.2, 0.8]],
         "edges": [[0, 1], [0, 2]],
         "base_count": 1},
    ],
    "config": {"command": "build-roadmap", "method": "random-3000", "seed": 7},
}

ROADMAP_TIMED = {
    "kind": "timed",
    "agents": [
        {"layers": [[[0.2, 0.2]],
                    [[0.25, 0.25], [0.22, 0.18]],
                    [[0.3, 0.3]]],
         "edges": [[0, 0, 0], [0, 0, 1], [1, 0, 0], [1, 1, 0]]},
        {"layers": [[[0.8, 0.2]],
                    [[0.75, 0.25]]],
         "edges": [[0, 0, 0]]},
    ],
    "t_makespan": 2,
    "complete": True,
}

INSTANCE = {
    "scenario": "basic",
    "seed": 7,
    "obstacles": [{"cx": 0.5, "cy": 0.3, "r": 0.1}, {"cx": 0.7, "cy": 0.7, "r": 0.05}],
    "agents": [{"radius": 0.015625, "speed": 0.03125}, {"radius": 0.015625, "speed": 0.03125}],
    "starts": [[0.2, 0.2], [0.8, 0.2]],
    "goals": [[0.8, 0.8], [0.2, 0.8]],
}

SOLUTION = {
    "success": True,
    "paths": [[[0.2, 0.2], [0.5, 0.5], [0.8, 0.8]],
              [[0.8, 0.2], [0.5, 0.5], [0.2, 0.8]]],
    "sum_of_costs": 4.0,
    "makespan": 2,
    "expanded_nodes": 37,
    "wall_time_ms": 1.5,
}


def write_metrics(path, records, config=CONFIG_LINE):
    lines = [json.dumps(config, sort_keys=True)]
    lines += [json.dumps(rec, sort_keys=True) for rec in records]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture
def metrics_file(tmp_path):
    return write_metrics(tmp_path / "metrics.jsonl", METRICS_RECORDS)


@pytest.fixture
def roadmap_file(tmp_path):
    path = tmp_path / "roadmap.json"
    path.write_text(json.dumps(ROADMAP_STATIC))
    return str(path)


@pytest.fixture
def timed_roadmap_file(tmp_path):
    path = tmp_path / "roadmap_timed.json"
    path.write_text(json.dumps(ROADMAP_TIMED))
    return str(path)


@pytest.fixture
def instance_file(tmp_path):
    path = tmp_path / "instance.json"
    path.write_text(json.dumps(INSTANCE))
    return str(path)


@pytest.fixture
def solution_file(tmp_path):
    path = tmp_path / "solution.json"
    path.write_text(json.dumps(SOLUTION))
    return str(path)
