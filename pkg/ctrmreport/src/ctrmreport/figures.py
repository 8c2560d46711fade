"""The four figure kinds.

success  - success rate against roadmap size (vertices per agent per
           timestep), one marker per method
cost     - sum of costs against expanded search nodes, successful runs
           only, per-run points plus a per-method mean
runtime  - per-method stacked bars: roadmap build time under planning time
roadmap  - one agent's roadmap with obstacles and the solution polyline
"""
import os
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from matplotlib.collections import LineCollection

from .formats import ReportError, by_method, read_instance, read_metrics, read_roadmap, read_solution

OBSTACLE_COLOR = "0.45"
EDGE_COLOR = "0.75"


@dataclass
class PlotSpec:
    """One figure request: what to draw, from which files, to where."""

    kind: str  # "success" | "cost" | "runtime" | "roadmap"
    out: str
    metrics: str | None = None
    roadmap: str | None = None
    instance: str | None = None
    solution: str | None = None
    agent: int = 0
    dpi: int = 150


def success_figure(records: list[dict]):
    """Success rate vs mean vertices per agent per timestep, per method."""
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    for name, recs in by_method(records).items():
        rate = float(np.mean([r["success"] for r in recs]))
        sizes = [r["vertices_per_agent_per_timestep"] for r in recs if r["success"]]
        # roadmap size is only recorded on success; a method that never
        # succeeded still gets a legend entry, just no marker
        x = float(np.mean(sizes)) if sizes else np.nan
        ax.plot([x], [rate], marker="o", markersize=8, linestyle="", label=name)
    ax.set_xscale("log")
    ax.set_xlabel("vertices per agent per timestep")
    ax.set_ylabel("success rate")
    ax.set_ylim(-0.05, 1.05)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def cost_figure(records: list[dict]):
    """Sum of costs vs expanded nodes on the runs that solved their instance."""
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    for name, recs in by_method(records).items():
        solved = [r for r in recs if r["success"]]
        xs = [r["expanded_nodes"] for r in solved]
        ys = [r["sum_of_costs"] for r in solved]
        ax.plot(xs, ys, marker=".", markersize=5, linestyle="", alpha=0.6, label=name)
        if solved:
            color = ax.get_lines()[-1].get_color()
            ax.plot([np.mean(xs)], [np.mean(ys)], marker="D", markersize=9,
                    linestyle="", color=color, markeredgecolor="black")
    ax.set_xscale("log")
    ax.set_xlabel("expanded search nodes")
    ax.set_ylabel("sum of costs")
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def runtime_figure(records: list[dict]):
    """Stacked mean runtimes per method; total bar height is build + planning."""
    groups = by_method(records)
    names = list(groups)
    build = [float(np.mean([r["roadmap_build_ms"] for r in recs])) for recs in groups.values()]
    plan = [float(np.mean([r["planning_ms"] for r in recs])) for recs in groups.values()]
    fig, ax = plt.subplots(figsize=(4.8, 3.6))
    xs = np.arange(len(names))
    ax.bar(xs, build, width=0.6, label="roadmap build")
    ax.bar(xs, plan, width=0.6, bottom=build, label="planning")
    ax.set_xticks(xs)
    ax.set_xticklabels(names, rotation=15, ha="right")
    ax.set_ylabel("runtime (ms)")
    ax.grid(True, axis="y", alpha=0.3)
    ax.legend()
    fig.tight_layout()
    return fig


def _roadmap_geometry(entry: dict, kind: str):
    """One agent's dump entry -> (vertex array, list of edge segments)."""
    if kind == "static":
        points = np.asarray(entry["points"], dtype=float)
        segments = [(points[i], points[j]) for i, j in entry["edges"]]
        return points, segments
    layers = [np.asarray(layer, dtype=float).reshape(-1, 2) for layer in entry["layers"]]
    points = np.concatenate(layers) if layers else np.zeros((0, 2))
    segments = [(layers[t][i], layers[t + 1][j]) for t, i, j in entry["edges"]]
    return points, segments


def roadmap_figure(roadmap_doc: dict, instance_doc: dict, solution_doc: dict | None = None,
                   agent: int = 0):
    """Draw one agent's roadmap: vertices, edges, obstacles, solution path."""
    agents = roadmap_doc["agents"]
    if not 0 <= agent < len(agents):
        raise ReportError(f"agent {agent} out of range (roadmap has {len(agents)})")
    points, segments = _roadmap_geometry(agents[agent], roadmap_doc["kind"])

    fig, ax = plt.subplots(figsize=(4.8, 4.8))
    ax.set_aspect("equal")
    ax.set_xlim(0.0, 1.0)
    ax.set_ylim(0.0, 1.0)
    for ob in instance_doc["obstacles"]:
        ax.add_patch(plt.Circle((ob["cx"], ob["cy"]), ob["r"], color=OBSTACLE_COLOR, zorder=1))
    if segments:
        ax.add_collection(LineCollection(segments, colors=EDGE_COLOR, linewidths=0.4, zorder=2))
    if len(points):
        ax.scatter(points[:, 0], points[:, 1], s=4, color="tab:blue", zorder=3)
    if solution_doc is not None and solution_doc.get("success"):
        paths = solution_doc["paths"]
        if not 0 <= agent < len(paths):
            raise ReportError(f"agent {agent} out of range (solution has {len(paths)} paths)")
        path = np.asarray(paths[agent], dtype=float)
        ax.plot(path[:, 0], path[:, 1], color="tab:red", linewidth=1.8, zorder=4)
        ax.plot(*path[0], marker="o", color="tab:red", zorder=5)
        ax.plot(*path[-1], marker="*", markersize=11, color="tab:red", zorder=5)
    ax.set_title(f"agent {agent}")
    fig.tight_layout()
    return fig


def render(spec: PlotSpec) -> str:
    """Build the requested figure and write it to spec.out."""
    if spec.kind == "roadmap":
        if spec.roadmap is None or spec.instance is None:
            raise ReportError("kind 'roadmap' needs --roadmap and --instance")
        roadmap_doc = read_roadmap(spec.roadmap)
        instance_doc = read_instance(spec.instance)
        solution_doc = read_solution(spec.solution) if spec.solution else None
        fig = roadmap_figure(roadmap_doc, instance_doc, solution_doc, spec.agent)
    else:
        if spec.metrics is None:
            raise ReportError(f"kind {spec.kind!r} needs --metrics")
        _, records = read_metrics(spec.metrics)
        if spec.kind == "success":
            fig = success_figure(records)
        elif spec.kind == "cost":
            fig = cost_figure(records)
        elif spec.kind == "runtime":
            fig = runtime_figure(records)
        else:
            raise ReportError(f"unknown figure kind {spec.kind!r}")
    out_dir = os.path.dirname(spec.out)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    fig.savefig(spec.out, dpi=spec.dpi)
    plt.close(fig)
    return spec.out
