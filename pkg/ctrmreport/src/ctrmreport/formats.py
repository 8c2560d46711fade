"""Read-only loaders for the planner's output files.

Four formats: metrics JSONL streams from `ctrmplan evaluate`/`ablate`,
roadmap dumps from `ctrmplan build-roadmap`, instance files from
`ctrmplan gen-instances`, and solution files from `ctrmplan plan --out`.
Every loader raises ReportError with the offending path in the message.
"""
import json
import os

METRIC_FIELDS = ("method", "instance", "success", "agents", "roadmap_build_ms", "planning_ms")


class ReportError(ValueError):
    """An input file is missing, unparseable, or structurally wrong."""


def _load_json(path: str) -> dict:
    if not os.path.exists(path):
        raise ReportError(f"{path}: no such file")
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(doc, dict):
        raise ReportError(f"{path}: expected a JSON object")
    return doc


def read_metrics(path: str) -> tuple[dict, list[dict]]:
    """Parse a metrics stream into (config record, metrics records).

    The config record is the stream's first line when present, else {}.
    An empty stream is an error: there is nothing to plot.
    """
    if not os.path.exists(path):
        raise ReportError(f"{path}: no such file")
    config: dict = {}
    records: list[dict] = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReportError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            kind = doc.get("record")
            if kind == "config":
                config = doc
            elif kind == "metrics":
                missing = [key for key in METRIC_FIELDS if key not in doc]
                if missing:
                    raise ReportError(f"{path}:{lineno}: metrics record missing {missing}")
                records.append(doc)
            else:
                raise ReportError(f"{path}:{lineno}: unknown record kind {kind!r}")
    if not records:
        raise ReportError(f"{path}: no metrics records")
    return config, records


def read_roadmap(path: str) -> dict:
    doc = _load_json(path)
    if doc.get("kind") not in ("static", "timed"):
        raise ReportError(f"{path}: roadmap kind must be 'static' or 'timed'")
    if not isinstance(doc.get("agents"), list) or not doc["agents"]:
        raise ReportError(f"{path}: roadmap has no agents")
    return doc


def read_instance(path: str) -> dict:
    doc = _load_json(path)
    for key in ("obstacles", "starts", "goals"):
        if key not in doc:
            raise ReportError(f"{path}: instance missing {key!r}")
    return doc


def read_solution(path: str) -> dict:
    doc = _load_json(path)
    if "success" not in doc:
        raise ReportError(f"{path}: solution missing 'success'")
    if doc["success"] and "paths" not in doc:
        raise ReportError(f"{path}: successful solution missing 'paths'")
    return doc


def by_method(records: list[dict]) -> dict[str, list[dict]]:
    """Group metrics records by method, keeping first-seen order."""
    groups: dict[str, list[dict]] = {}
    for rec in records:
        groups.setdefault(rec["method"], []).append(rec)
    return groups
