"""Command line front end.

    report --metrics m.jsonl --kind success --out fig.png
    report --roadmap rm.json --instance inst.json --solution sol.json \
        --kind roadmap --out fig.png

Exit codes: 0 on success, 1 when an input is missing or invalid, 2 on
usage errors.
"""
import argparse
import sys

from .figures import PlotSpec, render
from .formats import ReportError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="report", description="Render benchmark figures.")
    parser.add_argument("--kind", required=True, choices=("success", "cost", "runtime", "roadmap"))
    parser.add_argument("--out", required=True, help="output image path")
    parser.add_argument("--metrics", help="metrics JSONL (success/cost/runtime kinds)")
    parser.add_argument("--roadmap", help="roadmap dump JSON (roadmap kind)")
    parser.add_argument("--instance", help="instance JSON (roadmap kind)")
    parser.add_argument("--solution", help="solution JSON to overlay (roadmap kind)")
    parser.add_argument("--agent", type=int, default=0, help="agent index for roadmap renders")
    parser.add_argument("--dpi", type=int, default=150)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.kind == "roadmap":
        if args.roadmap is None or args.instance is None:
            parser.error("kind 'roadmap' needs --roadmap and --instance")
    elif args.metrics is None:
        parser.error(f"kind {args.kind!r} needs --metrics")
    spec = PlotSpec(kind=args.kind, out=args.out, metrics=args.metrics, roadmap=args.roadmap,
                    instance=args.instance, solution=args.solution, agent=args.agent,
                    dpi=args.dpi)
    try:
        render(spec)
    except (ReportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(f"wrote {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
