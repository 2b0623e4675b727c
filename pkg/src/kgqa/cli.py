"""Command-line interface.

    kgqa load --triples f --entities f
    kgqa ask "<question>" [--interactive] ...
    kgqa eval --dataset f --mode {replay,record,mock} ...
    kgqa grid --entity 0.5:0.9:0.1 --intent 0.5:0.9:0.1 ...
    kgqa build-unamb --transcripts dir --out f ...
    kgqa stats --unamb f
    kgqa serve --port n ...
    kgqa plot-dist --reports f [--bins n] [--raw]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import dialogue, kg, llm, pipeline
from .config import RunConfig, load_config


def parse_range(spec: str) -> list[float]:
    """Parse start:stop:step (inclusive) into a float grid."""
    try:
        start, stop, step = (float(x) for x in spec.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad range spec {spec!r}, want start:stop:step")
    if step <= 0:
        raise argparse.ArgumentTypeError("step must be positive")
    values = []
    k = 0
    while True:
        value = round(start + k * step, 10)
        if value > stop + 1e-9:
            break
        values.append(value)
        k += 1
    return values


def _add_graph_args(sub):
    sub.add_argument("--triples", required=True, help="triples fixture (TSV)")
    sub.add_argument("--entities", required=True, help="entity metadata (JSON Lines)")


def _add_backend_args(sub):
    sub.add_argument("--config", help="JSON config file")
    sub.add_argument("--mode", choices=["remote", "record", "replay", "mock"],
                     help="override LLM mode")
    sub.add_argument("--cassette", help="cassette path for record/replay")


def _load_runtime(args) -> tuple[RunConfig, "llm.LlmConfig"]:
    run_config, llm_config = load_config(getattr(args, "config", None))
    if getattr(args, "mode", None):
        llm_config.mode = args.mode
    if getattr(args, "cassette", None):
        llm_config.cassette = args.cassette
    return run_config, llm_config


def _load_graph(args) -> kg.KnowledgeGraph:
    return kg.load_graph(args.triples, args.entities)


def cmd_load(args) -> int:
    graph = _load_graph(args)
    print(f"loaded {len(graph.triples)} triples, {len(graph.entities)} entities, "
          f"{len(graph.name_index)} indexed names")
    return 0


def cmd_ask(args) -> int:
    run_config, llm_config = _load_runtime(args)
    graph = _load_graph(args)
    backend = llm.make_backend(llm_config)
    backends = dialogue.Backends(chat=backend, ppl=backend)

    if args.interactive:
        def clarifier(request: str) -> str:
            print(f"\n[clarification requested] {request}")
            return input("> ").strip() or "No preference."
    else:
        def clarifier(request: str) -> str:
            return "No preference; use your best judgment."

    def on_event(event: dict):
        kind = event["kind"]
        if kind == "thought":
            print(f"Thought: {event['text']}")
        elif kind == "tool_call" and not event.get("malformed"):
            print(f"Action: {event['tool']}({', '.join(repr(a) for a in event['args'])})")
        elif kind == "observation":
            print(f"Observation: {event['text']}")
        elif kind == "hint":
            print(event["text"])
        elif kind == "clarification_request":
            pass  # printed by the clarifier
        elif kind == "final_answer":
            print(f"Final SPARQL: {event['sparql']}")
            for row in event["rows"]:
                print("  " + ", ".join(row))
        elif kind == "error":
            print(f"Session failed: {event['reason']}", file=sys.stderr)

    transcript = dialogue.run_session(args.question, run_config, backends, graph,
                                      clarifier, on_event=on_event)
    if args.out:
        Path(args.out).write_text(json.dumps(transcript.to_dict(), indent=2) + "\n",
                                  encoding="utf-8")
        print(f"transcript written to {args.out}")
    return 0 if transcript.session.status == "finished" else 1


def _make_backends_factory(llm_config):
    def factory() -> dialogue.Backends:
        backend = llm.make_backend(llm_config)
        return dialogue.Backends(chat=backend, ppl=backend)
    return factory


def cmd_eval(args) -> int:
    run_config, llm_config = _load_runtime(args)
    graph = _load_graph(args)
    items = pipeline.load_dataset(args.dataset)
    backends = _make_backends_factory(llm_config)()
    clarifier_mode = "rule" if llm_config.mode == "mock" else "llm"
    report = pipeline.evaluate_dataset(items, run_config, backends, graph,
                                       clarifier_mode=clarifier_mode)
    print(json.dumps(report.overall, indent=2))
    for category, stats in report.per_category.items():
        print(f"{category}: f1={stats['f1']:.4f} rhits1={stats['rhits1']:.4f} "
              f"em={stats['em']:.4f} (n={int(stats['n'])})")
    if report.failures:
        print(f"failures: {len(report.failures)}")
        for failure in report.failures:
            print(f"  {failure}")
    if args.out:
        Path(args.out).write_text(json.dumps(report.to_dict(), indent=2) + "\n",
                                  encoding="utf-8")
        csv_path = Path(args.out).with_suffix(".csv")
        csv_path.write_text(report.per_item_csv(), encoding="utf-8")
        print(f"report written to {args.out} (per-item CSV: {csv_path})")
    return 0


def cmd_grid(args) -> int:
    run_config, llm_config = _load_runtime(args)
    graph = _load_graph(args)
    items = pipeline.load_dataset(args.dataset)
    clarifier_mode = "rule" if llm_config.mode == "mock" else "llm"
    points = pipeline.grid_search(items, parse_range(args.entity),
                                  parse_range(args.intent), run_config,
                                  _make_backends_factory(llm_config), graph,
                                  clarifier_mode=clarifier_mode)
    csv = pipeline.grid_csv(points)
    print(csv, end="")
    if args.out:
        Path(args.out).write_text(csv, encoding="utf-8")
    return 0


def cmd_build_unamb(args) -> int:
    _, llm_config = _load_runtime(args)
    backend = llm.make_backend(llm_config)
    items = []
    paths = sorted(Path(args.transcripts).glob("*.json"))
    if not paths:
        print(f"no transcript files in {args.transcripts}", file=sys.stderr)
        return 1
    for path in paths:
        transcript = dialogue.Transcript.from_dict(
            json.loads(path.read_text(encoding="utf-8")))
        items.append(pipeline.build_unambiguous_item(transcript, backend,
                                                     item_id=path.stem))
    pipeline.write_unamb_items(items, args.out)
    print(f"wrote {len(items)} items to {args.out}")
    return 0


def cmd_stats(args) -> int:
    items = pipeline.load_unamb_items(args.unamb)
    table = pipeline.stats_table(items)
    print("\t".join(pipeline.STATS_COLUMNS))
    print("\t".join(f"{table[c]:.2f}" if isinstance(table[c], float) else str(table[c])
                    for c in pipeline.STATS_COLUMNS))
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import SessionService, create_app

    run_config, llm_config = _load_runtime(args)
    graph = _load_graph(args)
    service = SessionService(graph, run_config, _make_backends_factory(llm_config))
    uvicorn.run(create_app(service), host=args.host, port=args.port)
    return 0


def cmd_plot_dist(args) -> int:
    report = json.loads(Path(args.reports).read_text(encoding="utf-8"))
    scores = [(entry["kind"], float(entry["score"]))
              for item in report.get("per_item", [])
              for entry in item.get("scores", [])]
    if args.raw:
        print("kind,score")
        for kind, score in scores:
            print(f"{kind},{score}")
        return 0
    bins = args.bins
    print("kind,bin_lo,bin_hi,count")
    for kind in ("entity", "intent"):
        values = [s for k, s in scores if k == kind]
        for b in range(bins):
            lo, hi = b / bins, (b + 1) / bins
            count = sum(1 for v in values
                        if lo <= v < hi or (b == bins - 1 and v == 1.0))
            print(f"{kind},{lo},{hi},{count}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kgqa",
                                     description="Knowledge-graph QA with clarification")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("load", help="load and validate a fixture graph")
    _add_graph_args(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("ask", help="answer one question")
    p.add_argument("question")
    p.add_argument("--interactive", action="store_true",
                   help="read clarification responses from stdin")
    p.add_argument("--out", help="write the transcript JSON here")
    _add_graph_args(p)
    _add_backend_args(p)
    p.set_defaults(func=cmd_ask)

    p = sub.add_parser("eval", help="evaluate a dataset with the simulated user")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="write the report JSON here")
    _add_graph_args(p)
    _add_backend_args(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("grid", help="threshold grid search")
    p.add_argument("--entity", default="0.5:0.9:0.1", help="start:stop:step")
    p.add_argument("--intent", default="0.5:0.9:0.1", help="start:stop:step")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", help="write the grid CSV here")
    _add_graph_args(p)
    _add_backend_args(p)
    p.set_defaults(func=cmd_grid)

    p = sub.add_parser("build-unamb", help="build the disambiguated dataset")
    p.add_argument("--transcripts", required=True, help="directory of transcript JSONs")
    p.add_argument("--out", required=True)
    _add_backend_args(p)
    p.set_defaults(func=cmd_build_unamb)

    p = sub.add_parser("stats", help="statistics of a disambiguated dataset")
    p.add_argument("--unamb", required=True)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--host", default="127.0.0.1")
    _add_graph_args(p)
    _add_backend_args(p)
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("plot-dist", help="score-distribution table from a report")
    p.add_argument("--reports", required=True, help="report JSON from eval --out")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--raw", action="store_true", help="emit raw kind,score rows")
    p.set_defaults(func=cmd_plot_dist)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
