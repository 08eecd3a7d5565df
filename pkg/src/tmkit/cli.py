"""``tm``: validate, format, render, check and simulate ``.tm`` files.

Exit codes: 0 success, 1 parse or validation errors, 2 usage errors
(including unreadable files), 3 simulation errors.
"""

from __future__ import annotations

import argparse
import difflib
import json
import math
import os
import sys
from pathlib import Path

from . import __version__
from .config import SimConfig
from .dsl import Document, ParseFailure, SourceSpan, parse, serialize
from .errors import InvalidModel, SimulationError, TMError
from .eventing import build_chronology, carve, check_coverage
from .export import RenderOptions, event_overlay, region_table, table_render, to_dot
from .model import ArcRef, StageRef, validate
from .simulator import init, run, schedule_table

OK, INVALID, USAGE, SIM_FAILED = 0, 1, 2, 3


class Usage(Exception):
    """Bad invocation: reported on stderr, exit code 2."""


def _colour(stream) -> bool:
    setting = os.environ.get("TM_COLOR")
    if setting is not None:
        return setting != "0"
    return hasattr(stream, "isatty") and stream.isatty()


def _paint(text: str, code: str, stream) -> str:
    return f"\033[{code}m{text}\033[0m" if _colour(stream) else text


def _err(msg: str, kind: str = "error"):
    tag = _paint(f"{kind}:", "31;1" if kind == "error" else "33", sys.stderr)
    print(f"{tag} {msg}", file=sys.stderr)


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise Usage(f"cannot read {path}: {exc.strerror or exc}") from None


def _where(path: str, span: SourceSpan | None) -> str:
    return f"{path}:{span.line}:{span.column}" if span else f"{path}:1:1"


def _load(path: str) -> Document:
    """Parse ``path``; on failure print every error and exit 1."""
    try:
        return parse(_read(path))
    except ParseFailure as exc:
        for e in exc.errors:
            print(f"{_where(path, e.span)} {e.code} {e.message}")
        raise SystemExit(INVALID)


def _locate(doc: Document, location: str) -> SourceSpan | None:
    return doc.spans.get(location) or doc.model.spans.get(location)


def _diagnose(path: str, doc: Document, check_events: bool = True):
    """Model violations, then event and chronology errors, as ``path:line:col CODE message``.

    Returns (lines, carved events, chronology or None).
    """
    lines = []
    report = validate(doc.model)
    for v in report.violations:
        lines.append(f"{_where(path, _locate(doc, v.location))} {v.code} {v.message}")
    for w in report.warnings:
        _err(f"{_where(path, _locate(doc, w.location))} {w.code} {w.message}", "warning")
    if lines or not check_events:
        return lines, [], None
    events = []
    for spec in doc.events:
        try:
            events.append(carve(doc.model, spec))
        except TMError as exc:
            span = _locate(doc, f"event:{spec.id}")
            lines.append(f"{_where(path, span)} {exc.code} event {spec.id}: {exc.message}")
    chron = None
    if doc.chronology is not None and not lines:
        try:
            chron = build_chronology(events, doc.chronology.edges, doc.chronology.initial)
        except TMError as exc:
            span = _locate(doc, "chronology:initial")
            lines.append(f"{_where(path, span)} {exc.code} {exc.message}")
    return lines, events, chron


def _emit(text: str, output: str | None):
    if output:
        Path(output).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


# -- subcommands -------------------------------------------------------------

def cmd_validate(args) -> int:
    doc = _load(args.path)
    lines, _, _ = _diagnose(args.path, doc)
    for line in lines:
        print(line)
    if lines:
        return INVALID
    print("OK")
    return OK


def cmd_fmt(args) -> int:
    text = _read(args.path)
    doc = _load(args.path)
    try:
        canonical = serialize(doc)
    except InvalidModel as exc:
        for v in exc.report.violations:
            print(f"{_where(args.path, _locate(doc, v.location))} {v.code} {v.message}")
        return INVALID
    if args.check:
        if text == canonical:
            return OK
        diff = difflib.unified_diff(text.splitlines(True), canonical.splitlines(True),
                                    args.path, args.path + " (formatted)")
        sys.stdout.writelines(diff)
        return INVALID
    if args.stdout:
        sys.stdout.write(canonical)
    elif text != canonical:
        Path(args.path).write_text(canonical, encoding="utf-8", newline="\n")
    return OK


def _split(csv: str | None) -> tuple[str, ...]:
    return tuple(s.strip() for s in csv.split(",") if s.strip()) if csv else ()


def cmd_render(args) -> int:
    doc = _load(args.path)
    lines, events, _ = _diagnose(args.path, doc)
    if lines:
        for line in lines:
            print(line)
        return INVALID
    by_id = {ev.id: ev for ev in events}
    wanted = _split(args.event)
    for eid in (*wanted, *_split(args.highlight)):
        if eid not in by_id:
            raise Usage(f"no event {eid!r} in {args.path}")
    opts = RenderOptions(args.lanes, _split(args.highlight), args.format)
    if args.format == "dot":
        if len(wanted) > 1:
            raise Usage("--format dot overlays a single --event")
        text = (event_overlay(doc.model, by_id[wanted[0]], opts) if wanted
                else to_dot(doc.model, opts, events))
    else:
        chosen = [by_id[e] for e in wanted] if wanted else events
        text = region_table(doc.model, chosen, args.format)
    _emit(text, args.output)
    return OK


def _element_name(el) -> str:
    return str(el) if isinstance(el, (StageRef, ArcRef)) else el


def cmd_check(args) -> int:
    doc = _load(args.path)
    lines, events, chron = _diagnose(args.path, doc)
    if lines:
        for line in lines:
            print(line)
        return INVALID
    wanted = _split(args.events)
    if wanted:
        by_id = {ev.id: ev for ev in events}
        missing = [e for e in wanted if e not in by_id]
        if missing:
            raise Usage(f"no event(s) {', '.join(missing)} in {args.path}")
        events = [by_id[e] for e in wanted]
    report = check_coverage(doc.model, events)
    for el in report.uncovered:
        print(f"uncovered {_element_name(el)}")
    for el, owners in report.overlaps.items():
        print(f"overlap {_element_name(el)} {','.join(owners)}")
    if chron is not None and not wanted:
        for cycle in chron.cycles():
            print(f"cycle {' -> '.join(cycle + [cycle[0]])}")
    print(f"{len(events)} events, {len(report.uncovered)} uncovered, "
          f"{len(report.overlaps)} shared")
    return OK if report.complete else INVALID


def _script(text: str) -> tuple[str, tuple[str, ...]]:
    gid, sep, outcomes = text.partition("=")
    if not sep or not gid or not outcomes:
        raise argparse.ArgumentTypeError(f"expected GUARD=OUTCOME[,OUTCOME...], got {text!r}")
    return gid, tuple(o.strip() for o in outcomes.split(","))


def _capacity(text: str) -> tuple[str, float]:
    mid, sep, n = text.partition("=")
    try:
        value = math.inf if n == "*" else int(n)
    except ValueError:
        value = None
    if not sep or not mid or value is None or value < 1:
        raise argparse.ArgumentTypeError(f"expected MACHINE=N or MACHINE=*, got {text!r}")
    return mid, value


def _nonnegative(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if n < 0:
        raise argparse.ArgumentTypeError(f"must be nonnegative, got {n}")
    return n


def _positive(text: str) -> int:
    n = _nonnegative(text)
    if n == 0:
        raise argparse.ArgumentTypeError("must be at least 1")
    return n


def _load_json(path: str):
    try:
        return json.loads(_read(path))
    except json.JSONDecodeError as exc:
        raise Usage(f"{path}: invalid JSON ({exc.msg} at line {exc.lineno})") from None


def sim_config(args, doc: Document) -> SimConfig:
    """Layer the configuration: ``simcfg`` block < sidecar JSON < ``--config`` < flags."""
    cfg = doc.simcfg or SimConfig()
    sidecar = Path(args.path).with_suffix(".simcfg.json")
    sources = [str(sidecar)] if sidecar.exists() else []
    if args.config:
        sources.append(args.config)
    for src in sources:
        try:
            cfg = cfg.merged(_load_json(src))
        except (ValueError, TypeError) as exc:
            raise Usage(f"{src}: {exc}") from None
    over: dict = {}
    if args.cars is not None:
        over["arrivals"] = [[0, args.cars]]
    if args.arrivals:
        data = _load_json(args.arrivals)
        if isinstance(data, dict):
            data = data.get("arrivals")
        try:
            over["arrivals"] = [[int(p), int(c)] for p, c in data]
        except (TypeError, ValueError):
            raise Usage(f"{args.arrivals}: expected a list of [period, count] pairs") from None
    if args.horizon is not None:
        over["horizon"] = args.horizon
    if args.seed is not None:
        over["seed"] = args.seed
    if args.sort is not None:
        over["sort"] = args.sort
    if args.script:
        over["scripts"] = {**cfg.scripts, **dict(args.script)}
    if args.capacity:
        over["capacities"] = {**cfg.capacities, **dict(args.capacity)}
    return cfg.merged(over)


def cmd_simulate(args) -> int:
    doc = _load(args.path)
    lines, events, chron = _diagnose(args.path, doc)
    if lines:
        for line in lines:
            print(line)
        return INVALID
    if chron is None:
        _err(f"{args.path} declares no chronology; nothing to simulate")
        return INVALID
    cfg = sim_config(args, doc)
    try:
        trace = run(init(doc.model, chron, cfg))
    except SimulationError as exc:
        _err(str(exc))
        return SIM_FAILED
    table = schedule_table(trace)
    if args.trace:
        Path(args.trace).write_text(trace.dumps(), encoding="utf-8", newline="\n")
    if args.figure:
        from .plotting import plot_schedule
        plot_schedule(table, args.figure)
    if args.table:
        sys.stdout.write(table_render(table, args.table))
    elif not args.trace:
        sys.stdout.write(trace.dumps())
    done = sum(1 for m in trace.moves if m.dst == "SINK")
    print(f"{len(trace.instances)} {trace.sort}(s), {trace.periods} period(s), "
          f"{done} finished", file=sys.stderr)
    return OK


# -- wiring ------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        _err(message)
        raise SystemExit(USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tm", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"tm {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", help="check structure, events and chronology")
    s.add_argument("path")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("fmt", help="rewrite in canonical form")
    s.add_argument("path")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--check", action="store_true", help="exit 1 (and show a diff) if not canonical")
    g.add_argument("--stdout", action="store_true", help="print instead of rewriting the file")
    s.set_defaults(func=cmd_fmt)

    s = sub.add_parser("render", help="DOT diagram, event overlay, or event/element table")
    s.add_argument("path")
    s.add_argument("-f", "--format", choices=("dot", "csv", "markdown"), default="dot")
    s.add_argument("-e", "--event", help="event id to overlay (dot) or comma list of columns")
    s.add_argument("-o", "--output", help="write here instead of stdout")
    s.add_argument("--lanes", action="store_true", help="show lanes in stage labels")
    s.add_argument("--highlight", help="comma list of events whose regions are filled")
    s.set_defaults(func=cmd_render)

    s = sub.add_parser("check", help="event coverage and chronology cycles")
    s.add_argument("path")
    s.add_argument("--events", help="comma list restricting the slicing checked")
    s.set_defaults(func=cmd_check)

    s = sub.add_parser("simulate", help="run the chronology; print a trace or table")
    s.add_argument("path")
    g = s.add_mutually_exclusive_group()
    g.add_argument("-n", "--cars", type=_nonnegative, help="instances arriving at period 0")
    g.add_argument("--arrivals", metavar="FILE", help="JSON list of [period, count] pairs")
    s.add_argument("-H", "--horizon", type=_positive)
    s.add_argument("-s", "--seed", type=int)
    s.add_argument("--sort", help="token sort (lane) to simulate")
    s.add_argument("--script", type=_script, action="append", metavar="GUARD=A,B",
                   help="fix a guard's outcomes, cycled (repeatable)")
    s.add_argument("--capacity", type=_capacity, action="append", metavar="MACHINE=N",
                   help="queue capacity of a station, * for unbounded (repeatable)")
    s.add_argument("-c", "--config", metavar="FILE", help="JSON configuration overrides")
    s.add_argument("-t", "--table", choices=("csv", "markdown"),
                   help="print the schedule table instead of the trace")
    s.add_argument("--trace", metavar="PATH", help="write the trace JSON here")
    s.add_argument("--figure", metavar="PATH", help="draw the schedule table (PNG, SVG, PDF)")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Usage as exc:
        _err(str(exc))
        return USAGE
    except TMError as exc:
        _err(str(exc))
        return INVALID


if __name__ == "__main__":
    sys.exit(main())
