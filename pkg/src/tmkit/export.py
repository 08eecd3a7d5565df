"""Text renderings: Graphviz DOT for models and event overlays, CSV/Markdown for tables.

Only structure is emitted; layout is left to whatever DOT tool reads the
output. Everything here is a pure function of its arguments, and node
and cluster order follows declaration order so output is byte-stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .errors import ExportError, InvalidModel
from .eventing import Event, region_belongs
from .model import ArcRef, Model, StageRef, validate
from .simulator import ScheduleTable

FORMATS = ("dot", "csv", "markdown")
HIGHLIGHT = "#ffd54f"
INDENT = "  "


@dataclass(frozen=True)
class RenderOptions:
    show_lanes: bool = False
    highlight_events: tuple[str, ...] = ()
    format: str = "dot"

    def __post_init__(self):
        if self.format not in FORMATS:
            raise ExportError(f"unknown format {self.format!r}; expected one of {FORMATS}",
                              "UNKNOWN_FORMAT")


def quote(text: str) -> str:
    escaped = str(text).replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n")
    return '"' + escaped + '"'


def _stage_label(ref: StageRef, show_lanes: bool) -> str:
    return f"{ref.kind.title}\n[{ref.lane}]" if show_lanes else ref.kind.title


def _body(model: Model, opts: RenderOptions, lit: frozenset, dim: bool,
          depth: int) -> list[str]:
    """Nested clusters for every machine, stage nodes inside their machine, then edges."""
    pad = INDENT * depth
    lines: list[str] = []

    def machine(mid: str, level: int):
        m = model.machine(mid)
        p = pad + INDENT * level
        lines.append(f"{p}subgraph {quote('cluster_' + mid)} {{")
        lines.append(f"{p}{INDENT}label={quote(m.name)};")
        if mid in lit:
            lines.append(f"{p}{INDENT}penwidth=2;")
        for st in m.stages:
            ref = StageRef(mid, st.kind, st.lane)
            attrs = [f"label={quote(_stage_label(ref, opts.show_lanes))}"]
            if ref in lit:
                attrs.append(f"style=filled, fillcolor={quote(HIGHLIGHT)}")
            elif dim:
                attrs.append("fontcolor=gray50, color=gray70")
            lines.append(f"{p}{INDENT}{quote(str(ref))} [{', '.join(attrs)}];")
        for sub in m.submachines:
            machine(sub, level + 1)
        lines.append(f"{p}}}")

    for root in model.roots():
        machine(root.id, 0)
    for ref, arc in model.arcs():
        attrs = []
        label = getattr(arc, "label", None)
        guard = getattr(arc, "guard", None)
        text = " / ".join(x for x in (f"[{guard}]" if guard else "", label or "") if x)
        if text:
            attrs.append(f"label={quote(text)}")
        if ref.family == "trigger":
            attrs.append("style=dashed")
        if ref in lit:
            attrs.append(f"color={quote('#e65100')}, penwidth=2")
        elif dim:
            attrs.append("color=gray70")
        tail = f" [{', '.join(attrs)}]" if attrs else ""
        lines.append(f"{pad}{quote(str(arc.src))} -> {quote(str(arc.dst))}{tail};")
    return lines


def _check(model: Model):
    report = validate(model)
    if not report.ok:
        raise InvalidModel(report)


def to_dot(model: Model, options: RenderOptions | None = None,
           events: Sequence[Event] = ()) -> str:
    """The model as a DOT digraph; machines become nested ``cluster_<id>`` subgraphs.

    Trigger arcs, and only trigger arcs, carry ``style=dashed``. Regions of
    the events named in ``options.highlight_events`` are filled in.
    """
    opts = options or RenderOptions()
    _check(model)
    by_id = {ev.id: ev for ev in events}
    lit: set = set()
    for eid in opts.highlight_events:
        if eid not in by_id:
            raise ExportError(f"cannot highlight unknown event {eid!r}", "UNKNOWN_EVENT")
        ev = by_id[eid]
        if not region_belongs(model, ev):
            raise ExportError(f"event {eid} was not carved from this model", "REGION_MISMATCH")
        lit |= ev.region.elements()
    lines = ["digraph tm {", f"{INDENT}compound=true;", f"{INDENT}node [shape=box];"]
    lines += _body(model, opts, frozenset(lit), False, 1)
    lines.append("}")
    return "\n".join(lines) + "\n"


def event_overlay(model: Model, event: Event, options: RenderOptions | None = None) -> str:
    """One event drawn as a machine of its own: the highlighted region plus time and event nodes."""
    opts = options or RenderOptions()
    _check(model)
    if not region_belongs(model, event):
        raise ExportError(f"event {event.id} was not carved from this model", "REGION_MISMATCH")
    lit = frozenset(event.region.elements())
    cid = "cluster_event_" + event.id
    lines = ["digraph tm {", f"{INDENT}compound=true;", f"{INDENT}node [shape=box];",
             f"{INDENT}subgraph {quote(cid)} {{",
             f"{INDENT * 2}label={quote(f'Event {event.id}: {event.name}')};",
             f"{INDENT * 2}subgraph {quote('cluster_region_' + event.id)} {{",
             f"{INDENT * 3}label={quote('region')};"]
    lines += _body(model, opts, lit, True, 3)
    lines.append(f"{INDENT * 2}}}")
    duration = f"duration {event.duration}"
    if event.intensity is not None:
        duration += f", intensity {event.intensity:g}"
    time_id, ev_id = f"{event.id}:time", f"{event.id}:event"
    lines += [
        f"{INDENT * 2}subgraph {quote('cluster_time_' + event.id)} {{",
        f"{INDENT * 3}label={quote('time')};",
        f"{INDENT * 3}{quote(time_id)} [label={quote('time')}, tooltip={quote(duration)}];",
        f"{INDENT * 2}}}",
        f"{INDENT * 2}{quote(ev_id)} [label={quote('event')}, shape=ellipse];",
        f"{INDENT * 2}{quote(time_id)} -> {quote(ev_id)};",
        f"{INDENT}}}",
        "}",
    ]
    return "\n".join(lines) + "\n"


# -- tables ------------------------------------------------------------------

def _rows(header: Sequence[str], rows: Iterable[Sequence[str]], fmt: str) -> str:
    rows = [list(r) for r in rows]
    if fmt == "csv":
        return "".join(",".join(r) + "\n" for r in [list(header), *rows])
    if fmt == "markdown":
        def line(cells):
            return "| " + " | ".join(cells) + " |\n"
        return line(header) + line(["---"] * len(header)) + "".join(line(r) for r in rows)
    raise ExportError(f"tables render as csv or markdown, not {fmt!r}", "UNKNOWN_FORMAT")


def table_render(table: ScheduleTable, fmt: str = "csv") -> str:
    """``period, <sort> 1 .. <sort> n`` header, one row per period; idle cells are empty."""
    header = ["period", *(f"{table.label} {i}" for i in table.instances)]
    return _rows(header, ([str(p), *cells] for p, cells in table.rows), fmt)


def region_table(model: Model, events: Sequence[Event], fmt: str = "csv") -> str:
    """Which events cover each machine, stage and arc (``x`` marks membership)."""
    header = ["element", *(ev.id for ev in events)]
    rows = []
    for el in model.elements():
        name = str(el) if isinstance(el, (StageRef, ArcRef)) else el
        rows.append([name, *("x" if el in ev.region else "" for ev in events)])
    return _rows(header, rows, fmt)
