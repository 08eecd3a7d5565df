"""The ``.tm`` text format: a recovering parser and a canonical printer.

The parser only checks syntax and name binding. Structural rules belong
to :func:`tmkit.model.validate`, so an illegal-but-well-formed file parses.
"""

from __future__ import annotations

import bisect
import gc
import math
import re
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from typing import Iterator, NamedTuple

from .config import SimConfig
from .errors import InvalidModel, TMError
from .eventing import (
    ArcPattern, Chronology, ChronologyEdge, ChronologySpec, Event, EventSpec, RegionSelector,
    build_chronology, carve_all,
)
from .model import (
    DEFAULT_LANE, NAME_RE, UNBOUNDED, FlowArc, Guard, Machine, Model, Stage, StageKind,
    StageRef, ThingSort, TriggerArc, validate,
)

STAGE_WORDS = {k.value for k in StageKind}
_KINDS = {k.value: k for k in StageKind}
INDENT = "  "


class SourceSpan(NamedTuple):
    line: int
    column: int
    length: int = 0

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


@dataclass(frozen=True)
class ParseError:
    span: SourceSpan
    code: str  # UNEXPECTED_TOKEN | UNCLOSED_BLOCK | DUPLICATE_NAME | UNKNOWN_KEYWORD
    message: str

    def __str__(self) -> str:
        return f"{self.span} {self.code} {self.message}"


class ParseFailure(TMError):
    """Raised by :func:`parse`; ``errors`` holds every recoverable error found."""

    code = "PARSE_ERROR"

    def __init__(self, errors: list[ParseError]):
        super().__init__(f"{len(errors)} parse error(s); first: {errors[0]}")
        self.errors = errors


@dataclass(frozen=True)
class Document:
    """A parsed ``.tm`` file: the model plus its event and simulation sections."""

    model: Model
    events: tuple[EventSpec, ...] = ()
    chronology: ChronologySpec | None = None
    simcfg: SimConfig | None = None
    spans: dict = field(default_factory=dict, compare=False, repr=False)

    def carve(self) -> list[Event]:
        return carve_all(self.model, self.events)

    def build_chronology(self, events: list[Event] | None = None) -> Chronology:
        """Carve the events and check the declared chronology."""
        if self.chronology is None:
            raise TMError("document declares no chronology", "UNKNOWN_EVENT")
        events = self.carve() if events is None else events
        return build_chronology(events, self.chronology.edges, self.chronology.initial)


# -- lexer -------------------------------------------------------------------

_TOKEN_RE = re.compile(r"""
    [ \t\r\n]*(?:\#[^\n]*[ \t\r\n]*)*  # skipped: whitespace and comments
    (?:
        (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
      | (?P<number>-?\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
      | (?P<string>"(?:\\.|[^"\\\n])*")
      | (?P<badstring>"[^\n]*)
      | (?P<punct>-\.->|->|[{}\[\];,:.*])
      | (?P<bad>[^\sA-Za-z0-9_"{}\[\];,:.*\#-]+|.)
      | (?P<eof>\Z)
    )
""", re.VERBOSE)


class _Lines:
    """Offset to line/column conversion for one source text."""

    def __init__(self, text: str):
        self.starts = [0]
        self.starts.extend(m.end() for m in re.finditer("\n", text))

    def span(self, offset: int, length: int = 0) -> SourceSpan:
        line = bisect.bisect_right(self.starts, offset)
        return SourceSpan(line, offset - self.starts[line - 1] + 1, length)


class Token(NamedTuple):
    kind: str  # ident | number | string | punct | eof
    text: str
    offset: int
    lines: _Lines

    @property
    def span(self) -> SourceSpan:
        return self.lines.span(self.offset, len(self.text))

    @property
    def value(self):
        if self.kind == "string":
            body = self.text[1:-1]
            return _unescape(body) if "\\" in body else body
        if self.kind == "number":
            t = self.text
            return float(t) if any(c in t for c in ".eE") else int(t)
        return self.text


class _SpanMap(Mapping):
    """Location -> SourceSpan, kept as tokens and resolved on lookup."""

    def __init__(self, tokens: dict[str, Token]):
        self._tokens = tokens

    def __getitem__(self, location: str) -> SourceSpan:
        return self._tokens[location].span

    def __iter__(self):
        return iter(self._tokens)

    def __len__(self):
        return len(self._tokens)


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: {"n": "\n", "t": "\t"}.get(m[1], m[1]), s)


def _escape(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n").replace("\t", "\\t") + '"'


def tokenize(text: str) -> tuple[list[Token], list[ParseError]]:
    tokens: list[Token] = []
    errors: list[ParseError] = []
    lines = _Lines(text)
    push, make = tokens.append, tuple.__new__  # hot loop: skip NamedTuple.__new__
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        if kind == "ident" or kind == "punct" or kind == "number" or kind == "string":
            push(make(Token, (kind, m[kind], m.start(kind), lines)))
        elif kind == "eof":
            push(Token("eof", "", m.start(kind), lines))
            break
        else:
            start, end = m.span(kind)
            msg = "unterminated string" if kind == "badstring" else f"unexpected input {m[kind]!r}"
            errors.append(ParseError(lines.span(start, end - start), "UNEXPECTED_TOKEN", msg))
    return tokens, errors


# -- parser ------------------------------------------------------------------

class _Abort(Exception):
    """Unwinds the current statement after an error was recorded."""


@dataclass
class _MachineDraft:
    id: str
    name: str
    parent: str | None
    subs: list[str] = field(default_factory=list)
    stages: list[Stage] = field(default_factory=list)
    keys: set = field(default_factory=set)  # (kind, lane) pairs already declared


@dataclass
class _StagePath:
    segments: list[str]
    lane: str | None
    start: Token


class _Parser:
    TOP_KEYWORDS = ("sort", "guard", "machine", "flow", "trigger", "events", "simcfg")

    def __init__(self, text: str):
        self.tokens, self.errors = tokenize(text)
        self.pos = 0
        self.machines: list[_MachineDraft] = []
        self.machine_index: dict[str, _MachineDraft] = {}
        self.sorts: list[ThingSort] = []
        self.guards: list[Guard] = []
        self.flows: list[tuple[_StagePath, _StagePath, str | None, str | None]] = []
        self.triggers: list[tuple[_StagePath, _StagePath, str | None]] = []
        self.events: list[EventSpec] = []
        self.chronology_initial: str | None = None
        self.chronology_edges: list[ChronologyEdge] = []
        self.saw_chronology = False
        self.simcfg: SimConfig | None = None
        self.spans: dict[str, Token] = {}  # location -> first token, resolved lazily
        self.stage_cache: dict[tuple, Stage] = {}
        self.handlers = {
            "sort": self.sort_decl, "guard": self.guard_decl,
            "machine": lambda: self.machine_decl(None), "flow": self.flow_decl,
            "trigger": self.trigger_decl, "events": self.events_block,
            "simcfg": self.simcfg_block,
        }

    # token helpers
    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        # a string token's text keeps its quotes, so it never equals a keyword or punctuation
        return self.tokens[self.pos].text == text

    def error(self, code: str, msg: str, span: SourceSpan | None = None):
        self.errors.append(ParseError(span or self.tok.span, code, msg))
        raise _Abort

    def unexpected(self, wanted: str):
        t = self.tok
        if t.kind == "eof":
            self.error("UNEXPECTED_TOKEN", f"expected {wanted}, found end of input")
        self.error("UNEXPECTED_TOKEN", f"expected {wanted}, found {t.text!r}")

    def expect(self, text: str) -> Token:
        t = self.tokens[self.pos]
        if t.text != text:
            self.unexpected(repr(text))
        self.pos += 1  # a matched token is never eof
        return t

    def name(self, what: str = "a name") -> Token:
        t = self.tokens[self.pos]
        if t.kind != "ident":
            self.unexpected(what)
        self.pos += 1
        return t

    def number(self) -> Token:
        if self.tok.kind != "number":
            self.unexpected("a number")
        return self.advance()

    def integer(self) -> int:
        t = self.number()
        if not isinstance(t.value, int):
            self.error("UNEXPECTED_TOKEN", f"expected an integer, found {t.text!r}", t.span)
        return t.value

    def label(self) -> str:
        if self.tok.kind in ("ident", "string"):
            return self.advance().value
        self.unexpected("a label")

    def end_statement(self):
        self.expect(";")

    def recover(self):
        """Skip to just past the next ``;`` or to the ``}`` closing the current block."""
        toks, pos, depth = self.tokens, self.pos, 0
        while True:
            t = toks[pos]
            if t.kind == "eof":
                break
            if t.kind == "punct":
                if t.text == "{":
                    depth += 1
                elif t.text == "}":
                    if depth == 0:
                        break
                    depth -= 1
                    if depth == 0:
                        pos += 1
                        break
                elif t.text == ";" and depth == 0:
                    pos += 1
                    break
            pos += 1
        self.pos = pos

    def block(self, opener: Token, item, closer_name: str):
        """Parse ``{ item* }``; ``item`` parses one statement."""
        toks = self.tokens
        while True:
            t = toks[self.pos]
            if t.text == "}" and t.kind == "punct":
                self.pos += 1
                return
            if t.kind == "eof":
                self.errors.append(ParseError(
                    t.span, "UNCLOSED_BLOCK",
                    f"{closer_name} opened at {opener.span} is not closed before end of input"))
                return
            before = self.pos
            try:
                item()
            except _Abort:
                self.recover()
                if self.pos == before:
                    self.advance()

    # top level
    def parse_file(self):
        while self.tok.kind != "eof":
            before = self.pos
            try:
                self.toplevel()
            except _Abort:
                self.recover()
                if self.pos == before:
                    self.advance()

    def toplevel(self):
        t = self.tok
        if t.kind == "ident":
            handler = self.handlers.get(t.text)
            if handler is None:
                self.error("UNKNOWN_KEYWORD", f"unknown keyword {t.text!r}; expected one of "
                           + ", ".join(self.TOP_KEYWORDS))
            handler()
            return
        self.unexpected("a declaration")

    def sort_decl(self):
        self.advance()
        name = self.label()
        name_tok = self.tokens[self.pos - 1]
        machine_ref = None
        if self.at("machine"):
            self.advance()
            machine_ref = self.dotted_name()
        attrs: list[tuple[str, str]] = []
        if self.at("{"):
            opener = self.advance()

            def attr():
                t = self.name("an attribute name")
                self.expect(":")
                kind = self.name("an attribute kind")
                if kind.text not in ("integer", "string", "boolean"):
                    self.error("UNKNOWN_KEYWORD", f"unknown attribute kind {kind.text!r}", kind.span)
                self.end_statement()
                if any(a == t.text for a, _ in attrs):
                    self.error("DUPLICATE_NAME", f"attribute {t.text!r} declared twice", t.span)
                attrs.append((t.text, kind.text))

            self.block(opener, attr, f"sort {name}")
        else:
            self.end_statement()
        if any(s.name == name for s in self.sorts):
            self.error("DUPLICATE_NAME", f"sort {name!r} declared twice", name_tok.span)
        self.sorts.append(ThingSort(name, machine_ref, tuple(attrs)))
        self.spans[f"sort:{name}"] = name_tok

    def dotted_name(self) -> str:
        parts = [self.name().text]
        while self.at("."):
            self.advance()
            parts.append(self.name().text)
        return ".".join(parts)

    def guard_decl(self):
        self.advance()
        ident = self.name("a guard id")
        kind = self.name("a guard kind (range, bernoulli, scripted)")
        if kind.text == "range":
            attr = self.name("an attribute name").text
            lo = self.number().value
            hi = self.number().value
            g = Guard.range_check(ident.text, attr, lo, hi)
        elif kind.text == "bernoulli":
            g = Guard.bernoulli(ident.text, self.number().value)
        elif kind.text == "scripted":
            g = Guard.scripted(ident.text, self.label_list())
        else:
            self.error("UNKNOWN_KEYWORD", f"unknown guard kind {kind.text!r}", kind.span)
        desc = ""
        if self.tok.kind == "string":
            desc = self.advance().value
        self.end_statement()
        if any(x.id == ident.text for x in self.guards):
            self.error("DUPLICATE_NAME", f"guard {ident.text!r} declared twice", ident.span)
        self.guards.append(replace(g, description=desc))
        self.spans[f"guard:{ident.text}"] = ident

    def label_list(self) -> list[str]:
        self.expect("[")
        out = []
        if not self.at("]"):
            out.append(self.label())
            while self.at(","):
                self.advance()
                out.append(self.label())
        self.expect("]")
        return out

    def machine_decl(self, parent: _MachineDraft | None):
        self.advance()
        name = self.name("a machine name")
        if name.text in STAGE_WORDS:
            self.error("UNEXPECTED_TOKEN", f"stage kind {name.text!r} cannot name a machine", name.span)
        mid = name.text if parent is None else f"{parent.id}.{name.text}"
        opener = self.expect("{")
        duplicate = mid in self.machine_index
        draft = _MachineDraft(mid, name.text, parent.id if parent else None)
        if not duplicate:
            self.machines.append(draft)
            self.machine_index[mid] = draft
            if parent:
                parent.subs.append(mid)
            self.spans[mid] = name

        def item():
            t = self.tokens[self.pos]
            if t.text in STAGE_WORDS and t.kind == "ident":
                self.stage_decl(draft)
            elif t.kind == "ident" and t.text == "machine":
                self.machine_decl(draft)
            elif t.text == "flow":
                self.flow_decl()
            elif t.text == "trigger":
                self.trigger_decl()
            elif t.kind == "ident":
                self.error("UNKNOWN_KEYWORD", f"unknown keyword {t.text!r} in machine body")
            else:
                self.unexpected("a stage or submachine")

        self.block(opener, item, f"machine {name.text}")
        if duplicate:
            self.errors.append(ParseError(name.span, "DUPLICATE_NAME",
                                          f"machine {mid!r} declared twice"))

    def stage_decl(self, draft: _MachineDraft):
        # hot path: indexes tokens directly instead of going through the helpers
        toks = self.tokens
        kw = toks[self.pos]
        self.pos += 1
        kind = _KINDS[kw.text]
        lane, queue, state = DEFAULT_LANE, None, None
        seen = ()
        while True:
            t = toks[self.pos]
            if t.text == ";":
                self.pos += 1
                break
            t = self.name("'lane', 'queue', 'state' or ';'")
            opt = t.text
            if opt in seen:
                self.error("UNEXPECTED_TOKEN", f"{opt!r} given twice", t.span)
            seen += (opt,)
            v = toks[self.pos]
            if opt == "lane":
                if v.kind != "string":
                    self.unexpected("a quoted lane name")
                self.pos += 1
                lane = v.value
            elif opt == "queue":
                if v.text == "*":
                    self.pos += 1
                    queue = UNBOUNDED
                else:
                    queue = self.integer()
            elif opt == "state":
                state = self.name("a state name").text
            else:
                self.error("UNKNOWN_KEYWORD", f"unknown stage option {opt!r}", t.span)
        key = (kind, lane)
        if key in draft.keys:
            self.error("DUPLICATE_NAME", f"{kw.text} on lane {lane!r} declared twice in "
                       f"{draft.id}", kw.span)
        draft.keys.add(key)
        # stages are immutable, so equal declarations share one object
        spec = (kind, lane, queue, state)
        stage = self.stage_cache.get(spec)
        if stage is None:
            stage = self.stage_cache[spec] = Stage(kind, lane, queue, state)
        draft.stages.append(stage)
        self.spans[f"{draft.id}.{kw.text}[{lane}]"] = kw

    def stage_path(self) -> _StagePath:
        toks = self.tokens
        start = toks[self.pos]
        segments = [self.name("a stage path").text]
        while toks[self.pos].text == ".":
            self.pos += 1
            segments.append(self.name("a path segment").text)
        lane = None
        if toks[self.pos].text == "[":
            self.advance()
            if self.tok.kind not in ("ident", "string"):
                self.unexpected("a lane name")
            lane = self.advance().value
            self.expect("]")
        if len(segments) < 2 or segments[-1] not in STAGE_WORDS:
            self.error("UNEXPECTED_TOKEN",
                       f"{'.'.join(segments)!r} does not end in a stage kind", start.span)
        return _StagePath(segments, lane, start)

    def flow_decl(self):
        kw = self.advance()
        src = self.stage_path()
        self.expect("->")
        dst = self.stage_path()
        guard = label = None
        if self.at("guard"):
            self.advance()
            guard = self.name("a guard id").text
        if self.at("label"):
            self.advance()
            label = self.label()
        self.end_statement()
        self.flows.append((src, dst, guard, label))
        self.spans[f"flow#{len(self.flows)}"] = kw

    def trigger_decl(self):
        kw = self.advance()
        src = self.stage_path()
        self.expect("-.->")
        dst = self.stage_path()
        label = None
        if self.at("label"):
            self.advance()
            label = self.label()
        self.end_statement()
        self.triggers.append((src, dst, label))
        self.spans[f"trigger#{len(self.triggers)}"] = kw

    # events
    def events_block(self):
        self.advance()
        opener = self.expect("{")

        def item():
            t = self.tok
            if t.kind == "ident" and t.text == "event":
                self.event_decl()
            elif t.kind == "ident" and t.text == "chronology":
                self.chronology_block()
            elif t.kind == "ident":
                self.error("UNKNOWN_KEYWORD", f"unknown keyword {t.text!r} in events block")
            else:
                self.unexpected("'event' or 'chronology'")

        self.block(opener, item, "events")

    def pattern(self) -> str:
        segs = []
        while True:
            if self.at("*"):
                self.advance()
                if self.at("*"):
                    self.advance()
                    segs.append("**")
                else:
                    segs.append("*")
            else:
                segs.append(self.name("a path segment").text)
            if not self.at("."):
                break
            self.advance()
        text = ".".join(segs)
        if self.at("["):
            self.advance()
            if self.tok.kind not in ("ident", "string"):
                self.unexpected("a lane name")
            lane = self.advance().value
            self.expect("]")
            text += f"[{lane}]"
        return text

    def event_decl(self):
        self.advance()
        ident = self.name("an event id")
        name = ident.text
        if self.tok.kind == "string":
            name = self.advance().value
        opener = self.expect("{")
        fields = {"paths": [], "arcs": [], "duration": 1, "intensity": None, "guard": None,
                  "sets": [], "clears": []}

        def item():
            t = self.name("an event property")
            if t.text == "region":
                first = self.pattern()
                if self.at("->") or self.at("-.->"):
                    family = "flow" if self.advance().text == "->" else "trigger"
                    fields["arcs"].append(ArcPattern(family, first, self.pattern()))
                else:
                    if "*" in first:
                        self.error("UNEXPECTED_TOKEN", "wildcards are only allowed in arc patterns", t.span)
                    fields["paths"].append(first)
            elif t.text == "duration":
                fields["duration"] = self.integer()
            elif t.text == "intensity":
                fields["intensity"] = self.number().value
            elif t.text == "guard":
                fields["guard"] = self.name("a guard id").text
            elif t.text in ("set", "clear"):
                fields["sets" if t.text == "set" else "clears"].append(self.dotted_name())
            else:
                self.error("UNKNOWN_KEYWORD", f"unknown event property {t.text!r}", t.span)
            self.end_statement()

        self.block(opener, item, f"event {ident.text}")
        if any(e.id == ident.text for e in self.events):
            self.errors.append(ParseError(ident.span, "DUPLICATE_NAME",
                                          f"event {ident.text!r} declared twice"))
            return
        self.events.append(EventSpec(
            ident.text, name,
            RegionSelector(tuple(fields["paths"]), tuple(fields["arcs"])),
            fields["duration"], fields["intensity"], fields["guard"],
            tuple(fields["sets"]), tuple(fields["clears"])))
        self.spans[f"event:{ident.text}"] = ident

    def chronology_block(self):
        kw = self.advance()
        if self.saw_chronology:
            self.errors.append(ParseError(kw.span, "DUPLICATE_NAME", "chronology declared twice"))
        self.saw_chronology = True
        opener = self.expect("{")

        def item():
            t = self.name("'initial' or an event id")
            if t.text == "initial" and self.tok.kind == "ident":
                self.chronology_initial = self.advance().text
                self.spans["chronology:initial"] = t
            else:
                self.expect("->")
                dst = self.name("an event id").text
                label = None
                if self.at("on"):
                    self.advance()
                    label = self.label()
                self.chronology_edges.append(ChronologyEdge(t.text, dst, label))
                self.spans[f"chronology#{len(self.chronology_edges)}"] = t
            self.end_statement()

        self.block(opener, item, "chronology")

    def simcfg_block(self):
        kw = self.advance()
        opener = self.expect("{")
        cfg: dict = {"arrivals": [], "scripts": {}, "capacities": {}, "attributes": {}}

        def item():
            t = self.name("a simcfg setting")
            if t.text == "arrive":
                cfg["arrivals"].append((self.integer(), self.integer()))
            elif t.text in ("horizon", "seed"):
                cfg[t.text] = self.integer()
            elif t.text == "sort":
                cfg["sort"] = self.label()
            elif t.text == "script":
                gid = self.name("a guard id").text
                cfg["scripts"][gid] = tuple(self.label_list())
            elif t.text == "capacity":
                mid = self.dotted_name()
                if self.at("*"):
                    self.advance()
                    cfg["capacities"][mid] = UNBOUNDED
                else:
                    cfg["capacities"][mid] = self.integer()
            elif t.text == "attr":
                key = self.name("an attribute name").text
                v = self.tok
                if v.kind in ("number", "string"):
                    cfg["attributes"][key] = self.advance().value
                elif v.kind == "ident" and v.text in ("true", "false"):
                    self.advance()
                    cfg["attributes"][key] = v.text == "true"
                else:
                    self.unexpected("an attribute value")
            else:
                self.error("UNKNOWN_KEYWORD", f"unknown simcfg setting {t.text!r}", t.span)
            self.end_statement()

        self.block(opener, item, "simcfg")
        if self.simcfg is not None:
            self.errors.append(ParseError(kw.span, "DUPLICATE_NAME", "simcfg declared twice"))
            return
        cfg["arrivals"] = tuple(cfg["arrivals"])
        self.simcfg = SimConfig(**cfg)

    # assembly
    def resolve_ref(self, sp: _StagePath) -> StageRef:
        mid = ".".join(sp.segments[:-1])
        kind = _KINDS[sp.segments[-1]]
        lane = sp.lane
        if lane is None:
            draft = self.machine_index.get(mid)
            lanes = [st.lane for st in draft.stages if st.kind is kind] if draft else []
            lane = lanes[0] if len(lanes) == 1 else DEFAULT_LANE
        return StageRef(mid, kind, lane)

    def document(self) -> Document:
        spans = _SpanMap(self.spans)
        machines = tuple(Machine(d.id, d.name, d.parent, tuple(d.subs), tuple(d.stages))
                         for d in self.machines)
        flows = tuple(FlowArc(self.resolve_ref(s), self.resolve_ref(d), g, lbl)
                      for s, d, g, lbl in self.flows)
        triggers = tuple(TriggerArc(self.resolve_ref(s), self.resolve_ref(d), lbl)
                         for s, d, lbl in self.triggers)
        model = Model(machines, flows, triggers, tuple(self.sorts), tuple(self.guards),
                      spans=spans)
        chron = None
        if self.saw_chronology:
            chron = ChronologySpec(self.chronology_initial, tuple(self.chronology_edges))
        return Document(model, tuple(self.events), chron, self.simcfg, spans=spans)


def parse(text: str) -> Document:
    """Parse ``.tm`` source. Raises :class:`ParseFailure` listing all errors."""
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    # the parser allocates many short-lived objects and no cycles; collection only slows it
    paused = gc.isenabled()
    gc.disable()
    try:
        p = _Parser(text)
        p.parse_file()
        if not p.errors:
            doc = p.document()
    finally:
        if paused:
            gc.enable()
    if p.errors:
        p.errors.sort(key=lambda e: (e.span.line, e.span.column))
        raise ParseFailure(p.errors)
    return doc


def parse_model(text: str) -> Model:
    return parse(text).model


def parse_file(path) -> Document:
    with open(path, encoding="utf-8") as fh:
        return parse(fh.read())


# -- printer -----------------------------------------------------------------

def _num(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


def _label(s: str) -> str:
    return s if NAME_RE.match(s) else _escape(s)


def _ref(ref: StageRef) -> str:
    base = f"{ref.machine}.{ref.kind.value}"
    return base if ref.lane == DEFAULT_LANE else f"{base}[{_label(ref.lane)}]"


def _cap(v) -> str:
    return "*" if v == math.inf else str(int(v))


def _machine_lines(model: Model, m: Machine, depth: int) -> Iterator[str]:
    pad = INDENT * depth
    yield f"{pad}machine {m.name} {{"
    for st in m.stages:
        parts = [st.kind.value]
        if st.lane != DEFAULT_LANE:
            parts.append(f"lane {_escape(st.lane)}")
        if st.queue is not None:
            parts.append(f"queue {_cap(st.queue)}")
        if st.state is not None:
            parts.append(f"state {st.state}")
        yield f"{pad}{INDENT}{' '.join(parts)};"
    for sub in m.submachines:
        yield from _machine_lines(model, model.machine(sub), depth + 1)
    yield f"{pad}}}"


def _guard_line(g: Guard) -> str:
    if g.kind == "range":
        body = f"range {g.attribute} {_num(g.min)} {_num(g.max)}"
    elif g.kind == "bernoulli":
        body = f"bernoulli {_num(g.p)}"
    else:
        body = "scripted [" + ", ".join(_label(s) for s in g.script) + "]"
    desc = f" {_escape(g.description)}" if g.description else ""
    return f"guard {g.id} {body}{desc};"


def _event_lines(ev: EventSpec) -> Iterator[str]:
    yield f"{INDENT}event {ev.id} {_escape(ev.name)} {{"
    inner = INDENT * 2
    yield f"{inner}duration {ev.duration};"
    if ev.intensity is not None:
        yield f"{inner}intensity {_num(ev.intensity)};"
    for path in ev.selector.paths:
        yield f"{inner}region {_pattern_text(path)};"
    for pat in ev.selector.arcs:
        arrow = "->" if pat.family == "flow" else "-.->"
        yield f"{inner}region {_pattern_text(pat.src)} {arrow} {_pattern_text(pat.dst)};"
    if ev.guard is not None:
        yield f"{inner}guard {ev.guard};"
    for f in ev.sets:
        yield f"{inner}set {f};"
    for f in ev.clears:
        yield f"{inner}clear {f};"
    yield f"{INDENT}}}"


def _pattern_text(p: str) -> str:
    if "[" in p and p.endswith("]"):
        base, lane = p[:-1].split("[", 1)
        return f"{base}[{_label(lane)}]"
    return p


def _simcfg_lines(cfg: SimConfig) -> Iterator[str]:
    defaults = SimConfig()
    yield "simcfg {"
    for period, count in cfg.arrivals:
        yield f"{INDENT}arrive {period} {count};"
    if cfg.horizon != defaults.horizon:
        yield f"{INDENT}horizon {cfg.horizon};"
    if cfg.seed != defaults.seed:
        yield f"{INDENT}seed {cfg.seed};"
    if cfg.sort is not None:
        yield f"{INDENT}sort {_label(cfg.sort)};"
    for gid, script in cfg.scripts.items():
        yield f"{INDENT}script {gid} [" + ", ".join(_label(s) for s in script) + "];"
    for mid, cap in cfg.capacities.items():
        yield f"{INDENT}capacity {mid} {_cap(cap)};"
    for key, val in cfg.attributes.items():
        text = _escape(val) if isinstance(val, str) else _num(val)
        yield f"{INDENT}attr {key} {text};"
    yield "}"


def serialize(doc: Document | Model) -> str:
    """Canonical text for a valid model (raises :class:`InvalidModel` otherwise)."""
    if isinstance(doc, Model):
        doc = Document(doc)
    model = doc.model
    report = validate(model)
    if report.violations:
        raise InvalidModel(report)

    sections: list[list[str]] = []
    if model.sorts:
        lines = []
        for s in model.sorts:
            head = f"sort {_label(s.name)}"
            if s.machine_ref:
                head += f" machine {s.machine_ref}"
            if s.attributes:
                lines.append(head + " {")
                lines.extend(f"{INDENT}{a}: {k};" for a, k in s.attributes)
                lines.append("}")
            else:
                lines.append(head + ";")
        sections.append(lines)
    if model.guards:
        sections.append([_guard_line(g) for g in model.guards])
    for m in model.roots():
        sections.append(list(_machine_lines(model, m, 0)))
    arcs = [f"flow {_ref(f.src)} -> {_ref(f.dst)}"
            + (f" guard {f.guard}" if f.guard else "")
            + (f" label {_label(f.label)}" if f.label is not None else "") + ";"
            for f in model.flows]
    arcs += [f"trigger {_ref(t.src)} -.-> {_ref(t.dst)}"
             + (f" label {_label(t.label)}" if t.label is not None else "") + ";"
             for t in model.triggers]
    if arcs:
        sections.append(arcs)
    if doc.events or doc.chronology is not None:
        lines = ["events {"]
        for i, ev in enumerate(doc.events):
            if i:
                lines.append("")
            lines.extend(_event_lines(ev))
        if doc.chronology is not None:
            if doc.events:
                lines.append("")
            lines.append(f"{INDENT}chronology {{")
            if doc.chronology.initial is not None:
                lines.append(f"{INDENT * 2}initial {doc.chronology.initial};")
            for e in doc.chronology.edges:
                on = f" on {_label(e.label)}" if e.label is not None else ""
                lines.append(f"{INDENT * 2}{e.src} -> {e.dst}{on};")
            lines.append(f"{INDENT}}}")
        lines.append("}")
        sections.append(lines)
    if doc.simcfg is not None:
        sections.append(list(_simcfg_lines(doc.simcfg)))
    return "\n\n".join("\n".join(s) for s in sections) + "\n" if sections else ""
