"""In-memory metamodel for thinging machines: machines, stages, arcs, guards.

A :class:`Model` is an immutable value. Build it once (by hand, or through
:func:`tmkit.dsl.parse`), run :func:`validate`, then share it freely.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Mapping, NamedTuple, Union

from .errors import PathNotFound

DEFAULT_LANE = "default"
UNBOUNDED = math.inf
NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")
ATTRIBUTE_KINDS = ("integer", "string", "boolean")
PASS, FAIL = "pass", "fail"


class StageKind(enum.Enum):
    CREATE = "create"
    PROCESS = "process"
    RECEIVE = "receive"
    RELEASE = "release"
    TRANSFER = "transfer"

    # members are singletons compared by identity; keep hashing in C (StageRef keys are hot)
    __hash__ = object.__hash__

    @property
    def title(self) -> str:
        return self.value.capitalize()

    @classmethod
    def parse(cls, word: str) -> "StageKind":
        return cls(word.lower())


class StageRef(NamedTuple):
    machine: str
    kind: StageKind
    lane: str = DEFAULT_LANE

    def __str__(self) -> str:
        return f"{self.machine}.{self.kind.value}[{self.lane}]"


class ArcRef(NamedTuple):
    """Identity of an arc: its family and 0-based position in the model."""

    family: str  # "flow" | "trigger"
    index: int

    def __str__(self) -> str:
        return f"{self.family}#{self.index + 1}"


Element = Union[str, StageRef, ArcRef]


@dataclass(frozen=True)
class Stage:
    kind: StageKind
    lane: str = DEFAULT_LANE
    # None: no queue; positive int or UNBOUNDED otherwise. Only meaningful on Receive.
    queue: float | None = None
    # Name of a boolean state flag; only meaningful on Process.
    state: str | None = None


@dataclass(frozen=True)
class Machine:
    id: str
    name: str
    parent: str | None = None
    submachines: tuple[str, ...] = ()
    stages: tuple[Stage, ...] = ()

    def ref(self, kind: StageKind, lane: str = DEFAULT_LANE) -> StageRef:
        return StageRef(self.id, kind, lane)

    def find_stage(self, kind: StageKind, lane: str) -> Stage | None:
        for st in self.stages:
            if st.kind is kind and st.lane == lane:
                return st
        return None

    def lanes_for(self, kind: StageKind) -> list[str]:
        return [st.lane for st in self.stages if st.kind is kind]


@dataclass(frozen=True)
class ThingSort:
    name: str
    machine_ref: str | None = None
    attributes: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class Guard:
    """A routing decision evaluated when a guarded event completes.

    ``kind`` is one of ``range`` (inclusive bounds on a token attribute),
    ``scripted`` (a fixed cycle of outcome labels) or ``bernoulli``.
    """

    id: str
    kind: str
    attribute: str | None = None
    min: float | None = None
    max: float | None = None
    script: tuple[str, ...] = ()
    p: float | None = None
    description: str = ""

    @classmethod
    def range_check(cls, id: str, attribute: str, lo, hi, description: str = "") -> "Guard":
        return cls(id, "range", attribute=attribute, min=lo, max=hi, description=description)

    @classmethod
    def scripted(cls, id: str, outcomes, description: str = "") -> "Guard":
        return cls(id, "scripted", script=tuple(outcomes), description=description)

    @classmethod
    def bernoulli(cls, id: str, p: float, description: str = "") -> "Guard":
        return cls(id, "bernoulli", p=p, description=description)

    @property
    def outcomes(self) -> tuple[str, ...]:
        if self.kind == "scripted":
            return tuple(dict.fromkeys(self.script))
        return (PASS, FAIL)

    def problems(self) -> list[str]:
        if self.kind == "range":
            if not self.attribute:
                return ["range check needs an attribute"]
            if self.min is None or self.max is None:
                return ["range check needs both bounds"]
            if self.min > self.max:
                return [f"min {self.min} exceeds max {self.max}"]
        elif self.kind == "bernoulli":
            if self.p is None or not 0 <= self.p <= 1:
                return [f"probability {self.p} outside [0, 1]"]
        elif self.kind == "scripted":
            if not self.script:
                return ["scripted guard needs at least one outcome"]
        else:
            return [f"unknown guard kind {self.kind!r}"]
        return []


@dataclass(frozen=True)
class FlowArc:
    src: StageRef
    dst: StageRef
    guard: str | None = None
    label: str | None = None


@dataclass(frozen=True)
class TriggerArc:
    src: StageRef
    dst: StageRef
    label: str | None = None


class RootScope:
    """The unnamed scope holding all top-level machines."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "ROOT"


ROOT = RootScope()


@dataclass(frozen=True)
class Model:
    machines: tuple[Machine, ...] = ()
    flows: tuple[FlowArc, ...] = ()
    triggers: tuple[TriggerArc, ...] = ()
    sorts: tuple[ThingSort, ...] = ()
    guards: tuple[Guard, ...] = ()
    # location path -> source span; populated by the parser, ignored by equality
    spans: Mapping = field(default_factory=dict, compare=False, repr=False)

    @cached_property
    def _machine_index(self) -> dict[str, Machine]:
        index: dict[str, Machine] = {}
        for m in self.machines:
            index.setdefault(m.id, m)
        return index

    @cached_property
    def _stage_index(self) -> dict[StageRef, Stage]:
        index: dict[StageRef, Stage] = {}
        for m in self.machines:
            for st in m.stages:
                index.setdefault(StageRef(m.id, st.kind, st.lane), st)
        return index

    def machine(self, machine_id: str) -> Machine | None:
        return self._machine_index.get(machine_id)

    def stage(self, ref: StageRef) -> Stage | None:
        return self._stage_index.get(ref)

    def has_stage(self, ref: StageRef) -> bool:
        return ref in self._stage_index

    def guard(self, guard_id: str) -> Guard | None:
        for g in self.guards:
            if g.id == guard_id:
                return g
        return None

    def sort(self, name: str) -> ThingSort | None:
        for s in self.sorts:
            if s.name == name:
                return s
        return None

    def roots(self) -> list[Machine]:
        return [m for m in self.machines if m.parent is None]

    def children(self, scope) -> list[Machine]:
        if scope is ROOT:
            return self.roots()
        return [self._machine_index[c] for c in scope.submachines if c in self._machine_index]

    def subtree(self, machine_id: str) -> list[str]:
        """``machine_id`` and all of its descendants, preorder."""
        out: list[str] = []
        seen: set[str] = set()
        stack = [machine_id]
        while stack:
            mid = stack.pop()
            if mid in seen or mid not in self._machine_index:
                continue
            seen.add(mid)
            out.append(mid)
            stack.extend(reversed(self._machine_index[mid].submachines))
        return out

    def ancestors(self, machine_id: str) -> list[str]:
        out: list[str] = []
        m = self._machine_index.get(machine_id)
        while m is not None and m.parent is not None and m.parent not in out:
            out.append(m.parent)
            m = self._machine_index.get(m.parent)
        return out

    def stage_refs(self) -> list[StageRef]:
        return list(self._stage_index)

    def arcs(self) -> Iterator[tuple[ArcRef, FlowArc | TriggerArc]]:
        for i, f in enumerate(self.flows):
            yield ArcRef("flow", i), f
        for i, t in enumerate(self.triggers):
            yield ArcRef("trigger", i), t

    def arc(self, ref: ArcRef) -> FlowArc | TriggerArc:
        return (self.flows if ref.family == "flow" else self.triggers)[ref.index]

    def elements(self) -> list[Element]:
        """Every machine, stage and arc, in declaration order."""
        out: list[Element] = [m.id for m in self.machines]
        out.extend(self.stage_refs())
        out.extend(ref for ref, _ in self.arcs())
        return out


# -- adjacency ---------------------------------------------------------------

_K = StageKind
_SAME_MACHINE = frozenset({
    (_K.TRANSFER, _K.RECEIVE),
    (_K.RECEIVE, _K.PROCESS),
    (_K.RECEIVE, _K.RELEASE),
    (_K.PROCESS, _K.RELEASE),
    (_K.CREATE, _K.PROCESS),
    (_K.CREATE, _K.RELEASE),
    (_K.RELEASE, _K.TRANSFER),
})
_CROSS_MACHINE = frozenset({(_K.TRANSFER, _K.TRANSFER)})


def legal_flow(from_kind: StageKind, to_kind: StageKind, same_machine: bool) -> bool:
    table = _SAME_MACHINE if same_machine else _CROSS_MACHINE
    return (from_kind, to_kind) in table


# -- path resolution ---------------------------------------------------------

_STAGE_SEG = re.compile(r"(?P<kind>[a-z]+)(?:\[(?P<lane>[^\]]*)\])?\Z")


def split_path(path: str) -> list[str]:
    # dots inside a lane bracket are not separators
    parts, depth, cur = [], 0, []
    for ch in path:
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
        if ch == "." and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    parts.append("".join(cur))
    return parts


def pick_lane(machine: Machine, kind: StageKind, lane: str | None) -> str | None:
    """Lane used when a stage is named without (or with) an explicit lane."""
    lanes = machine.lanes_for(kind)
    if lane is not None:
        return lane if lane in lanes else None
    if DEFAULT_LANE in lanes:
        return DEFAULT_LANE
    if len(lanes) == 1:
        return lanes[0]
    return None


def resolve_path(model: Model, path: str):
    """Resolve a dotted path to :data:`ROOT`, a :class:`Machine` or a :class:`StageRef`.

    ``"Time.hour"`` names a machine, ``"Time.hour.receive"`` its Receive
    stage (the lane may be given as ``receive[integer]``), ``""`` the root.
    """
    if path == "":
        return ROOT
    segments = split_path(path)
    scope = ROOT
    resolved: list[str] = []
    for i, seg in enumerate(segments):
        child = next((m for m in model.children(scope) if m.name == seg), None)
        if child is not None:
            scope = child
            resolved.append(seg)
            continue
        last = i == len(segments) - 1
        m = _STAGE_SEG.match(seg)
        if last and scope is not ROOT and m and m["kind"] in {k.value for k in StageKind}:
            kind = StageKind(m["kind"])
            lane = pick_lane(scope, kind, m["lane"])
            if lane is None:
                lanes = scope.lanes_for(kind)
                detail = (f"{kind.value} is ambiguous between lanes {lanes}"
                          if len(lanes) > 1 and m["lane"] is None else "no such stage")
                raise PathNotFound(path, ".".join(resolved), detail)
            return StageRef(scope.id, kind, lane)
        raise PathNotFound(path, ".".join(resolved))
    return scope


# -- validation --------------------------------------------------------------

@dataclass(frozen=True)
class Violation:
    code: str
    location: str
    message: str


def natural_key(text: str):
    return [int(t) if t.isdigit() else t for t in re.split(r"(\d+)", text)]


def _order(items) -> tuple[Violation, ...]:
    return tuple(sorted(items, key=lambda v: (natural_key(v.location), v.code, v.message)))


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = ()
    warnings: tuple[Violation, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        # truthy when there is something to report, like a non-empty list
        return bool(self.violations)

    def codes(self) -> list[str]:
        return [v.code for v in self.violations]


_UNUSUAL_TRIGGER_TARGETS = {StageKind.RECEIVE, StageKind.TRANSFER}


def validate(model: Model) -> ValidationReport:
    """Check every structural rule; malformed models yield violations, never raise."""
    out: list[Violation] = []
    warn: list[Violation] = []
    add = lambda code, loc, msg: out.append(Violation(code, loc, msg))  # noqa: E731

    ids: dict[str, Machine] = {}
    for m in model.machines:
        if m.id in ids:
            add("DUPLICATE_ID", m.id, f"machine id {m.id!r} declared twice")
        ids.setdefault(m.id, m)

    for m in model.machines:
        if not NAME_RE.match(m.name or ""):
            add("INVALID_NAME", m.id, f"machine name {m.name!r} is not an identifier")
        if m.parent is not None:
            parent = ids.get(m.parent)
            if parent is None:
                add("UNKNOWN_MACHINE", m.id, f"parent {m.parent!r} does not exist")
            elif m.id not in parent.submachines:
                add("INCONSISTENT_CONTAINMENT", m.id,
                    f"parent {m.parent!r} does not list {m.id!r} as a submachine")
        names: set[str] = set()
        for sub in m.submachines:
            child = ids.get(sub)
            if child is None:
                add("UNKNOWN_MACHINE", m.id, f"submachine {sub!r} does not exist")
                continue
            if child.parent != m.id:
                add("INCONSISTENT_CONTAINMENT", m.id,
                    f"submachine {sub!r} names parent {child.parent!r}")
            if child.name in names:
                add("DUPLICATE_NAME", sub, f"sibling name {child.name!r} repeated in {m.id!r}")
            names.add(child.name)
        if not m.stages:
            add("EMPTY_MACHINE", m.id, "machine declares no stages")
        seen: set[tuple[StageKind, str]] = set()
        for st in m.stages:
            loc = str(StageRef(m.id, st.kind, st.lane))
            if (st.kind, st.lane) in seen:
                add("DUPLICATE_STAGE", loc, f"{st.kind.title} on lane {st.lane!r} declared twice")
            seen.add((st.kind, st.lane))
            if not st.lane:
                add("INVALID_LANE", loc, "lane sort name is empty")
            if st.queue is not None:
                if st.kind is not StageKind.RECEIVE:
                    add("ANNOTATION_PLACEMENT", loc, "queues attach to Receive stages only")
                if not (st.queue == UNBOUNDED or (float(st.queue).is_integer() and st.queue >= 1)):
                    add("INVALID_CAPACITY", loc, f"queue capacity {st.queue!r} must be a positive integer")
            if st.state is not None:
                if st.kind is not StageKind.PROCESS:
                    add("ANNOTATION_PLACEMENT", loc, "state flags attach to Process stages only")
                if not NAME_RE.match(st.state):
                    add("INVALID_NAME", loc, f"state name {st.state!r} is not an identifier")

    top: set[str] = set()
    for m in model.machines:
        if m.parent is None:
            if m.name in top:
                add("DUPLICATE_NAME", m.id, f"top-level name {m.name!r} repeated")
            top.add(m.name)

    # forest: walking parents from any machine must terminate
    for m in model.machines:
        seen_ids = {m.id}
        cur = ids.get(m.parent) if m.parent else None
        while cur is not None:
            if cur.id in seen_ids:
                add("CONTAINMENT_CYCLE", m.id, f"machine {m.id!r} is its own ancestor")
                break
            seen_ids.add(cur.id)
            cur = ids.get(cur.parent) if cur.parent else None

    sort_names: set[str] = set()
    for s in model.sorts:
        loc = f"sort:{s.name}"
        if not s.name:
            add("INVALID_NAME", loc, "sort name is empty")
        if s.name in sort_names:
            add("DUPLICATE_ID", loc, f"sort {s.name!r} declared twice")
        sort_names.add(s.name)
        if s.machine_ref is not None and s.machine_ref not in ids:
            add("UNKNOWN_MACHINE", loc, f"sort refers to unknown machine {s.machine_ref!r}")
        attr_names: set[str] = set()
        for name, kind in s.attributes:
            if kind not in ATTRIBUTE_KINDS:
                add("INVALID_ATTRIBUTE", loc, f"attribute {name!r} has unknown kind {kind!r}")
            if name in attr_names:
                add("INVALID_ATTRIBUTE", loc, f"attribute {name!r} declared twice")
            attr_names.add(name)

    guard_ids: set[str] = set()
    for g in model.guards:
        loc = f"guard:{g.id}"
        if g.id in guard_ids:
            add("DUPLICATE_ID", loc, f"guard {g.id!r} declared twice")
        guard_ids.add(g.id)
        for problem in g.problems():
            add("INVALID_GUARD", loc, problem)

    for ref, arc in model.arcs():
        loc = str(ref)
        missing = [e for e in (arc.src, arc.dst) if not model.has_stage(e)]
        for e in missing:
            add("UNKNOWN_STAGE", loc, f"endpoint {e} does not exist")
        if ref.family == "trigger":
            if not missing and arc.dst.kind in _UNUSUAL_TRIGGER_TARGETS:
                warn.append(Violation("UNUSUAL_TRIGGER_TARGET", loc,
                                      f"trigger targets a {arc.dst.kind.title} stage"))
            continue
        if arc.src.lane != arc.dst.lane:
            add("SORT_MISMATCH", loc,
                f"flow changes sort from {arc.src.lane!r} to {arc.dst.lane!r}")
        if not missing:
            same = arc.src.machine == arc.dst.machine
            if not legal_flow(arc.src.kind, arc.dst.kind, same):
                where = "within a machine" if same else "across machines"
                add("ILLEGAL_ADJACENCY", loc,
                    f"{arc.src.kind.title} -> {arc.dst.kind.title} is not allowed {where}")
        if arc.guard is not None:
            if arc.guard not in guard_ids:
                add("UNKNOWN_GUARD", loc, f"guard {arc.guard!r} is not declared")
            if arc.src.kind is not StageKind.PROCESS:
                add("GUARD_PLACEMENT", loc, "guards belong on arcs leaving a Process stage")

    return ValidationReport(_order(out), _order(warn))
