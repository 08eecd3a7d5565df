"""Events (a region of the model plus timing) and the chronologies ordering them."""

from __future__ import annotations

import logging
import re
from collections import defaultdict, deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import EventError, PathNotFound
from .model import (
    ROOT, ArcRef, Element, Guard, Model, StageKind, StageRef, resolve_path,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class ArcPattern:
    """Select arcs by endpoint pattern; ``*`` matches within one path segment."""

    family: str  # "flow" | "trigger"
    src: str
    dst: str

    def __str__(self) -> str:
        arrow = "->" if self.family == "flow" else "-.->"
        return f"{self.src} {arrow} {self.dst}"


@dataclass(frozen=True)
class RegionSelector:
    paths: tuple[str, ...] = ()
    arcs: tuple[ArcPattern, ...] = ()


@dataclass(frozen=True)
class Region:
    machines: frozenset = frozenset()
    stages: frozenset = frozenset()
    arcs: frozenset = frozenset()

    def elements(self) -> frozenset:
        return self.machines | self.stages | self.arcs

    def __contains__(self, item) -> bool:
        return item in self.machines or item in self.stages or item in self.arcs

    def __len__(self) -> int:
        return len(self.machines) + len(self.stages) + len(self.arcs)


@dataclass(frozen=True)
class EventSpec:
    """An event as declared in a ``.tm`` file, before it is carved."""

    id: str
    name: str
    selector: RegionSelector
    duration: int = 1
    intensity: float | None = None
    guard: str | None = None
    sets: tuple[str, ...] = ()
    clears: tuple[str, ...] = ()


@dataclass(frozen=True)
class Event:
    id: str
    name: str
    region: Region
    duration: int = 1
    intensity: float | None = None
    guard: Guard | None = None
    sets: tuple[str, ...] = ()
    clears: tuple[str, ...] = ()
    # arcs dropped because only one endpoint was selected
    excluded: tuple[ArcRef, ...] = field(default=(), compare=False)

    @property
    def is_bookkeeping(self) -> bool:
        return self.duration == 0


def state_flags(model: Model) -> dict[str, StageRef]:
    """Map ``"<machine id>.<state>"`` to the Process stage carrying that flag."""
    out: dict[str, StageRef] = {}
    for m in model.machines:
        for st in m.stages:
            if st.state is not None and st.kind is StageKind.PROCESS:
                out.setdefault(f"{m.id}.{st.state}", StageRef(m.id, st.kind, st.lane))
    return out


def _pattern_re(pattern: str) -> re.Pattern:
    parts = [".*?" if p == "**" else "[^.\\[\\]]*" if p == "*" else re.escape(p)
             for p in re.split(r"(\*\*|\*)", pattern)]
    return re.compile("".join(parts) + r"\Z")


def _stage_matches(rx: re.Pattern, pattern: str, ref: StageRef) -> bool:
    text = str(ref) if "[" in pattern else f"{ref.machine}.{ref.kind.value}"
    return bool(rx.match(text))


def resolve_region(model: Model, selector: RegionSelector) -> tuple[Region, tuple[ArcRef, ...]]:
    """Closure of ``selector``: the region and the arcs dropped from it."""
    machines: set[str] = set()
    stages: set[StageRef] = set()
    for path in selector.paths:
        target = resolve_path(model, path)
        if isinstance(target, StageRef):
            stages.add(target)
            continue
        roots = model.roots() if target is ROOT else [target]
        for root in roots:
            for mid in model.subtree(root.id):
                machines.add(mid)
                m = model.machine(mid)
                stages.update(StageRef(mid, st.kind, st.lane) for st in m.stages)

    for pat in selector.arcs:
        src_rx, dst_rx = _pattern_re(pat.src), _pattern_re(pat.dst)
        hits = [arc for ref, arc in model.arcs()
                if ref.family == pat.family
                and _stage_matches(src_rx, pat.src, arc.src)
                and _stage_matches(dst_rx, pat.dst, arc.dst)]
        if not hits:
            raise PathNotFound(str(pat), "", "pattern matches no arc")
        for arc in hits:
            stages.update((arc.src, arc.dst))

    arcs: set[ArcRef] = set()
    excluded: list[ArcRef] = []
    for ref, arc in model.arcs():
        inside = (arc.src in stages) + (arc.dst in stages)
        if inside == 2:
            arcs.add(ref)
        elif inside == 1:
            excluded.append(ref)

    for ref in stages:
        machines.add(ref.machine)
    for mid in list(machines):
        machines.update(model.ancestors(mid))
    return Region(frozenset(machines), frozenset(stages), frozenset(arcs)), tuple(excluded)


def carve_event(model: Model, id: str, selector: RegionSelector, duration: int = 1, *,
                name: str | None = None, intensity: float | None = None,
                guard: str | None = None, sets: Sequence[str] = (),
                clears: Sequence[str] = ()) -> Event:
    """Cut an event out of ``model``.

    Raises :class:`PathNotFound` for unresolvable selector entries and
    :class:`EventError` (``EMPTY_REGION``, ``UNKNOWN_GUARD``,
    ``UNKNOWN_FLAG``, ``INVALID_EVENT``) for the rest.
    """
    if duration < 0:
        raise EventError(f"event {id}: duration must be nonnegative", "INVALID_EVENT")
    if intensity is not None and intensity < 0:
        raise EventError(f"event {id}: intensity must be nonnegative", "INVALID_EVENT")
    region, excluded = resolve_region(model, selector)
    if not len(region):
        raise EventError(f"event {id}: region is empty", "EMPTY_REGION")
    if excluded:
        log.warning("event %s: dropped arcs with one endpoint outside the region: %s",
                    id, ", ".join(map(str, excluded)))
    g = None
    if guard is not None:
        g = model.guard(guard)
        if g is None:
            raise EventError(f"event {id}: guard {guard!r} is not declared", "UNKNOWN_GUARD")
    flags = state_flags(model)
    for flag in (*sets, *clears):
        if flag not in flags:
            raise EventError(f"event {id}: no state flag {flag!r}", "UNKNOWN_FLAG")
    return Event(id, name if name is not None else id, region, duration, intensity,
                 g, tuple(sets), tuple(clears), excluded)


def carve(model: Model, spec: EventSpec) -> Event:
    return carve_event(model, spec.id, spec.selector, spec.duration, name=spec.name,
                       intensity=spec.intensity, guard=spec.guard, sets=spec.sets,
                       clears=spec.clears)


def carve_all(model: Model, specs: Iterable[EventSpec]) -> list[Event]:
    return [carve(model, s) for s in specs]


def region_belongs(model: Model, event: Event) -> bool:
    """True if every element of the event's region exists in ``model``."""
    r = event.region
    if any(model.machine(m) is None for m in r.machines):
        return False
    if any(not model.has_stage(s) for s in r.stages):
        return False
    n_flow, n_trig = len(model.flows), len(model.triggers)
    for a in r.arcs:
        limit = n_flow if a.family == "flow" else n_trig
        if a.index >= limit:
            return False
        arc = model.arc(a)
        if arc.src not in r.stages or arc.dst not in r.stages:
            return False
    return True


# -- coverage ----------------------------------------------------------------

@dataclass(frozen=True)
class CoverageReport:
    uncovered: tuple[Element, ...]
    overlaps: Mapping[Element, tuple[str, ...]]

    @property
    def complete(self) -> bool:
        return not self.uncovered


def check_coverage(model: Model, events: Sequence[Event]) -> CoverageReport:
    """Which elements no event covers, and which several events share.

    Overlap is reported, not rejected: a slicing may fold subevents into a
    larger event.
    """
    owners: dict[Element, list[str]] = defaultdict(list)
    for ev in events:
        for el in ev.region.elements():
            owners[el].append(ev.id)
    order = model.elements()
    uncovered = tuple(el for el in order if el not in owners)
    overlaps = {el: tuple(owners[el]) for el in order if len(owners.get(el, ())) > 1}
    return CoverageReport(uncovered, overlaps)


# -- chronology --------------------------------------------------------------

@dataclass(frozen=True)
class ChronologyEdge:
    src: str
    dst: str
    label: str | None = None


@dataclass(frozen=True)
class ChronologySpec:
    """A chronology as declared in a ``.tm`` file (event ids only)."""

    initial: str | None = None
    edges: tuple[ChronologyEdge, ...] = ()


@dataclass(frozen=True)
class Chronology:
    events: Mapping[str, Event]
    edges: tuple[ChronologyEdge, ...]
    initial: str

    def out_edges(self, event_id: str) -> list[ChronologyEdge]:
        return [e for e in self.edges if e.src == event_id]

    def successor(self, event_id: str, outcome: str | None = None) -> str | None:
        """Next event after ``event_id`` completes; ``None`` means the run ends."""
        for e in self.out_edges(event_id):
            if e.label is None or e.label == outcome:
                return e.dst
        return None

    def cycles(self) -> list[list[str]]:
        """Elementary cycles, each rotated to start at its first-declared event."""
        order = {eid: i for i, eid in enumerate(self.events)}
        succ: dict[str, list[str]] = defaultdict(list)
        for e in self.edges:
            if e.dst not in succ[e.src]:
                succ[e.src].append(e.dst)
        found: list[list[str]] = []
        # a cycle is reported from its lowest-ordered vertex only
        for start in self.events:
            rank = order[start]
            stack = [(start, [start])]
            while stack:
                node, path = stack.pop()
                for nxt in succ[node]:
                    if nxt == start:
                        found.append(path)
                    elif nxt not in path and order[nxt] > rank:
                        stack.append((nxt, path + [nxt]))
        return sorted(found, key=lambda c: [order[x] for x in c])


def build_chronology(events: Sequence[Event], edges: Iterable, initial: str) -> Chronology:
    """Assemble and check a chronology.

    ``edges`` holds ``ChronologyEdge`` values or ``(src, dst[, label])``
    tuples. Every declared outcome of a guarded event must label exactly
    one out-edge; an unguarded event may have at most one, unlabelled.
    """
    index: dict[str, Event] = {}
    for ev in events:
        if ev.id in index:
            raise EventError(f"event {ev.id} listed twice", "DUPLICATE_EVENT")
        index[ev.id] = ev
    norm = tuple(e if isinstance(e, ChronologyEdge) else ChronologyEdge(*e) for e in edges)

    if initial not in index:
        raise EventError(f"initial event {initial!r} is not declared", "UNKNOWN_EVENT")
    for e in norm:
        for end in (e.src, e.dst):
            if end not in index:
                raise EventError(f"edge {e.src} -> {e.dst} names undeclared event {end!r}",
                                 "UNKNOWN_EVENT")

    out: dict[str, list[ChronologyEdge]] = defaultdict(list)
    for e in norm:
        out[e.src].append(e)
    for eid, ev in index.items():
        branches = out.get(eid, [])
        if ev.guard is None:
            if any(b.label is not None for b in branches):
                raise EventError(f"{eid} has labelled edges but no guard", "NONEXHAUSTIVE_BRANCH")
            if len(branches) > 1:
                raise EventError(f"{eid} branches {len(branches)} ways without a guard",
                                 "NONEXHAUSTIVE_BRANCH")
            continue
        labels = [b.label for b in branches]
        outcomes = ev.guard.outcomes
        stray = [lbl for lbl in labels if lbl not in outcomes]
        if stray:
            raise EventError(f"{eid}: labels {stray} are not outcomes of guard {ev.guard.id}",
                             "NONEXHAUSTIVE_BRANCH")
        for outcome in outcomes:
            n = labels.count(outcome)
            if n != 1:
                raise EventError(f"{eid}: outcome {outcome!r} of guard {ev.guard.id} "
                                 f"labels {n} out-edges (need exactly 1)", "NONEXHAUSTIVE_BRANCH")

    seen = {initial}
    queue = deque([initial])
    while queue:
        for e in out.get(queue.popleft(), []):
            if e.dst not in seen:
                seen.add(e.dst)
                queue.append(e.dst)
    unreachable = [eid for eid in index if eid not in seen]
    if unreachable:
        raise EventError(f"unreachable from {initial}: {', '.join(unreachable)}",
                         "UNREACHABLE_EVENT")
    return Chronology(index, norm, initial)
