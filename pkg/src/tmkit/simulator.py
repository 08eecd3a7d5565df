"""Discrete-period engine that walks tokens through a chronology.

Time advances in whole periods. Period ``p`` spans the boundaries
``p - 1`` and ``p``. An event of duration ``d`` started at boundary ``t``
is active in periods ``t + 1 .. t + d``; zero-duration (bookkeeping)
events fire at the boundary itself and are recorded under period ``t``.

At each boundary the engine settles: every waiting instance fires the
zero-duration events it can, joins station queues, and starts its next
timed event, repeating until nothing changes. Stations are machines
whose Process stage carries a state flag. An instance may only enter an
event touching a station while no other instance holds that flag, and
it waits in the station's queue (FIFO) or, when there is no queue or it
is full, where it stands. A token waiting at a Release stage sits in
that stage's release buffer.
"""

from __future__ import annotations

import json
import random
from collections import Counter, defaultdict, deque
from dataclasses import dataclass, field
from typing import Any, Mapping

from .config import SimConfig
from .errors import SimulationError
from .eventing import Chronology, Event, region_belongs, state_flags
from .model import FAIL, PASS, Guard, Model, StageKind, StageRef

SOURCE = "SOURCE"
SINK = "SINK"


@dataclass
class Token:
    instance_id: int
    sort: str
    attributes: dict = field(default_factory=dict)
    location: str = SOURCE


class GuardState:
    """Random stream plus per-guard script cursors; one per run."""

    def __init__(self, seed: int = 0, scripts: Mapping[str, tuple[str, ...]] | None = None):
        self.rng = random.Random(seed)
        self.scripts = dict(scripts or {})
        self.cursors: Counter = Counter()


def evaluate_guard(guard: Guard, token, state: GuardState) -> str:
    """Decide ``guard`` for ``token``.

    A script (from the config, or the guard's own for scripted guards)
    is consumed cyclically. Range checks are inclusive on both ends.
    """
    script = state.scripts.get(guard.id)
    if script is None and guard.kind == "scripted":
        script = guard.script
    if script:
        i = state.cursors[guard.id]
        state.cursors[guard.id] += 1
        return script[i % len(script)]
    if guard.kind == "range":
        attrs = getattr(token, "attributes", token)
        if guard.attribute not in attrs:
            raise SimulationError(f"guard {guard.id}: token has no attribute {guard.attribute!r}",
                                  "MISSING_ATTRIBUTE")
        value = attrs[guard.attribute]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SimulationError(f"guard {guard.id}: attribute {guard.attribute!r} is not numeric",
                                  "MISSING_ATTRIBUTE")
        return PASS if guard.min <= value <= guard.max else FAIL
    if guard.kind == "bernoulli":
        return PASS if state.rng.random() < guard.p else FAIL
    raise SimulationError(f"guard {guard.id}: nothing to evaluate", "CONFIG_MISMATCH")


# -- trace -------------------------------------------------------------------

@dataclass(frozen=True)
class Firing:
    time: int
    instance: int
    event: str
    duration: int


@dataclass(frozen=True)
class ActiveRecord:
    period: int
    instance: int
    event: str
    duration: int


@dataclass(frozen=True)
class Move:
    time: int
    instance: int
    src: str
    dst: str


@dataclass(frozen=True)
class GuardRecord:
    time: int
    instance: int
    event: str
    guard: str
    outcome: str


@dataclass(frozen=True)
class FlagRecord:
    time: int
    flag: str
    value: bool
    instance: int


@dataclass(frozen=True)
class Trace:
    sort: str
    instances: tuple[int, ...]
    periods: int
    firings: tuple[Firing, ...] = ()
    active: tuple[ActiveRecord, ...] = ()
    moves: tuple[Move, ...] = ()
    guards: tuple[GuardRecord, ...] = ()
    flags: tuple[FlagRecord, ...] = ()

    def sequence(self, instance: int, visible_only: bool = False) -> list[str]:
        return [f.event for f in self.firings
                if f.instance == instance and (f.duration > 0 or not visible_only)]

    def active_in(self, period: int, visible_only: bool = True) -> dict[int, str]:
        return {r.instance: r.event for r in self.active
                if r.period == period and (r.duration > 0 or not visible_only)}

    def to_json(self) -> dict:
        return {
            "sort": self.sort,
            "instances": list(self.instances),
            "periods": self.periods,
            "firings": [[f.time, f.instance, f.event, f.duration] for f in self.firings],
            "active": [[r.period, r.instance, r.event, r.duration] for r in self.active],
            "moves": [[m.time, m.instance, m.src, m.dst] for m in self.moves],
            "guards": [[g.time, g.instance, g.event, g.guard, g.outcome] for g in self.guards],
            "flags": [[f.time, f.flag, f.value, f.instance] for f in self.flags],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"


@dataclass(frozen=True)
class ScheduleTable:
    """Rows are periods 1..n, columns instances; a cell names the visible event or is blank."""

    label: str
    instances: tuple[int, ...]
    rows: tuple[tuple[int, tuple[str, ...]], ...]

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rows), len(self.instances)

    def column(self, instance: int) -> list[str]:
        j = self.instances.index(instance)
        return [cells[j] for _, cells in self.rows]


def schedule_table(trace: Trace) -> ScheduleTable:
    visible = [r for r in trace.active if r.duration > 0]
    last = max((r.period for r in visible), default=0)
    cells: dict[tuple[int, int], str] = {(r.period, r.instance): r.event for r in visible}
    rows = tuple((p, tuple(cells.get((p, i), "") for i in trace.instances))
                 for p in range(1, last + 1))
    return ScheduleTable(trace.sort, trace.instances, rows)


# -- engine ------------------------------------------------------------------

@dataclass
class Station:
    machine: str
    flag: str
    stage: StageRef
    capacity: float | None  # None: no queue
    queue: deque = field(default_factory=deque)
    waiters: list = field(default_factory=list)
    holder: int | None = None

    def first(self) -> int | None:
        if self.queue:
            return self.queue[0]
        return self.waiters[0] if self.waiters else None

    def has_room(self) -> bool:
        return self.capacity is not None and len(self.queue) < self.capacity


@dataclass
class _Instance:
    token: Token
    next_event: str | None = None
    current: str | None = None
    remaining: int = 0
    stage: StageRef | None = None
    waiting_at: str | None = None
    done: bool = False


@dataclass
class StepResult:
    period: int
    fired: list[Firing] = field(default_factory=list)
    moves: list[Move] = field(default_factory=list)
    flag_changes: list[FlagRecord] = field(default_factory=list)
    guards: list[GuardRecord] = field(default_factory=list)
    created: int = 0
    sunk: int = 0
    tokens_before: int = 0
    tokens_after: int = 0


class SimState:
    """Mutable run state; build it with :func:`init`, drive it with :func:`step` / :func:`run`."""

    def __init__(self, model: Model, chronology: Chronology, config: SimConfig):
        self.model = model
        self.chronology = chronology
        self.config = config
        self.horizon = config.horizon
        self.period = 0
        self.guard_state = GuardState(config.seed, config.scripts)
        self.instances: dict[int, _Instance] = {}
        self.sort = config.sort or _infer_sort(model, chronology)
        self.flags: dict[str, bool] = {}
        self.stations: dict[str, Station] = {}
        self._gate: dict[str, Station | None] = {}
        self._anchor: dict[tuple[str, str], StageRef | None] = {}
        self._pending_arrivals = sorted(config.arrivals)
        self._firings: list[Firing] = []
        self._active: list[ActiveRecord] = []
        self._moves: list[Move] = []
        self._guards: list[GuardRecord] = []
        self._flag_log: list[FlagRecord] = []
        self._result: StepResult | None = None
        self._zero_fired: dict[int, set[str]] = defaultdict(set)

    # public views
    @property
    def tokens(self) -> list[Token]:
        """Live tokens (created and not yet at SINK), by instance id."""
        return [inst.token for _, inst in sorted(self.instances.items()) if not inst.done]

    def token(self, instance_id: int) -> Token:
        return self.instances[instance_id].token

    @property
    def finished(self) -> bool:
        return not self._pending_arrivals and all(i.done for i in self.instances.values())

    def trace(self) -> Trace:
        return Trace(self.sort, tuple(sorted(self.instances)), self.period,
                     tuple(self._firings), tuple(self._active), tuple(self._moves),
                     tuple(self._guards), tuple(self._flag_log))

    # logging helpers
    def _log_move(self, inst: _Instance, dst: str, t: int):
        src = inst.token.location
        if src == dst:
            return
        inst.token.location = dst
        mv = Move(t, inst.token.instance_id, src, dst)
        self._moves.append(mv)
        self._result.moves.append(mv)

    def _set_flag(self, flag: str, value: bool, inst: _Instance, t: int):
        station = self.stations[flag]
        station.holder = inst.token.instance_id if value else None
        if self.flags[flag] != value:
            self.flags[flag] = value
            rec = FlagRecord(t, flag, value, inst.token.instance_id)
            self._flag_log.append(rec)
            self._result.flag_changes.append(rec)

    # mechanics
    def _create(self, t: int):
        while self._pending_arrivals and self._pending_arrivals[0][0] <= t:
            _, count = self._pending_arrivals.pop(0)
            for _ in range(count):
                iid = len(self.instances) + 1
                tok = Token(iid, self.sort, dict(self.config.attributes))
                self.instances[iid] = _Instance(tok, next_event=self.chronology.initial)
                self._result.created += 1

    def _wait_location(self, inst: _Instance) -> str:
        if inst.stage is None:
            return inst.token.location
        if inst.stage.kind is StageKind.RELEASE:
            return f"buffer:{inst.stage}"
        return str(inst.stage)

    def _join(self, station: Station, inst: _Instance, t: int):
        iid = inst.token.instance_id
        inst.waiting_at = station.flag
        if not station.waiters and station.has_room():
            station.queue.append(iid)
            self._log_move(inst, f"queue:{station.machine}", t)
        else:
            station.waiters.append(iid)
            self._log_move(inst, self._wait_location(inst), t)

    def _leave(self, station: Station, inst: _Instance):
        iid = inst.token.instance_id
        if station.queue and station.queue[0] == iid:
            station.queue.popleft()
        else:
            station.waiters.remove(iid)
        inst.waiting_at = None

    def _promote(self, t: int) -> bool:
        changed = False
        for station in self.stations.values():
            while station.waiters and station.has_room():
                iid = station.waiters.pop(0)
                station.queue.append(iid)
                self._log_move(self.instances[iid], f"queue:{station.machine}", t)
                changed = True
        return changed

    def _start(self, inst: _Instance, ev: Event, t: int):
        iid = inst.token.instance_id
        for f in ev.sets:
            self._set_flag(f, True, inst, t)
        for f in ev.clears:
            self._set_flag(f, False, inst, t)
        # bookkeeping events flip flags; only timed events carry the token along
        anchor = self._anchor_of(ev, inst.token.sort) if ev.duration else None
        if anchor is not None:
            inst.stage = anchor
            self._log_move(inst, str(anchor), t)
        firing = Firing(t, iid, ev.id, ev.duration)
        self._firings.append(firing)
        self._result.fired.append(firing)
        inst.next_event = None
        if ev.duration == 0:
            if ev.id in self._zero_fired[iid]:
                raise SimulationError(
                    f"instance {iid} re-entered zero-duration event {ev.id} at boundary {t}",
                    "ZERO_DURATION_CYCLE")
            self._zero_fired[iid].add(ev.id)
            self._active.append(ActiveRecord(t, iid, ev.id, 0))
            self._complete(inst, ev, t)
        else:
            inst.current = ev.id
            inst.remaining = ev.duration

    def _complete(self, inst: _Instance, ev: Event, t: int):
        outcome = None
        if ev.guard is not None:
            outcome = evaluate_guard(ev.guard, inst.token, self.guard_state)
            rec = GuardRecord(t, inst.token.instance_id, ev.id, ev.guard.id, outcome)
            self._guards.append(rec)
            self._result.guards.append(rec)
        nxt = self.chronology.successor(ev.id, outcome)
        inst.current = None
        if nxt is None:
            inst.done = True
            inst.stage = None
            self._log_move(inst, SINK, t)
            self._result.sunk += 1
        else:
            inst.next_event = nxt

    def _advance(self, inst: _Instance, t: int, serve: bool) -> bool:
        ev = self.chronology.events[inst.next_event]
        station = self._gate[ev.id]
        changed = False
        if station is not None and station.holder != inst.token.instance_id:
            if inst.waiting_at != station.flag:
                self._join(station, inst, t)
                changed = True
            granted = (serve and station.holder is None
                       and station.first() == inst.token.instance_id)
            if not granted:
                return changed
            self._leave(station, inst)
        self._start(inst, ev, t)
        return True

    def settle(self, t: int, serve: bool = True):
        self._zero_fired.clear()
        changed = True
        while changed:
            changed = False
            for iid in sorted(self.instances):
                inst = self.instances[iid]
                if inst.done or inst.current is not None or inst.next_event is None:
                    continue
                if self._advance(inst, t, serve):
                    changed = True
            if self._promote(t):
                changed = True

    def _anchor_of(self, ev: Event, lane: str) -> StageRef | None:
        key = (ev.id, lane)
        if key not in self._anchor:
            self._anchor[key] = _anchor(self.model, ev, lane)
        return self._anchor[key]


def _anchor(model: Model, ev: Event, lane: str) -> StageRef | None:
    """Where a token of sort ``lane`` rests during ``ev``: the most downstream region stage."""
    order = {ref: i for i, ref in enumerate(model.stage_refs())}
    mine = sorted((s for s in ev.region.stages if s.lane == lane), key=order.__getitem__)
    if not mine:
        return None
    inside = set(mine)
    has_out = {f.src for f in model.flows if f.src in inside and f.dst in inside and f.dst != f.src}
    sinks = [s for s in mine if s not in has_out]
    return (sinks or mine)[-1]


def _infer_sort(model: Model, chronology: Chronology) -> str:
    ev = chronology.events[chronology.initial]
    order = {ref: i for i, ref in enumerate(model.stage_refs())}
    lanes = [s.lane for s in sorted(ev.region.stages, key=order.__getitem__)]
    if not lanes:
        return "thing"
    counts = Counter(lanes)
    best = max(counts.values())
    return next(lane for lane in lanes if counts[lane] == best)


def _check_config(model: Model, chronology: Chronology, config: SimConfig):
    def bad(msg):
        raise SimulationError(msg, "CONFIG_MISMATCH")

    if config.horizon < 1:
        bad(f"horizon must be at least 1, got {config.horizon}")
    for period, count in config.arrivals:
        if period < 0 or count < 0:
            bad(f"arrival ({period}, {count}) must be nonnegative")
    for gid, script in config.scripts.items():
        g = model.guard(gid)
        if g is None:
            bad(f"script given for undeclared guard {gid!r}")
        if not script:
            bad(f"script for guard {gid!r} is empty")
        stray = [o for o in script if o not in g.outcomes]
        if stray:
            bad(f"script for guard {gid!r} uses outcomes {stray} outside {list(g.outcomes)}")
    stations = {f.rsplit(".", 1)[0] for f in state_flags(model)}
    for mid, cap in config.capacities.items():
        if mid not in stations:
            bad(f"capacity given for {mid!r}, which is not a station")
        if not (cap == float("inf") or (float(cap).is_integer() and cap >= 1)):
            bad(f"capacity for {mid!r} must be a positive integer or unbounded")
    lanes = {r.lane for r in model.stage_refs()} | {s.name for s in model.sorts}
    if config.sort is not None and config.sort not in lanes:
        bad(f"sort {config.sort!r} is neither a declared sort nor a lane")
    for ev in chronology.events.values():
        if not region_belongs(model, ev):
            bad(f"event {ev.id} was not carved from this model")


def init(model: Model, chronology: Chronology, config: SimConfig) -> SimState:
    """Create a run: tokens for period-0 arrivals enter the chronology and queue up.

    Stations do not serve until the first :func:`step`, so after ``init``
    every flag is false.
    """
    _check_config(model, chronology, config)
    state = SimState(model, chronology, config)
    flags = state_flags(model)
    for flag, stage in flags.items():
        mid = flag.rsplit(".", 1)[0]
        recv = [st for st in model.machine(mid).stages
                if st.kind is StageKind.RECEIVE and st.queue is not None]
        cap = config.capacities.get(mid, recv[0].queue if recv else None)
        state.stations[flag] = Station(mid, flag, stage, cap)
        state.flags[flag] = False
    for ev in chronology.events.values():
        gate = None
        for f in ev.sets:
            gate = state.stations[f]
            break
        if gate is None:
            for flag, station in state.stations.items():
                if station.stage in ev.region.stages:
                    gate = station
                    break
        state._gate[ev.id] = gate
    state._result = StepResult(0)
    state._create(0)
    state.settle(0, serve=False)
    return state


def step(state: SimState) -> StepResult:
    """Advance one period."""
    if state.period >= state.horizon:
        raise SimulationError(f"period {state.period} is at the horizon {state.horizon}",
                              "HORIZON_EXCEEDED")
    t = state.period
    result = StepResult(t + 1)
    state._result = result
    result.tokens_before = len(state.tokens)
    state._create(t)
    state.settle(t, serve=True)
    for iid in sorted(state.instances):
        inst = state.instances[iid]
        if inst.current is None:
            continue
        ev = state.chronology.events[inst.current]
        state._active.append(ActiveRecord(t + 1, iid, ev.id, ev.duration))
        inst.remaining -= 1
        if inst.remaining == 0:
            state._complete(inst, ev, t + 1)
    state.period = t + 1
    result.tokens_after = len(state.tokens)
    return result


def run(state: SimState, horizon: int | None = None) -> Trace:
    """Step until ``horizon`` (default: the config's) or until every token reached SINK."""
    if horizon is not None:
        if horizon < 1:
            raise SimulationError("horizon must be at least 1", "CONFIG_MISMATCH")
        state.horizon = horizon
    while state.period < state.horizon and not state.finished:
        step(state)
    return state.trace()


def simulate(model: Model, chronology: Chronology, config: SimConfig) -> Trace:
    return run(init(model, chronology, config))


def trace_from_json(data: Mapping[str, Any]) -> Trace:
    return Trace(
        data["sort"], tuple(data["instances"]), data["periods"],
        tuple(Firing(*r) for r in data["firings"]),
        tuple(ActiveRecord(*r) for r in data["active"]),
        tuple(Move(*r) for r in data["moves"]),
        tuple(GuardRecord(*r) for r in data["guards"]),
        tuple(FlagRecord(*r) for r in data["flags"]),
    )
