"""Random valid models for round-trip and engine property tests."""

from __future__ import annotations

import random
from itertools import product

from tmkit.eventing import ChronologyEdge, ChronologySpec, EventSpec, RegionSelector
from tmkit.model import (
    DEFAULT_LANE, UNBOUNDED, FlowArc, Guard, Machine, Model, Stage, StageKind, StageRef,
    ThingSort, TriggerArc, legal_flow,
)

K = StageKind
LANES = (DEFAULT_LANE, "car", "integer", "two words", "sig_1")
LABELS = ("paint", "sent back", 'say "hi"', "back\\slash", "dry?", "x")
NAMES = [f"{a}{b}" for a, b in product("abcdefgh", ("", "1", "_x", "Zed"))]


def random_model(rng: random.Random, max_machines: int = 7) -> Model:
    n = rng.randint(1, max_machines)
    names = rng.sample(NAMES, n)
    lanes = rng.sample(LANES, rng.randint(1, 3))

    # containment: each machine hangs under an earlier one or the root, then emit preorder
    parent_of: dict[int, int | None] = {0: None}
    for i in range(1, n):
        parent_of[i] = rng.choice([None, *range(i)])
    kids = {i: [j for j in range(n) if parent_of[j] == i] for i in range(n)}

    def mid(i: int) -> str:
        return names[i] if parent_of[i] is None else f"{mid(parent_of[i])}.{names[i]}"

    machines: list[Machine] = []

    def emit(i: int):
        stages = []
        for kind, lane in product(K, lanes):
            if rng.random() < 0.45:
                queue = state = None
                if kind is K.RECEIVE and rng.random() < 0.3:
                    queue = rng.choice([1, 2, 5, UNBOUNDED])
                if kind is K.PROCESS and rng.random() < 0.3:
                    state = rng.choice(["busy", "on", "ready"])
                stages.append(Stage(kind, lane, queue, state))
        if not stages:
            stages.append(Stage(rng.choice(list(K)), rng.choice(lanes)))
        rng.shuffle(stages)
        parent = mid(parent_of[i]) if parent_of[i] is not None else None
        machines.append(Machine(mid(i), names[i], parent, tuple(mid(k) for k in kids[i]),
                                tuple(stages)))
        for k in kids[i]:
            emit(k)

    for i in range(n):
        if parent_of[i] is None:
            emit(i)

    refs = [StageRef(m.id, st.kind, st.lane) for m in machines for st in m.stages]
    guards = []
    for j in range(rng.randint(0, 3)):
        kind = rng.choice(["range", "bernoulli", "scripted"])
        gid = f"g{j}"
        desc = rng.choice(["", "between 0 and 60", 'a "quoted" note'])
        if kind == "range":
            lo = rng.randint(0, 50)
            guards.append(Guard.range_check(gid, rng.choice(["second", "hour"]), lo,
                                            lo + rng.choice([0, 10, 0.5]), desc))
        elif kind == "bernoulli":
            guards.append(Guard.bernoulli(gid, rng.choice([0, 0.25, 0.9, 1])))
        else:
            guards.append(Guard.scripted(gid, rng.sample(["pass", "fail", "retry", "x y"],
                                                         rng.randint(1, 3)), desc))

    legal = [(a, b) for a in refs for b in refs
             if a.lane == b.lane and legal_flow(a.kind, b.kind, a.machine == b.machine)]
    flows = []
    for a, b in rng.sample(legal, min(len(legal), rng.randint(0, 12))):
        guard = None
        if guards and a.kind is K.PROCESS and rng.random() < 0.5:
            guard = rng.choice(guards).id
        label = rng.choice([None, None, *LABELS])
        flows.append(FlowArc(a, b, guard, label))
    triggers = []
    for _ in range(rng.randint(0, 3)):
        triggers.append(TriggerArc(rng.choice(refs), rng.choice(refs),
                                   rng.choice([None, *LABELS])))

    sorts = []
    for lane in lanes:
        if rng.random() < 0.5:
            attrs = tuple((a, rng.choice(["integer", "string", "boolean"]))
                          for a in rng.sample(["hour", "minute", "second", "color"],
                                              rng.randint(0, 2)))
            ref = rng.choice([None, machines[0].id])
            sorts.append(ThingSort(lane, ref, attrs))
    return Model(tuple(machines), tuple(flows), tuple(triggers), tuple(sorts), tuple(guards))


def random_events(rng: random.Random, model: Model) -> tuple[tuple[EventSpec, ...],
                                                            ChronologySpec]:
    """A linear chronology of events whose regions are whole machines."""
    ids = [f"E{i + 1}" for i in range(rng.randint(1, 4))]
    specs = []
    for eid in ids:
        picks = rng.sample([m.id for m in model.machines], rng.randint(1, min(2, len(model.machines))))
        specs.append(EventSpec(eid, f"event {eid}", RegionSelector(tuple(picks)),
                               rng.choice([0, 1, 2])))
    edges = tuple(ChronologyEdge(a, b) for a, b in zip(ids, ids[1:]))
    return tuple(specs), ChronologySpec(ids[0], edges)


def two_station_model(a_queue=UNBOUNDED) -> Model:
    """Station ``a`` (queued) feeds station ``b`` (no queue), both busy-flagged."""
    lane = "part"

    def station(name, queue):
        return Machine(name, name, stages=(
            Stage(K.TRANSFER, lane), Stage(K.RECEIVE, lane, queue),
            Stage(K.PROCESS, lane, state="busy"), Stage(K.RELEASE, lane)))

    a, b = station("a", a_queue), station("b", None)
    r = {(m, k): StageRef(m, k, lane) for m in "ab" for k in K}
    flows = tuple(FlowArc(r[x], r[y]) for x, y in [
        (("a", K.TRANSFER), ("a", K.RECEIVE)), (("a", K.RECEIVE), ("a", K.PROCESS)),
        (("a", K.PROCESS), ("a", K.RELEASE)), (("a", K.RELEASE), ("a", K.TRANSFER)),
        (("a", K.TRANSFER), ("b", K.TRANSFER)),
        (("b", K.TRANSFER), ("b", K.RECEIVE)), (("b", K.RECEIVE), ("b", K.PROCESS)),
        (("b", K.PROCESS), ("b", K.RELEASE)),
    ])
    return Model((a, b), flows, (), (ThingSort(lane),))


def two_station_events(da: int, db: int):
    """Arrive at a, work at a for ``da`` periods, then wait at a's Release for b, work ``db``."""
    spec = [
        ("IN", 0, ("a.transfer", "a.receive"), (), ()),
        ("SA", 0, ("a.process",), ("a.busy",), ()),
        ("WA", da, ("a.receive", "a.process", "a.release"), (), ()),
        ("CA", 0, ("a.process",), (), ("a.busy",)),
        ("SB", 0, ("b.process",), ("b.busy",), ()),
        ("WB", db, ("a.release", "a.transfer", "b.transfer", "b.receive", "b.process"), (), ()),
        ("CB", 0, ("b.process",), (), ("b.busy",)),
        ("OUT", 1, ("b.release",), (), ()),
    ]
    specs = [EventSpec(eid, eid, RegionSelector(paths), d, sets=s, clears=c)
             for eid, d, paths, s, c in spec]
    ids = [s.id for s in specs]
    return specs, [ChronologyEdge(x, y) for x, y in zip(ids, ids[1:])], ids[0]
