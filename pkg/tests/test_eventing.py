import logging
import random

import networkx as nx
import pytest
from hypothesis import given, settings, strategies as st

from conftest import load
from gen import random_model
from tmkit.errors import EventError, PathNotFound
from tmkit.eventing import (
    ArcPattern, ChronologyEdge, RegionSelector, build_chronology, carve_event, check_coverage,
    resolve_region, state_flags,
)
from tmkit.model import ArcRef, Guard, StageKind as K, StageRef


def by_id(doc):
    return {ev.id: ev for ev in doc.carve()}


def test_paint_event_of_single_car_model():
    ev = by_id(load("car_testing.tm"))["E1"]
    assert ev.name == "A car arrives and is painted"
    assert StageRef("color_dry.coloring", K.PROCESS, "car") in ev.region
    assert "color_dry" in ev.region.machines  # owners' ancestors come along


def test_every_machine_selects_whole_model():
    model = load("time.tm").model
    ev = carve_event(model, "ALL", RegionSelector(tuple(m.id for m in model.roots())))
    assert ev.region.elements() == frozenset(model.elements())
    assert ev.excluded == ()
    empty_root = carve_event(model, "ROOT", RegionSelector(("",)))
    assert empty_root.region == ev.region


def test_unknown_stage_in_selector():
    with pytest.raises(PathNotFound):
        carve_event(load("car.tm").model, "X", RegionSelector(("color_dry.coloring.unknownStage",)))


@pytest.mark.parametrize("kwargs,code", [
    ({"duration": -1}, "INVALID_EVENT"),
    ({"intensity": -0.5}, "INVALID_EVENT"),
    ({"guard": "nope"}, "UNKNOWN_GUARD"),
    ({"sets": ("color_dry.coloring.idle",)}, "UNKNOWN_FLAG"),
])
def test_carve_errors(kwargs, code):
    with pytest.raises(EventError) as exc:
        carve_event(load("car.tm").model, "X", RegionSelector(("color_dry",)), **kwargs)
    assert exc.value.code == code


def test_empty_selector_is_rejected():
    with pytest.raises(EventError) as exc:
        carve_event(load("car.tm").model, "X", RegionSelector())
    assert exc.value.code == "EMPTY_REGION"


def test_boundary_arcs_are_dropped_and_logged(caplog):
    model = load("time.tm").model
    with caplog.at_level(logging.WARNING, logger="tmkit.eventing"):
        ev = carve_event(model, "H", RegionSelector(("Time.hour",)))
    # integer.transfer -> Time.hour.transfer has only one endpoint inside
    assert ArcRef("flow", 3) in ev.excluded
    assert ArcRef("flow", 3) not in ev.region
    assert "flow#4" in caplog.text


def test_arc_patterns_pull_in_endpoints():
    model = load("color_dry.tm").model
    sel = RegionSelector(arcs=(ArcPattern("flow", "outside.*", "color_dry.transfer"),))
    region, _ = resolve_region(model, sel)
    assert region.stages == {StageRef("outside", K.TRANSFER, "car"),
                             StageRef("color_dry", K.TRANSFER, "car")}
    # the return arc joins the same two stages, so closure takes it too
    assert region.arcs == {ArcRef("flow", 0), ArcRef("flow", 12)}
    with pytest.raises(PathNotFound):
        resolve_region(model, RegionSelector(arcs=(ArcPattern("trigger", "**", "**"),)))


def test_double_star_spans_segments():
    model = load("time.tm").model
    sel = RegionSelector(arcs=(ArcPattern("flow", "integer.transfer", "Time.**"),))
    region, _ = resolve_region(model, sel)
    assert {s.machine for s in region.stages} == {"integer", "Time.hour", "Time.minute", "Time.second"}


def test_state_flags():
    flags = state_flags(load("car.tm").model)
    assert flags == {
        "color_dry.coloring.busy": StageRef("color_dry.coloring", K.PROCESS, "car"),
        "color_dry.drying.busy": StageRef("color_dry.drying", K.PROCESS, "car"),
    }


# -- coverage -----------------------------------------------------------------

@pytest.mark.parametrize("slicing", [("A1", "A2", "A3", "A4"), ("B1", "B2")])
def test_both_color_dry_slicings_cover_everything(slicing):
    doc = load("color_dry.tm")
    events = by_id(doc)
    report = check_coverage(doc.model, [events[e] for e in slicing])
    assert report.uncovered == ()
    assert report.complete


def test_whole_model_event_has_no_gaps_or_overlaps():
    model = load("color_dry.tm").model
    ev = carve_event(model, "ALL", RegionSelector(("",)))
    report = check_coverage(model, [ev])
    assert report.uncovered == () and report.overlaps == {}


def test_coloring_half_leaves_drying_uncovered():
    doc = load("color_dry.tm")
    ev = carve_event(doc.model, "C", RegionSelector(("color_dry.coloring",)))
    report = check_coverage(doc.model, [ev])
    oracle = [el for el in doc.model.elements() if el not in ev.region.elements()]
    assert list(report.uncovered) == oracle
    for kind in (K.TRANSFER, K.RECEIVE, K.PROCESS, K.RELEASE):
        assert StageRef("color_dry.drying", kind, "car") in report.uncovered


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.data())
def test_coverage_matches_set_difference(seed, data):
    model = random_model(random.Random(seed))
    ids = [m.id for m in model.machines]
    picks = data.draw(st.lists(st.lists(st.sampled_from(ids), min_size=1, max_size=3),
                               min_size=1, max_size=3))
    events = [carve_event(model, f"E{i}", RegionSelector(tuple(p))) for i, p in enumerate(picks)]
    report = check_coverage(model, events)
    union = set().union(*(ev.region.elements() for ev in events))
    assert set(report.uncovered) == set(model.elements()) - union
    for el, owners in report.overlaps.items():
        assert len(owners) == sum(el in ev.region for ev in events) > 1


# -- chronology ---------------------------------------------------------------

def test_car_chronology_has_two_cycles():
    doc = load("car_testing.tm")
    chron = doc.build_chronology()
    assert chron.cycles() == [["E1", "E2", "E3"], ["E5", "E6"]]
    assert chron.successor("E2", "pass") == "E4"
    assert chron.successor("E2", "fail") == "E3"
    assert chron.successor("E7") is None


@pytest.mark.parametrize("name", ["car.tm", "car_testing.tm", "time.tm"])
def test_cycles_agree_with_networkx(name):
    chron = load(name).build_chronology()
    g = nx.DiGraph([(e.src, e.dst) for e in chron.edges])
    g.add_nodes_from(chron.events)
    expected = {frozenset(c) for c in nx.simple_cycles(g)}
    assert {frozenset(c) for c in chron.cycles()} == expected


def test_single_event_chronology():
    ev = carve_event(load("time.tm").model, "E1", RegionSelector(("Time",)))
    chron = build_chronology([ev], [], "E1")
    assert chron.successor("E1") is None and chron.cycles() == []


def _events(n, guard=None):
    model = load("car.tm").model
    if guard is not None:
        guard = guard.id
    return [carve_event(model, f"E{i}", RegionSelector(("color_dry",)),
                        guard=guard if i == 1 else None) for i in range(1, n + 1)]


@pytest.mark.parametrize("edges,initial,code", [
    ([("E1", "E9")], "E1", "UNKNOWN_EVENT"),
    ([], "E0", "UNKNOWN_EVENT"),
    ([("E1", "E2")], "E1", "UNREACHABLE_EVENT"),
    ([("E1", "E2"), ("E1", "E3")], "E1", "NONEXHAUSTIVE_BRANCH"),
    ([("E1", "E2", "pass"), ("E2", "E3")], "E1", "NONEXHAUSTIVE_BRANCH"),
])
def test_chronology_errors(edges, initial, code):
    with pytest.raises(EventError) as exc:
        build_chronology(_events(3), edges, initial)
    assert exc.value.code == code


def test_guarded_event_needs_every_outcome_once():
    events = _events(3, Guard.bernoulli("paint_ok", 0.5))
    ok = build_chronology(events, [("E1", "E2", "pass"), ("E1", "E3", "fail")], "E1")
    assert ok.successor("E1", "fail") == "E3"
    for bad in ([("E1", "E2", "pass")],
                [("E1", "E2", "pass"), ("E1", "E3", "fail"), ("E1", "E3", "fail")],
                [("E1", "E2", "pass"), ("E1", "E3", "maybe")],
                [("E1", "E2"), ("E1", "E3", "fail")]):
        with pytest.raises(EventError) as exc:
            build_chronology(events, bad, "E1")
        assert exc.value.code in ("NONEXHAUSTIVE_BRANCH", "UNREACHABLE_EVENT")


def test_duplicate_event_ids():
    ev = _events(1)[0]
    with pytest.raises(EventError) as exc:
        build_chronology([ev, ev], [], "E1")
    assert exc.value.code == "DUPLICATE_EVENT"


def test_edges_accept_plain_tuples():
    chron = build_chronology(_events(2), [("E1", "E2")], "E1")
    assert chron.edges == (ChronologyEdge("E1", "E2"),)
