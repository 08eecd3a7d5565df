"""Thinging-machine models: build, validate, slice into events, simulate and export."""

import logging

from .config import SimConfig
from .dsl import Document, ParseError, ParseFailure, SourceSpan, parse, parse_file, serialize
from .errors import (
    EventError, ExportError, InvalidModel, PathNotFound, SimulationError, TMError,
)
from .eventing import (
    ArcPattern, Chronology, ChronologyEdge, CoverageReport, Event, Region, RegionSelector,
    build_chronology, carve_event, check_coverage,
)
from .model import (
    FlowArc, Guard, Machine, Model, Stage, StageKind, StageRef, ThingSort, TriggerArc,
    ValidationReport, Violation, legal_flow, resolve_path, validate,
)
from .simulator import (
    ScheduleTable, SimState, Token, Trace, evaluate_guard, init, run, schedule_table, simulate,
    step,
)

logging.getLogger(__name__).addHandler(logging.NullHandler())

__version__ = "0.1.0"

__all__ = [
    "ArcPattern", "Chronology", "ChronologyEdge", "CoverageReport", "Document", "Event",
    "EventError", "ExportError", "FlowArc", "Guard", "InvalidModel", "Machine", "Model",
    "ParseError", "ParseFailure", "PathNotFound", "Region", "RegionSelector", "ScheduleTable",
    "SimConfig", "SimState", "SimulationError", "SourceSpan", "Stage", "StageKind", "StageRef",
    "TMError", "ThingSort", "Token", "Trace", "TriggerArc", "ValidationReport", "Violation",
    "build_chronology", "carve_event", "check_coverage", "evaluate_guard", "init", "legal_flow",
    "parse", "parse_file", "resolve_path", "run", "schedule_table", "serialize", "simulate",
    "step", "validate",
]
