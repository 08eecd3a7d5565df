"""Simulation configuration, shared by the DSL ``simcfg`` block, JSON sidecars and the CLI."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from typing import Any, Mapping

Scalar = int | float | str | bool

DEFAULT_HORIZON = 100


@dataclass(frozen=True)
class SimConfig:
    """Everything a run needs besides the model and chronology.

    ``arrivals`` lists ``(period, count)`` pairs; ``scripts`` replaces a
    guard's decision with a fixed outcome cycle; ``capacities`` overrides
    a station's queue capacity (keyed by machine id, ``math.inf`` for
    unbounded); ``attributes`` seeds every token.
    """

    arrivals: tuple[tuple[int, int], ...] = ()
    scripts: Mapping[str, tuple[str, ...]] = field(default_factory=dict)
    capacities: Mapping[str, float] = field(default_factory=dict)
    attributes: Mapping[str, Scalar] = field(default_factory=dict)
    horizon: int = DEFAULT_HORIZON
    seed: int = 0
    sort: str | None = None

    @classmethod
    def cars(cls, n: int, **kw) -> "SimConfig":
        """``n`` instances all arriving at period 0."""
        return cls(arrivals=((0, n),) if n else (), **kw)

    @property
    def total_arrivals(self) -> int:
        return sum(c for _, c in self.arrivals)

    def merged(self, overrides: Mapping[str, Any]) -> "SimConfig":
        """A copy with the given JSON-style fields replaced."""
        return replace(self, **_coerce(overrides))

    def to_json(self) -> dict:
        return {
            "arrivals": [list(a) for a in self.arrivals],
            "scripts": {k: list(v) for k, v in self.scripts.items()},
            "capacities": {k: (None if v == math.inf else v) for k, v in self.capacities.items()},
            "attributes": dict(self.attributes),
            "horizon": self.horizon,
            "seed": self.seed,
            "sort": self.sort,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> "SimConfig":
        return cls(**_coerce(data))

    @classmethod
    def load(cls, path) -> "SimConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_json(json.load(fh))


_KNOWN = {f.name for f in fields(SimConfig)}


def _coerce(data: Mapping[str, Any]) -> dict:
    unknown = set(data) - _KNOWN
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    out = dict(data)
    if "arrivals" in out:
        out["arrivals"] = tuple((int(p), int(c)) for p, c in out["arrivals"])
    if "scripts" in out:
        out["scripts"] = {k: tuple(v) for k, v in out["scripts"].items()}
    if "capacities" in out:
        out["capacities"] = {k: (math.inf if v is None else v) for k, v in out["capacities"].items()}
    if "attributes" in out:
        out["attributes"] = dict(out["attributes"])
    return out
