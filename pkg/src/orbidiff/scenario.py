"""Scenario files: atlas, metric, fields and command parameters in one JSON document."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .metric import MetricField, OrbifoldMetric, metric_from_dict
from .orbifold_core import Atlas, TangentOrbVector
from .orbisections import Orbisection, orbisection_from_dict
from .regularity import time_dependent_from_dict

FIXTURES = ("mirror", "mirror_conformal", "cone", "cone_conformal", "line", "teardrop", "trivial")


@dataclass
class Scenario:
    name: str
    atlas: Atlas
    metric: OrbifoldMetric
    fields: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    seed: int = 0

    def section(self, name: str) -> Orbisection:
        if name not in self.fields:
            raise ConfigError(f"scenario {self.name!r} has no field named {name!r}")
        return self.fields[name]

    def params(self, key: str) -> dict:
        return dict(self.raw.get(key, {}))

    def trace_vector(self) -> TangentOrbVector:
        spec = self.params("trace")
        try:
            return TangentOrbVector(spec.get("chart", self.atlas.chart_ids[0]),
                                    np.asarray(spec["base"], dtype=float), np.asarray(spec["vec"], dtype=float))
        except KeyError as exc:
            raise ConfigError(f"trace section is missing field {exc}") from None

    def time_field(self):
        if "time_field" not in self.raw:
            raise ConfigError(f"scenario {self.name!r} has no time_field")
        return time_dependent_from_dict(self.raw["time_field"], self.atlas)


def metric_family_from_dict(spec: dict, atlas: Atlas) -> OrbifoldMetric:
    """``{chart_id | "*": metric spec}``; missing entries default to flat."""
    fields: dict[str, MetricField] = {}
    for cid in atlas.chart_ids:
        s = spec.get(cid, spec.get("*", {"kind": "flat"}))
        fields[cid] = metric_from_dict(s, atlas.chart(cid))
    return OrbifoldMetric(atlas, fields)


def scenario_from_dict(spec: dict, name: str = "scenario") -> Scenario:
    if "atlas" not in spec:
        raise ConfigError("scenario is missing field 'atlas'")
    atlas = Atlas.from_dict(spec["atlas"])
    metric = metric_family_from_dict(spec.get("metric", {}), atlas)
    fields = {}
    for key, fspec in spec.get("fields", {}).items():
        try:
            fields[key] = orbisection_from_dict(fspec, atlas)
        except (ConfigError, ValidationError) as exc:
            raise type(exc)(f"fields.{key}: {exc}") from None
    return Scenario(spec.get("name", name), atlas, metric, fields, spec, int(spec.get("seed", 0)))


def fixture_text(name: str) -> str:
    return resources.files("orbidiff.fixtures").joinpath(f"{name}.json").read_text()


def load_scenario(path_or_name: str) -> Scenario:
    """Load a scenario file, or a bundled fixture by name."""
    p = Path(path_or_name)
    if p.exists():
        text, name = p.read_text(), p.stem
    elif path_or_name in FIXTURES:
        text, name = fixture_text(path_or_name), path_or_name
    else:
        raise ConfigError(f"scenario {path_or_name!r} not found (bundled: {', '.join(FIXTURES)})")
    try:
        spec = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path_or_name}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
    return scenario_from_dict(spec, name)


def load_fixture(name: str) -> Scenario:
    if name not in FIXTURES:
        raise ConfigError(f"unknown fixture {name!r}")
    return scenario_from_dict(json.loads(fixture_text(name)), name)
