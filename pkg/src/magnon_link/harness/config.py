"""JSON run configuration with strict key checking and default filling.

A document has four sections::

    {
      "system":     {... SystemParams fields ...},
      "integrator": {... IntegratorConfig fields ...},
      "experiment": {"kind": "single" | "sweep" | "check",
                     "sweep": {"axes": [{"name": ..., "min": ..., "max": ..., "points": ...}, x2],
                               "metrics": ["F", "N2_max"]}},
      "output":     {"directory": "out"}
    }

A manifest written by a previous run is also accepted; its embedded resolved
configuration is used.
"""

from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from ..dynamics import IntegratorConfig
from ..model import SystemParams

EXPERIMENT_KINDS = ("single", "sweep", "check")
SWEEP_AXES = ("gamma_q", "gamma_phi", "kappa_c", "kappa_mL", "kappa_mR")
SWEEP_METRICS = ("F", "N2_max")
DEFAULT_AXIS_RANGES = {
    "gamma_q": (0.0, 0.05),
    "gamma_phi": (0.0, 0.5),
    "kappa_c": (0.0, 2.5),
    "kappa_mL": (0.0, 2.5),
    "kappa_mR": (0.0, 2.5),
}
DEFAULT_POINTS = 21
MANIFEST_KIND = "magnon-link-manifest"

_SYSTEM_KEYS = tuple(f.name for f in dataclasses.fields(SystemParams) if f.name != "defaulted")
_INTEGRATOR_KEYS = tuple(f.name for f in dataclasses.fields(IntegratorConfig))
_SECTIONS = ("system", "integrator", "experiment", "output")


class ConfigError(ValueError):
    """Invalid configuration document."""


@dataclass(frozen=True)
class SweepAxis:
    name: str
    min: float
    max: float
    points: int

    def values(self) -> list[float]:
        # exact endpoints, evenly spaced; plain Python floats so output is platform-stable
        n = self.points
        return [self.min + (self.max - self.min) * i / (n - 1) for i in range(n)]


@dataclass(frozen=True)
class Experiment:
    kind: str
    axes: tuple[SweepAxis, ...] = ()
    metrics: tuple[str, ...] = SWEEP_METRICS


@dataclass(frozen=True)
class OutputSpec:
    directory: str = "out"


@dataclass(frozen=True)
class RunConfig:
    system: SystemParams
    integrator: IntegratorConfig
    experiment: Experiment
    output: OutputSpec = field(default_factory=OutputSpec)

    def resolved_document(self) -> dict:
        """Fully explicit configuration; parsing it yields an equal RunConfig."""
        system = self.system.to_dict()
        system.pop("defaulted")
        exp: dict[str, Any] = {"kind": self.experiment.kind}
        if self.experiment.kind == "sweep":
            exp["sweep"] = {
                "axes": [dataclasses.asdict(a) for a in self.experiment.axes],
                "metrics": list(self.experiment.metrics),
            }
        return {
            "system": system,
            "integrator": dataclasses.asdict(self.integrator),
            "experiment": exp,
            "output": dataclasses.asdict(self.output),
        }


def _reject_unknown(section: dict, allowed: Iterable[str], where: str) -> None:
    allowed = tuple(allowed)
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)} (allowed: {', '.join(allowed)})")


def _section(doc: dict, name: str) -> dict:
    value = doc.get(name, {})
    if value is None:
        value = {}
    if not isinstance(value, dict):
        raise ConfigError(f"section '{name}' must be an object")
    return value


def _number(value, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where} must be a number, got {value!r}")
    return float(value)


def _parse_axis(raw, index: int) -> SweepAxis:
    where = f"experiment.sweep.axes[{index}]"
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(raw, ("name", "min", "max", "points"), where)
    name = raw.get("name")
    if name not in SWEEP_AXES:
        raise ConfigError(f"{where}: invalid axis {name!r}; valid axis names are {', '.join(SWEEP_AXES)}")
    lo_default, hi_default = DEFAULT_AXIS_RANGES[name]
    lo = _number(raw.get("min", lo_default), f"{where}.min")
    hi = _number(raw.get("max", hi_default), f"{where}.max")
    points = raw.get("points", DEFAULT_POINTS)
    if isinstance(points, bool) or not isinstance(points, int) or points < 2:
        raise ConfigError(f"{where}.points must be an integer >= 2, got {points!r}")
    if lo < 0 or hi < lo:
        raise ConfigError(f"{where}: need 0 <= min <= max, got [{lo}, {hi}]")
    return SweepAxis(name, lo, hi, points)


def _parse_experiment(raw: dict) -> Experiment:
    _reject_unknown(raw, ("kind", "sweep"), "experiment")
    kind = raw.get("kind")
    if not kind:
        raise ConfigError("experiment kind required (one of: single, sweep, check)")
    if kind not in EXPERIMENT_KINDS:
        raise ConfigError(f"unknown experiment kind {kind!r} (one of: {', '.join(EXPERIMENT_KINDS)})")
    sweep = raw.get("sweep")
    if kind != "sweep":
        if sweep is not None:
            raise ConfigError(f"experiment.sweep is only valid for kind 'sweep', not {kind!r}")
        return Experiment(kind)
    if not isinstance(sweep, dict):
        raise ConfigError("experiment.sweep block required for kind 'sweep'")
    _reject_unknown(sweep, ("axes", "metrics"), "experiment.sweep")
    axes_raw = sweep.get("axes")
    if not isinstance(axes_raw, list) or len(axes_raw) != 2:
        raise ConfigError("experiment.sweep.axes must list exactly two axes")
    axes = tuple(_parse_axis(a, i) for i, a in enumerate(axes_raw))
    if axes[0].name == axes[1].name:
        raise ConfigError(f"sweep axes must name distinct parameters, got {axes[0].name!r} twice")
    metrics = sweep.get("metrics", list(SWEEP_METRICS))
    if not isinstance(metrics, list) or not metrics or any(m not in SWEEP_METRICS for m in metrics):
        raise ConfigError(f"experiment.sweep.metrics must be a non-empty subset of {list(SWEEP_METRICS)}")
    return Experiment(kind, axes, tuple(dict.fromkeys(metrics)))


def config_from_dict(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    if doc.get("kind") == MANIFEST_KIND:
        if "config" not in doc:
            raise ConfigError("manifest has no embedded config")
        doc = doc["config"]
        if not isinstance(doc, dict):
            raise ConfigError("manifest config must be an object")
    _reject_unknown(doc, _SECTIONS, "top level")

    system_raw = _section(doc, "system")
    _reject_unknown(system_raw, _SYSTEM_KEYS, "system")
    try:
        system = SystemParams(**system_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"system: {exc}") from exc

    integ_raw = _section(doc, "integrator")
    _reject_unknown(integ_raw, _INTEGRATOR_KEYS, "integrator")
    try:
        integrator = IntegratorConfig(**integ_raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"integrator: {exc}") from exc

    experiment = _parse_experiment(_section(doc, "experiment"))

    out_raw = _section(doc, "output")
    _reject_unknown(out_raw, ("directory",), "output")
    directory = out_raw.get("directory", "out")
    if not isinstance(directory, str) or not directory:
        raise ConfigError("output.directory must be a non-empty string")
    return RunConfig(system, integrator, experiment, OutputSpec(directory))


def load_document(text: str) -> dict:
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc


def parse_config(text: str, overrides: Iterable[str] = (), kind: Optional[str] = None) -> RunConfig:
    """Parse a JSON document, apply ``section.key=value`` overrides and validate.

    ``kind`` fills in the experiment kind when the document leaves it out and
    must agree with it otherwise.
    """
    doc = load_document(text) if text.strip() else {}
    if isinstance(doc, dict) and doc.get("kind") == MANIFEST_KIND:
        doc = copy.deepcopy(doc.get("config"))
    doc = apply_overrides(doc, overrides)
    if kind is not None:
        exp = doc.setdefault("experiment", {})
        if not isinstance(exp, dict):
            raise ConfigError("section 'experiment' must be an object")
        if exp.get("kind") and exp["kind"] != kind:
            raise ConfigError(f"config describes a {exp['kind']!r} experiment but {kind!r} was requested")
        exp["kind"] = kind
    return config_from_dict(doc)


def apply_overrides(doc: Any, overrides: Iterable[str]) -> dict:
    """Set dotted paths such as ``system.T1=0.1``; values are read as JSON, else as strings."""
    if not isinstance(doc, dict):
        raise ConfigError("configuration must be a JSON object")
    doc = copy.deepcopy(doc)
    for item in overrides:
        path, sep, raw = item.partition("=")
        keys = path.strip().split(".")
        if not sep or not all(keys):
            raise ConfigError(f"override {item!r} must look like section.key=value")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = doc
        for k in keys[:-1]:
            nxt = node.setdefault(k, {})
            if not isinstance(nxt, dict):
                raise ConfigError(f"override {item!r}: {k!r} is not a section")
            node = nxt
        node[keys[-1]] = value
    return doc
