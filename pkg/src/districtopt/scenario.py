"""Scenario documents: YAML network/horizon/solver description plus CSV profiles.

Errors are collected with their location (file, section, line) and raised
together; nothing is returned from a document with errors.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import yaml

from .components import CATEGORIES
from .network import Carrier, ComponentRef, HorizonSpec, Network, Node
from .ocp import DistrictState
from .sim import ForecastPolicy, ScenarioData
from .solver import SolverConfig

SCHEMA = "districtopt-scenario/1"

# profile-valued parameters: YAML key -> dataclass field
PROFILE_FIELDS = {
    "consumer": {"demand": "demand_profile"},
    "res": {"generation": "generation_profile"},
    "grid_tie": {"import_price": "import_price_profile", "export_price": "export_price_profile"},
    "ev": {"available": "available"},
}
PROFILE_KINDS = ("power", "price", "availability")


@dataclass(frozen=True)
class Location:
    file: str
    section: str
    line: Optional[int] = None

    def __str__(self):
        where = f"{self.file}:{self.line}" if self.line else self.file
        return f"{where} [{self.section}]"


@dataclass(frozen=True)
class LocatedError:
    location: Location
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


class ScenarioError(ValueError):
    def __init__(self, errors: list[LocatedError]):
        self.errors = list(errors)
        super().__init__("\n".join(str(e) for e in self.errors))


@dataclass(frozen=True)
class SimulationConfig:
    steps: int = 24
    policy: ForecastPolicy = ForecastPolicy()
    calorific_value: Optional[float] = None  # kWh/m3; overrides every P2G when set


@dataclass
class Scenario:
    path: str
    net: Network
    horizon: HorizonSpec
    data: ScenarioData
    simulation: SimulationConfig
    solver: SolverConfig
    document: dict = field(repr=False, default_factory=dict)  # canonical form

    def dump(self) -> str:
        return dump_document(self.document)


# -- YAML with line numbers ------------------------------------------------

class _Map(dict):
    line: int = 0
    lines: dict


class _Seq(list):
    line: int = 0


class _Loader(yaml.SafeLoader):
    pass


def _construct_map(loader, node):
    loader.flatten_mapping(node)
    out = _Map()
    out.line = node.start_mark.line + 1
    out.lines = {}
    for k, v in node.value:
        key = loader.construct_object(k, deep=True)
        out[key] = loader.construct_object(v, deep=True)
        out.lines[key] = k.start_mark.line + 1
    return out


def _construct_seq(loader, node):
    out = _Seq(loader.construct_object(v, deep=True) for v in node.value)
    out.line = node.start_mark.line + 1
    return out


_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_MAPPING_TAG, _construct_map)
_Loader.add_constructor(yaml.resolver.BaseResolver.DEFAULT_SEQUENCE_TAG, _construct_seq)


def _line(obj, key=None):
    if key is not None and isinstance(obj, _Map):
        return obj.lines.get(key, obj.line)
    return getattr(obj, "line", None)


# -- profiles --------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    name: str
    values: np.ndarray
    start: Optional[dt.datetime]
    kind: str
    source: Optional[str]  # file path as written in the document, None for inline


def read_profile_csv(path: str, dt_hours: float, errors: list, loc: Location):
    """Parse a ``timestamp,value`` file; returns ``(start, values)`` or ``None``."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        errors.append(LocatedError(loc, f"cannot read profile file {path!r}: {exc.strerror}"))
        return None
    floc = Location(path, "profile")
    if not rows or [c.strip() for c in rows[0]] != ["timestamp", "value"]:
        errors.append(LocatedError(Location(path, "profile", 1), "header must be 'timestamp,value'"))
        return None
    stamps, values = [], []
    step = dt.timedelta(hours=dt_hours)
    ok = True
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            errors.append(LocatedError(Location(path, "profile", i), "expected two columns"))
            ok = False
            continue
        try:
            ts = dt.datetime.fromisoformat(row[0].strip())
        except ValueError:
            errors.append(LocatedError(Location(path, "profile", i),
                                       f"bad ISO-8601 timestamp {row[0]!r}"))
            ok = False
            continue
        try:
            v = float(row[1])
        except ValueError:
            errors.append(LocatedError(Location(path, "profile", i), f"bad number {row[1]!r}"))
            ok = False
            continue
        if not math.isfinite(v):
            errors.append(LocatedError(Location(path, "profile", i), f"non-finite value {row[1]!r}"))
            ok = False
            continue
        if stamps:
            gap = ts - stamps[-1]
            if gap <= dt.timedelta(0):
                errors.append(LocatedError(Location(path, "profile", i),
                                           f"timestamp {ts.isoformat()} is not after {stamps[-1].isoformat()}"))
                ok = False
            elif gap != step:
                errors.append(LocatedError(Location(path, "profile", i),
                                           f"gap before timestamp {ts.isoformat()}: spacing {gap} "
                                           f"differs from dt_hours={dt_hours}"))
                ok = False
        stamps.append(ts)
        values.append(v)
    if not values:
        errors.append(LocatedError(floc, "profile has no data rows"))
        return None
    return (stamps[0], np.array(values)) if ok else None


# -- parsing ---------------------------------------------------------------

def _require(m, key, section, path, errors, types=None):
    if not isinstance(m, dict) or key not in m:
        errors.append(LocatedError(Location(path, section, _line(m)), f"missing required key {key!r}"))
        return None
    v = m[key]
    if types is not None and not isinstance(v, types) or isinstance(v, bool) and types in (int, float, (int, float)):
        errors.append(LocatedError(Location(path, section, _line(m, key)),
                                   f"{key!r} has invalid type {type(v).__name__}"))
        return None
    return v


def _check_keys(m, allowed, section, path, errors):
    if isinstance(m, dict):
        for k in m:
            if k not in allowed:
                errors.append(LocatedError(Location(path, section, _line(m, k)), f"unknown key {k!r}"))


def _coerce_param(cls, name, value):
    """Convert YAML scalars to the parameter's declared type."""
    ftype = {f.name: f.type for f in dataclasses.fields(cls)}[name]
    if "Carrier" in str(ftype):
        return Carrier(value)
    if name in ("departure_targets", "trips"):
        return tuple((int(s), float(k)) for s, k in value)
    kind = str(ftype).replace("Optional[", "").rstrip("]")
    if value is None:
        return value
    if kind == "bool":
        if not isinstance(value, bool):
            raise TypeError(f"expected true or false, got {value!r}")
        return value
    if kind in ("float", "int"):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise TypeError(f"expected a number, got {value!r}")
        if kind == "float":
            return float(value)
        if isinstance(value, float) and not value.is_integer():
            raise TypeError(f"expected an integer, got {value!r}")
        return int(value)
    return value


def parse_scenario(path: str) -> Scenario:
    """Read and fully validate a scenario; raises :class:`ScenarioError` on any problem."""
    errors: list[LocatedError] = []
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError([LocatedError(Location(path, "file"), f"cannot read: {exc.strerror}")])
    try:
        doc = yaml.load(text, Loader=_Loader)
    except yaml.YAMLError as exc:
        line = getattr(getattr(exc, "problem_mark", None), "line", None)
        raise ScenarioError([LocatedError(Location(path, "yaml", None if line is None else line + 1),
                                          f"invalid YAML: {getattr(exc, 'problem', exc)}")])
    if not isinstance(doc, dict):
        raise ScenarioError([LocatedError(Location(path, "document", 1), "top level must be a mapping")])
    base = os.path.dirname(os.path.abspath(path))
    _check_keys(doc, {"schema", "horizon", "nodes", "components", "profiles", "simulation",
                      "solver", "initial_state"}, "document", path, errors)
    schema = doc.get("schema")
    if schema != SCHEMA:
        errors.append(LocatedError(Location(path, "schema", _line(doc, "schema")),
                                   f"schema must be {SCHEMA!r}, got {schema!r}"))

    # horizon
    hz = _require(doc, "horizon", "horizon", path, errors, dict)
    horizon = None
    if hz is not None:
        _check_keys(hz, {"steps", "dt_hours"}, "horizon", path, errors)
        steps = _require(hz, "steps", "horizon", path, errors, int)
        dth = _require(hz, "dt_hours", "horizon", path, errors, (int, float))
        if steps is not None and dth is not None:
            try:
                horizon = HorizonSpec(int(steps), float(dth))
            except ValueError as exc:
                errors.append(LocatedError(Location(path, "horizon", _line(hz)), str(exc)))
    dt_hours = horizon.dt_hours if horizon else 1.0

    # nodes
    nodes = []
    for item in doc.get("nodes") or []:
        loc = Location(path, "nodes", _line(item))
        if not isinstance(item, dict):
            errors.append(LocatedError(loc, "node entry must be a mapping"))
            continue
        _check_keys(item, {"id", "carrier"}, "nodes", path, errors)
        nid = _require(item, "id", "nodes", path, errors, str)
        car = _require(item, "carrier", "nodes", path, errors, str)
        if nid is None or car is None:
            continue
        try:
            nodes.append(Node(nid, Carrier(car)))
        except ValueError:
            errors.append(LocatedError(Location(path, "nodes", _line(item, "carrier")),
                                       f"unknown carrier {car!r}"))
    if "nodes" not in doc:
        errors.append(LocatedError(Location(path, "nodes"), "missing required key 'nodes'"))

    # profiles
    profiles: dict[str, Profile] = {}
    praw = doc.get("profiles") or {}
    if not isinstance(praw, dict):
        errors.append(LocatedError(Location(path, "profiles", _line(praw)), "profiles must be a mapping"))
        praw = {}
    for name, spec in praw.items():
        loc = Location(path, f"profiles.{name}", _line(praw, name))
        if not isinstance(spec, dict):
            errors.append(LocatedError(loc, "profile entry must be a mapping"))
            continue
        _check_keys(spec, {"file", "kind"}, f"profiles.{name}", path, errors)
        kind = spec.get("kind", "power")
        if kind not in PROFILE_KINDS:
            errors.append(LocatedError(loc, f"unknown profile kind {kind!r}"))
        fname = _require(spec, "file", f"profiles.{name}", path, errors, str)
        if fname is None:
            continue
        got = read_profile_csv(os.path.join(base, fname), dt_hours, errors, loc)
        if got is not None:
            profiles[name] = Profile(name, got[1], got[0], kind, fname)
    if profiles:
        lengths = {p.name: len(p.values) for p in profiles.values()}
        starts = {p.start for p in profiles.values()}
        if len(set(lengths.values())) > 1:
            errors.append(LocatedError(Location(path, "profiles", _line(praw)),
                                       f"profile length mismatch: {lengths}"))
        if len(starts) > 1:
            errors.append(LocatedError(Location(path, "profiles", _line(praw)),
                                       "profiles start at different timestamps"))
    span = min((len(p.values) for p in profiles.values()), default=None)
    if span is None and horizon is not None:
        # constant-only scenario: cover one horizon past the configured simulation
        sim_steps = (doc.get("simulation") or {}).get("steps", 24)
        span = horizon.steps + (sim_steps if isinstance(sim_steps, int) else 24) - 1

    # components
    comps = []
    used_profiles = {}
    craw = doc.get("components")
    if craw is None:
        errors.append(LocatedError(Location(path, "components"), "missing required key 'components'"))
        craw = []
    for item in craw:
        loc = Location(path, "components", _line(item))
        if not isinstance(item, dict):
            errors.append(LocatedError(loc, "component entry must be a mapping"))
            continue
        _check_keys(item, {"id", "category", "inputs", "outputs", "owner", "params", "profiles"},
                    "components", path, errors)
        cid = _require(item, "id", "components", path, errors, str)
        cat = _require(item, "category", "components", path, errors, str)
        if cid is None or cat is None:
            continue
        section = f"components.{cid}"
        if cat not in CATEGORIES:
            errors.append(LocatedError(Location(path, section, _line(item, "category")),
                                       f"unknown category {cat!r}; expected one of {sorted(CATEGORIES)}"))
            continue
        cls = CATEGORIES[cat]
        params = dict(item.get("params") or {})
        pmap = item.get("profiles") or {}
        allowed_p = PROFILE_FIELDS.get(cat, {})
        for key, ref in pmap.items():
            ploc = Location(path, section, _line(pmap, key))
            if key not in allowed_p:
                errors.append(LocatedError(ploc, f"{cat} has no profile parameter {key!r}"))
                continue
            if isinstance(ref, str):
                if ref not in profiles:
                    if ref not in praw:
                        errors.append(LocatedError(ploc, f"unknown profile {ref!r}"))
                    continue
                vals = profiles[ref].values
                params[allowed_p[key]] = tuple(bool(v) for v in vals) if key == "available" else vals
                used_profiles[(cid, key)] = ref
            elif isinstance(ref, (int, float)) and not isinstance(ref, bool):
                params[allowed_p[key]] = (float(ref),) * (span or 0)
                used_profiles[(cid, key)] = float(ref)
            else:
                errors.append(LocatedError(ploc, "profile reference must be a name or a number"))
        fields = {f.name: f for f in dataclasses.fields(cls)}
        bad = False
        for key in list(params):
            if key not in fields:
                errors.append(LocatedError(Location(path, section, _line(item.get("params"), key)),
                                           f"unknown parameter {key!r} for {cat}"))
                bad = True
                continue
            try:
                params[key] = _coerce_param(cls, key, params[key])
            except (ValueError, TypeError) as exc:
                errors.append(LocatedError(Location(path, section, _line(item.get("params"), key)),
                                           f"parameter {key!r}: {exc}"))
                bad = True
        missing = [f.name for f in fields.values()
                   if f.default is dataclasses.MISSING and f.default_factory is dataclasses.MISSING
                   and f.name not in params]
        for name in missing:
            ykey = next((k for k, v in allowed_p.items() if v == name), name)
            errors.append(LocatedError(Location(path, section, _line(item)),
                                       f"missing required parameter {ykey!r}"))
            bad = True
        if bad:
            continue
        try:
            spec = cls(**params)
        except (TypeError, ValueError) as exc:
            errors.append(LocatedError(Location(path, section, _line(item)), str(exc)))
            continue
        ins = tuple(item.get("inputs") or ())
        outs = tuple(item.get("outputs") or ())
        comps.append(ComponentRef(cid, spec, ins, outs, item.get("owner")))

    # simulation and solver sections
    sim_cfg = SimulationConfig()
    sraw = doc.get("simulation") or {}
    _check_keys(sraw, {"steps", "forecast", "sigma", "seed", "lookback",
                                 "calorific_value"}, "simulation", path, errors)
    try:
        sim_cfg = SimulationConfig(
            int(sraw.get("steps", 24)),
            ForecastPolicy(str(sraw.get("forecast", "perfect")), float(sraw.get("sigma", 0.0)),
                           int(sraw.get("seed", 0)), int(sraw.get("lookback", 24))),
            None if sraw.get("calorific_value") is None else float(sraw["calorific_value"]))
        if sim_cfg.steps < 1:
            raise ValueError("simulation steps must be positive")
        if sim_cfg.calorific_value is not None and not sim_cfg.calorific_value > 0:
            raise ValueError("calorific_value must be positive")
    except (TypeError, ValueError) as exc:
        errors.append(LocatedError(Location(path, "simulation", _line(sraw)), str(exc)))
    solver = SolverConfig()
    vraw = doc.get("solver") or {}
    names = {f.name for f in dataclasses.fields(SolverConfig)}
    _check_keys(vraw, names, "solver", path, errors)
    try:
        solver = SolverConfig(**{k: v for k, v in vraw.items() if k in names})
    except (TypeError, ValueError) as exc:
        errors.append(LocatedError(Location(path, "solver", _line(vraw)), str(exc)))

    init = DistrictState()
    iraw = doc.get("initial_state") or {}
    _check_keys(iraw, {"soc", "p2g"}, "initial_state", path, errors)
    for cid, v in (iraw.get("soc") or {}).items():
        init.soc[cid] = float(v)
    for cid, v in (iraw.get("p2g") or {}).items():
        init.p2g[cid] = (str(v["state"]), None if v.get("steps") is None else int(v["steps"]))

    if horizon is not None and span is not None:
        if span < horizon.steps:
            errors.append(LocatedError(Location(path, "profiles", _line(praw)),
                                       f"profiles have {span} values, horizon needs {horizon.steps}"))
    if errors:
        raise ScenarioError(errors)
    if sim_cfg.calorific_value is not None:
        comps = [dataclasses.replace(c, spec=dataclasses.replace(c.spec, calorific_value=sim_cfg.calorific_value))
                 if c.category == "p2g" else c for c in comps]
    net = Network(tuple(nodes), tuple(comps))
    data = ScenarioData.from_network(net, horizon.dt_hours)
    data.initial_state = init
    document = _canonical(net, horizon, sim_cfg, solver, praw, profiles, used_profiles, init)
    return Scenario(path, net, horizon, data, sim_cfg, solver, document)


# -- canonical form --------------------------------------------------------

def _plain(v):
    if isinstance(v, Carrier):
        return v.value
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def _canonical(net, horizon, sim_cfg, solver, praw, profiles, used, init) -> dict:
    comps = []
    for c in net.components:
        pfields = PROFILE_FIELDS.get(c.category, {})
        params = {}
        for f in dataclasses.fields(c.spec):
            if f.name in pfields.values():
                continue
            params[f.name] = _plain(getattr(c.spec, f.name))
        entry = {"id": c.id, "category": c.category, "inputs": list(c.input_nodes),
                 "outputs": list(c.output_nodes)}
        if c.owner is not None:
            entry["owner"] = c.owner
        entry["params"] = params
        prefs = {k: used[(c.id, k)] for k in pfields if (c.id, k) in used}
        if prefs:
            entry["profiles"] = prefs
        comps.append(entry)
    doc = {
        "schema": SCHEMA,
        "horizon": {"steps": horizon.steps, "dt_hours": horizon.dt_hours},
        "nodes": [{"id": n.id, "carrier": n.carrier.value} for n in net.nodes],
        "profiles": {name: {"file": p.source, "kind": p.kind} for name, p in sorted(profiles.items())},
        "components": comps,
        "simulation": {"steps": sim_cfg.steps, "forecast": sim_cfg.policy.kind,
                       "sigma": sim_cfg.policy.sigma, "seed": sim_cfg.policy.seed,
                       "lookback": sim_cfg.policy.lookback,
                       "calorific_value": sim_cfg.calorific_value},
        "solver": {k: v for k, v in dataclasses.asdict(solver).items()},
    }
    if init.soc or init.p2g:
        doc["initial_state"] = {
            "soc": dict(sorted(init.soc.items())),
            "p2g": {k: {"state": s, "steps": n} for k, (s, n) in sorted(init.p2g.items())},
        }
    return doc


class _Dumper(yaml.SafeDumper):
    pass


def _repr_list(dumper, data):
    flow = all(not isinstance(x, (dict, list)) for x in data)
    return dumper.represent_sequence("tag:yaml.org,2002:seq", data, flow_style=flow)


_Dumper.add_representer(list, _repr_list)


def dump_document(doc: dict) -> str:
    return yaml.dump(doc, Dumper=_Dumper, sort_keys=False, default_flow_style=False,
                     allow_unicode=False, width=100)
