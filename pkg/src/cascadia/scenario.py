"""Scenario files, exogenous profiles and fault schedules, the run loop and trace I/O."""
from __future__ import annotations

import bisect
import csv
import dataclasses
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .composition import CompositionNetwork
from .core import DEFAULT_MAX_CONSECUTIVE_JUMPS, NoiseSource
from .errors import ValidationError
from .models import (
    EXOGENOUS,
    MicropolisParams,
    NetworkParams,
    PumpParams,
    ScadaParams,
    SubstationParams,
    TankParams,
    make_micropolis,
)

log = logging.getLogger(__name__)

FLOAT_FORMAT = "{:.9g}"

DEFAULT_PROFILES = {"d_city": 200.0, "w_d": 1.0}
# schedule key in scenario files -> exogenous input name
SCHEDULE_KEYS = {"phi_n": "phi_n", "phi_p": "phi_p", "s_op": "s_OP"}


@dataclass(frozen=True)
class Profile:
    """Piecewise signal; ``hold`` is piecewise constant, ``linear`` interpolates.

    Beyond the last breakpoint the last value is held.
    """

    points: tuple[tuple[float, float], ...]
    interp: str = "hold"

    def __post_init__(self):
        if self.interp not in ("hold", "linear"):
            raise ValidationError("interp", f"must be 'hold' or 'linear', got {self.interp!r}")
        if not self.points:
            raise ValidationError("points", "at least one breakpoint is required")
        times = [t for t, _ in self.points]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("points", "breakpoint times must be strictly increasing")
        if times[0] > 0:
            raise ValidationError("points", "first breakpoint must be at t <= 0")
        object.__setattr__(self, "_times", times)

    @classmethod
    def constant(cls, value):
        return cls(((0.0, float(value)),))

    def sample(self, t: float) -> float:
        i = bisect.bisect_right(self._times, t) - 1
        t0, v0 = self.points[max(i, 0)]
        if self.interp == "hold" or i >= len(self.points) - 1:
            return v0
        t1, v1 = self.points[i + 1]
        return v0 + (v1 - v0) * (t - t0) / (t1 - t0)

    def to_dict(self):
        return {"interp": self.interp, "points": [list(p) for p in self.points]}


def sample_profile(profile: Profile, t: float) -> float:
    return profile.sample(t)


@dataclass(frozen=True)
class Schedule:
    """0/1 toggles; the value holds between toggles and is 0 before the first."""

    toggles: tuple[tuple[float, int], ...] = ()

    def __post_init__(self):
        times = [t for t, _ in self.toggles]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValidationError("", "toggle times must be strictly increasing")
        if any(v not in (0, 1) for _, v in self.toggles):
            raise ValidationError("", "toggle values must be 0 or 1")
        object.__setattr__(self, "_times", times)

    def value(self, t: float) -> float:
        i = bisect.bisect_right(self._times, t) - 1
        return float(self.toggles[i][1]) if i >= 0 else 0.0

    def to_list(self):
        return [[t, v] for t, v in self.toggles]


@dataclass(frozen=True)
class Solver:
    dt: float = 0.1
    t_end: float = 180.0
    seed: int = 0
    max_consecutive_jumps: int = DEFAULT_MAX_CONSECUTIVE_JUMPS

    @property
    def n_steps(self) -> int:
        return math.floor(self.t_end / self.dt + 1e-9)


@dataclass(frozen=True)
class Scenario:
    params: MicropolisParams = field(default_factory=MicropolisParams)
    solver: Solver = field(default_factory=Solver)
    profiles: Mapping[str, Profile] = field(
        default_factory=lambda: {k: Profile.constant(v) for k, v in DEFAULT_PROFILES.items()})
    schedules: Mapping[str, Schedule] = field(
        default_factory=lambda: {k: Schedule() for k in SCHEDULE_KEYS.values()})
    # component -> {"mode": name or None, "state": {var: value}}
    initial: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    def exogenous(self, t: float) -> dict[str, float]:
        values = {name: self.profiles[name].sample(t) for name in DEFAULT_PROFILES}
        values.update({name: self.schedules[name].value(t) for name in SCHEDULE_KEYS.values()})
        return {EXOGENOUS[name]: v for name, v in values.items()}

    def with_seed(self, seed: int) -> "Scenario":
        return dataclasses.replace(self, solver=dataclasses.replace(self.solver, seed=int(seed)))

    def to_dict(self) -> dict:
        d = self.params.to_dict()
        d["solver"] = dataclasses.asdict(self.solver)
        d["profiles"] = {k: self.profiles[k].to_dict() for k in DEFAULT_PROFILES}
        d["schedules"] = {key: self.schedules[name].to_list() for key, name in SCHEDULE_KEYS.items()}
        d["initial"] = {k: dict(v) for k, v in self.initial.items()}
        return d

    def digest(self) -> str:
        text = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()


# -- loading ----------------------------------------------------------------

_PARAM_TYPES = {
    "substation": SubstationParams,
    "scada": ScadaParams,
    "network": NetworkParams,
    "tank": TankParams,
    "pump": PumpParams,
}
_TOP_KEYS = set(_PARAM_TYPES) | {"solver", "profiles", "schedules", "initial"}


def _number(path, value, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    if not math.isfinite(value):
        raise ValidationError(path, "must be finite")
    if integer and value != int(value):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    return int(value) if integer else float(value)


def _object(path, value):
    if not isinstance(value, dict):
        raise ValidationError(path, f"expected an object, got {type(value).__name__}")
    return value


def _unknown(path, obj, allowed, strict):
    extra = sorted(set(obj) - set(allowed))
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        if strict:
            raise ValidationError(where, "unknown key")
        log.warning("ignoring unknown key %s", where)


def _params(section, raw, strict, extra_defaults=None):
    cls = _PARAM_TYPES[section]
    raw = _object(section, raw)
    names = [f.name for f in dataclasses.fields(cls)]
    _unknown(section, raw, names, strict)
    kwargs = dict(extra_defaults or {})
    for name in names:
        if name in raw:
            if raw[name] is None and name == "theta_off":
                continue
            kwargs[name] = _number(f"{section}.{name}", raw[name])
    return cls(**kwargs).validate(section)


def _points(path, raw):
    if not isinstance(raw, list) or not raw:
        raise ValidationError(path, "expected a non-empty list of [t, value] pairs")
    pts = []
    for i, item in enumerate(raw):
        if not isinstance(item, list) or len(item) != 2:
            raise ValidationError(f"{path}[{i}]", "expected a [t, value] pair")
        pts.append((_number(f"{path}[{i}][0]", item[0]), _number(f"{path}[{i}][1]", item[1])))
    return tuple(pts)


def _profile(path, raw, strict):
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return Profile.constant(_number(path, raw))
    raw = _object(path, raw)
    _unknown(path, raw, ("interp", "points"), strict)
    try:
        return Profile(_points(f"{path}.points", raw.get("points")), raw.get("interp", "hold"))
    except ValidationError as exc:
        if exc.path and exc.path.startswith(path):
            raise
        raise ValidationError(f"{path}.{exc.path}" if exc.path else path, str(exc).split(": ", 1)[-1]) from None


def _schedule(path, raw):
    if not isinstance(raw, list):
        raise ValidationError(path, "expected a list of [t, 0|1] toggles")
    toggles = []
    for t, v in (_points(path, raw) if raw else ()):
        if v not in (0.0, 1.0):
            raise ValidationError(path, f"toggle value must be 0 or 1, got {v}")
        if t < 0:
            raise ValidationError(path, "toggle times must be >= 0")
        toggles.append((t, int(v)))
    try:
        return Schedule(tuple(toggles))
    except ValidationError as exc:
        raise ValidationError(path, str(exc).lstrip(": ")) from None


def scenario_from_dict(data: Mapping, strict: bool = True) -> Scenario:
    data = _object("", data)
    _unknown("", data, _TOP_KEYS, strict)
    sections = {}
    for name in ("substation", "scada", "network", "tank"):
        sections[name] = _params(name, data.get(name, {}), strict)
    sections["pump"] = _params("pump", data.get("pump", {}), strict, {"V_max": sections["tank"].V_max})
    params = MicropolisParams(**sections).validate()

    raw_solver = _object("solver", data.get("solver", {}))
    _unknown("solver", raw_solver, ("dt", "t_end", "seed", "max_consecutive_jumps"), strict)
    solver_kw = {}
    for name in ("dt", "t_end"):
        if name in raw_solver:
            solver_kw[name] = _number(f"solver.{name}", raw_solver[name])
    for name in ("seed", "max_consecutive_jumps"):
        if name in raw_solver:
            solver_kw[name] = _number(f"solver.{name}", raw_solver[name], integer=True)
    solver = Solver(**solver_kw)
    if solver.dt <= 0:
        raise ValidationError("solver.dt", "must be > 0")
    if solver.t_end < solver.dt:
        raise ValidationError("solver.t_end", f"must be >= dt={solver.dt}")
    if solver.max_consecutive_jumps < 1:
        raise ValidationError("solver.max_consecutive_jumps", "must be >= 1")

    raw_profiles = _object("profiles", data.get("profiles", {}))
    _unknown("profiles", raw_profiles, DEFAULT_PROFILES, strict)
    profiles = {
        name: _profile(f"profiles.{name}", raw_profiles[name], strict) if name in raw_profiles
        else Profile.constant(default)
        for name, default in DEFAULT_PROFILES.items()
    }

    raw_sched = _object("schedules", data.get("schedules", {}))
    _unknown("schedules", raw_sched, SCHEDULE_KEYS, strict)
    schedules = {name: _schedule(f"schedules.{key}", raw_sched.get(key, [])) for key, name in SCHEDULE_KEYS.items()}

    raw_init = _object("initial", data.get("initial", {}))
    _unknown("initial", raw_init, _PARAM_TYPES, strict)
    net = make_micropolis(params)
    initial = {}
    for comp, spec in raw_init.items():
        path = f"initial.{comp}"
        spec = _object(path, spec)
        _unknown(path, spec, ("mode", "state"), strict)
        automaton = net.nodes[comp]
        mode = spec.get("mode")
        if mode is not None and mode not in automaton.modes:
            raise ValidationError(f"{path}.mode", f"unknown mode {mode!r}; expected one of {list(automaton.modes)}")
        state = _object(f"{path}.state", spec.get("state", {}))
        _unknown(f"{path}.state", state, automaton.var_names, strict)
        initial[comp] = {"mode": mode,
                         "state": {k: _number(f"{path}.state.{k}", v) for k, v in state.items()}}
    return Scenario(params, solver, profiles, schedules, initial)


def load_scenario(text: str, strict: bool = True) -> Scenario:
    """Parse and validate a JSON scenario; missing fields take defaults."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"line {exc.lineno}, column {exc.colno}", f"JSON parse error: {exc.msg}") from None
    return scenario_from_dict(data, strict)


def load_scenario_file(path, strict: bool = True) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"), strict)


# -- traces -------------------------------------------------------------------

@dataclass(frozen=True)
class Event:
    t: float
    node: str
    from_mode: str
    to_mode: str
    guard: str

    def to_dict(self):
        return {"t": _round(self.t), "node": self.node, "from": self.from_mode,
                "to": self.to_mode, "guard": self.guard}

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["t"]), d["node"], d["from"], d["to"], d["guard"])


def _round(v: float) -> float:
    return float(FLOAT_FORMAT.format(v))


@dataclass
class Trace:
    """Column-major record of a run: one row per step, t = k*dt."""

    header: dict
    columns: list[str]
    data: dict[str, list]
    events: list[Event]

    @property
    def dt(self) -> float:
        return float(self.header["dt"])

    def __len__(self):
        return len(self.data["t"])

    def column(self, name: str) -> list:
        return self.data[name]

    def nodes_with_modes(self) -> list[str]:
        return [c[: -len(".mode")] for c in self.columns if c.endswith(".mode")]

    def port_columns(self) -> list[str]:
        if "port_columns" in self.header:
            return list(self.header["port_columns"])
        # without metadata: everything but time, modes and x_* state variables
        return [c for c in self.columns
                if c != "t" and not c.endswith(".mode") and not c.split(".", 1)[1].startswith("x_")]

    def row_index(self, t: float) -> int:
        return int(round(t / self.dt))


def trace_columns(net: CompositionNetwork) -> tuple[list[str], list[str]]:
    """All trace columns, and the subset that records port values."""
    cols = ["t"]
    names = sorted(net.nodes)
    autos = [n for n in names if n in {a.name for a in net.automata()}]
    cols += [f"{n}.mode" for n in autos]
    for n in autos:
        cols += [f"{n}.{v}" for v in net.nodes[n].var_names]
    ports = []
    for n in names:
        node = net.nodes[n]
        ports += [f"{n}.{p}" for p in node.input_names + node.output_names]
    cols += ports
    if len(set(cols)) != len(cols):
        raise ValidationError("", "trace column names collide")
    return cols, ports


def run(scenario: Scenario, order: Sequence[str] | None = None) -> Trace:
    """Simulate from t=0 to t_end inclusive and record every step."""
    solver = scenario.solver
    net = make_micropolis(scenario.params, order=order)
    overrides = {}
    for comp, spec in scenario.initial.items():
        automaton = net.nodes[comp]
        x = list(automaton.initial_state)
        for var, value in spec.get("state", {}).items():
            x[automaton.var_names.index(var)] = value
        overrides[comp] = (spec.get("mode"), x)

    columns, ports = trace_columns(net)
    data: dict[str, list] = {c: [] for c in columns}
    events: list[Event] = []
    noise = NoiseSource(solver.seed)
    n = solver.n_steps
    state = net.initial_state(solver.dt, scenario.exogenous(0.0), overrides)
    for k in range(n + 1):
        t = k * solver.dt
        state, snap = net.step(state, scenario.exogenous(t), noise, solver.max_consecutive_jumps)
        data["t"].append(t)
        for node, mode in snap.modes.items():
            data[f"{node}.mode"].append(mode)
            for var, value in zip(net.nodes[node].var_names, snap.states[node]):
                data[f"{node}.{var}"].append(value)
        for key, value in snap.inputs.items():
            data[key].append(value)
        for key, value in snap.outputs.items():
            data[key].append(value)
        if k < n:
            for node in sorted(snap.fired):
                tr = snap.fired[node]
                events.append(Event((k + 1) * solver.dt, node, tr.source, tr.target, tr.label))
    header = {"scenario_hash": scenario.digest(), "seed": solver.seed, "dt": solver.dt,
              "t_end": solver.t_end, "rows": n + 1, "port_columns": ports}
    log.info("run finished: %d rows, %d events", n + 1, len(events))
    return Trace(header, columns, data, events)


def _fmt(value) -> str:
    return value if isinstance(value, str) else FLOAT_FORMAT.format(value)


def write_trace(trace: Trace, outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "trace.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(trace.columns)
        cols = [trace.data[c] for c in trace.columns]
        for row in zip(*cols):
            writer.writerow([_fmt(v) for v in row])
    with open(out / "events.json", "w", encoding="utf-8") as fh:
        json.dump([e.to_dict() for e in trace.events], fh, indent=2)
        fh.write("\n")
    with open(out / "meta.json", "w", encoding="utf-8") as fh:
        json.dump(trace.header, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return out


def read_trace(tracedir) -> Trace:
    d = Path(tracedir)
    with open(d / "trace.csv", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        columns = next(reader)
        data: dict[str, list] = {c: [] for c in columns}
        modes = [c.endswith(".mode") for c in columns]
        for row in reader:
            for c, is_mode, v in zip(columns, modes, row):
                data[c].append(v if is_mode else float(v))
    events_path = d / "events.json"
    events = [Event.from_dict(e) for e in json.loads(events_path.read_text())] if events_path.exists() else []
    meta_path = d / "meta.json"
    if meta_path.exists():
        header = json.loads(meta_path.read_text())
    else:
        ts = data["t"]
        header = {"dt": ts[1] - ts[0] if len(ts) > 1 else 1.0}
    return Trace(header, columns, data, events)
