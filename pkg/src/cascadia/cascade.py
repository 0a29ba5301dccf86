"""Cascade analysis: degradation events, causal chains over the dependency graph, impact metrics."""
from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

from .composition import DEPENDENCY_TYPES
from .errors import ValidationError
from .scenario import Trace, _round

DEGRADED_MODES = {
    "substation": frozenset({"SwitchOff"}),
    "scada": frozenset({"ConnDown"}),
    "network": frozenset({"UPSUsage", "NetDown"}),
    "tank": frozenset({"Drained", "Overflow"}),
    "pump": frozenset({"Fault"}),
}

COMPONENTS = tuple(DEGRADED_MODES)


@dataclass(frozen=True)
class DependencyGraph:
    """Directed component dependencies ``(provider, dependent, type)``."""

    edges: tuple[tuple[str, str, str], ...]

    def __post_init__(self):
        for src, dst, kind in self.edges:
            if kind not in DEPENDENCY_TYPES:
                raise ValidationError("graph", f"edge {src}->{dst}: unsupported dependency type {kind!r}")

    @classmethod
    def default(cls) -> "DependencyGraph":
        return cls((
            ("substation", "network", "physical"),
            ("substation", "pump", "physical"),
            ("network", "substation", "cyber"),
            ("network", "scada", "cyber"),
            ("network", "pump", "cyber"),
            ("network", "tank", "cyber"),
            ("pump", "tank", "internal"),
        ))

    @property
    def nodes(self) -> list[str]:
        return sorted({e[0] for e in self.edges} | {e[1] for e in self.edges})

    def providers(self, node: str) -> dict[str, str]:
        return {src: kind for src, dst, kind in self.edges if dst == node}

    def edge_type(self, src: str, dst: str) -> str | None:
        return self.providers(dst).get(src)


@dataclass(frozen=True)
class ModeEvent:
    t: float
    component: str
    kind: str  # "degradation" | "recovery"
    mode: str
    previous: str | None
    guard: str
    cause: str = "exogenous"

    @property
    def key(self) -> str:
        return f"{self.component}@{_round(self.t):g}:{self.mode}"

    def to_dict(self):
        return {"id": self.key, "t": _round(self.t), "component": self.component, "kind": self.kind,
                "mode": self.mode, "from": self.previous, "guard": self.guard, "cause": self.cause}


@dataclass
class Link:
    event: ModeEvent
    parent: ModeEvent | None
    edge_type: str | None = None
    other_parents: list[ModeEvent] = field(default_factory=list)


@dataclass
class CascadeChain:
    """A root degradation and every degradation attributed to it, chronologically."""

    links: list[Link]

    @property
    def root(self) -> ModeEvent:
        return self.links[0].event

    @property
    def root_cause(self) -> str:
        return self.root.cause

    def __len__(self):
        return len(self.links)

    def to_dict(self):
        return {
            "root": self.root.key,
            "root_cause": self.root_cause,
            "components": sorted({lk.event.component for lk in self.links}),
            "links": [
                {
                    "event": lk.event.to_dict(),
                    "parent": lk.parent.key if lk.parent else None,
                    "edge_type": lk.edge_type,
                    "other_eligible_parents": [p.key for p in lk.other_parents],
                }
                for lk in self.links
            ],
        }


@dataclass
class ImpactMetrics:
    degraded_dwell: dict[str, float]
    time_to_first_cascade: float | None
    unserved_water: float
    spill_volume: float
    blackout_duration: float
    components_affected: int

    def to_dict(self):
        return {
            "degraded_dwell": {k: _round(v) for k, v in self.degraded_dwell.items()},
            "time_to_first_cascade": None if self.time_to_first_cascade is None else _round(self.time_to_first_cascade),
            "unserved_water": _round(self.unserved_water),
            "spill_volume": _round(self.spill_volume),
            "blackout_duration": _round(self.blackout_duration),
            "components_affected": self.components_affected,
        }


def _cause(trace: Trace, component: str, mode: str, guard: str, row: int) -> str:
    """Classify what drove a transition by looking at inputs on the step that fired it."""
    d = trace.data

    def value(col, default):
        values = d.get(col)
        return values[row] if values else default

    if component == "network" and mode == "NetDown" and value("network.phi_n", 0) == 1:
        return "injected_fault"
    if component == "pump" and mode == "Fault" and value("pump.phi_p", 0) == 1:
        return "injected_fault"
    if component == "substation" and mode == "SwitchOff" and value("substation.s_CB", 1) != 1:
        return "overload"
    return "exogenous"


def extract_events(trace: Trace, degraded: Mapping[str, frozenset] = DEGRADED_MODES) -> list[ModeEvent]:
    """Entries into and exits out of degraded modes, chronologically.

    A component that starts in a degraded mode yields a degradation event at t=0.
    """
    out: list[ModeEvent] = []
    for comp in sorted(degraded):
        col = trace.data.get(f"{comp}.mode")
        if col and col[0] in degraded[comp]:
            out.append(ModeEvent(0.0, comp, "degradation", col[0], None, "initial", "initial"))
    for ev in trace.events:
        bad = degraded.get(ev.node)
        if bad is None:
            continue
        row = max(trace.row_index(ev.t) - 1, 0)
        if ev.to_mode in bad:
            out.append(ModeEvent(ev.t, ev.node, "degradation", ev.to_mode, ev.from_mode, ev.guard,
                                 _cause(trace, ev.node, ev.to_mode, ev.guard, row)))
        elif ev.from_mode in bad:
            out.append(ModeEvent(ev.t, ev.node, "recovery", ev.to_mode, ev.from_mode, ev.guard))
    out.sort(key=lambda e: (e.t, e.component))
    return out


def build_cascade(events: list[ModeEvent], graph: DependencyGraph | None = None) -> list[CascadeChain]:
    """Attribute each degradation to the earliest still-active degradation of a provider.

    A degradation stays active until its component's next mode change. Events
    without an eligible parent start new chains.
    """
    graph = graph or DependencyGraph.default()
    # end of each degradation's active window
    active_until: dict[int, float] = {}
    last_open: dict[str, int] = {}
    for i, ev in enumerate(events):
        prev = last_open.pop(ev.component, None)
        if prev is not None:
            active_until[prev] = ev.t
        if ev.kind == "degradation":
            last_open[ev.component] = i
    for i in last_open.values():
        active_until[i] = float("inf")

    parent_of: dict[int, int | None] = {}
    links: dict[int, Link] = {}
    for i, ev in enumerate(events):
        if ev.kind != "degradation":
            continue
        providers = graph.providers(ev.component)
        eligible = [
            j for j in range(i)
            if events[j].kind == "degradation" and events[j].component in providers
            and events[j].t <= ev.t < active_until[j]
        ]
        eligible.sort(key=lambda j: (events[j].t, events[j].component))
        parent = eligible[0] if eligible else None
        parent_of[i] = parent
        links[i] = Link(
            ev,
            events[parent] if parent is not None else None,
            providers[events[parent].component] if parent is not None else None,
            [events[j] for j in eligible[1:]],
        )

    def root(i):
        while parent_of[i] is not None:
            i = parent_of[i]
        return i

    groups: dict[int, list[int]] = defaultdict(list)
    for i in sorted(parent_of):
        groups[root(i)].append(i)
    return [CascadeChain([links[i] for i in members]) for _, members in sorted(groups.items())]


def compute_metrics(trace: Trace, events: list[ModeEvent], chains: list[CascadeChain] | None = None,
                    degraded: Mapping[str, frozenset] = DEGRADED_MODES) -> ImpactMetrics:
    """Left-endpoint rectangle sums over trace rows at dt resolution."""
    dt = trace.dt
    d = trace.data
    dwell = {}
    for comp in sorted(degraded):
        col = d.get(f"{comp}.mode", [])
        dwell[comp] = sum(1 for m in col if m in degraded[comp]) * dt

    unserved = spill = blackout = 0.0
    tank_modes = d.get("tank.mode", [])
    for k, mode in enumerate(tank_modes):
        if mode == "Drained":
            unserved += d["tank.w_d"][k] * dt
        elif mode == "Overflow":
            spill += max(0.0, d["tank.w_s"][k] - d["tank.w_d"][k]) * dt
    blackout = sum(1 for m in d.get("substation.mode", []) if m == "SwitchOff") * dt

    if chains is None:
        chains = build_cascade(events)
    first = None
    for chain in chains:
        if len(chain) > 1:
            first = chain.links[1].event.t - chain.root.t
            break

    affected = len({e.component for e in events if e.kind == "degradation"})
    return ImpactMetrics(dwell, first, unserved, spill, blackout, affected)


@dataclass
class CascadeReport:
    events: list[ModeEvent]
    chains: list[CascadeChain]
    metrics: ImpactMetrics

    def cascade_dict(self):
        return {"chains": [c.to_dict() for c in self.chains],
                "events": [e.to_dict() for e in self.events]}


def analyze(trace: Trace, graph: DependencyGraph | None = None,
            degraded: Mapping[str, frozenset] = DEGRADED_MODES) -> CascadeReport:
    events = extract_events(trace, degraded)
    chains = build_cascade(events, graph)
    return CascadeReport(events, chains, compute_metrics(trace, events, chains, degraded))


def write_report(report: CascadeReport, outdir) -> None:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "cascade.json").write_text(json.dumps(report.cascade_dict(), indent=2) + "\n", encoding="utf-8")
    (out / "metrics.json").write_text(json.dumps(report.metrics.to_dict(), indent=2) + "\n", encoding="utf-8")


def write_plot_data(trace: Trace, outdir) -> list[Path]:
    """One whitespace-separated ``t value`` file per recorded port column."""
    out = Path(outdir) / "plotdata"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    ts = trace.data["t"]
    for col in trace.port_columns():
        path = out / f"{col}.dat"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(f"# t {col}\n")
            for t, v in zip(ts, trace.data[col]):
                fh.write(f"{t:.9g} {v:.9g}\n")
        written.append(path)
    return written
