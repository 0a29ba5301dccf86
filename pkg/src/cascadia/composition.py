"""Composition of open hybrid automata through latched port connections.

Every connection is a unit delay: the value a destination reads at step k
is the value its source emitted at step k-1. This makes the stepping order
of nodes irrelevant and rules out algebraic loops in feedback wiring.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import (
    INPUT,
    OUTPUT,
    AutomatonState,
    NoiseSource,
    OpenHybridAutomaton,
    Port,
    Transition,
    evaluate_outputs,
    inport,
    outport,
    step_automaton,
    DEFAULT_MAX_CONSECUTIVE_JUMPS,
)
from .delay import (  # noqa: F401  re-exported
    DelayLine,
    delay_steps,
    flush_delay_line,
    make_delay_line,
    push_pop,
)
from .errors import CascadiaError, ConfigurationError, DefinitionError, ZenoError

log = logging.getLogger(__name__)

DEPENDENCY_TYPES = ("physical", "cyber", "logical", "internal")
JUNCTION_KINDS = ("sum", "gate", "constant")


class JunctionBlock:
    """Stateless helper node: a sum, a gate or a constant.

    A gate emits ``level`` while its indicator input is 1 and 0 otherwise;
    ``level`` is a fixed block parameter, so the gate has a single input.
    """

    def __init__(self, name: str, kind: str, inputs: Sequence[str] = (), output: str = "y",
                 level: float = 0.0):
        if kind not in JUNCTION_KINDS:
            raise DefinitionError(f"{name}: unknown junction kind {kind!r}")
        inputs = tuple(inputs)
        if kind == "sum" and len(inputs) < 1:
            raise DefinitionError(f"{name}: a sum block needs at least one input")
        if kind == "gate" and len(inputs) != 1:
            raise DefinitionError(f"{name}: a gate block takes exactly one indicator input")
        if kind == "constant" and inputs:
            raise DefinitionError(f"{name}: a constant block has no inputs")
        if len(set(inputs)) != len(inputs) or output in inputs:
            raise DefinitionError(f"{name}: duplicate port names")
        self.name = name
        self.kind = kind
        self.level = float(level)
        self.input_ports = tuple(inport(n) for n in inputs)
        self.output_ports = (outport(output),)

    @property
    def input_names(self):
        return tuple(p.name for p in self.input_ports)

    @property
    def output_names(self):
        return tuple(p.name for p in self.output_ports)

    def evaluate(self, inputs: Mapping[str, float]) -> dict[str, float]:
        missing = [n for n in self.input_names if n not in inputs]
        if missing:
            raise ConfigurationError(f"{self.name}: no value for input port(s) {missing}")
        out = self.output_names[0]
        if self.kind == "sum":
            return {out: float(sum(inputs[n] for n in self.input_names))}
        if self.kind == "gate":
            return {out: self.level if inputs[self.input_names[0]] == 1 else 0.0}
        return {out: self.level}

    def __repr__(self):
        return f"JunctionBlock({self.name!r}, {self.kind!r})"


def sum_block(name, inputs, output):
    return JunctionBlock(name, "sum", inputs, output)


def gate_block(name, indicator, output, level):
    return JunctionBlock(name, "gate", (indicator,), output, level)


def constant_block(name, output, value):
    return JunctionBlock(name, "constant", (), output, value)


@dataclass(frozen=True)
class Connection:
    source: tuple[str, str]
    destination: tuple[str, str]
    dependency_type: str

    def __str__(self):
        return (f"{self.source[0]}.{self.source[1]} -> "
                f"{self.destination[0]}.{self.destination[1]} ({self.dependency_type})")


@dataclass
class NetworkState:
    states: dict[str, AutomatonState]
    latches: list[float]
    dt: float
    step: int = 0

    @property
    def t(self) -> float:
        return self.step * self.dt


@dataclass
class Snapshot:
    """Everything observable at one step: pre-step modes/states, port values, jumps taken."""

    step: int
    t: float
    modes: dict[str, str]
    states: dict[str, tuple[float, ...]]
    inputs: dict[str, float]
    outputs: dict[str, float]
    fired: dict[str, Transition] = field(default_factory=dict)


class _Silent:
    def normal(self, sigma):
        return 0.0


def _port_ref(ref) -> tuple[str, str]:
    if isinstance(ref, str):
        node, sep, port = ref.partition(".")
        if not sep:
            raise ConfigurationError(f"port reference {ref!r} must look like 'node.port'")
        return node, port
    node, port = ref
    return node, port


class CompositionNetwork:
    """Nodes (automata and junction blocks) plus latched connections."""

    def __init__(self, name: str = "network"):
        self.name = name
        self.nodes: dict[str, OpenHybridAutomaton | JunctionBlock] = {}
        self.connections: list[Connection] = []
        self._feeding: dict[tuple[str, str], int] = {}

    def add_node(self, node) -> "CompositionNetwork":
        if node.name in self.nodes:
            raise ConfigurationError(f"node name {node.name!r} already in use")
        self.nodes[node.name] = node
        return self

    def _port(self, node: str, port: str) -> Port:
        try:
            n = self.nodes[node]
        except KeyError:
            raise ConfigurationError(f"unknown node {node!r}") from None
        for p in n.input_ports + n.output_ports:
            if p.name == port:
                return p
        raise ConfigurationError(f"node {node!r} has no port {port!r}")

    def connect(self, source, destination, dependency_type: str) -> "CompositionNetwork":
        src, dst = _port_ref(source), _port_ref(destination)
        if dependency_type not in DEPENDENCY_TYPES:
            raise ConfigurationError(f"unknown dependency type {dependency_type!r}")
        if self._port(*src).direction != OUTPUT:
            raise ConfigurationError(f"{src[0]}.{src[1]} is not an output port")
        if self._port(*dst).direction != INPUT:
            raise ConfigurationError(f"{dst[0]}.{dst[1]} is not an input port")
        if dst in self._feeding:
            raise ConfigurationError(f"{dst[0]}.{dst[1]} is already connected")
        self._feeding[dst] = len(self.connections)
        self.connections.append(Connection(src, dst, dependency_type))
        return self

    def free_ports(self) -> list[tuple[str, str, str]]:
        used_out = {c.source for c in self.connections}
        free = []
        for name, node in self.nodes.items():
            for p in node.input_ports:
                if (name, p.name) not in self._feeding:
                    free.append((name, p.name, INPUT))
            for p in node.output_ports:
                if (name, p.name) not in used_out:
                    free.append((name, p.name, OUTPUT))
        return free

    def free_inputs(self) -> list[tuple[str, str]]:
        return [(n, p) for n, p, d in self.free_ports() if d == INPUT]

    def automata(self) -> list[OpenHybridAutomaton]:
        return [n for n in self.nodes.values() if isinstance(n, OpenHybridAutomaton)]

    def junctions(self) -> list[JunctionBlock]:
        return [n for n in self.nodes.values() if isinstance(n, JunctionBlock)]

    # -- execution ---------------------------------------------------------

    def _gather(self, node, latches, exogenous):
        values = {}
        for p in node.input_ports:
            idx = self._feeding.get((node.name, p.name))
            if idx is not None:
                values[p.name] = latches[idx]
                continue
            key = f"{node.name}.{p.name}"
            if key not in exogenous:
                raise ConfigurationError(f"no exogenous value for free input {key}")
            values[p.name] = float(exogenous[key])
        return values

    def _latch(self, latches, emitted):
        return [emitted[f"{c.source[0]}.{c.source[1]}"] for c in self.connections] if emitted else latches

    def initial_state(self, dt: float, exogenous: Mapping[str, float],
                      overrides: Mapping[str, tuple[str | None, Sequence[float] | None]] | None = None
                      ) -> NetworkState:
        """Initial automaton states with latches primed to a consistent operating point.

        Latches start at 0 and are relaxed by noise-free output evaluation
        until they stop changing, so connections initially carry what their
        sources emit in the initial modes and no spurious first-step jumps occur.
        """
        if not dt > 0:
            raise ConfigurationError(f"dt must be positive, got {dt}")
        overrides = overrides or {}
        for name in overrides:
            if not isinstance(self.nodes.get(name), OpenHybridAutomaton):
                raise ConfigurationError(f"initial override for unknown automaton {name!r}")
        bare = {}
        for a in self.automata():
            mode, x = overrides.get(a.name, (None, None))
            st = a.initial(dt, mode=mode, x=x)
            bare[a.name] = AutomatonState(st.mode, st.x)
        latches = [0.0] * len(self.connections)
        silent = _Silent()
        for _ in range(len(self.nodes) + 1):
            emitted = {}
            for name, node in self.nodes.items():
                u = self._gather(node, latches, exogenous)
                if isinstance(node, OpenHybridAutomaton):
                    out = evaluate_outputs(node, bare[name], u, silent)
                else:
                    out = node.evaluate(u)
                emitted.update({f"{name}.{k}": v for k, v in out.items()})
            new = self._latch(latches, emitted)
            if new == latches:
                break
            latches = new
        states = {}
        for a in self.automata():
            u = self._gather(a, latches, exogenous)
            mode, x = overrides.get(a.name, (None, None))
            states[a.name] = a.initial(dt, idle=u, mode=mode, x=x)
        return NetworkState(states, latches, dt, 0)

    def step(self, state: NetworkState, exogenous: Mapping[str, float], noise: NoiseSource,
             max_consecutive_jumps: int = DEFAULT_MAX_CONSECUTIVE_JUMPS) -> tuple[NetworkState, Snapshot]:
        inputs, outputs, fired, new_states = {}, {}, {}, {}
        modes = {n: s.mode for n, s in state.states.items()}
        xs = {n: s.x for n, s in state.states.items()}
        # sorted order keeps noise draws independent of registration order
        for name in sorted(self.nodes):
            node = self.nodes[name]
            u = self._gather(node, state.latches, exogenous)
            inputs.update({f"{name}.{k}": v for k, v in u.items()})
            try:
                if isinstance(node, OpenHybridAutomaton):
                    res = step_automaton(node, state.states[name], u, state.dt, noise, max_consecutive_jumps)
                    new_states[name] = res.state
                    out = res.outputs
                    if res.transition is not None:
                        fired[name] = res.transition
                else:
                    out = node.evaluate(u)
            except ZenoError as exc:
                raise ZenoError(name, state.step, exc.count) from None
            except CascadiaError as exc:
                if getattr(exc, "step", "absent") is None:
                    exc.step = state.step
                if not str(exc).startswith(name):
                    exc.args = (f"{name} (step {state.step}): {exc}",) + exc.args[1:]
                raise
            outputs.update({f"{name}.{k}": v for k, v in out.items()})
        snap = Snapshot(state.step, state.t, modes, xs, inputs, outputs, fired)
        new = NetworkState(new_states, self._latch(state.latches, outputs), state.dt, state.step + 1)
        return new, snap

    def describe(self) -> dict:
        nodes = []
        for name, node in self.nodes.items():
            entry = {
                "name": name,
                "kind": "automaton" if isinstance(node, OpenHybridAutomaton) else node.kind,
                "inputs": list(node.input_names),
                "outputs": list(node.output_names),
            }
            if isinstance(node, OpenHybridAutomaton):
                entry["modes"] = list(node.modes)
                entry["continuous_vars"] = [list(v) for v in node.continuous_vars]
            elif node.kind != "sum":
                entry["level"] = node.level
            nodes.append(entry)
        return {
            "nodes": nodes,
            "connections": [
                {"source": ".".join(c.source), "destination": ".".join(c.destination),
                 "dependency_type": c.dependency_type}
                for c in self.connections
            ],
            "free_inputs": [f"{n}.{p}" for n, p in self.free_inputs()],
            "free_outputs": [f"{n}.{p}" for n, p, d in self.free_ports() if d == OUTPUT],
        }


def step_network(net: CompositionNetwork, netstate: NetworkState, exogenous, noise, **kw):
    return net.step(netstate, exogenous, noise, **kw)


def free_ports(net: CompositionNetwork):
    return net.free_ports()
