"""Open hybrid automata and their fixed-step execution semantics.

An automaton is a set of named modes. Each mode carries a flow (the
derivative of the continuous state), an output map and an optional
invariant. Discrete transitions between modes are enabled by guards and
carry an optional reset map. Inputs and outputs are exchanged through
named ports so that automata can be wired together (see ``composition``).

All callables share one calling convention::

    flow(x, u, p)            -> sequence of derivatives, one per variable
    output(x, u, p, noise)   -> {output port: value}
    invariant(x, u, p)       -> bool
    guard(x, u, p)           -> bool
    reset(x, u, p)           -> post-jump continuous state

where ``x`` is the continuous state tuple, ``u`` the input port values and
``p`` the automaton's parameter mapping.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Callable, Mapping, NamedTuple, Sequence

import numpy as np

from .delay import DelayLine, delay_steps
from .errors import ConfigurationError, DefinitionError, NumericError, ZenoError

log = logging.getLogger(__name__)

INPUT = "input"
OUTPUT = "output"
PORT_KINDS = ("continuous", "discrete", "sentinel")

DEFAULT_MAX_CONSECUTIVE_JUMPS = 1000


@dataclass(frozen=True)
class Port:
    """A named input or output.

    ``kind`` is ``continuous`` (real), ``discrete`` (small-integer flag) or
    ``sentinel`` (real, where -1 means "connection lost"). An input may name
    a parameter in ``delay``; the automaton then perceives that input through
    a transport delay of that duration.
    """

    name: str
    direction: str
    kind: str = "continuous"
    delay: str | None = None

    def __post_init__(self):
        if self.direction not in (INPUT, OUTPUT):
            raise DefinitionError(f"port {self.name!r}: bad direction {self.direction!r}")
        if self.kind not in PORT_KINDS:
            raise DefinitionError(f"port {self.name!r}: bad kind {self.kind!r}")
        if self.delay is not None and self.direction != INPUT:
            raise DefinitionError(f"port {self.name!r}: only inputs can be delayed")


def inport(name, kind="continuous", delay=None):
    return Port(name, INPUT, kind, delay)


def outport(name, kind="continuous"):
    return Port(name, OUTPUT, kind)


@dataclass(frozen=True)
class Mode:
    name: str
    flow: Callable
    output: Callable
    invariant: Callable | None = None


@dataclass(frozen=True)
class Transition:
    source: str
    target: str
    guard: Callable
    reset: Callable | None = None
    priority: int = 0
    label: str = ""

    def __str__(self):
        return f"{self.source}->{self.target} [{self.label}]"


@dataclass(frozen=True)
class AutomatonState:
    """Current mode plus continuous state of one automaton instance.

    ``lines`` holds the transport delay buffers of delayed input ports and
    ``streak`` counts successive steps that ended with a jump.
    """

    mode: str
    x: tuple[float, ...]
    lines: Mapping[str, DelayLine] = field(default_factory=dict)
    streak: int = 0


class StepResult(NamedTuple):
    state: AutomatonState
    outputs: dict[str, float]
    transition: Transition | None


class NoiseSource:
    """Seeded Gaussian noise; ``sigma == 0`` short-circuits without drawing."""

    def __init__(self, seed=None):
        self.seed = seed
        self._rng = np.random.default_rng(seed)

    def normal(self, sigma: float) -> float:
        if sigma == 0:
            return 0.0
        return float(self._rng.normal(0.0, sigma))


class OpenHybridAutomaton:
    """Immutable definition of an open hybrid automaton."""

    def __init__(
        self,
        name: str,
        continuous_vars: Sequence[tuple[str, str]],
        input_ports: Sequence[Port],
        output_ports: Sequence[Port],
        modes: Sequence[Mode],
        transitions: Sequence[Transition],
        initial_mode: str,
        initial_state: Sequence[float],
        parameters: Mapping[str, float] | None = None,
        timers: Sequence[str] = (),
        flush_modes: Sequence[str] = (),
    ):
        self.name = name
        self.continuous_vars = tuple((str(n), str(u)) for n, u in continuous_vars)
        self.input_ports = tuple(input_ports)
        self.output_ports = tuple(output_ports)
        self.modes = {m.name: m for m in modes}
        self.transitions = tuple(transitions)
        self.initial_mode = initial_mode
        self.initial_state = tuple(float(v) for v in initial_state)
        self.parameters = MappingProxyType(dict(parameters or {}))
        self.timers = frozenset(timers)
        self.flush_modes = frozenset(flush_modes)
        self._validate(modes)
        by_source: dict[str, list[Transition]] = {m: [] for m in self.modes}
        for tr in self.transitions:
            by_source[tr.source].append(tr)
        self._outgoing = {m: tuple(sorted(trs, key=lambda t: t.priority)) for m, trs in by_source.items()}

    def _validate(self, modes):
        if len(self.modes) != len(modes):
            raise DefinitionError(f"{self.name}: duplicate mode names")
        for direction, ports in ((INPUT, self.input_ports), (OUTPUT, self.output_ports)):
            names = [p.name for p in ports]
            if len(set(names)) != len(names):
                raise DefinitionError(f"{self.name}: duplicate {direction} port names")
            if any(p.direction != direction for p in ports):
                raise DefinitionError(f"{self.name}: port listed under the wrong direction")
        for p in self.input_ports:
            if p.delay is not None and p.delay not in self.parameters:
                raise DefinitionError(f"{self.name}: delay parameter {p.delay!r} of port {p.name!r} undefined")
        if self.initial_mode not in self.modes:
            raise DefinitionError(f"{self.name}: initial mode {self.initial_mode!r} undefined")
        if len(self.initial_state) != len(self.continuous_vars):
            raise DefinitionError(
                f"{self.name}: initial state has {len(self.initial_state)} entries, "
                f"expected {len(self.continuous_vars)}"
            )
        var_names = {n for n, _ in self.continuous_vars}
        if not self.timers <= var_names:
            raise DefinitionError(f"{self.name}: unknown timer variables {sorted(self.timers - var_names)}")
        if not self.flush_modes <= set(self.modes):
            raise DefinitionError(f"{self.name}: unknown flush modes")
        seen = set()
        for tr in self.transitions:
            if tr.source not in self.modes or tr.target not in self.modes:
                raise DefinitionError(f"{self.name}: transition {tr} names an undefined mode")
            key = (tr.source, tr.priority)
            if key in seen:
                raise DefinitionError(
                    f"{self.name}: two transitions out of {tr.source!r} share priority {tr.priority}"
                )
            seen.add(key)

    @property
    def var_names(self) -> tuple[str, ...]:
        return tuple(n for n, _ in self.continuous_vars)

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.input_ports)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(p.name for p in self.output_ports)

    def mode(self, name: str) -> Mode:
        try:
            return self.modes[name]
        except KeyError:
            raise DefinitionError(f"{self.name}: unknown mode {name!r}") from None

    def outgoing(self, mode: str) -> tuple[Transition, ...]:
        self.mode(mode)
        return self._outgoing[mode]

    def guard_labels(self) -> list[str]:
        """Distinct guard labels in definition order."""
        return list(dict.fromkeys(tr.label for tr in self.transitions))

    def initial(self, dt: float, idle: Mapping[str, float] | None = None,
                mode: str | None = None, x: Sequence[float] | None = None) -> AutomatonState:
        """Build the starting state; delayed inputs get buffers pre-filled with ``idle``."""
        idle = idle or {}
        lines = {}
        for p in self.input_ports:
            if p.delay is None:
                continue
            steps = delay_steps(self.parameters[p.delay], dt)
            if steps > 0:
                lines[p.name] = DelayLine(steps, idle.get(p.name, 0.0))
        mode = self.initial_mode if mode is None else mode
        self.mode(mode)
        x = self.initial_state if x is None else tuple(float(v) for v in x)
        if len(x) != len(self.continuous_vars):
            raise DefinitionError(f"{self.name}: state override has wrong length")
        return AutomatonState(mode, x, lines)

    def __repr__(self):
        return f"OpenHybridAutomaton({self.name!r}, modes={list(self.modes)})"


def _perceived(automaton, state, inputs):
    missing = [n for n in automaton.input_names if n not in inputs]
    if missing:
        raise ConfigurationError(f"{automaton.name}: no value for input port(s) {missing}")
    if not state.lines:
        return inputs
    view = dict(inputs)
    for name, line in state.lines.items():
        view[name] = line.peek()
    return view


def _call(automaton, what, fn, *args):
    try:
        return fn(*args)
    except KeyError as exc:
        raise DefinitionError(f"{automaton.name}: {what} references unknown symbol {exc}") from None


def evaluate_outputs(automaton: OpenHybridAutomaton, state: AutomatonState,
                     inputs: Mapping[str, float], noise: NoiseSource) -> dict[str, float]:
    mode = automaton.mode(state.mode)
    u = _perceived(automaton, state, inputs)
    out = _call(automaton, f"output of {mode.name}", mode.output, state.x, u, automaton.parameters, noise)
    if set(out) != set(automaton.output_names):
        raise DefinitionError(
            f"{automaton.name}: output map of {mode.name} assigns {sorted(out)}, "
            f"expected {sorted(automaton.output_names)}"
        )
    return {name: float(out[name]) for name in automaton.output_names}


def integrate_flow(automaton: OpenHybridAutomaton, state: AutomatonState,
                   inputs: Mapping[str, float], dt: float) -> tuple[float, ...]:
    """One explicit Euler step of the current mode's flow."""
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    mode = automaton.mode(state.mode)
    u = _perceived(automaton, state, inputs)
    dx = tuple(_call(automaton, f"flow of {mode.name}", mode.flow, state.x, u, automaton.parameters))
    if len(dx) != len(state.x):
        raise DefinitionError(f"{automaton.name}: flow of {mode.name} returned {len(dx)} derivatives")
    for (var, _), d in zip(automaton.continuous_vars, dx):
        if not math.isfinite(d):
            raise NumericError(f"{automaton.name}: non-finite derivative of {var} in mode {mode.name}",
                               node=automaton.name, mode=mode.name, variable=var)
    return tuple(xi + dt * di for xi, di in zip(state.x, dx))


def enabled_transitions(automaton: OpenHybridAutomaton, state: AutomatonState,
                        inputs: Mapping[str, float]) -> list[Transition]:
    u = _perceived(automaton, state, inputs)
    p = automaton.parameters
    return [tr for tr in automaton.outgoing(state.mode)
            if _call(automaton, f"guard {tr.label!r}", tr.guard, state.x, u, p)]


def _reset(automaton, tr, x, u):
    if tr.reset is not None:
        new = tuple(float(v) for v in _call(automaton, f"reset of {tr}", tr.reset, x, u, automaton.parameters))
        if len(new) != len(x):
            raise DefinitionError(f"{automaton.name}: reset of {tr} has wrong length")
        return new
    # default: timers restart, everything else passes through
    return tuple(0.0 if name in automaton.timers else xi for name, xi in zip(automaton.var_names, x))


def step_automaton(automaton: OpenHybridAutomaton, state: AutomatonState,
                   inputs: Mapping[str, float], dt: float, noise: NoiseSource,
                   max_consecutive_jumps: int = DEFAULT_MAX_CONSECUTIVE_JUMPS) -> StepResult:
    """Advance one automaton by ``dt``.

    Outputs come from the pre-step mode and state, then the flow is
    integrated, then guards are checked on the integrated state. At most
    one transition (the lowest priority value) is taken.
    """
    outputs = evaluate_outputs(automaton, state, inputs, noise)
    x_new = integrate_flow(automaton, state, inputs, dt)
    u = _perceived(automaton, state, inputs)

    lines = state.lines
    if lines and state.mode not in automaton.flush_modes:
        lines = {name: line.copy() for name, line in lines.items()}
        for name, line in lines.items():
            line.push_pop(inputs[name])

    # guards see the same perceived inputs as the outputs and the flow did
    moved = AutomatonState(state.mode, x_new, state.lines, state.streak)
    enabled = enabled_transitions(automaton, moved, inputs)
    fired = enabled[0] if enabled else None
    if fired is None:
        new_state = AutomatonState(state.mode, x_new, lines, 0)
    else:
        streak = state.streak + 1
        if streak > max_consecutive_jumps:
            raise ZenoError(automaton.name, None, streak)
        x_new = _reset(automaton, fired, x_new, u)
        if fired.target in automaton.flush_modes and lines:
            lines = {name: line.copy().flush() for name, line in lines.items()}
        new_state = AutomatonState(fired.target, x_new, lines, streak)

    inv = automaton.mode(new_state.mode).invariant
    if inv is not None and not inv(new_state.x, u, automaton.parameters):
        log.warning("%s: invariant of mode %s violated at x=%s", automaton.name, new_state.mode, new_state.x)
    return StepResult(new_state, outputs, fired)
