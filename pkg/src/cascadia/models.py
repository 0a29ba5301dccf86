"""Micropolis component automata (substation, SCADA, network, tank, pump) and their wiring.

Units: time in minutes, power in kW, water in m3 and m3/min.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence

from .composition import CompositionNetwork, gate_block, sum_block
from .core import Mode, OpenHybridAutomaton, Transition, inport, outport
from .delay import SENTINEL
from .errors import ValidationError

LOST = SENTINEL

# exogenous name -> "node.port" of the free input it drives
EXOGENOUS = {
    "d_city": "demand.d_city",
    "w_d": "tank.w_d",
    "s_OP": "scada.s_OP",
    "phi_n": "network.phi_n",
    "phi_p": "pump.phi_p",
}


def _check(path, ok, message):
    if not ok:
        raise ValidationError(path, message)


def _finite(prefix, obj):
    for f in fields(obj):
        v = getattr(obj, f.name)
        if v is not None:
            _check(f"{prefix}.{f.name}", isinstance(v, (int, float)) and math.isfinite(v),
                   f"must be a finite number, got {v!r}")


@dataclass(frozen=True)
class SubstationParams:
    P_lim: float = 500.0
    T_s: float = 5.0
    sigma_eps: float = 0.5

    def validate(self, prefix="substation"):
        _finite(prefix, self)
        _check(f"{prefix}.P_lim", self.P_lim > 0, "must be > 0")
        _check(f"{prefix}.T_s", self.T_s >= 0, "must be >= 0")
        _check(f"{prefix}.sigma_eps", self.sigma_eps >= 0, "must be >= 0")
        return self


@dataclass(frozen=True)
class ScadaParams:
    T_d: float = 1.0
    T_s: float = 5.0
    # None: derive from the substation noise as max(2*sigma_eps, 1.0)
    theta_off: float | None = None

    def validate(self, prefix="scada"):
        _finite(prefix, self)
        _check(f"{prefix}.T_d", self.T_d >= 0, "must be >= 0")
        _check(f"{prefix}.T_s", self.T_s >= 0, "must be >= 0")
        _check(f"{prefix}.theta_off", self.theta_off is None or self.theta_off > 0, "must be > 0")
        return self

    def resolved_theta(self, sigma_eps: float) -> float:
        return self.theta_off if self.theta_off is not None else max(2.0 * sigma_eps, 1.0)


@dataclass(frozen=True)
class NetworkParams:
    P_n: float = 10.0
    T_ups: float = 30.0
    T_1: float = 0.2
    T_2: float = 0.2
    T_3: float = 0.2

    def validate(self, prefix="network"):
        _finite(prefix, self)
        _check(f"{prefix}.P_n", self.P_n > 0, "must be > 0")
        for name in ("T_ups", "T_1", "T_2", "T_3"):
            _check(f"{prefix}.{name}", getattr(self, name) >= 0, "must be >= 0")
        return self


@dataclass(frozen=True)
class TankParams:
    V_0: float = 50.0
    V_max: float = 100.0

    def validate(self, prefix="tank"):
        _finite(prefix, self)
        _check(f"{prefix}.V_max", self.V_max > 0, "must be > 0")
        _check(f"{prefix}.V_0", 0 <= self.V_0 <= self.V_max, f"must lie in [0, V_max={self.V_max}]")
        return self


@dataclass(frozen=True)
class PumpParams:
    V_th: float = 30.0
    T_off: float = 15.0
    T_on: float = 120.0
    W_avg: float = 2.0
    P_p: float = 50.0
    V_max: float = 100.0

    def validate(self, prefix="pump"):
        _finite(prefix, self)
        _check(f"{prefix}.V_th", 0 < self.V_th < self.V_max, f"must lie in (0, V_max={self.V_max})")
        _check(f"{prefix}.T_off", self.T_off >= 0, "must be >= 0")
        _check(f"{prefix}.T_on", self.T_on >= 0, "must be >= 0")
        _check(f"{prefix}.W_avg", self.W_avg > 0, "must be > 0")
        _check(f"{prefix}.P_p", self.P_p > 0, "must be > 0")
        return self


@dataclass(frozen=True)
class MicropolisParams:
    substation: SubstationParams = field(default_factory=SubstationParams)
    scada: ScadaParams = field(default_factory=ScadaParams)
    network: NetworkParams = field(default_factory=NetworkParams)
    tank: TankParams = field(default_factory=TankParams)
    pump: PumpParams = field(default_factory=PumpParams)

    def validate(self):
        for f in fields(self):
            getattr(self, f.name).validate(f.name)
        return self

    def to_dict(self):
        return asdict(self)


# -- substation ------------------------------------------------------------

def make_substation(params: SubstationParams = SubstationParams(), name: str = "substation") -> OpenHybridAutomaton:
    params.validate(name)

    def measured(p_s, p, noise):
        # measurements are nonnegative so they can never collide with the -1 sentinel
        return max(0.0, p_s + noise.normal(p["sigma_eps"]))

    def supply_out(x, u, p, noise):
        return {"p_s": u["p_d"], "p_m": measured(u["p_d"], p, noise), "avail": 1.0}

    def off_out(x, u, p, noise):
        return {"p_s": 0.0, "p_m": measured(0.0, p, noise), "avail": 0.0}

    def timer(x, u, p):
        return (1.0,)

    return OpenHybridAutomaton(
        name=name,
        continuous_vars=[("x_tp", "min")],
        input_ports=[inport("s_CB", "sentinel"), inport("p_d")],
        output_ports=[outport("p_s"), outport("p_m", "sentinel"), outport("avail", "discrete")],
        modes=[Mode("SupplyPower", timer, supply_out), Mode("SwitchOff", timer, off_out)],
        transitions=[
            Transition("SupplyPower", "SwitchOff",
                       lambda x, u, p: u["s_CB"] == 1 or u["p_d"] >= p["P_lim"],
                       priority=0, label="s_CB=1 | p_d>=P_lim"),
            Transition("SwitchOff", "SupplyPower",
                       lambda x, u, p: u["s_CB"] == 0 and u["p_d"] < p["P_lim"] and x[0] >= p["T_s"],
                       priority=0, label="s_CB=0 & p_d<P_lim & x_tp>=T_s"),
        ],
        initial_mode="SupplyPower",
        initial_state=[0.0],
        parameters=asdict(params),
        timers=["x_tp"],
    )


# -- SCADA -----------------------------------------------------------------

def make_scada(params: ScadaParams = ScadaParams(), sigma_eps: float = 0.5, name: str = "scada") -> OpenHybridAutomaton:
    params.validate(name)
    pars = {"T_d": params.T_d, "T_s": params.T_s, "theta_off": params.resolved_theta(sigma_eps)}

    def timer(x, u, p):
        return (1.0,)

    def command(value):
        return lambda x, u, p, noise: {"s_CB": value}

    def lost(x, u, p):
        return u["p_m"] == LOST

    def back_low(x, u, p):
        return u["p_m"] != LOST and u["p_m"] < p["theta_off"]

    def back_high(x, u, p):
        return u["p_m"] != LOST and u["p_m"] >= p["theta_off"]

    def trip(x, u, p):
        return (u["s_OP"] == 1 or u["p_m"] < p["theta_off"]) and x[0] >= p["T_d"]

    def reclose(x, u, p):
        return u["s_OP"] == 0 and x[0] >= p["T_s"]

    return OpenHybridAutomaton(
        name=name,
        continuous_vars=[("x_ts", "min")],
        input_ports=[inport("p_m", "sentinel"), inport("s_OP", "discrete")],
        output_ports=[outport("s_CB", "sentinel")],
        modes=[
            Mode("Closed", timer, command(0.0)),
            Mode("Open", timer, command(1.0)),
            Mode("ConnDown", timer, command(LOST)),
        ],
        transitions=[
            Transition("Closed", "ConnDown", lost, priority=0, label="p_m=-1"),
            Transition("Open", "ConnDown", lost, priority=0, label="p_m=-1"),
            Transition("Closed", "Open", trip, priority=1, label="(s_OP=1 | p_m<theta_off) & x_ts>=T_d"),
            Transition("Open", "Closed", reclose, priority=1, label="s_OP=0 & x_ts>=T_s"),
            Transition("ConnDown", "Open", back_low, priority=1, label="p_m!=-1"),
            Transition("ConnDown", "Closed", back_high, priority=2, label="p_m!=-1"),
        ],
        initial_mode="Closed",
        initial_state=[0.0],
        parameters=pars,
        timers=["x_ts"],
    )


# -- communication network -------------------------------------------------

SIGNALS = ("s_1", "s_2", "s_3")


def make_network(params: NetworkParams = NetworkParams(), name: str = "network") -> OpenHybridAutomaton:
    params.validate(name)

    def flow(rate):
        return lambda x, u, p: (rate,)

    def relay(x, u, p, noise):
        out = {f"{s}_out": u[s] for s in SIGNALS}
        out["p_nd"] = p["P_n"]
        return out

    def down(x, u, p, noise):
        out = {f"{s}_out": LOST for s in SIGNALS}
        out["p_nd"] = 0.0
        return out

    fault = lambda x, u, p: u["phi_n"] == 1  # noqa: E731

    return OpenHybridAutomaton(
        name=name,
        continuous_vars=[("x_t_ups", "min")],
        input_ports=[
            inport("p_ns"),
            inport("phi_n", "discrete"),
            inport("s_1", "sentinel", delay="T_1"),
            inport("s_2", "sentinel", delay="T_2"),
            inport("s_3", "sentinel", delay="T_3"),
        ],
        output_ports=[outport(f"{s}_out", "sentinel") for s in SIGNALS] + [outport("p_nd")],
        modes=[
            Mode("Healthy", flow(0.0), relay),
            Mode("UPSUsage", flow(1.0), relay),
            Mode("NetDown", flow(0.0), down),
        ],
        transitions=[
            Transition("Healthy", "NetDown", fault, priority=0, label="phi_n=1"),
            Transition("UPSUsage", "NetDown", fault, priority=0, label="phi_n=1"),
            Transition("Healthy", "UPSUsage", lambda x, u, p: u["p_ns"] < p["P_n"],
                       priority=1, label="p_ns<P_n"),
            Transition("UPSUsage", "NetDown", lambda x, u, p: x[0] >= p["T_ups"],
                       priority=1, label="x_t_ups>=T_ups"),
            Transition("UPSUsage", "Healthy", lambda x, u, p: u["p_ns"] >= p["P_n"],
                       priority=2, label="p_ns>=P_n"),
            Transition("NetDown", "Healthy", lambda x, u, p: u["phi_n"] == 0 and u["p_ns"] >= p["P_n"],
                       priority=1, label="phi_n=0 & p_ns>=P_n"),
        ],
        initial_mode="Healthy",
        initial_state=[0.0],
        parameters=asdict(params),
        timers=["x_t_ups"],
        flush_modes=["NetDown"],
    )


# -- water tank ------------------------------------------------------------

def make_tank(params: TankParams = TankParams(), name: str = "tank") -> OpenHybridAutomaton:
    params.validate(name)

    def healthy_flow(x, u, p):
        return (u["w_s"] - u["w_d"],)

    def drained_flow(x, u, p):
        return (max(0.0, u["w_s"] - u["w_d"]),)

    def overflow_flow(x, u, p):
        return (min(0.0, u["w_s"] - u["w_d"]),)

    def bounded(x, u, p):
        return 0.0 <= x[0] <= p["V_max"]

    return OpenHybridAutomaton(
        name=name,
        continuous_vars=[("x_v", "m3")],
        input_ports=[inport("w_s"), inport("w_d")],
        output_ports=[outport("v_tank", "sentinel")],
        modes=[
            Mode("Healthy", healthy_flow, lambda x, u, p, n: {"v_tank": x[0]}, bounded),
            Mode("Drained", drained_flow, lambda x, u, p, n: {"v_tank": 0.0}),
            Mode("Overflow", overflow_flow, lambda x, u, p, n: {"v_tank": p["V_max"]}),
        ],
        transitions=[
            Transition("Healthy", "Drained", lambda x, u, p: x[0] <= 0,
                       reset=lambda x, u, p: (0.0,), priority=0, label="x_v<=0"),
            Transition("Healthy", "Overflow", lambda x, u, p: x[0] > p["V_max"],
                       reset=lambda x, u, p: (p["V_max"],), priority=1, label="x_v>V_max"),
            Transition("Drained", "Healthy", lambda x, u, p: u["w_s"] > u["w_d"], priority=0, label="w_s>w_d"),
            Transition("Overflow", "Healthy", lambda x, u, p: u["w_d"] > u["w_s"], priority=0, label="w_d>w_s"),
        ],
        initial_mode="Healthy" if params.V_0 > 0 else "Drained",
        initial_state=[params.V_0],
        parameters=asdict(params),
    )


# -- pump ------------------------------------------------------------------

def make_pump(params: PumpParams = PumpParams(), name: str = "pump") -> OpenHybridAutomaton:
    params.validate(name)

    def flow(rate):
        return lambda x, u, p: (rate,)

    def idle(x, u, p, noise):
        return {"w_s": 0.0, "p_pd": 0.0}

    def running(x, u, p, noise):
        return {"w_s": p["W_avg"], "p_pd": p["P_p"]}

    def idle_fault(x, u, p):
        # an idle pump draws no power, so only running pumps fault on a power cut
        return u["v_tank"] == LOST or u["phi_p"] == 1

    def running_fault(x, u, p):
        return u["p_ps"] < p["P_p"] or u["v_tank"] == LOST or u["phi_p"] == 1

    def start(x, u, p):
        return (0 <= u["v_tank"] < p["V_th"] and x[0] >= p["T_off"]
                and u["p_ps"] >= p["P_p"])

    def stop(x, u, p):
        return u["v_tank"] >= p["V_max"] or x[0] > p["T_on"]

    def cleared(x, u, p):
        return u["v_tank"] != LOST and u["phi_p"] == 0

    fault_label = "p_ps<P_p | v_tank=-1 | phi_p=1"
    return OpenHybridAutomaton(
        name=name,
        continuous_vars=[("x_t", "min")],
        input_ports=[inport("v_tank", "sentinel"), inport("p_ps"), inport("phi_p", "discrete")],
        output_ports=[outport("w_s"), outport("p_pd")],
        modes=[
            Mode("PumpOff", flow(1.0), idle),
            Mode("PumpOn", flow(1.0), running),
            Mode("Fault", flow(0.0), idle),
        ],
        transitions=[
            Transition("PumpOff", "Fault", idle_fault, priority=0, label=fault_label),
            Transition("PumpOn", "Fault", running_fault, priority=0, label=fault_label),
            Transition("PumpOff", "PumpOn", start, priority=1,
                       label="v_tank<V_th & x_t>=T_off & p_ps>=P_p"),
            Transition("PumpOn", "PumpOff", stop, priority=1, label="v_tank>=V_max | x_t>T_on"),
            Transition("Fault", "PumpOff", cleared, reset=lambda x, u, p: (p["T_off"],),
                       priority=0, label="v_tank!=-1 & phi_p=0"),
        ],
        initial_mode="PumpOff",
        initial_state=[0.0],
        parameters=asdict(params),
        timers=["x_t"],
    )


# -- composition -----------------------------------------------------------

NODE_ORDER = ("substation", "scada", "network", "tank", "pump", "demand", "pump_power", "net_power")

WIRING = (
    # physical: power availability gated to each consumer's working power
    ("substation.avail", "pump_power.avail", "physical"),
    ("pump_power.p_ps", "pump.p_ps", "physical"),
    ("substation.avail", "net_power.avail", "physical"),
    ("net_power.p_ns", "network.p_ns", "physical"),
    # cyber: every signal rides the communication network
    ("substation.p_m", "network.s_1", "cyber"),
    ("network.s_1_out", "scada.p_m", "cyber"),
    ("scada.s_CB", "network.s_2", "cyber"),
    ("network.s_2_out", "substation.s_CB", "cyber"),
    ("tank.v_tank", "network.s_3", "cyber"),
    ("network.s_3_out", "pump.v_tank", "cyber"),
    # internal: pump feeds the tank
    ("pump.w_s", "tank.w_s", "internal"),
    # logical: demands aggregate onto the substation
    ("network.p_nd", "demand.p_nd", "logical"),
    ("pump.p_pd", "demand.p_pd", "logical"),
    ("demand.p_d", "substation.p_d", "logical"),
)


def make_micropolis(params: MicropolisParams | None = None, order: Sequence[str] | None = None) -> CompositionNetwork:
    """The closed-loop Micropolis composition.

    ``order`` permutes node registration; the result is behaviourally identical.
    """
    params = (params or MicropolisParams()).validate()
    nodes = {
        "substation": make_substation(params.substation),
        "scada": make_scada(params.scada, params.substation.sigma_eps),
        "network": make_network(params.network),
        "tank": make_tank(params.tank),
        "pump": make_pump(params.pump),
        "demand": sum_block("demand", ("d_city", "p_nd", "p_pd"), "p_d"),
        "pump_power": gate_block("pump_power", "avail", "p_ps", params.pump.P_p),
        "net_power": gate_block("net_power", "avail", "p_ns", params.network.P_n),
    }
    order = tuple(order or NODE_ORDER)
    if sorted(order) != sorted(NODE_ORDER):
        raise ValueError(f"order must be a permutation of {NODE_ORDER}")
    net = CompositionNetwork("micropolis")
    for name in order:
        net.add_node(nodes[name])
    for src, dst, kind in WIRING:
        net.connect(src, dst, kind)
    return net
