import pytest

from cascadia.composition import CompositionNetwork
from cascadia.core import AutomatonState, NoiseSource, evaluate_outputs, step_automaton
from cascadia.errors import ValidationError
from cascadia.models import (
    NetworkParams,
    PumpParams,
    ScadaParams,
    SubstationParams,
    TankParams,
    make_micropolis,
    make_network,
    make_scada,
    make_substation,
)
from cascadia.scenario import load_scenario, run

from guard_cases import ALL_LABELS, AUTOMATA, CASES

NOISE = NoiseSource(0)


def test_nineteen_guard_labels():
    labels = [lbl for a in AUTOMATA.values() for lbl in a.guard_labels()]
    assert len(labels) == 19 and sorted(labels) == sorted(ALL_LABELS)


@pytest.mark.parametrize("key, mode, x, inputs, target, label", CASES,
                         ids=[f"{c[0]}-{c[1]}-{c[4] or 'stay'}-{i}" for i, c in enumerate(CASES)])
def test_guard_case(key, mode, x, inputs, target, label):
    res = step_automaton(AUTOMATA[key], AutomatonState(mode, (x,)), inputs, 0.1, NOISE)
    if target is None:
        assert res.transition is None or res.transition.label != label
        assert res.state.mode == mode
    else:
        assert res.state.mode == target and res.transition.label == label


# -- outputs and resets ------------------------------------------------------

def test_substation_supplies_demand():
    sub = make_substation(SubstationParams(sigma_eps=0.0))
    out = evaluate_outputs(sub, AutomatonState("SupplyPower", (0.0,)), {"s_CB": 0, "p_d": 200}, NOISE)
    assert out == {"p_s": 200.0, "p_m": 200.0, "avail": 1.0}


def test_substation_noise_is_seeded_and_nonnegative():
    sub = make_substation(SubstationParams(sigma_eps=3.0))
    st = AutomatonState("SwitchOff", (0.0,))
    a = [evaluate_outputs(sub, st, {"s_CB": 1, "p_d": 0}, n)["p_m"] for n in [NoiseSource(9)] * 50]
    b = [evaluate_outputs(sub, st, {"s_CB": 1, "p_d": 0}, n)["p_m"] for n in [NoiseSource(9)] * 50]
    assert a == b and min(a) >= 0.0 and max(a) > 0.0


def test_scada_commands():
    scada = make_scada(ScadaParams())
    for mode, cmd in (("Closed", 0.0), ("Open", 1.0), ("ConnDown", -1.0)):
        assert evaluate_outputs(scada, AutomatonState(mode, (0.0,)), {"p_m": 1, "s_OP": 0}, NOISE) == {"s_CB": cmd}


def test_scada_threshold_default():
    assert make_scada(ScadaParams(), sigma_eps=0.5).parameters["theta_off"] == 1.0
    assert make_scada(ScadaParams(), sigma_eps=2.0).parameters["theta_off"] == 4.0
    assert make_scada(ScadaParams(theta_off=2.0), sigma_eps=2.0).parameters["theta_off"] == 2.0


def test_scada_mirrors_substation_switch_off():
    # oracle: substation held off (s_CB=1, no noise) -> p_m = 0 < theta_off = 2; SCADA opens
    # once its timer passes T_d = 1
    net = CompositionNetwork()
    net.add_node(make_substation(SubstationParams(sigma_eps=0.0)))
    net.add_node(make_scada(ScadaParams(T_d=1.0, theta_off=2.0)))
    net.connect("substation.p_m", "scada.p_m", "cyber")
    exo = {"substation.s_CB": 1.0, "substation.p_d": 200.0, "scada.s_OP": 0.0}
    state = net.initial_state(0.1, exo, {"substation": ("SwitchOff", None)})
    opened = None
    for _ in range(20):
        state, snap = net.step(state, exo, NOISE)
        if "scada" in snap.fired:
            opened = snap
            break
    assert opened is not None and opened.fired["scada"].target == "Open"
    assert opened.inputs["scada.p_m"] < 2.0
    assert state.states["scada"].x == (0.0,)
    # the guard sees the timer after the step; find the first Euler sum of dt reaching T_d
    x_ts, k = 0.0, 0
    while True:
        x_ts += 0.1
        if x_ts >= 1.0:
            break
        k += 1
    assert opened.step == k


def test_network_relays_with_delay_and_flushes():
    net_a = make_network(NetworkParams(T_1=0.2, T_2=0.3, T_3=0.1))
    state = net_a.initial(0.1, idle={"s_1": 0.0, "s_2": 0.0, "s_3": 0.0})
    assert {k: line.capacity for k, line in state.lines.items()} == {"s_1": 2, "s_2": 3, "s_3": 1}
    out_s1 = []
    for k in range(6):
        u = {"p_ns": 10.0, "phi_n": 1.0 if k == 4 else 0.0, "s_1": float(k + 1), "s_2": 0.0, "s_3": 0.0}
        res = step_automaton(net_a, state, u, 0.1, NOISE)
        out_s1.append(res.outputs["s_1_out"])
        state = res.state
        if k == 4:
            # the fault flips the mode and flushes every line at the end of the step
            assert state.mode == "NetDown"
            assert all(line.contents() == (-1.0,) * line.capacity for line in state.lines.values())
    # s_1 pushed 1..5 with a two-step delay; NetDown publishes the sentinel
    assert out_s1 == [0.0, 0.0, 1.0, 2.0, 3.0, -1.0]
    # fault cleared at k=5: back to Healthy, lines untouched while down
    assert state.mode == "Healthy"
    assert all(line.contents() == (-1.0,) * line.capacity for line in state.lines.values())


def test_network_demand_by_mode():
    n = make_network()
    u = {"p_ns": 10.0, "phi_n": 0.0, "s_1": 1.0, "s_2": 1.0, "s_3": 1.0}
    st = n.initial(0.1)
    assert evaluate_outputs(n, st, u, NOISE)["p_nd"] == 10.0
    assert evaluate_outputs(n, AutomatonState("UPSUsage", (0.0,), st.lines), u, NOISE)["p_nd"] == 10.0
    down = evaluate_outputs(n, AutomatonState("NetDown", (0.0,), st.lines), u, NOISE)
    assert down == {"s_1_out": -1.0, "s_2_out": -1.0, "s_3_out": -1.0, "p_nd": 0.0}


def test_pump_fault_clear_makes_pump_ready():
    pump = AUTOMATA["pump"]
    res = step_automaton(pump, AutomatonState("Fault", (2.0,)), {"v_tank": 40, "p_ps": 50, "phi_p": 0}, 0.1, NOISE)
    assert (res.state.mode, res.state.x) == ("PumpOff", (15.0,))
    # ready: the very next step may start if the tank is low
    res = step_automaton(pump, res.state, {"v_tank": 20, "p_ps": 50, "phi_p": 0}, 0.1, NOISE)
    assert res.state.mode == "PumpOn"


def test_tank_overflow_clamps():
    # oracle: 99.95 + 0.1*(2-1) = 100.05 > 100 -> Overflow, clamp to V_max
    res = step_automaton(AUTOMATA["tank"], AutomatonState("Healthy", (99.95,)), {"w_s": 2, "w_d": 1}, 0.1, NOISE)
    assert (res.state.mode, res.state.x) == ("Overflow", (100.0,))
    assert res.outputs == {"v_tank": pytest.approx(99.95)}


@pytest.mark.parametrize("factory, kwargs, path", [
    (TankParams, {"V_0": 150, "V_max": 100}, "tank.V_0"),
    (TankParams, {"V_max": 0}, "tank.V_max"),
    (PumpParams, {"V_th": 120}, "pump.V_th"),
    (PumpParams, {"W_avg": 0}, "pump.W_avg"),
    (SubstationParams, {"P_lim": -1}, "substation.P_lim"),
    (SubstationParams, {"sigma_eps": -0.1}, "substation.sigma_eps"),
    (ScadaParams, {"theta_off": 0}, "scada.theta_off"),
    (NetworkParams, {"T_ups": -1}, "network.T_ups"),
])
def test_param_validation(factory, kwargs, path):
    with pytest.raises(ValidationError) as err:
        factory(**kwargs).validate(path.split(".")[0])
    assert err.value.path == path


# -- the composed model --------------------------------------------------------

def test_dependency_census():
    counts = {}
    for c in make_micropolis().connections:
        counts[c.dependency_type] = counts.get(c.dependency_type, 0) + 1
    assert counts == {"physical": 4, "cyber": 6, "internal": 1, "logical": 3}
    logical = [c for c in make_micropolis().connections if c.dependency_type == "logical"]
    assert all("demand" in (c.source[0], c.destination[0]) for c in logical)


def test_network_stays_healthy_without_faults():
    trace = run(load_scenario('{"substation": {"sigma_eps": 0}, "solver": {"t_end": 200}}'))
    assert set(trace.data["network.mode"]) == {"Healthy"}
    assert all(v == 10.0 for v in trace.data["network.p_ns"])


@pytest.fixture(scope="module")
def busy_trace():
    text = """{
      "solver": {"t_end": 300, "seed": 4},
      "profiles": {"w_d": {"interp": "linear", "points": [[0, 0.5], [100, 1.8], [200, 0.2], [300, 1.2]]},
                   "d_city": {"interp": "hold", "points": [[0, 200], [150, 470], [170, 200]]}},
      "schedules": {"phi_n": [[40, 1], [55, 0]], "phi_p": [[230, 1], [240, 0]], "s_op": [[260, 1], [275, 0]]}
    }"""
    return run(load_scenario(text))


def test_tank_bounds(busy_trace):
    d = busy_trace.data
    assert all(0.0 <= v <= 100.0 for v in d["tank.v_tank"])
    assert all(0.0 <= v <= 100.0 for v in d["tank.x_v"])


def test_substation_output_consistency(busy_trace):
    d = busy_trace.data
    for mode, p_s, p_d, avail in zip(d["substation.mode"], d["substation.p_s"], d["substation.p_d"], d["substation.avail"]):
        if mode == "SupplyPower":
            assert p_s == p_d and avail == 1.0
        else:
            assert p_s == 0.0 and avail == 0.0


def test_network_sentinel_reaches_consumers(busy_trace):
    d = busy_trace.data
    down = [k for k, m in enumerate(d["network.mode"]) if m == "NetDown"]
    assert down
    for k in down:
        if k + 1 < len(busy_trace):
            assert d["pump.v_tank"][k + 1] == -1.0
            assert d["scada.p_m"][k + 1] == -1.0


def test_pump_not_running_during_blackout(busy_trace):
    # overlap measured as elapsed time between the first and last overlapping rows
    d = busy_trace.data
    t = d["t"]
    start = None
    spans = []
    for k, (sub, pump) in enumerate(zip(d["substation.mode"], d["pump.mode"])):
        both = sub == "SwitchOff" and pump == "PumpOn"
        if both and start is None:
            start = k
        elif not both and start is not None:
            spans.append(t[k - 1] - t[start])
            start = None
    assert spans, "scenario should switch the substation off under a running pump"
    assert max(spans) <= 2 * busy_trace.dt + 1e-9


def test_mass_balance_over_healthy_stretches(busy_trace):
    d = busy_trace.data
    dt = busy_trace.dt
    k = 0
    n = len(busy_trace)
    while k < n - 1:
        if d["tank.mode"][k] != "Healthy":
            k += 1
            continue
        j = k
        while j + 1 < n and d["tank.mode"][j + 1] == "Healthy" and j - k < 400:
            j += 1
        total = d["tank.x_v"][k]
        for i in range(k, j):
            total += dt * (d["tank.w_s"][i] - d["tank.w_d"][i])
        assert d["tank.x_v"][j] == pytest.approx(total, abs=1e-9)
        k = j + 1


def test_noise_free_runs_ignore_seed():
    text = '{"substation": {"sigma_eps": 0}, "solver": {"t_end": 60, "seed": %d}, "schedules": {"phi_n": [[20, 1]]}}'
    a, b = run(load_scenario(text % 1)), run(load_scenario(text % 999))
    assert a.data == b.data and a.events == b.events
