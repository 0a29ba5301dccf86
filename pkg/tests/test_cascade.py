import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cascadia.cascade import (
    DEGRADED_MODES,
    DependencyGraph,
    ModeEvent,
    analyze,
    build_cascade,
    compute_metrics,
    extract_events,
)
from cascadia.errors import ValidationError
from cascadia.scenario import Event, Trace, load_scenario, run


def degr(t, comp, mode):
    return ModeEvent(t, comp, "degradation", mode, None, "g")


def recov(t, comp, mode):
    return ModeEvent(t, comp, "recovery", mode, None, "g")


def synthetic(dt, columns):
    """Trace from per-column lists; mode changes become events."""
    n = len(next(iter(columns.values())))
    data = {"t": [k * dt for k in range(n)], **columns}
    events = []
    for col, values in columns.items():
        if not col.endswith(".mode"):
            continue
        node = col[:-5]
        for k in range(1, n):
            if values[k] != values[k - 1]:
                events.append(Event(k * dt, node, values[k - 1], values[k], "g"))
    events.sort(key=lambda e: (e.t, e.node))
    return Trace({"dt": dt}, list(data), data, events)


# -- extract_events ------------------------------------------------------------

def test_no_mode_changes_no_events():
    trace = synthetic(0.1, {"tank.mode": ["Healthy"] * 20})
    assert extract_events(trace) == []


def test_single_network_degradation():
    trace = synthetic(1.0, {"network.mode": ["Healthy"] * 60 + ["NetDown"] * 5,
                            "network.phi_n": [0.0] * 59 + [1.0] * 6})
    (ev,) = extract_events(trace)
    assert (ev.t, ev.component, ev.mode, ev.kind) == (60.0, "network", "NetDown", "degradation")
    assert ev.cause == "injected_fault"


def test_degradation_recovery_pair():
    modes = ["PumpOn"] * 601 + ["Fault"] * 300 + ["PumpOff"] * 10
    trace = synthetic(0.1, {"pump.mode": modes})
    evs = extract_events(trace)
    assert [(e.kind, e.mode) for e in evs] == [("degradation", "Fault"), ("recovery", "PumpOff")]
    assert evs[0].t == pytest.approx(60.1) and evs[1].t == pytest.approx(90.1)


def test_starting_degraded_is_an_event_at_zero():
    trace = synthetic(0.1, {"tank.mode": ["Drained"] * 5})
    (ev,) = extract_events(trace)
    assert ev.t == 0.0 and ev.cause == "initial"


# -- build_cascade -------------------------------------------------------------

def test_empty_event_list():
    assert build_cascade([]) == []


def test_single_event_is_its_own_root():
    (chain,) = build_cascade([degr(60, "network", "NetDown")])
    assert len(chain) == 1 and chain.root.component == "network"
    assert chain.links[0].parent is None


def test_tank_attributed_to_the_earliest_provider():
    events = [degr(60, "network", "NetDown"), degr(60.1, "pump", "Fault"), degr(95, "tank", "Drained")]
    (chain,) = build_cascade(events)
    parents = {lk.event.component: (lk.parent.component if lk.parent else None, lk.edge_type) for lk in chain.links}
    assert parents == {"network": (None, None), "pump": ("network", "cyber"), "tank": ("network", "cyber")}
    tank_link = chain.links[2]
    assert [p.component for p in tank_link.other_parents] == ["pump"]


def test_switch_off_chain():
    events = [degr(50, "substation", "SwitchOff"), degr(50.1, "network", "UPSUsage"),
              degr(80.1, "network", "NetDown"), degr(80.2, "scada", "ConnDown")]
    (chain,) = build_cascade(events)
    assert chain.root.component == "substation"
    links = {lk.event.key: lk.parent.key if lk.parent else None for lk in chain.links}
    assert links["scada@80.2:ConnDown"] == "network@80.1:NetDown"
    assert links["network@50.1:UPSUsage"] == "substation@50:SwitchOff"


def test_recovered_provider_is_not_a_parent():
    events = [degr(10, "network", "NetDown"), recov(20, "network", "Healthy"), degr(30, "pump", "Fault")]
    chains = build_cascade(events)
    assert [c.root.component for c in chains] == ["network", "pump"]


def test_no_edge_no_parent():
    # tank is not a provider of scada
    chains = build_cascade([degr(1, "tank", "Drained"), degr(2, "scada", "ConnDown")])
    assert len(chains) == 2


def test_graph_rejects_unknown_edge_type():
    with pytest.raises(ValidationError):
        DependencyGraph((("a", "b", "geographic"),))


# -- metrics ----------------------------------------------------------------

def test_quiescent_metrics():
    trace = run(load_scenario('{"substation": {"sigma_eps": 0}, "solver": {"t_end": 10}}'))
    report = analyze(trace)
    m = report.metrics
    assert report.chains == []
    assert m.unserved_water == m.spill_volume == m.blackout_duration == 0.0
    assert set(m.degraded_dwell.values()) == {0.0}
    assert m.components_affected == 0 and m.time_to_first_cascade is None


def test_unserved_water_over_ten_minutes():
    dt = 0.1
    modes = ["Healthy"] * 100 + ["Drained"] * 100 + ["Healthy"] * 50
    trace = synthetic(dt, {"tank.mode": modes, "tank.w_d": [1.0] * 250, "tank.w_s": [0.0] * 250})
    m = compute_metrics(trace, extract_events(trace))
    assert m.unserved_water == pytest.approx(10.0, abs=dt * 1.0)


def test_blackout_duration():
    dt = 0.1
    modes = ["SupplyPower"] * 500 + ["SwitchOff"] * 50 + ["SupplyPower"] * 100
    trace = synthetic(dt, {"substation.mode": modes, "substation.s_CB": [0.0] * 650})
    m = compute_metrics(trace, extract_events(trace))
    assert m.blackout_duration == pytest.approx(5.0, abs=dt)


def test_spill_counts_only_net_inflow():
    dt = 0.5
    trace = synthetic(dt, {"tank.mode": ["Healthy", "Overflow", "Overflow", "Overflow", "Healthy"],
                           "tank.w_s": [2.0, 2.0, 2.0, 0.0, 0.0], "tank.w_d": [1.0] * 5})
    assert compute_metrics(trace, extract_events(trace)).spill_volume == pytest.approx(1.0)


# -- properties over simulated traces -----------------------------------------

scenario_text = st.builds(
    lambda seed, t_fault, dur, t_op, t_pf: (
        '{"solver": {"t_end": 150, "seed": %d}, "schedules": {"phi_n": [[%g, 1], [%g, 0]], '
        '"s_op": [[%g, 1], [%g, 0]], "phi_p": [[%g, 1], [%g, 0]]}}'
        % (seed, t_fault, t_fault + dur, t_op, t_op + 10, t_pf, t_pf + 5)),
    st.integers(0, 1000), st.integers(5, 60), st.integers(1, 40), st.integers(70, 120), st.integers(125, 140),
)


@settings(max_examples=12, deadline=None)
@given(text=scenario_text)
def test_report_properties(text):
    trace = run(load_scenario(text))
    report = analyze(trace)
    graph = DependencyGraph.default()

    # conservation
    for comp, bad in DEGRADED_MODES.items():
        rows = sum(1 for m in trace.data[f"{comp}.mode"] if m in bad)
        assert report.metrics.degraded_dwell[comp] == rows * trace.dt

    # chain soundness
    windows = {}
    events = report.events
    for i, ev in enumerate(events):
        if ev.kind == "degradation":
            end = next((e.t for e in events[i + 1:] if e.component == ev.component), float("inf"))
            windows[ev.key] = end
    for chain in report.chains:
        for lk in chain.links:
            if lk.parent is None:
                continue
            assert lk.parent.t <= lk.event.t
            assert graph.edge_type(lk.parent.component, lk.event.component) == lk.edge_type is not None
            assert lk.event.t < windows[lk.parent.key]
        # root monotonicity
        assert chain.root.t == min(lk.event.t for lk in chain.links)
        assert chain.links[0].parent is None

    # every degradation lands in exactly one chain
    in_chains = sorted(lk.event.key for c in report.chains for lk in c.links)
    assert in_chains == sorted(e.key for e in events if e.kind == "degradation")

    m = report.metrics
    assert m.unserved_water >= 0 and m.spill_volume >= 0 and m.blackout_duration >= 0
    assert 0 <= m.components_affected <= 5

    # determinism
    again = analyze(trace)
    assert again.cascade_dict() == report.cascade_dict()
    assert again.metrics.to_dict() == m.to_dict()
