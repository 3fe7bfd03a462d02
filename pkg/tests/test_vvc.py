import numpy as np
import pytest

from gridlin.errors import DimensionMismatch
from gridlin.fixtures import chain
from gridlin.linearizer import build_model, node_positions, solve_linear, voltage_sensitivity
from gridlin.loads import loads_from_spec
from gridlin.network import build_network
from gridlin.simulation import TimeSeries
from gridlin.vvc import (
    PvFleet,
    VvcConfig,
    fleet_from_spec,
    lipschitz,
    objective,
    run_vvc_offline,
    run_vvc_online,
    vvc_step,
)


@pytest.fixture(scope="module")
def feeder():
    fx = chain(6, "abc")
    net = build_network(fx.network)
    loads = loads_from_spec(net, fx.network["loads"])
    fleet = PvFleet(((3, "a"), (5, "b"), (5, "c")), -1.0, 1.0, np.full(3, 0.2))
    pos = node_positions(net, fleet.locations)
    lip = lipschitz(voltage_sensitivity(build_model(net), pos))
    return net, loads, fleet, pos, lip


def test_objective_value():
    assert objective([1.0, 1.1, 0.9]) == pytest.approx(0.01)


def test_step_is_identity_at_nominal_voltage():
    fleet = PvFleet(((1, "a"), (2, "a")), -1.0, 1.0)
    q = np.array([0.3, -0.2])
    sens = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(vvc_step(q, np.ones(3), sens, fleet, VvcConfig()), q)


def test_huge_step_lands_on_bounds():
    fleet = PvFleet(((1, "a"), (2, "a")), [-0.5, -1.0], [0.5, 1.0])
    sens = np.array([[0.1, 0.2], [0.3, 0.1]])
    q = vvc_step(np.zeros(2), np.array([0.9, 0.95]), sens, fleet, VvcConfig(alpha=1e6))
    np.testing.assert_array_equal(q, [0.5, 1.0])
    q = vvc_step(np.zeros(2), np.array([1.1, 1.05]), sens, fleet, VvcConfig(alpha=1e6))
    np.testing.assert_array_equal(q, [-0.5, -1.0])


def test_step_orientation_is_gradient():
    # sens row k is dv/dq_k, so sens @ (v - 1) is the gradient of the objective
    fleet = PvFleet(((1, "a"),), -10.0, 10.0)
    sens = np.array([[0.5, 0.25]])
    v = np.array([0.96, 0.98])
    q = vvc_step(np.zeros(1), v, sens, fleet, VvcConfig(alpha=1.0))
    assert q[0] == pytest.approx(-(0.5 * -0.04 + 0.25 * -0.02))


def test_step_checks_dimensions():
    fleet = PvFleet(((1, "a"),), -1.0, 1.0)
    with pytest.raises(DimensionMismatch):
        vvc_step(np.zeros(1), np.ones(3), np.ones((1, 2)), fleet, VvcConfig())


def test_config_and_fleet_validation():
    with pytest.raises(ValueError):
        VvcConfig(alpha=0.0)
    with pytest.raises(ValueError):
        PvFleet(((1, "a"),), 1.0, -1.0)
    with pytest.raises(DimensionMismatch):
        PvFleet(((1, "a"),), -1.0, 1.0, np.zeros((4, 2)))


def test_fleet_from_profile_rows():
    rows = [{"step": s, "bus": 2, "kind": "pv", "phase_or_pair": "b", "p": 0.1 * s, "q": 0.0} for s in range(3)]
    fleet = fleet_from_spec({"locations": [[2, "b"]], "q_min": -0.4, "q_max": 0.4}, 3, rows)
    assert fleet.p_at(2)[0] == pytest.approx(0.2)
    assert fleet.q_max[0] == 0.4
    with pytest.raises(DimensionMismatch):
        fleet_from_spec({"locations": [[1, "a"]]}, 3, rows)


def test_descent_on_frozen_linear_model(feeder):
    net, loads, fleet, pos, lip = feeder
    cm = build_model(net)
    sens = voltage_sensitivity(cm, pos)
    cfg = VvcConfig(alpha=0.9 / lip)
    p_gen = np.zeros(net.m)
    p_gen[pos] = fleet.p_g
    q = np.zeros(fleet.n)
    values = []
    for _ in range(60):
        q_gen = np.zeros(net.m)
        q_gen[pos] = q
        v = solve_linear(cm, loads, p_gen=p_gen, q_gen=q_gen).v_sq
        values.append(objective(v))
        q = vvc_step(q, v, sens, fleet, cfg)
    assert np.all(np.diff(values) <= 1e-15)


def test_online_converges_on_static_loads(feeder):
    net, loads, fleet, _, lip = feeder
    ts = TimeSeries((loads,) * 150)
    report = run_vvc_online(net, ts, fleet, VvcConfig(alpha=0.5 / lip))
    obj = report.objective
    assert np.all(np.diff(obj[1:]) <= 1e-12)
    assert abs(obj[-50] - obj[-1]) < 1e-10
    assert obj[-1] < 0.5 * report.objective_uncontrolled[-1]


def test_online_and_offline_agree_on_static_loads(feeder):
    net, loads, fleet, _, lip = feeder
    ts = TimeSeries((loads,) * 150)
    cfg = VvcConfig(alpha=0.5 / lip)
    on = run_vvc_online(net, ts, fleet, cfg).objective[-1]
    off = run_vvc_offline(net, ts, fleet, cfg, opf_period=1).objective[-1]
    assert abs(on - off) / off < 0.05


def test_setpoints_stay_in_bounds(feeder):
    net, loads, fleet, _, lip = feeder
    tight = PvFleet(fleet.locations, -0.05, 0.05, fleet.p_g)
    ts = TimeSeries((loads.scaled(2.0),) * 20)
    for report in (run_vvc_online(net, ts, tight, VvcConfig(10 / lip)), run_vvc_offline(net, ts, tight, opf_period=5)):
        assert np.all(report.q_g >= -0.05) and np.all(report.q_g <= 0.05)


def test_offline_holds_between_solves(feeder):
    net, loads, fleet, _, _ = feeder
    ts = TimeSeries(tuple(loads.scaled(f) for f in np.linspace(0.8, 1.2, 10)))
    report = run_vvc_offline(net, ts, fleet, opf_period=4)
    for t in range(10):
        np.testing.assert_array_equal(report.q_g[t], report.q_g[4 * (t // 4)])
    with pytest.raises(ValueError):
        run_vvc_offline(net, ts, fleet, opf_period=0)


def test_empty_fleet(feeder):
    net, loads, _, _, _ = feeder
    report = run_vvc_online(net, TimeSeries((loads,) * 3), PvFleet((), 0.0, 0.0))
    np.testing.assert_array_equal(report.objective, report.objective_uncontrolled)
