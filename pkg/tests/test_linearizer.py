import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridlin.errors import MissingSegmentParams, SingularSystem, ZeroVoltage
from gridlin.linearizer import (
    LinearModelParams,
    assemble_compact,
    build_model,
    lindistflow_params,
    modified_impedances,
    node_positions,
    nonlinear_terms,
    sensitivity_blocks,
    solve_linear,
    update_parameters,
    voltage_sensitivity,
)
from gridlin.loads import Loads, loads_from_spec
from gridlin.network import build_network, network_arrays
from gridlin.powerflow import flat_point, head_voltages, solve_exact
from oracles import central_jacobian, drop_and_loss, random_spec, tree_linear_solve


def _instance(seed, n=None):
    rng = np.random.default_rng(seed)
    n = n or int(rng.integers(1, 4))
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    z = 0.01 * (a + a.T) + 0.05 * np.eye(n) * (1 + 2j)
    v = rng.uniform(0.9, 1.1, n) * np.exp(1j * (np.array([0, -2.1, 2.1])[:n] + rng.uniform(-0.1, 0.1, n)))
    p = rng.uniform(-1, 1, n)
    q = rng.uniform(-1, 1, n)
    return z, v, p, q


def test_modified_impedances_entrywise():
    z, v, _, _ = _instance(1, 3)
    mi = modified_impedances(z, v)
    for r in range(3):
        for c in range(3):
            assert mi.z_tilde[r, c] == pytest.approx(np.conj(v[r]) * z[r, c] / np.conj(v[c]), abs=1e-15)
            assert mi.z_bar[r, c] == pytest.approx(z[r, c] / np.conj(v[c]), abs=1e-15)
            assert mi.z_check[r, c] == pytest.approx(z[r, c] / (v[r] * np.conj(v[c])), abs=1e-15)


def test_modified_impedances_reject_zero_voltage():
    with pytest.raises(ZeroVoltage):
        modified_impedances(np.eye(2), np.array([1.0, 0.0]))


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_nonlinear_terms_match_current_form(seed):
    z, v, p, q = _instance(seed)
    got = nonlinear_terms(modified_impedances(z, v), p, q)
    want = drop_and_loss(z, v, p, q)
    for g, w in zip(got, want):
        np.testing.assert_allclose(g, w, atol=1e-13)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_sensitivity_blocks_match_finite_differences(seed):
    z, v, p, q = _instance(seed)
    mi = modified_impedances(z, v)
    blocks = sensitivity_blocks(mi, p, q)
    jp, jq = central_jacobian(lambda a, b: drop_and_loss(z, v, a, b), p, q)
    expected = (jp[0], jq[0], jp[1], jq[1], jp[2], jq[2])
    for got, want in zip(blocks, expected):
        assert np.max(np.abs(got - want)) < 1e-6


def test_voltage_drop_jacobian_is_not_the_product_form():
    # guards the diag(a) r + diag(b) x form against 2 r diag(r P) ...
    z, v, p, q = _instance(5, 3)
    mi = modified_impedances(z, v)
    rb, xb = mi.z_bar.real, mi.z_bar.imag
    product = 2 * rb @ np.diag(rb @ p) + 2 * xb @ np.diag(xb @ p) + 2 * rb @ np.diag(xb @ q) - 2 * xb @ np.diag(rb @ q)
    jp, _ = central_jacobian(lambda a, b: drop_and_loss(z, v, a, b), p, q)
    assert np.max(np.abs(product - jp[0])) > 1e-3
    assert np.max(np.abs(sensitivity_blocks(mi, p, q)[0] - jp[0])) < 1e-6


def test_branch_equation_holds_at_exact_solution(ab_net, ab_loads):
    op = solve_exact(ab_net, ab_loads, None)
    vi = head_voltages(ab_net, op.v_complex)
    vi_sq = np.abs(vi) ** 2
    for j, seg in ab_net.segments.items():
        sl = ab_net.slice(j)
        mi = modified_impedances(seg.z, vi[sl])
        d_v, _, _ = nonlinear_terms(mi, op.p_flow[sl], op.q_flow[sl])
        drop = 2 * (mi.z_tilde.real @ op.p_flow[sl] + mi.z_tilde.imag @ op.q_flow[sl])
        np.testing.assert_allclose(op.v_sq[sl], vi_sq[sl] - drop + d_v, atol=1e-12)


@pytest.mark.parametrize("which", ["ab", "chain", "s123"])
def test_model_reproduces_its_base_point(which, request):
    net = request.getfixturevalue(f"{which}_net")
    if which == "s123":
        loads = request.getfixturevalue("s123_series").loads[17]
    else:
        loads = request.getfixturevalue(f"{which}_loads")
    op = solve_exact(net, loads)
    sol = solve_linear(build_model(net, op), loads)
    assert np.max(np.abs(sol.v_sq - op.v_sq)) < 1e-10
    assert np.max(np.abs(sol.p_flow - op.p_flow)) < 1e-10
    assert np.max(np.abs(sol.q_flow - op.q_flow)) < 1e-10


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(2, 15))
def test_compact_solve_matches_tree_recursion(seed, n):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n, delta_prob=0.5)
    net = build_network(spec)
    loads = loads_from_spec(net, spec["loads"])
    params = update_parameters(net, solve_exact(net, loads))
    cm = assemble_compact(net, params)
    query = loads.scaled(rng.uniform(0.5, 1.5))
    sol = solve_linear(cm, query)
    s = query.wye + cm.big_k @ query.delta
    v, P, Q = tree_linear_solve(net, params, s.real, s.imag, np.abs(net.v0) ** 2)
    np.testing.assert_allclose(sol.v_sq, v, atol=1e-12)
    np.testing.assert_allclose(sol.p_flow, P, atol=1e-12)
    np.testing.assert_allclose(sol.q_flow, Q, atol=1e-12)


def test_flat_no_load_point_gives_lossless_model(ab_net):
    online = assemble_compact(ab_net, update_parameters(ab_net, flat_point(ab_net)))
    lossless = assemble_compact(ab_net, lindistflow_params(ab_net))
    for name in ("big_m_p", "big_m_q", "big_g_p", "big_g_q", "big_h_p", "big_h_q", "big_k", "u_v", "u_p", "u_q"):
        np.testing.assert_allclose(getattr(online, name), getattr(lossless, name), atol=1e-12, err_msg=name)


def test_lossless_model_ignores_losses(ab_net, ab_loads):
    cm = build_model(ab_net)
    assert cm.kind == "lossless"
    sol = solve_linear(cm, ab_loads)
    # without losses the head flow equals the total consumption
    total = ab_loads.wye + cm.big_k @ ab_loads.delta
    inc = network_arrays(ab_net).inc
    assert (inc.a0 @ sol.p_flow).sum() == pytest.approx(total.real.sum(), abs=1e-12)


def test_insertion_order_gives_identical_model(ab_fixture, ab_loads):
    doc = dict(ab_fixture.network)
    doc["segments"] = doc["segments"][::-1]
    a = build_network(ab_fixture.network)
    b = build_network(doc)
    ma = build_model(a, solve_exact(a, ab_loads))
    mb = build_model(b, solve_exact(b, ab_loads))
    np.testing.assert_array_equal(ma.flow_matrix, mb.flow_matrix)
    np.testing.assert_array_equal(ma.big_m_p, mb.big_m_p)


def test_voltage_sensitivity_matches_finite_difference(ab_net, ab_loads):
    cm = build_model(ab_net, solve_exact(ab_net, ab_loads))
    pos = node_positions(ab_net, [(1, "b"), (2, "a")])
    sens = voltage_sensitivity(cm, pos)
    assert sens.shape == (2, ab_net.m)
    h = 1e-6
    for k, p in enumerate(pos):
        e = np.zeros(ab_net.m)
        e[p] = h
        up = solve_linear(cm, ab_loads, q_gen=e).v_sq
        dn = solve_linear(cm, ab_loads, q_gen=-e).v_sq
        np.testing.assert_allclose(sens[k], (up - dn) / (2 * h), atol=1e-8)
    # injecting reactive power raises the voltage where it is injected
    assert np.all(sens[np.arange(len(pos)), pos] > 0)


def test_missing_segment_params(ab_net):
    params = lindistflow_params(ab_net)
    partial = LinearModelParams({1: params.segments[1]}, params.k)
    with pytest.raises(MissingSegmentParams):
        assemble_compact(ab_net, partial)


def test_singular_flow_system(chain_net):
    params = lindistflow_params(chain_net)
    seg = params.segments[1]
    # G_p = -A_11 zeroes the first diagonal entry of the flow block
    a11 = assemble_compact(chain_net, params).incidence.a[0, 0]
    segs = dict(params.segments)
    segs[1] = type(seg)(seg.m_p, seg.m_q, -a11 * np.eye(1), seg.g_q, seg.h_p, seg.h_q, seg.u_v, seg.u_p, seg.u_q)
    cm = assemble_compact(chain_net, LinearModelParams(segs, params.k))
    with pytest.raises(SingularSystem):
        solve_linear(cm, Loads.zeros(chain_net))
