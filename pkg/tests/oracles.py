"""Independent reference computations used to freeze and check expected values.

None of these reuse the package's solver code paths: the power-flow oracle
works on the bus-injection form with a nodal admittance matrix, the linear
oracle walks the tree segment by segment, and the nonlinear terms are
evaluated from currents rather than from their expanded polynomial form.
"""

from __future__ import annotations

import numpy as np

from gridlin.network import PHASES, Network

ANGLE = {"a": 0.0, "b": -2 * np.pi / 3, "c": 2 * np.pi / 3}


# ---------------------------------------------------------------- networks


def random_spec(rng: np.random.Generator, n_buses: int, delta_prob: float = 0.0, max_nodes: int = 200) -> dict:
    """Random radial network document with per-unit impedances and loads.

    Each bus hangs off a uniformly chosen earlier bus and carries a random
    non-empty subset of its parent's phases.
    """
    buses = [{"id": 0, "phases": "abc"}]
    segments, loads = [], []
    nodes = 0
    for j in range(1, n_buses):
        i = int(rng.integers(0, j))
        parent = buses[i]["phases"]
        k = int(rng.integers(1, len(parent) + 1))
        ph = "".join(sorted(rng.choice(list(parent), size=k, replace=False)))
        if nodes + len(ph) > max_nodes:
            ph = ph[0]
        nodes += len(ph)
        buses.append({"id": j, "phases": ph})
        n = len(ph)
        r = np.full((n, n), 0.3) * rng.uniform(0.2, 1.0) + np.diag(rng.uniform(0.5, 1.0, n))
        x = np.full((n, n), 0.4) * rng.uniform(0.2, 1.0) + np.diag(rng.uniform(0.8, 1.5, n))
        scale = rng.uniform(0.002, 0.01)
        segments.append({"from": i, "to": j, "phases": ph, "r": (r * scale).tolist(), "x": (x * scale).tolist()})
        loads.append({"bus": j, "type": "wye", "p": rng.uniform(0.0, 0.3, n).tolist(),
                      "q": rng.uniform(0.0, 0.15, n).tolist()})
        if len(ph) >= 2 and rng.uniform() < delta_prob:
            conns = [a + b for a, b in (("a", "b"), ("b", "c"), ("c", "a")) if a in ph and b in ph]
            loads.append({"bus": j, "type": "delta", "connections": conns,
                          "p": rng.uniform(0.0, 0.2, len(conns)).tolist(),
                          "q": rng.uniform(0.0, 0.1, len(conns)).tolist()})
    return {"units": "pu", "buses": buses, "segments": segments, "loads": loads}


def dense_incidence(net: Network) -> np.ndarray:
    """Full incidence matrix built directly from the segment list.

    Rows are all phase-nodes (head first, bus-major), columns the phase
    circuits in the same order as the non-head rows.  +1 at the sending
    end, -1 at the receiving end.
    """
    rows = [(0, p) for p in net.phases(0)] + net.node_labels()
    row_of = {lab: k for k, lab in enumerate(rows)}
    cols = net.node_labels()
    out = np.zeros((len(rows), len(cols)))
    for c, (j, ph) in enumerate(cols):
        i = net.parent[j]
        out[row_of[(i, ph)], c] = 1.0
        out[row_of[(j, ph)], c] = -1.0
    return out


# ---------------------------------------------------------------- power flow


def _delta_consumption(v_bus: dict, conns, s_pp):
    out = {}
    for (f, g), s in zip(conns, s_pp):
        i_pp = np.conj(s / (v_bus[f] - v_bus[g]))
        out[f] = out.get(f, 0) + v_bus[f] * np.conj(i_pp)
        out[g] = out.get(g, 0) - v_bus[g] * np.conj(i_pp)
    return out


def newton_power_flow(net: Network, wye: np.ndarray, delta: np.ndarray, tol: float = 1e-14, max_iter: int = 50):
    """Bus-injection Newton solve with a finite-difference Jacobian.

    Unknowns are the real and imaginary parts of every non-head phase-node
    voltage.  The mismatch is ``V * conj(Y V) + s_load(V)`` at those nodes,
    so the converged point is exact regardless of Jacobian accuracy.
    Iteration stops once the Newton step falls below ``tol``; stiff
    admittances keep the mismatch itself at round-off level above zero.
    """
    labels = [(0, p) for p in net.phases(0)] + net.node_labels()
    idx = {lab: k for k, lab in enumerate(labels)}
    n_all = len(labels)
    n0 = net.n0
    y = np.zeros((n_all, n_all), dtype=complex)
    for j, seg in net.segments.items():
        i = net.parent[j]
        ys = np.linalg.inv(seg.z)
        a = [idx[(i, p)] for p in seg.phases]
        b = [idx[(j, p)] for p in seg.phases]
        y[np.ix_(a, a)] += ys
        y[np.ix_(b, b)] += ys
        y[np.ix_(a, b)] -= ys
        y[np.ix_(b, a)] -= ys
    delta_rows = []
    pos = 0
    for bus, conns in net.delta_connections.items():
        delta_rows.append((bus, conns, delta[pos : pos + len(conns)]))
        pos += len(conns)

    v0 = np.asarray(net.v0, dtype=complex)

    def mismatch(x):
        v = np.concatenate([v0, x[: net.m] + 1j * x[net.m :]])
        s = v * np.conj(y @ v)
        s = s[n0:] + wye
        for bus, conns, s_pp in delta_rows:
            vb = {p: v[idx[(bus, p)]] for p in net.phases(bus)}
            for p, val in _delta_consumption(vb, conns, s_pp).items():
                s[idx[(bus, p)] - n0] += val
        return np.concatenate([s.real, s.imag])

    # flat start at the head voltage of the matching phase
    x0 = np.array([v0[net.phases(0).index(p)] for _, p in net.node_labels()], dtype=complex)
    x = np.concatenate([x0.real, x0.imag])
    for _ in range(max_iter):
        f = mismatch(x)
        h = 1e-7
        jac = np.empty((len(f), len(x)))
        for k in range(len(x)):
            e = np.zeros_like(x)
            e[k] = h
            jac[:, k] = (mismatch(x + e) - mismatch(x - e)) / (2 * h)
        step = np.linalg.solve(jac, f)
        x = x - step
        if np.max(np.abs(step)) < tol:
            break
    else:
        raise RuntimeError("oracle Newton did not converge")
    return x[: net.m] + 1j * x[net.m :]


def two_bus_vsq(v0_sq: float, r: float, x: float, p: float, q: float) -> float:
    """Receiving-end squared magnitude of a single-phase line, high-voltage root.

    From ``|V1|^4 + (2(rp + xq) - |V0|^2)|V1|^2 + |z|^2 |s|^2 = 0``.
    """
    b = v0_sq - 2 * (r * p + x * q)
    c = (r * r + x * x) * (p * p + q * q)
    return 0.5 * (b + np.sqrt(b * b - 4 * c))


# ---------------------------------------------------------------- nonlinear terms


def drop_and_loss(z, v_head, p, q):
    """``(d_v, d_p, d_q)`` from the branch current.

    ``d_v = |z I|^2`` and ``d_p + j d_q = conj(I) * (z I)`` with
    ``I = conj(S / V_head)``.
    """
    s = np.asarray(p) + 1j * np.asarray(q)
    current = np.conj(s / v_head)
    drop = np.asarray(z) @ current
    loss = np.conj(current) * drop
    return np.abs(drop) ** 2, loss.real, loss.imag


def central_jacobian(fun, p, q, h=1e-6):
    """Central-difference Jacobians of ``fun(p, q) -> tuple of vectors``."""
    base = fun(p, q)
    n = len(p)
    jp = [np.empty((len(b), n)) for b in base]
    jq = [np.empty((len(b), n)) for b in base]
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        up, dn = fun(p + e, q), fun(p - e, q)
        for t in range(len(base)):
            jp[t][:, k] = (up[t] - dn[t]) / (2 * h)
        up, dn = fun(p, q + e), fun(p, q - e)
        for t in range(len(base)):
            jq[t][:, k] = (up[t] - dn[t]) / (2 * h)
    return jp, jq


# ---------------------------------------------------------------- linear model


def tree_linear_solve(net: Network, params, p, q, v0_sq):
    """Evaluate the linear model segment by segment, leaves first for flows."""
    P = np.zeros(net.m)
    Q = np.zeros(net.m)
    for j in reversed(net.order):
        if j == 0:
            continue
        sp = params.segments[j]
        sl = net.slice(j)
        rhs_p = p[sl] + sp.u_p
        rhs_q = q[sl] + sp.u_q
        for k in net.children.get(j, ()):
            loc = net.phase_index(j, net.phases(k))
            rhs_p[loc] += P[net.slice(k)]
            rhs_q[loc] += Q[net.slice(k)]
        n = len(rhs_p)
        lhs = np.block([[np.eye(n) - sp.g_p, -sp.g_q], [-sp.h_p, np.eye(n) - sp.h_q]])
        sol = np.linalg.solve(lhs, np.concatenate([rhs_p, rhs_q]))
        P[sl], Q[sl] = sol[:n], sol[n:]
    v = np.zeros(net.m)
    for j in net.order:
        if j == 0:
            continue
        sp = params.segments[j]
        sl = net.slice(j)
        i = net.parent[j]
        loc = net.phase_index(i, net.phases(j))
        v_head = v0_sq[loc] if i == 0 else v[net.slice(i)][loc]
        v[sl] = v_head + sp.m_p @ P[sl] + sp.m_q @ Q[sl] + sp.u_v
    return v, P, Q


def balanced(phases=PHASES):
    return np.array([np.exp(1j * ANGLE[p]) for p in phases])
