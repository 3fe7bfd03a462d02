"""Online feedback-based linearized branch-flow model.

The exact branch-flow equations are rewritten per segment in terms of
squared magnitudes ``v`` and flows ``(P, Q)``::

    v_j = v_i - 2 (r~ P + x~ Q) + d_v(P, Q)
    P_ij = sum_k P_jk + p_j + d_p(P, Q)
    Q_ij = sum_k Q_jk + q_j + d_q(P, Q)

with the modified impedances ``z~, z-, z^`` frozen at the measured head-bus
voltages.  The quadratic terms ``d`` are expanded to first order around the
measured flows; the constant offsets ``u`` are the exact residuals at the
measured point, so the model reproduces the measurement it was built from.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatch, MissingSegmentParams, SingularSystem, ZeroVoltage
from .loads import DeltaTransform, Loads, balanced_delta_transform, delta_transform
from .network import IncidenceBlocks, Network, balanced_voltage, network_arrays
from .powerflow import OperatingPoint, head_voltages

MAX_CONDITION = 1e12


@dataclass(frozen=True, eq=False)
class ModifiedImpedances:
    z_tilde: np.ndarray
    z_bar: np.ndarray
    z_check: np.ndarray


def modified_impedances(z, v) -> ModifiedImpedances:
    """Voltage-scaled impedances of one segment at head voltages ``v``."""
    z = np.asarray(z, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if z.shape != (len(v), len(v)):
        raise DimensionMismatch("impedance and voltage sizes disagree")
    if np.any(v == 0):
        raise ZeroVoltage("head voltage has a zero entry")
    inv = 1.0 / v
    z_tilde = np.outer(np.conj(v), np.conj(inv)) * z
    z_bar = z * np.conj(inv)[None, :]
    z_check = np.outer(inv, np.conj(inv)) * z
    return ModifiedImpedances(z_tilde, z_bar, z_check)


def nonlinear_terms(mi: ModifiedImpedances, p, q):
    """Voltage-drop and loss terms ``(d_v, d_p, d_q)``, all quadratic in (P, Q)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    rb, xb = mi.z_bar.real, mi.z_bar.imag
    rc, xc = mi.z_check.real, mi.z_check.imag
    rbp, xbq, xbp, rbq = rb @ p, xb @ q, xb @ p, rb @ q
    d_v = rbp * rbp + xbq * xbq + xbp * xbp + rbq * rbq + 2 * rbp * xbq - 2 * xbp * rbq
    d_p = p * (rc @ p + xc @ q) + q * (rc @ q - xc @ p)
    d_q = p * (xc @ p - rc @ q) + q * (rc @ p + xc @ q)
    return d_v, d_p, d_q


def sensitivity_blocks(mi: ModifiedImpedances, p, q):
    """Jacobians of the nonlinear terms with respect to ``P`` and ``Q``.

    Returns ``(f_p, f_q, g_p, g_q, h_p, h_q)`` where ``f`` differentiates
    ``d_v``, ``g`` differentiates ``d_p`` and ``h`` differentiates ``d_q``.
    Row k of each block is the gradient of the k-th phase's term.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    rb, xb = mi.z_bar.real, mi.z_bar.imag
    rc, xc = mi.z_check.real, mi.z_check.imag
    D = np.diag
    # d_v = a*a + b*b with a = rb P + xb Q, b = xb P - rb Q
    a = rb @ p + xb @ q
    b = xb @ p - rb @ q
    f_p = 2 * D(a) @ rb + 2 * D(b) @ xb
    f_q = 2 * D(a) @ xb - 2 * D(b) @ rb
    g_p = D(p) @ rc + D(rc @ p) + D(xc @ q) - D(q) @ xc
    g_q = D(q) @ rc + D(rc @ q) - D(xc @ p) + D(p) @ xc
    h_p = D(p) @ xc + D(xc @ p) - D(rc @ q) + D(q) @ rc
    h_q = D(q) @ xc + D(xc @ q) + D(rc @ p) - D(p) @ rc
    return f_p, f_q, g_p, g_q, h_p, h_q


@dataclass(frozen=True, eq=False)
class SegmentParams:
    m_p: np.ndarray
    m_q: np.ndarray
    g_p: np.ndarray
    g_q: np.ndarray
    h_p: np.ndarray
    h_q: np.ndarray
    u_v: np.ndarray
    u_p: np.ndarray
    u_q: np.ndarray


@dataclass(frozen=True, eq=False)
class LinearModelParams:
    """Per-segment coefficients and per-bus delta transforms of the model."""

    segments: Mapping[int, SegmentParams]
    k: Mapping[int, DeltaTransform]
    t: object = None
    kind: str = "online"


def update_parameters(net: Network, op: OperatingPoint, t=None) -> LinearModelParams:
    """Model coefficients at the measured operating point ``op``."""
    arr = network_arrays(net)
    vi_all = head_voltages(net, op.v_complex, op.v0)
    v_sq = op.v_sq
    vi_sq = np.abs(vi_all) ** 2
    P, Q = op.p_flow, op.q_flow
    # sum_k P_jk over the children of j, on j's phases
    child_p = arr.inc.a @ P + P
    child_q = arr.inc.a @ Q + Q
    p_hat, q_hat = op.s_hat.real, op.s_hat.imag

    segs = {}
    for j, seg in net.segments.items():
        sl = net.slice(j)
        mi = modified_impedances(seg.z, vi_all[sl])
        f_p, f_q, g_p, g_q, h_p, h_q = sensitivity_blocks(mi, P[sl], Q[sl])
        m_p = -2 * mi.z_tilde.real + f_p
        m_q = -2 * mi.z_tilde.imag + f_q
        pj, qj = P[sl], Q[sl]
        u_v = v_sq[sl] - vi_sq[sl] - m_p @ pj - m_q @ qj
        u_p = pj - child_p[sl] - p_hat[sl] - g_p @ pj - g_q @ qj
        u_q = qj - child_q[sl] - q_hat[sl] - h_p @ pj - h_q @ qj
        segs[j] = SegmentParams(m_p, m_q, g_p, g_q, h_p, h_q, u_v, u_p, u_q)

    k = {}
    for bus, conns in net.delta_connections.items():
        k[bus] = delta_transform(op.v_complex[net.slice(bus)], conns, net.phases(bus))
    return LinearModelParams(segs, k, t=t, kind="online")


def lindistflow_params(net: Network) -> LinearModelParams:
    """Offline lossless LinDistFlow coefficients (balanced voltages, no losses)."""
    segs = {}
    for j, seg in net.segments.items():
        mi = modified_impedances(seg.z, balanced_voltage(seg.phases))
        n = seg.n
        zero = np.zeros((n, n))
        zv = np.zeros(n)
        segs[j] = SegmentParams(
            -2 * mi.z_tilde.real, -2 * mi.z_tilde.imag, zero, zero, zero, zero, zv, zv, zv
        )
    k = {bus: balanced_delta_transform(c, net.phases(bus)) for bus, c in net.delta_connections.items()}
    return LinearModelParams(segs, k, t=None, kind="lossless")


@dataclass(frozen=True, eq=False)
class LinearSolution:
    v_sq: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray

    @property
    def v_mag(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.v_sq, 0.0))


@dataclass(frozen=True, eq=False)
class CompactModel:
    """Block-diagonal assembly of :class:`LinearModelParams` over the network."""

    big_m_p: np.ndarray
    big_m_q: np.ndarray
    big_g_p: np.ndarray
    big_g_q: np.ndarray
    big_h_p: np.ndarray
    big_h_q: np.ndarray
    big_k: np.ndarray
    u_v: np.ndarray
    u_p: np.ndarray
    u_q: np.ndarray
    incidence: IncidenceBlocks
    v0_sq: np.ndarray
    kind: str = "online"

    @property
    def m(self) -> int:
        return len(self.u_v)

    @cached_property
    def flow_matrix(self) -> np.ndarray:
        a = self.incidence.a
        return np.block([[a + self.big_g_p, self.big_g_q], [self.big_h_p, a + self.big_h_q]])

    @cached_property
    def _flow_lu(self):
        return _factor(self.flow_matrix)

    @cached_property
    def _at_lu(self):
        return _factor(self.incidence.a.T)

    def flows(self, p, q):
        """Solve the flow balance for ``(P, Q)`` given nodal consumption."""
        rhs = np.concatenate([-p - self.u_p, -q - self.u_q])
        x = sla.lu_solve(self._flow_lu, rhs) if self.m else rhs
        return x[: self.m], x[self.m :]

    def voltages(self, P, Q, v0_sq=None):
        v0_sq = self.v0_sq if v0_sq is None else np.asarray(v0_sq, dtype=float)
        rhs = -self.incidence.a0.T @ v0_sq - self.big_m_p @ P - self.big_m_q @ Q - self.u_v
        return sla.lu_solve(self._at_lu, rhs) if self.m else rhs


def _factor(mat: np.ndarray):
    if mat.size == 0:
        return None
    with warnings.catch_warnings():
        # an exactly singular factor is reported below as SingularSystem
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(mat, check_finite=True)
    anorm = np.linalg.norm(mat, 1)
    rcond, info = sla.lapack.dgecon(lu, anorm, norm="1")
    cond = np.inf if rcond == 0 else 1.0 / rcond
    if not np.isfinite(cond) or cond > MAX_CONDITION:
        raise SingularSystem(f"linear system is singular (condition estimate {cond:.3e})", cond)
    return lu, piv


def assemble_compact(net: Network, params: LinearModelParams, inc: IncidenceBlocks | None = None) -> CompactModel:
    """Stack per-segment blocks along the diagonal in circuit order."""
    inc = inc or network_arrays(net).inc
    m = net.m
    mats = {name: np.zeros((m, m)) for name in ("m_p", "m_q", "g_p", "g_q", "h_p", "h_q")}
    vecs = {name: np.zeros(m) for name in ("u_v", "u_p", "u_q")}
    for j in net.segments:
        try:
            sp = params.segments[j]
        except KeyError:
            raise MissingSegmentParams(f"no parameters for segment into bus {j}") from None
        sl = net.slice(j)
        for name, mat in mats.items():
            mat[sl, sl] = getattr(sp, name)
        for name, vec in vecs.items():
            vec[sl] = getattr(sp, name)
    big_k = np.zeros((m, net.n_delta), dtype=complex)
    for bus in net.delta_connections:
        try:
            big_k[net.slice(bus), net.delta_slice(bus)] = params.k[bus].t
        except KeyError:
            raise MissingSegmentParams(f"no delta transform for bus {bus}") from None
    return CompactModel(
        mats["m_p"], mats["m_q"], mats["g_p"], mats["g_q"], mats["h_p"], mats["h_q"],
        big_k, vecs["u_v"], vecs["u_p"], vecs["u_q"], inc,
        np.abs(net.v0) ** 2, kind=params.kind,
    )


def solve_linear(cm: CompactModel, loads: Loads, v0_sq=None, q_gen=None, p_gen=None) -> LinearSolution:
    """Power flow through the linear model for the given loads.

    ``p_gen`` / ``q_gen`` (length m) are generator injections subtracted
    from the nodal consumption.
    """
    if loads.wye.shape != (cm.m,) or loads.delta.shape != (cm.big_k.shape[1],):
        raise DimensionMismatch("loads do not match the compact model")
    s = loads.wye + cm.big_k @ loads.delta
    p, q = s.real.copy(), s.imag.copy()
    if p_gen is not None:
        p -= p_gen
    if q_gen is not None:
        q -= q_gen
    P, Q = cm.flows(p, q)
    v = cm.voltages(P, Q, v0_sq)
    return LinearSolution(v, P, Q)


def voltage_sensitivity(cm: CompactModel, selector: Sequence[int]) -> np.ndarray:
    """Sensitivity of all squared magnitudes to reactive injections.

    Returns an ``(len(selector), m)`` array whose row k is ``dv/dq_g[k]`` for
    a generator at phase-node position ``selector[k]``.
    """
    sel = np.asarray(selector, dtype=int).reshape(-1)
    m = cm.m
    if sel.size == 0:
        return np.zeros((0, m))
    e = np.zeros((2 * m, sel.size))
    # q = ... - q_g, and the flow balance has -q on its right-hand side
    e[m + sel, np.arange(sel.size)] = 1.0
    x = sla.lu_solve(cm._flow_lu, e)
    dP, dQ = x[:m], x[m:]
    dv = sla.lu_solve(cm._at_lu, -cm.big_m_p @ dP - cm.big_m_q @ dQ)
    return dv.T


def node_positions(net: Network, labels: Sequence[tuple[int, str]]) -> list[int]:
    """m-vector positions of ``(bus, phase)`` labels."""
    return [net.slice(b).start + int(net.phase_index(b, [ph])[0]) for b, ph in labels]


def build_model(net: Network, op: OperatingPoint | None = None) -> CompactModel:
    """Online model at ``op``, or the lossless baseline when ``op`` is None."""
    params = lindistflow_params(net) if op is None else update_parameters(net, op)
    return assemble_compact(net, params)
