"""Exact multi-phase branch-flow solution by backward/forward sweep.

This is the benchmark the linear models are scored against.  The sweep
iterates the branch-flow equations

    V_j  = V_i - z_ij I_ij
    I_ij = conj(S_ij / V_i)
    S_ij = sum_k S_jk + s_j + conj(I_ij) * (z_ij I_ij)

starting from the slack voltage propagated down the tree.  Delta-load
transforms are re-evaluated from the current voltages on every sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence
from .loads import Loads, net_injection
from .network import Network, network_arrays


@dataclass(frozen=True)
class SweepOptions:
    tol: float = 1e-9
    max_iter: int = 100

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


@dataclass(frozen=True, eq=False)
class OperatingPoint:
    """A voltage/load/flow snapshot consistent with the branch-flow model.

    All vectors except ``v0`` are indexed by the network's m phase-nodes
    (equivalently, phase-circuits).
    """

    v_complex: np.ndarray
    v0: np.ndarray
    loads: Loads
    s_hat: np.ndarray
    p_flow: np.ndarray
    q_flow: np.ndarray
    currents: np.ndarray
    iterations: int = 0
    history: tuple[float, ...] = ()

    @property
    def v_sq(self) -> np.ndarray:
        return np.abs(self.v_complex) ** 2

    @property
    def v_mag(self) -> np.ndarray:
        return np.abs(self.v_complex)

    @property
    def s_flow(self) -> np.ndarray:
        return self.p_flow + 1j * self.q_flow


def head_voltages(net: Network, v_nodes: np.ndarray, v0=None) -> np.ndarray:
    """``V_i^{Phi_ij}`` for every phase-circuit, stacked in circuit order."""
    arr = network_arrays(net)
    v0 = net.v0 if v0 is None else np.asarray(v0, dtype=complex)
    return np.concatenate([v0, v_nodes])[arr.head_index]


def branch_flows_from_voltages(net: Network, v_nodes, v0=None):
    """Sending-end flows and currents implied by a voltage snapshot.

    ``S_ij = conj(z_ij^{-1} (V_i - V_j)) * V_i`` per segment.

    Returns
    -------
    p_flow, q_flow : ndarray
        Real and reactive sending-end flows per phase-circuit.
    currents : ndarray
        Complex branch currents per phase-circuit.
    """
    v_nodes = np.asarray(v_nodes, dtype=complex)
    arr = network_arrays(net)
    vi = head_voltages(net, v_nodes, v0)
    current = arr.y @ (vi - v_nodes)
    s = np.conj(current) * vi
    return s.real, s.imag, current


def _forward(arr, net: Network, current: np.ndarray, v0: np.ndarray) -> np.ndarray:
    # A^T V = Z I - A0 v0 walks V_j = V_i - z I down the tree in one product
    rhs = arr.z @ current - arr.inc.a0.T @ v0
    return arr.a_inv.T @ rhs


def solve_exact(net: Network, loads: Loads, opts: SweepOptions | None = None, v0=None) -> OperatingPoint:
    """Solve the exact unbalanced branch-flow equations.

    Each backward pass accumulates the flow of every segment from its
    subtree (load plus downstream flows plus series losses).  Summing branch
    currents ``conj(S / V)`` at the receiving end is the same recursion with
    the losses folded in, and is what is carried out here; the forward pass
    then drops voltages along the tree.

    Raises
    ------
    NonConvergence
        If the voltage update is still above ``opts.tol`` after
        ``opts.max_iter`` sweeps.
    """
    opts = opts or SweepOptions()
    loads.check(net)
    arr = network_arrays(net)
    v0 = net.v0 if v0 is None else np.asarray(v0, dtype=complex)
    m = net.m
    if m == 0:
        z = np.zeros(0, dtype=complex)
        return OperatingPoint(z, v0, loads, z, z.real, z.real, z)

    current = np.zeros(m, dtype=complex)
    v = _forward(arr, net, current, v0)
    history = []
    for it in range(1, opts.max_iter + 1):
        s = net_injection(net, loads, v)
        # backward: receiving-end current of l_j = own load current + children
        load_current = np.conj(s / v)
        current = -arr.a_inv @ load_current
        v_new = _forward(arr, net, current, v0)
        dv = float(np.max(np.abs(v_new - v)))
        history.append(dv)
        v = v_new
        if dv < opts.tol:
            break
    else:
        raise NonConvergence(
            f"sweep did not converge in {opts.max_iter} iterations (last update {dv:.3e})",
            iterations=opts.max_iter,
            residual=dv,
        )
    return operating_point(net, v, loads, v0=v0, iterations=it, history=tuple(history))


def operating_point(net: Network, v_nodes, loads: Loads, v0=None, iterations=0, history=()) -> OperatingPoint:
    """Package a voltage snapshot with flows derived from it."""
    v_nodes = np.asarray(v_nodes, dtype=complex)
    v0 = net.v0 if v0 is None else np.asarray(v0, dtype=complex)
    p, q, current = branch_flows_from_voltages(net, v_nodes, v0)
    s_hat = net_injection(net, loads, v_nodes)
    return OperatingPoint(v_nodes, v0, loads, s_hat, p, q, current, iterations, tuple(history))


def flat_point(net: Network, loads: Loads | None = None) -> OperatingPoint:
    """Slack voltage copied to every node, zero flows."""
    loads = loads or Loads.zeros(net)
    arr = network_arrays(net)
    v = _forward(arr, net, np.zeros(net.m, dtype=complex), net.v0)
    return operating_point(net, v, loads)


def residual(net: Network, op: OperatingPoint) -> float:
    """Largest mismatch (inf-norm, per-unit) of the branch-flow equations at ``op``."""
    m = net.m
    if m == 0:
        return 0.0
    arr = network_arrays(net)
    v = op.v_complex
    vi = head_voltages(net, v, op.v0)
    s_flow = op.p_flow + 1j * op.q_flow
    current = np.conj(s_flow / vi)
    r_volt = v - (vi - arr.z @ current)
    # children's sending-end flows land on the parent's phase-nodes: -A S
    downstream = arr.inc.a @ s_flow + s_flow
    loss = np.conj(current) * (arr.z @ current)
    s = net_injection(net, op.loads, v)
    r_flow = s_flow - downstream - s - loss
    return float(max(np.max(np.abs(r_volt)), np.max(np.abs(r_flow))))


def total_loss(net: Network, op: OperatingPoint) -> complex:
    arr = network_arrays(net)
    return complex(np.sum(np.conj(op.currents) * (arr.z @ op.currents)))


def slack_power(net: Network, op: OperatingPoint) -> complex:
    """Complex power leaving the head bus."""
    arr = network_arrays(net)
    s_flow = op.p_flow + 1j * op.q_flow
    return complex(np.sum(arr.inc.a0 @ s_flow))
