"""Volt-VAr control by projected gradient on the linear model.

The controller minimises ``0.5 * ||v - 1||^2`` over squared voltage
magnitudes by moving PV reactive setpoints.  In online mode it takes one
gradient step per control period using measured voltages and the online
model's sensitivities.  The offline mode re-solves a lossless LinDistFlow OPF
to convergence every ``opf_period`` steps and holds the result in between.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import lsq_linear

from .errors import DimensionMismatch, NonConvergence
from .linearizer import build_model, node_positions, solve_linear, voltage_sensitivity
from .loads import Loads
from .network import Network
from .powerflow import SweepOptions, solve_exact
from .simulation import FailureModel, MeasurementChannel, MeasurementModel, TimeSeries

OFFLINE_TOL = 1e-8
OFFLINE_MAX_ITER = 10_000


@dataclass(frozen=True, eq=False)
class PvFleet:
    """PV inverters at phase-nodes ``locations`` (list of ``(bus, phase)``).

    ``p_g`` is either one value per location or an array ``(horizon, n)``.
    """

    locations: tuple[tuple[int, str], ...]
    q_min: np.ndarray
    q_max: np.ndarray
    p_g: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        n = len(self.locations)
        object.__setattr__(self, "locations", tuple((int(b), str(p)) for b, p in self.locations))
        object.__setattr__(self, "q_min", np.broadcast_to(np.asarray(self.q_min, float), (n,)).copy())
        object.__setattr__(self, "q_max", np.broadcast_to(np.asarray(self.q_max, float), (n,)).copy())
        if np.any(self.q_min > self.q_max):
            raise ValueError("q_min exceeds q_max")
        p = np.asarray(self.p_g, dtype=float)
        if p.size == 0:
            p = np.zeros(n)
        if p.shape[-1] != n:
            raise DimensionMismatch("p_g must have one column per PV location")
        object.__setattr__(self, "p_g", p)

    @property
    def n(self) -> int:
        return len(self.locations)

    def p_at(self, t: int) -> np.ndarray:
        return self.p_g if self.p_g.ndim == 1 else self.p_g[min(t, len(self.p_g) - 1)]


@dataclass(frozen=True)
class VvcConfig:
    alpha: float = 0.5
    iters_per_step: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.iters_per_step < 1:
            raise ValueError("iters_per_step must be at least 1")


@dataclass
class VvcReport:
    objective: np.ndarray
    objective_uncontrolled: np.ndarray
    q_g: np.ndarray  # (horizon, n_pv), setpoint applied at each step
    mode: str = "online"

    def mean_objective(self) -> float:
        return float(np.mean(self.objective))

    def rows(self, fleet: PvFleet) -> list[dict]:
        out = []
        for t in range(len(self.objective)):
            row = {"step": t, "objective": self.objective[t], "objective_uncontrolled": self.objective_uncontrolled[t]}
            for (b, ph), q in zip(fleet.locations, self.q_g[t]):
                row[f"q_{b}{ph}"] = q
            out.append(row)
        return out


def objective(v_sq) -> float:
    """Half the squared distance of squared magnitudes from 1 p.u."""
    v = np.asarray(v_sq, dtype=float)
    return 0.5 * float(np.dot(v - 1.0, v - 1.0))


def vvc_step(q_g, v_meas_sq, sens, fleet: PvFleet, cfg: VvcConfig) -> np.ndarray:
    """One projected-gradient update of the reactive setpoints.

    ``sens`` is laid out as returned by
    :func:`~gridlin.linearizer.voltage_sensitivity`: row k holds ``dv/dq_g[k]``,
    so ``sens @ (v - 1)`` is the gradient of :func:`objective`.
    """
    q_g = np.asarray(q_g, dtype=float)
    v = np.asarray(v_meas_sq, dtype=float)
    sens = np.asarray(sens, dtype=float)
    if sens.shape != (len(q_g), len(v)) or len(q_g) != fleet.n:
        raise DimensionMismatch("sensitivity must be (n_pv, m) and match the fleet")
    step = q_g - cfg.alpha * (sens @ (v - 1.0))
    return np.clip(step, fleet.q_min, fleet.q_max)


def _plant_loads(net: Network, loads: Loads, pos, p_g, q_g) -> Loads:
    wye = loads.wye.copy()
    np.subtract.at(wye, pos, np.asarray(p_g) + 1j * np.asarray(q_g))
    return Loads(wye, loads.delta)


def _uncontrolled(net, ts, fleet, pos, opts):
    zeros = np.zeros(fleet.n)
    out = np.empty(ts.horizon)
    for t in range(ts.horizon):
        op = solve_exact(net, _plant_loads(net, ts.loads[t], pos, fleet.p_at(t), zeros), opts)
        out[t] = objective(op.v_sq)
    return out


def run_vvc_online(
    net: Network,
    ts: TimeSeries,
    fleet: PvFleet,
    cfg: VvcConfig | None = None,
    mm: MeasurementModel | None = None,
    fm: FailureModel | None = None,
    opts: SweepOptions | None = None,
) -> VvcReport:
    """Online controller: measure, refresh the model, one gradient step, repeat."""
    cfg = cfg or VvcConfig()
    pos = node_positions(net, fleet.locations)
    channel = MeasurementChannel(net, mm, fm)
    q = np.clip(np.zeros(fleet.n), fleet.q_min, fleet.q_max)
    obj = np.empty(ts.horizon)
    qs = np.empty((ts.horizon, fleet.n))
    for t in range(ts.horizon):
        qs[t] = q
        op = solve_exact(net, _plant_loads(net, ts.loads[t], pos, fleet.p_at(t), q), opts)
        obj[t] = objective(op.v_sq)
        measured = channel.measure(t, op)
        if fleet.n == 0:
            continue
        model = build_model(net, measured)
        sens = voltage_sensitivity(model, pos)
        for _ in range(cfg.iters_per_step):
            q = vvc_step(q, measured.v_sq, sens, fleet, cfg)
    return VvcReport(obj, _uncontrolled(net, ts, fleet, pos, opts), qs, mode="online")


def solve_offline_opf(model, sens, pos, loads: Loads, fleet: PvFleet, p_g, q_start, alpha: float) -> np.ndarray:
    """Converged projected-gradient point of the OPF on the linear model.

    ``v(q) = base + sens.T @ q`` is affine, so the fixed point of
    :func:`vvc_step` is the box-constrained least-squares minimiser.  The
    sensitivity Gram matrix is badly conditioned on realistic feeders, so the
    minimiser is found directly and then polished with plain ``vvc_step``
    iterations until ``||dq||_inf`` drops below ``OFFLINE_TOL``.
    """
    p_gen = np.zeros(model.m)
    np.add.at(p_gen, pos, p_g)
    base = solve_linear(model, loads, p_gen=p_gen).v_sq
    lo, hi = fleet.q_min, fleet.q_max
    free = hi > lo
    q = np.clip(np.asarray(q_start, dtype=float), lo, hi)
    if np.any(free):
        # pinned inverters (q_min == q_max) contribute a constant offset
        rhs = 1.0 - base - sens[~free].T @ q[~free]
        sol = lsq_linear(sens[free].T, rhs, bounds=(lo[free], hi[free]), tol=1e-12, method="bvls")
        q[free] = sol.x
    cfg = VvcConfig(alpha)
    for _ in range(OFFLINE_MAX_ITER):
        q_new = vvc_step(q, base + sens.T @ q, sens, fleet, cfg)
        if np.max(np.abs(q_new - q), initial=0.0) < OFFLINE_TOL:
            return q_new
        q = q_new
    raise NonConvergence(f"offline OPF did not settle in {OFFLINE_MAX_ITER} iterations")


def run_vvc_offline(
    net: Network,
    ts: TimeSeries,
    fleet: PvFleet,
    cfg: VvcConfig | None = None,
    opf_period: int = 12,
    opts: SweepOptions | None = None,
) -> VvcReport:
    """Offline OPF on the lossless LinDistFlow model, re-solved every ``opf_period`` steps."""
    if opf_period < 1:
        raise ValueError("opf_period must be at least 1")
    cfg = cfg or VvcConfig()
    pos = node_positions(net, fleet.locations)
    model = build_model(net)
    sens = voltage_sensitivity(model, pos)
    lip = lipschitz(sens)
    # the converged point does not depend on the step; cap it so the inner loop is stable
    alpha = min(cfg.alpha, 1.0 / lip) if lip > 0 else cfg.alpha
    q = np.clip(np.zeros(fleet.n), fleet.q_min, fleet.q_max)
    obj = np.empty(ts.horizon)
    qs = np.empty((ts.horizon, fleet.n))
    for t in range(ts.horizon):
        if fleet.n and t % opf_period == 0:
            q = solve_offline_opf(model, sens, pos, ts.loads[t], fleet, fleet.p_at(t), q, alpha)
        qs[t] = q
        op = solve_exact(net, _plant_loads(net, ts.loads[t], pos, fleet.p_at(t), q), opts)
        obj[t] = objective(op.v_sq)
    return VvcReport(obj, _uncontrolled(net, ts, fleet, pos, opts), qs, mode="offline")


def lipschitz(sens: np.ndarray) -> float:
    """Largest eigenvalue of ``sens @ sens.T`` (gradient Lipschitz constant)."""
    if sens.size == 0:
        return 0.0
    return float(np.linalg.eigvalsh(sens @ sens.T).max())


def fleet_from_spec(spec: dict, horizon: int | None = None, pv_records: Sequence[dict] = ()) -> PvFleet:
    """Fleet from a scenario ``fleet`` section plus optional ``pv`` profile rows."""
    locs = [(int(b), str(p)) for b, p in spec.get("locations", [])]
    p_g = np.zeros(len(locs))
    if pv_records:
        idx = {loc: k for k, loc in enumerate(locs)}
        steps = 1 + max(int(r["step"]) for r in pv_records)
        if horizon is not None:
            steps = max(steps, horizon)
        p_g = np.zeros((steps, len(locs)))
        for r in pv_records:
            key = (int(r["bus"]), str(r["phase_or_pair"]))
            if key not in idx:
                raise DimensionMismatch(f"pv row at {key} is not a fleet location")
            p_g[int(r["step"]), idx[key]] += float(r["p"])
    return PvFleet(tuple(locs), spec.get("q_min", -1.0), spec.get("q_max", 1.0), p_g)
