"""Closed-loop time-series harness for the online model.

At every step the exact solver plays the role of the physical network.  Its
voltages pass through a measurement channel (Gaussian magnitude noise,
communication "freeze"), the online model is refreshed from what arrives,
and the refreshed model predicts the next step.  The lossless LinDistFlow
baseline predicts the same step without any measurements.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import NonConvergence, ZeroTruthEntry
from .linearizer import CompactModel, LinearSolution, build_model, solve_linear
from .loads import Loads
from .network import Network
from .powerflow import OperatingPoint, SweepOptions, operating_point, solve_exact

FLOW_FLOOR = 1e-9
MODELS = ("online", "lossless")


def mape(estimate, truth) -> float:
    """Mean absolute percentage error of ``estimate`` against ``truth``."""
    est = np.asarray(estimate, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("estimate and truth differ in length")
    if tru.size == 0:
        return 0.0
    if np.any(tru == 0):
        raise ZeroTruthEntry("truth vector has a zero entry")
    return float(100.0 / tru.size * np.sum(np.abs(est - tru) / np.abs(tru)))


def _windows_cover(windows: Sequence[tuple[int, int]], t: int) -> bool:
    return any(lo <= t <= hi for lo, hi in windows)


def _check_windows(windows):
    out = []
    for lo, hi in windows:
        if hi < lo:
            raise ValueError(f"window ({lo}, {hi}) ends before it starts")
        out.append((int(lo), int(hi)))
    out.sort()
    return tuple(out)


@dataclass(frozen=True)
class TimeSeries:
    loads: tuple[Loads, ...]
    dt: float = 60.0

    @property
    def horizon(self) -> int:
        return len(self.loads)

    @classmethod
    def from_records(cls, net: Network, records: Iterable[dict], dt: float = 60.0) -> "TimeSeries":
        """Group ``{step, bus, kind, phase_or_pair, p, q}`` rows by step.

        Steps must form the range ``0..H-1``; ``pv`` rows are skipped (they
        belong to a :class:`~gridlin.vvc.PvFleet`).
        """
        by_step: dict[int, list] = {}
        for rec in records:
            if rec["kind"] == "pv":
                continue
            by_step.setdefault(int(rec["step"]), []).append(rec)
        steps = sorted(by_step)
        if steps != list(range(len(steps))):
            raise ValueError("profile steps must be contiguous from 0")
        return cls(tuple(Loads.from_records(net, by_step[s]) for s in steps), float(dt))

    def to_records(self, net: Network) -> list[dict]:
        rows = []
        for t, ld in enumerate(self.loads):
            for rec in ld.to_records(net):
                if rec["p"] == 0 and rec["q"] == 0:
                    continue
                rows.append({"step": t, **rec})
        return rows


@dataclass(frozen=True)
class MeasurementModel:
    """Additive Gaussian noise on measured voltage magnitudes (per-unit).

    ``noisy_buses=None`` means every bus; empty ``windows`` means always.
    """

    noise_sigma: float = 0.0
    noisy_buses: tuple[int, ...] | None = None
    windows: tuple[tuple[int, int], ...] = ()
    seed: int = 0

    def __post_init__(self):
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be non-negative")
        object.__setattr__(self, "windows", _check_windows(self.windows))
        if self.noisy_buses is not None:
            object.__setattr__(self, "noisy_buses", tuple(sorted(int(b) for b in self.noisy_buses)))

    def active(self, t: int) -> bool:
        return self.noise_sigma > 0 and (not self.windows or _windows_cover(self.windows, t))


@dataclass(frozen=True)
class FailureModel:
    """Buses whose measurements stop arriving during ``windows``.

    ``failed_buses=None`` means every bus; empty ``windows`` means always.
    """

    failed_buses: tuple[int, ...] | None = ()
    windows: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "windows", _check_windows(self.windows))
        if self.failed_buses is not None:
            object.__setattr__(self, "failed_buses", tuple(sorted(int(b) for b in self.failed_buses)))

    def active(self, t: int) -> bool:
        if self.failed_buses is not None and not self.failed_buses:
            return False
        return not self.windows or _windows_cover(self.windows, t)


def _bus_mask(net: Network, buses) -> np.ndarray:
    if buses is None:
        return np.ones(net.m, dtype=bool)
    mask = np.zeros(net.m, dtype=bool)
    for b in buses:
        if b != 0:
            mask[net.slice(b)] = True
    return mask


def apply_measurement(
    net: Network,
    true_v: np.ndarray,
    mm: MeasurementModel,
    fm: FailureModel,
    last_seen: dict,
    t: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Voltage snapshot as delivered by the measurement channel at step ``t``.

    Noise perturbs magnitudes only.  Failed buses report their last delivered
    value; ``last_seen`` (keyed by bus id) is updated in place for the rest.
    """
    true_v = np.asarray(true_v, dtype=complex)
    meas = true_v.copy()
    if mm.active(t):
        rng = rng if rng is not None else np.random.default_rng(mm.seed)
        noise = rng.normal(0.0, mm.noise_sigma, size=net.m)
        mask = _bus_mask(net, mm.noisy_buses)
        mag = np.abs(true_v) + np.where(mask, noise, 0.0)
        meas = np.where(mask, mag * np.exp(1j * np.angle(true_v)), true_v)
    failed = set()
    if fm.active(t):
        failed = set(range(1, net.n_buses)) if fm.failed_buses is None else set(fm.failed_buses)
    for b in range(1, net.n_buses):
        sl = net.slice(b)
        if b in failed and b in last_seen:
            meas[sl] = last_seen[b]
        else:
            last_seen[b] = meas[sl].copy()
    return meas


class MeasurementChannel:
    """Stateful wrapper turning exact operating points into measured ones.

    Load measurements are noise-free but freeze together with the voltages
    of a failed bus.
    """

    def __init__(self, net: Network, mm: MeasurementModel | None = None, fm: FailureModel | None = None):
        self.net = net
        self.mm = mm or MeasurementModel()
        self.fm = fm or FailureModel()
        self.rng = np.random.default_rng(self.mm.seed)
        self.last_v: dict[int, np.ndarray] = {}
        self.last_loads: Loads | None = None

    def measure(self, t: int, op: OperatingPoint) -> OperatingPoint:
        net = self.net
        v = apply_measurement(net, op.v_complex, self.mm, self.fm, self.last_v, t, self.rng)
        loads = op.loads
        if self.fm.active(t) and self.last_loads is not None:
            failed = range(1, net.n_buses) if self.fm.failed_buses is None else self.fm.failed_buses
            wye, delta = loads.wye.copy(), loads.delta.copy()
            for b in failed:
                if b == 0:
                    continue
                wye[net.slice(b)] = self.last_loads.wye[net.slice(b)]
                if b in net.delta_connections:
                    ds = net.delta_slice(b)
                    delta[ds] = self.last_loads.delta[ds]
            loads = Loads(wye, delta)
        self.last_loads = loads
        # flows are re-derived from the delivered voltages
        return operating_point(net, v, loads, v0=op.v0)


@dataclass
class StepResult:
    step: int
    benchmark: OperatingPoint
    solutions: dict[str, LinearSolution] = field(default_factory=dict)
    mape_v: dict[str, float] = field(default_factory=dict)
    mape_p: dict[str, float] = field(default_factory=dict)
    mape_q: dict[str, float] = field(default_factory=dict)


@dataclass
class SimulationReport:
    steps: list[StepResult]
    update_every: int = 1

    @property
    def models(self) -> tuple[str, ...]:
        return MODELS

    def series(self, metric: str, model: str) -> np.ndarray:
        return np.array([getattr(s, metric)[model] for s in self.steps])

    def summary(self) -> dict[str, dict[str, float]]:
        out = {}
        for model in self.models:
            out[model] = {
                metric: float(np.mean(self.series(metric, model))) if self.steps else 0.0
                for metric in ("mape_v", "mape_p", "mape_q")
            }
        return out

    def rows(self) -> list[dict]:
        rows = []
        for s in self.steps:
            for model in self.models:
                rows.append(
                    {
                        "step": s.step,
                        "model": model,
                        "mape_v": s.mape_v[model],
                        "mape_p": s.mape_p[model],
                        "mape_q": s.mape_q[model],
                    }
                )
        return rows


def score(bench: OperatingPoint, sol: LinearSolution) -> tuple[float, float, float]:
    """Voltage-magnitude, P and Q MAPE of a model solution against the benchmark."""
    mv = mape(sol.v_mag, bench.v_mag)
    pm = np.abs(bench.p_flow) > FLOW_FLOOR
    qm = np.abs(bench.q_flow) > FLOW_FLOOR
    return mv, mape(sol.p_flow[pm], bench.p_flow[pm]), mape(sol.q_flow[qm], bench.q_flow[qm])


def run_timeseries(
    net: Network,
    ts: TimeSeries,
    mm: MeasurementModel | None = None,
    fm: FailureModel | None = None,
    update_every: int = 1,
    opts: SweepOptions | None = None,
    keep_solutions: bool = False,
) -> SimulationReport:
    """Drive the measure / update / predict loop over ``ts``.

    The online model refreshed at step ``t`` (when ``t % update_every == 0``)
    predicts every following step until the next refresh.  Step ``t`` of the
    report scores the predictions for ``t`` against the exact solution at
    ``t``; step 0 has no prediction and is not reported.
    """
    if update_every < 1:
        raise ValueError("update_every must be at least 1")
    channel = MeasurementChannel(net, mm, fm)
    lossless = build_model(net)
    online: CompactModel | None = None
    results = []
    for t in range(ts.horizon):
        try:
            bench = solve_exact(net, ts.loads[t], opts)
        except NonConvergence as exc:
            exc.step = t
            raise NonConvergence(f"step {t}: {exc}", exc.iterations, exc.residual, t) from exc
        if online is not None:
            sols = {"online": solve_linear(online, ts.loads[t]), "lossless": solve_linear(lossless, ts.loads[t])}
            res = StepResult(t, bench if keep_solutions else None)
            for name, sol in sols.items():
                res.mape_v[name], res.mape_p[name], res.mape_q[name] = score(bench, sol)
            if keep_solutions:
                res.solutions = sols
            results.append(res)
        measured = channel.measure(t, bench)
        if t % update_every == 0:
            online = build_model(net, measured)
    return SimulationReport(results, update_every)
