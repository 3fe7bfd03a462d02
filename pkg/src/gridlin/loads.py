"""Wye and delta load models.

A delta load is declared by phase-to-phase connections drawn from
``("ab", "bc", "ca")``.  Its per-phase contribution is ``T @ s_pp`` where the
transformation ``T`` depends on the bus voltages; each column of ``T`` sums to
one, so complex power is conserved between the two representations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import DegenerateVoltagePair, DimensionMismatch, MissingPhase, UnknownBus
from .network import PHASES, Network, balanced_voltage

CONNECTIONS = ("ab", "bc", "ca")
DEGENERACY_TOL = 1e-9


def sort_connections(conns: Iterable[str]) -> tuple[str, ...]:
    out = set()
    for c in conns:
        c = str(c).lower()
        if c in ("ba", "cb", "ac"):
            c = c[::-1]
        if c not in CONNECTIONS:
            raise MissingPhase(f"unknown delta connection {c!r}")
        out.add(c)
    if not out:
        raise MissingPhase("delta load needs at least one connection")
    return tuple(c for c in CONNECTIONS if c in out)


@dataclass(frozen=True, eq=False)
class WyeLoad:
    bus: int
    s: np.ndarray


@dataclass(frozen=True, eq=False)
class DeltaLoad:
    bus: int
    connections: tuple[str, ...]
    s: np.ndarray

    def __post_init__(self):
        if len(self.s) != len(self.connections):
            raise DimensionMismatch("one delta power per connection")


@dataclass(frozen=True, eq=False)
class DeltaTransform:
    t: np.ndarray
    phases: tuple[str, ...]
    connections: tuple[str, ...]

    def __matmul__(self, s):
        return self.t @ s


def delta_transform(
    v: Sequence[complex],
    connections: Iterable[str],
    phases: Sequence[str] = PHASES,
) -> DeltaTransform:
    """Voltage-dependent matrix mapping phase-to-phase powers to phase powers.

    Column ``phi phi'`` holds ``V^phi / (V^phi - V^phi')`` in row ``phi`` and
    ``-V^phi' / (V^phi - V^phi')`` in row ``phi'``.  Rows of phases present at
    the bus but untouched by any connection are zero.
    """
    v = np.asarray(v, dtype=complex)
    phases = tuple(phases)
    conns = sort_connections(connections)
    if len(v) != len(phases):
        raise DimensionMismatch("voltage vector must match the bus phase set")
    t = np.zeros((len(phases), len(conns)), dtype=complex)
    for col, (f, g) in enumerate(conns):
        if f not in phases or g not in phases:
            raise MissingPhase(f"connection {f}{g} needs phases absent at the bus")
        r, s = phases.index(f), phases.index(g)
        diff = v[r] - v[s]
        if abs(diff) < DEGENERACY_TOL:
            raise DegenerateVoltagePair(f"V^{f} and V^{g} coincide")
        t[r, col] = v[r] / diff
        t[s, col] = -v[s] / diff
    return DeltaTransform(t, phases, conns)


def balanced_delta_transform(
    connections: Iterable[str], phases: Sequence[str] = PHASES
) -> DeltaTransform:
    """:func:`delta_transform` evaluated at exactly balanced unit voltages."""
    return delta_transform(balanced_voltage(phases), connections, phases)


def bus_injection(wye=None, delta=None, t: DeltaTransform | np.ndarray | None = None) -> np.ndarray:
    """Net per-phase consumption ``s_Y + T s_pp`` of a single bus.

    ``wye`` and ``delta`` may be load objects, plain vectors or ``None``.
    """
    sy = None if wye is None else np.asarray(getattr(wye, "s", wye), dtype=complex)
    sd = None if delta is None else np.asarray(getattr(delta, "s", delta), dtype=complex)
    tm = None if t is None else np.asarray(getattr(t, "t", t), dtype=complex)
    if sd is None or not sd.size:
        if sy is None:
            if tm is None:
                raise DimensionMismatch("cannot infer bus size without any load")
            return np.zeros(tm.shape[0], dtype=complex)
        return sy.copy()
    if tm is None:
        raise DimensionMismatch("delta load given without a transformation matrix")
    if tm.shape[1] != len(sd):
        raise DimensionMismatch("transformation columns must match delta connections")
    if sy is None:
        sy = np.zeros(tm.shape[0], dtype=complex)
    if len(sy) != tm.shape[0]:
        raise DimensionMismatch("wye vector must match transformation rows")
    return sy + tm @ sd


@dataclass(frozen=True, eq=False)
class Loads:
    """Network-wide load snapshot.

    ``wye`` is indexed like the m phase-nodes; ``delta`` follows the
    network's declared delta connections, bus by bus.
    """

    wye: np.ndarray
    delta: np.ndarray

    @classmethod
    def zeros(cls, net: Network) -> "Loads":
        return cls(np.zeros(net.m, dtype=complex), np.zeros(net.n_delta, dtype=complex))

    def scaled(self, factor: float) -> "Loads":
        return Loads(self.wye * factor, self.delta * factor)

    def __add__(self, other: "Loads") -> "Loads":
        return Loads(self.wye + other.wye, self.delta + other.delta)

    def max_abs(self) -> float:
        vals = np.concatenate([np.abs(self.wye), np.abs(self.delta), [0.0]])
        return float(vals.max())

    def check(self, net: Network) -> "Loads":
        if self.wye.shape != (net.m,) or self.delta.shape != (net.n_delta,):
            raise DimensionMismatch(
                f"loads sized ({len(self.wye)}, {len(self.delta)}), "
                f"network needs ({net.m}, {net.n_delta})"
            )
        return self

    @classmethod
    def from_records(cls, net: Network, records: Iterable[Mapping]) -> "Loads":
        """Build a snapshot from ``{bus, kind, phase_or_pair, p, q}`` records.

        Repeated records for the same slot accumulate.
        """
        out = cls.zeros(net)
        wye, delta = out.wye, out.delta
        for rec in records:
            bus = int(rec["bus"])
            if bus == 0 or bus >= net.n_buses:
                raise UnknownBus(f"load at invalid bus {bus}")
            s = complex(float(rec["p"]), float(rec["q"]))
            key = str(rec["phase_or_pair"]).lower()
            if rec["kind"] == "wye":
                idx = net.phase_index(bus, [key])[0]
                wye[net.slice(bus).start + idx] += s
            elif rec["kind"] == "delta":
                conn = sort_connections([key])[0]
                declared = net.delta_connections.get(bus, ())
                if conn not in declared:
                    raise MissingPhase(f"bus {bus} has no declared delta connection {conn}")
                delta[net.delta_slice(bus).start + declared.index(conn)] += s
            else:
                raise ValueError(f"unknown load kind {rec['kind']!r}")
        return out

    def to_records(self, net: Network) -> list[dict]:
        recs = []
        for (bus, ph), s in zip(net.node_labels(), self.wye):
            recs.append({"bus": bus, "kind": "wye", "phase_or_pair": ph, "p": s.real, "q": s.imag})
        for (bus, c), s in zip(net.delta_labels(), self.delta):
            recs.append({"bus": bus, "kind": "delta", "phase_or_pair": c, "p": s.real, "q": s.imag})
        return recs


def loads_from_spec(net: Network, entries: Iterable[Mapping]) -> Loads:
    """Base loads from the ``loads`` section of a network document."""
    recs = []
    for ld in entries or []:
        bus = int(ld["bus"])
        kind = ld.get("type", "wye")
        if kind == "wye":
            keys = ld.get("phases", net.phases(bus))
        else:
            keys = sort_connections(ld["connections"])
        p = np.atleast_1d(np.asarray(ld.get("p", 0.0), dtype=float))
        q = np.atleast_1d(np.asarray(ld.get("q", 0.0), dtype=float))
        if p.size == 1:
            p = np.repeat(p, len(keys))
        if q.size == 1:
            q = np.repeat(q, len(keys))
        if len(p) != len(keys) or len(q) != len(keys):
            raise DimensionMismatch(f"load at bus {bus}: p/q length must match {list(keys)}")
        for k, pk, qk in zip(keys, p, q):
            recs.append({"bus": bus, "kind": kind, "phase_or_pair": k, "p": pk, "q": qk})
    return Loads.from_records(net, recs)


def delta_matrix(net: Network, v_nodes: np.ndarray, balanced: bool = False) -> np.ndarray:
    """Block-diagonal ``K`` (m x n_delta) at the node voltages ``v_nodes``.

    With ``balanced=True`` the voltages are ignored and the constant
    balanced-voltage transforms are used instead.
    """
    k = np.zeros((net.m, net.n_delta), dtype=complex)
    for bus, conns in net.delta_connections.items():
        sl = net.slice(bus)
        ph = net.phases(bus)
        if balanced:
            t = balanced_delta_transform(conns, ph)
        else:
            t = delta_transform(v_nodes[sl], conns, ph)
        k[sl, net.delta_slice(bus)] = t.t
    return k


def net_injection(net: Network, loads: Loads, v_nodes: np.ndarray) -> np.ndarray:
    """Per-phase net consumption ``s = s_Y + K(V) s_pp`` for all m phase-nodes."""
    loads.check(net)
    if net.n_delta == 0:
        return loads.wye.copy()
    return loads.wye + delta_matrix(net, v_nodes) @ loads.delta
