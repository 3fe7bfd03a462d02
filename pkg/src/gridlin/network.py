"""Radial multi-phase network topology and its signed incidence blocks.

Phase-nodes below the head bus are numbered bus-major (ascending bus id) and
then by phase ``a < b < c``.  Because every segment carries exactly the phases
of its child bus, phase-circuit ``l_j^phi`` gets the same index as phase-node
``j^phi``; the incidence matrix ``A`` is therefore square.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    CycleDetected,
    DimensionMismatch,
    DisconnectedBus,
    DuplicateSegmentForChild,
    NetworkError,
    PhaseMismatch,
    SingularImpedance,
    UnknownBus,
)

PHASES = ("a", "b", "c")
PHASE_RANK = {p: k for k, p in enumerate(PHASES)}
DEFAULT_KV_BASE = 4.16
DEFAULT_KVA_BASE = 100.0

_SINGULAR_COND = 1e12
_SYMMETRY_TOL = 1e-9


def sort_phases(phases: Sequence[str]) -> tuple[str, ...]:
    """Return ``phases`` as a tuple in canonical a<b<c order, rejecting junk."""
    out = []
    for p in phases:
        p = str(p).lower()
        if p not in PHASE_RANK:
            raise PhaseMismatch(f"unknown phase {p!r}")
        if p in out:
            raise PhaseMismatch(f"phase {p!r} listed twice")
        out.append(p)
    if not out:
        raise PhaseMismatch("empty phase set")
    return tuple(sorted(out, key=PHASE_RANK.__getitem__))


def z_base(kv_base: float, kva_base: float) -> float:
    """Impedance base in ohms for line-to-line ``kv_base`` and ``kva_base``."""
    return kv_base**2 * 1000.0 / kva_base


def balanced_voltage(phases: Sequence[str]) -> np.ndarray:
    """Unit-magnitude positive-sequence phasors for ``phases``."""
    angle = {"a": 0.0, "b": -2 * np.pi / 3, "c": 2 * np.pi / 3}
    return np.array([np.exp(1j * angle[p]) for p in phases], dtype=complex)


@dataclass(frozen=True)
class Bus:
    id: int
    phases: tuple[str, ...]

    @property
    def n(self) -> int:
        return len(self.phases)


@dataclass(frozen=True, eq=False)
class LineSegment:
    """Segment ``(from_bus, to_bus)`` with its per-unit series impedance."""

    from_bus: int
    to_bus: int
    phases: tuple[str, ...]
    z: np.ndarray

    @property
    def n(self) -> int:
        return len(self.phases)


@dataclass(frozen=True, eq=False)
class Network:
    """Validated radial network.  Build it with :func:`build_network`."""

    buses: tuple[Bus, ...]
    segments: Mapping[int, LineSegment]
    v0: np.ndarray
    kv_base: float = DEFAULT_KV_BASE
    kva_base: float = DEFAULT_KVA_BASE
    delta_connections: Mapping[int, tuple[str, ...]] = field(default_factory=dict)
    name: str = ""
    # derived
    parent: Mapping[int, int] = field(default_factory=dict)
    children: Mapping[int, tuple[int, ...]] = field(default_factory=dict)
    order: tuple[int, ...] = ()
    offsets: Mapping[int, int] = field(default_factory=dict)
    delta_offsets: Mapping[int, int] = field(default_factory=dict)

    # --- sizes -----------------------------------------------------------
    @property
    def n_buses(self) -> int:
        return len(self.buses)

    @property
    def m(self) -> int:
        """Number of phase-nodes below the head (= number of phase-circuits)."""
        return sum(b.n for b in self.buses[1:])

    @property
    def n0(self) -> int:
        return self.buses[0].n

    @property
    def n_delta(self) -> int:
        return sum(len(c) for c in self.delta_connections.values())

    # --- lookups ---------------------------------------------------------
    def bus(self, i: int) -> Bus:
        if not 0 <= i < len(self.buses):
            raise UnknownBus(f"bus {i} not in network")
        return self.buses[i]

    def phases(self, i: int) -> tuple[str, ...]:
        return self.bus(i).phases

    def slice(self, j: int) -> slice:
        """Positions of bus ``j`` (and of segment ``l_j``) in the m-vectors."""
        if j == 0:
            raise UnknownBus("bus 0 has no position in the m-vectors")
        start = self.offsets[self.bus(j).id]
        return slice(start, start + self.buses[j].n)

    def delta_slice(self, i: int) -> slice:
        start = self.delta_offsets[i]
        return slice(start, start + len(self.delta_connections[i]))

    def phase_index(self, i: int, sub: Sequence[str]) -> np.ndarray:
        """Local indices of phases ``sub`` inside bus ``i``'s phase vector."""
        own = self.phases(i)
        try:
            return np.array([own.index(p) for p in sub], dtype=int)
        except ValueError:
            raise PhaseMismatch(f"bus {i} lacks one of phases {sub}") from None

    def node_labels(self) -> list[tuple[int, str]]:
        """(bus, phase) for every position of the m-vectors, in order."""
        return [(b.id, p) for b in self.buses[1:] for p in b.phases]

    def delta_labels(self) -> list[tuple[int, str]]:
        return [(i, c) for i, conns in self.delta_connections.items() for c in conns]

    def __repr__(self):
        return f"Network(name={self.name!r}, buses={self.n_buses}, m={self.m})"


@dataclass(frozen=True, eq=False)
class IncidenceBlocks:
    """Split incidence ``Abar = [A0^T; A]``.

    ``a0`` is ``n0 x m`` (rows: head phase-nodes) and ``a`` is ``m x m``.
    """

    a0: np.ndarray
    a: np.ndarray

    @property
    def full(self) -> np.ndarray:
        return np.vstack([self.a0, self.a])


def _readonly(x: np.ndarray) -> np.ndarray:
    x = np.array(x)
    x.setflags(write=False)
    return x


def _matrix(value, name) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be a matrix")
    return arr


def build_network(spec: Mapping) -> Network:
    """Validate a parsed network document and return a :class:`Network`.

    ``spec`` follows the JSON network file layout: ``buses``, ``segments``,
    optional ``slack``, ``bases``, ``units`` and ``loads``.  Impedances given
    in ohms are converted to per-unit here; everything downstream is per-unit.
    """
    bases = spec.get("bases", {}) or {}
    kv = float(bases.get("kv", DEFAULT_KV_BASE))
    kva = float(bases.get("kva", DEFAULT_KVA_BASE))
    zb = z_base(kv, kva)
    default_units = spec.get("units", "pu")

    raw_buses = spec.get("buses", [])
    phases_of: dict[int, tuple[str, ...]] = {}
    for b in raw_buses:
        bid = int(b["id"])
        if bid in phases_of:
            raise NetworkError(f"bus {bid} declared twice")
        phases_of[bid] = sort_phases(b["phases"])
    if 0 not in phases_of:
        raise NetworkError("network has no head bus 0")
    ids = sorted(phases_of)
    if ids != list(range(len(ids))):
        raise NetworkError("bus ids must be the contiguous range 0..N")
    buses = tuple(Bus(i, phases_of[i]) for i in ids)

    segments: dict[int, LineSegment] = {}
    parent: dict[int, int] = {}
    for s in spec.get("segments", []):
        i, j = int(s["from"]), int(s["to"])
        for k in (i, j):
            if k not in phases_of:
                raise UnknownBus(f"segment ({i},{j}) references unknown bus {k}")
        if i == j:
            raise CycleDetected(f"segment ({i},{j}) is a self-loop")
        if j == 0:
            raise CycleDetected(f"segment ({i},0) enters the head bus")
        if j in segments:
            raise DuplicateSegmentForChild(f"bus {j} has more than one incoming segment")
        ph = sort_phases(s.get("phases", phases_of[j]))
        if ph != phases_of[j]:
            raise PhaseMismatch(
                f"segment ({i},{j}) phases {ph} differ from bus {j} phases {phases_of[j]}"
            )
        missing = set(ph) - set(phases_of[i])
        if missing:
            raise PhaseMismatch(f"segment ({i},{j}) uses phases {sorted(missing)} absent at bus {i}")
        r = _matrix(s["r"], "r")
        x = _matrix(s.get("x", np.zeros_like(r)), "x")
        n = len(ph)
        if r.shape != (n, n) or x.shape != (n, n):
            raise DimensionMismatch(f"segment ({i},{j}) impedance must be {n}x{n}")
        z = r + 1j * x
        if s.get("units", default_units) in ("ohm", "ohms"):
            z = z / zb
        if not np.allclose(z, z.T, atol=_SYMMETRY_TOL * max(1.0, np.abs(z).max())):
            raise NetworkError(f"segment ({i},{j}) impedance is not symmetric")
        if not np.isfinite(np.linalg.cond(z)) or np.linalg.cond(z) > _SINGULAR_COND:
            raise SingularImpedance(f"segment ({i},{j}) impedance is singular")
        segments[j] = LineSegment(i, j, ph, _readonly(z))
        parent[j] = i

    # every non-head bus must reach 0 by parent pointers
    for start in ids[1:]:
        seen = {start}
        k = start
        while k != 0:
            if k not in parent:
                raise DisconnectedBus(f"bus {start} is not connected to the head bus")
            k = parent[k]
            if k in seen:
                raise CycleDetected(f"cycle through bus {k}")
            seen.add(k)

    children: dict[int, list[int]] = {i: [] for i in ids}
    for j in sorted(parent):
        children[parent[j]].append(j)
    order = []
    stack = [0]
    while stack:
        k = stack.pop(0)
        order.append(k)
        stack.extend(children[k])

    offsets = {}
    pos = 0
    for b in buses[1:]:
        offsets[b.id] = pos
        pos += b.n

    slack = spec.get("slack") or {}
    if slack.get("bus", 0) != 0:
        raise NetworkError("slack bus must be bus 0")
    if slack.get("voltage"):
        vs = slack["voltage"]
        if len(vs) != buses[0].n:
            raise DimensionMismatch("slack voltage must list one phasor per head phase")
        v0 = np.array(
            [float(v["mag"]) * np.exp(1j * np.deg2rad(float(v["angle_deg"]))) for v in vs]
        )
    else:
        v0 = balanced_voltage(buses[0].phases)

    delta_conn: dict[int, tuple[str, ...]] = {}
    for ld in spec.get("loads", []) or []:
        if ld.get("type", "wye") != "delta":
            continue
        from .loads import sort_connections

        bus = int(ld["bus"])
        if bus not in phases_of or bus == 0:
            raise UnknownBus(f"delta load at invalid bus {bus}")
        conns = sort_connections(ld["connections"])
        for c in conns:
            if set(c) - set(phases_of[bus]):
                raise PhaseMismatch(f"delta connection {c} at bus {bus} uses an absent phase")
        prev = delta_conn.get(bus, ())
        delta_conn[bus] = sort_connections(set(prev) | set(conns))
    delta_conn = {i: delta_conn[i] for i in sorted(delta_conn)}
    doff = {}
    pos = 0
    for i, c in delta_conn.items():
        doff[i] = pos
        pos += len(c)

    return Network(
        buses=buses,
        segments=MappingProxyType(dict(sorted(segments.items()))),
        v0=_readonly(v0),
        kv_base=kv,
        kva_base=kva,
        delta_connections=MappingProxyType(delta_conn),
        name=str(spec.get("name", "")),
        parent=MappingProxyType(parent),
        children=MappingProxyType({i: tuple(c) for i, c in children.items()}),
        order=tuple(order),
        offsets=MappingProxyType(offsets),
        delta_offsets=MappingProxyType(doff),
    )


def incidence_blocks(net: Network) -> IncidenceBlocks:
    """Signed phase-node x phase-circuit incidence, split at the head bus.

    Entry +1 where a phase-node heads a phase-circuit, -1 where it terminates
    it.  Columns follow child-bus order, rows follow bus-major phase-node order.
    """
    m = net.m
    abar = np.zeros((net.n0 + m, m))
    row0 = {0: 0}
    for b in net.buses[1:]:
        row0[b.id] = net.n0 + net.offsets[b.id]
    for j, seg in net.segments.items():
        cols = np.arange(net.offsets[j], net.offsets[j] + seg.n)
        head_rows = row0[seg.from_bus] + net.phase_index(seg.from_bus, seg.phases)
        tail_rows = row0[j] + np.arange(seg.n)
        abar[head_rows, cols] = 1.0
        abar[tail_rows, cols] = -1.0
    return IncidenceBlocks(a0=_readonly(abar[: net.n0]), a=_readonly(abar[net.n0 :]))


def descendants(net: Network, j: int) -> set[int]:
    """All buses downstream of ``j`` (``j`` itself excluded)."""
    net.bus(j)
    out: set[int] = set()
    stack = list(net.children[j])
    while stack:
        k = stack.pop()
        out.add(k)
        stack.extend(net.children[k])
    return out


def path_to_root(net: Network, j: int) -> list[int]:
    """Buses from ``j`` up to (and including) the head bus."""
    net.bus(j)
    path = [j]
    while path[-1] != 0:
        path.append(net.parent[path[-1]])
    return path


@dataclass(frozen=True, eq=False)
class _Arrays:
    inc: IncidenceBlocks
    a_inv: np.ndarray  # exact: entries in {-1, 0, 1}
    head_index: np.ndarray  # position of each circuit's head node in [v0; V]
    z: np.ndarray  # block-diagonal series impedance, m x m
    y: np.ndarray  # block-diagonal inverse impedance, m x m
    blocks: tuple[slice, ...]


_ARRAYS: dict[int, tuple[Network, _Arrays]] = {}


def network_arrays(net: Network) -> _Arrays:
    """Dense matrices shared by the solvers, cached per network object."""
    hit = _ARRAYS.get(id(net))
    if hit is not None and hit[0] is net:
        return hit[1]
    m = net.m
    inc = incidence_blocks(net)
    a_inv = np.rint(np.linalg.inv(inc.a)) if m else np.zeros((0, 0))
    head = np.zeros(m, dtype=int)
    z = np.zeros((m, m), dtype=complex)
    y = np.zeros((m, m), dtype=complex)
    blocks = []
    for j, seg in net.segments.items():
        sl = net.slice(j)
        i = seg.from_bus
        base = 0 if i == 0 else net.n0 + net.offsets[i]
        head[sl] = base + net.phase_index(i, seg.phases)
        z[sl, sl] = seg.z
        y[sl, sl] = np.linalg.inv(seg.z)
        blocks.append(sl)
    arr = _Arrays(inc, _readonly(a_inv), _readonly(head), _readonly(z), _readonly(y), tuple(blocks))
    if len(_ARRAYS) > 64:
        _ARRAYS.clear()
    _ARRAYS[id(net)] = (net, arr)
    return arr
