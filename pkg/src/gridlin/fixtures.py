"""Deterministic test networks and load profiles.

``synthetic_123`` is a stand-in for a 123-bus unbalanced feeder: a radial
tree of three-phase trunk, two-phase and single-phase laterals with IEEE
style line impedances, phase-a heavy loading, closed-delta loads at buses 65
and 76 and one open-delta load.  It is *not* the IEEE dataset.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FT_PER_MILE = 5280.0

# ohm/mile, IEEE 123-bus configuration 1 (three-phase overhead)
Z_THREE_PHASE = np.array(
    [
        [0.4576 + 1.0780j, 0.1560 + 0.5017j, 0.1535 + 0.3849j],
        [0.1560 + 0.5017j, 0.4666 + 1.0482j, 0.1580 + 0.4236j],
        [0.1535 + 0.3849j, 0.1580 + 0.4236j, 0.4615 + 1.0651j],
    ]
)
# ohm/mile, single-phase lateral (configurations 9-11)
Z_SINGLE_PHASE = 1.3292 + 1.3475j

PV_BUSES = (13, 29, 48, 50, 56, 60, 66, 79, 83, 95)
PARTIAL_BUSES = (1, 25, 47, 54, 67, 86, 117, 121)
DELTA_BUSES = (65, 76)

# 24-hour residential-commercial shape, peak at hour 18
VVC_ALPHA = 45.0  # about 1.2 / L for the fleet sensitivities on this feeder
DAILY_SHAPE = np.array(
    [0.52, 0.48, 0.46, 0.45, 0.47, 0.53, 0.64, 0.76, 0.82, 0.80, 0.79, 0.80,
     0.82, 0.81, 0.83, 0.88, 0.95, 1.00, 0.99, 0.95, 0.88, 0.78, 0.67, 0.58]
)


@dataclass
class Fixture:
    """A network document, its load profile and optional PV fleet data."""

    name: str
    network: dict
    profile: list[dict] = field(default_factory=list)
    dt: float = 60.0
    fleet: dict | None = None
    scenario: dict | None = None


def _segment(i, j, phases, z_per_mile, length_ft):
    z = np.asarray(z_per_mile, dtype=complex) * (length_ft / FT_PER_MILE)
    return {
        "from": i,
        "to": j,
        "phases": phases,
        "r": np.round(z.real, 12).tolist(),
        "x": np.round(z.imag, 12).tolist(),
    }


def _phase_block(phases: str):
    if len(phases) == 1:
        return [[Z_SINGLE_PHASE]]
    idx = ["abc".index(p) for p in phases]
    return Z_THREE_PHASE[np.ix_(idx, idx)]


def appendix_b() -> Fixture:
    """Three buses: 0 and 1 three-phase, bus 2 on phases a and b."""
    net = {
        "name": "appendix-b",
        "units": "ohm",
        "bases": {"kv": 4.16, "kva": 100.0},
        "buses": [{"id": 0, "phases": "abc"}, {"id": 1, "phases": "abc"}, {"id": 2, "phases": "ab"}],
        "segments": [
            _segment(0, 1, "abc", Z_THREE_PHASE, 800.0),
            _segment(1, 2, "ab", _phase_block("ab"), 500.0),
        ],
        "loads": [
            {"bus": 1, "type": "wye", "p": [0.30, 0.18, 0.22], "q": [0.14, 0.08, 0.10]},
            {"bus": 1, "type": "delta", "connections": ["ab", "bc", "ca"], "p": [0.20, 0.10, 0.15], "q": [0.08, 0.05, 0.06]},
            {"bus": 2, "type": "wye", "p": [0.40, 0.15], "q": [0.19, 0.07]},
        ],
    }
    profile = _scaled_profile(net, np.linspace(0.8, 1.2, 6), seed=3)
    return Fixture("appendix-b", net, profile, dt=60.0)


def chain(n_buses: int = 3, phases: str = "a", length_ft: float = 1500.0) -> Fixture:
    """Path ``0 - 1 - ... - (n-1)`` on one phase set with a load at each bus."""
    if n_buses < 1:
        raise ValueError("a chain needs at least the head bus")
    slack = None
    if phases == "a":
        slack = {"bus": 0, "voltage": [{"mag": 1.0, "angle_deg": 0.0}]}
    net = {
        "name": f"chain-{n_buses}-{phases}",
        "units": "ohm",
        "bases": {"kv": 4.16, "kva": 100.0},
        "buses": [{"id": i, "phases": phases} for i in range(n_buses)],
        "segments": [_segment(i, i + 1, phases, _phase_block(phases), length_ft) for i in range(n_buses - 1)],
        "loads": [
            {"bus": i, "type": "wye", "p": [0.4 - 0.05 * k for k in range(len(phases))], "q": [0.15 + 0.02 * k for k in range(len(phases))]}
            for i in range(1, n_buses)
        ],
    }
    if slack:
        net["slack"] = slack
    profile = _scaled_profile(net, np.linspace(0.8, 1.2, 6), seed=5)
    return Fixture(net["name"], net, profile, dt=60.0)


def _three_phase_trunk(rng: np.random.Generator, n_buses: int) -> set[int]:
    trunk = {0, 1}
    trunk.update(DELTA_BUSES)
    for b in range(2, n_buses):
        if rng.random() < 0.30:
            trunk.add(b)
    return trunk


def _topology_123(seed: int):
    rng = np.random.default_rng(seed)
    n = 123
    trunk = _three_phase_trunk(rng, n)
    phases = {0: "abc", 1: "abc"}
    parent = {1: 0}
    lengths = {1: 400.0}
    last_trunk = 1
    for b in range(2, n):
        if b in trunk:
            # mostly extend the backbone, sometimes branch off an earlier trunk bus
            cands = sorted(k for k in phases if phases[k] == "abc" and k != 0)
            if rng.random() < 0.55:
                p = last_trunk
            else:
                p = int(rng.choice(cands[-8:]))
            phases[b] = "abc"
            parent[b] = p
            lengths[b] = float(rng.uniform(250.0, 550.0))
            last_trunk = b
        else:
            cands = sorted(k for k in phases if k != 0)
            p = int(rng.choice(cands[-10:]))
            pp = phases[p]
            if len(pp) == 3:
                if rng.random() < 0.15:
                    ph = str(rng.choice(["ab", "bc", "ac"]))
                    ph = "".join(sorted(ph))
                else:
                    ph = str(rng.choice(["a", "b", "c"], p=[0.4, 0.3, 0.3]))
            elif len(pp) == 2:
                ph = pp if rng.random() < 0.3 else str(rng.choice(list(pp)))
            else:
                ph = pp
            phases[b] = ph
            parent[b] = p
            lengths[b] = float(rng.uniform(100.0, 400.0))
    return phases, parent, lengths, rng


def synthetic_123(seed: int = 7) -> Fixture:
    """Synthetic unbalanced 123-bus radial feeder with a 24-step daily profile."""
    phases, parent, lengths, rng = _topology_123(seed)
    buses = [{"id": b, "phases": phases[b]} for b in sorted(phases)]
    segments = [
        _segment(parent[b], b, phases[b], _phase_block(phases[b]), lengths[b])
        for b in sorted(parent)
    ]
    phase_weight = {"a": 1.0, "b": 0.8, "c": 0.95}
    loads = []
    open_delta_done = False
    for b in sorted(phases):
        if b == 0:
            continue
        ph = phases[b]
        if b in DELTA_BUSES:
            kw = {65: [35.0, 35.0, 70.0], 76: [105.0, 70.0, 70.0]}[b]
            kvar = {65: [25.0, 25.0, 50.0], 76: [80.0, 50.0, 50.0]}[b]
            loads.append({"bus": b, "type": "delta", "connections": ["ab", "bc", "ca"],
                          "p": [k / 100.0 for k in kw], "q": [k / 100.0 for k in kvar]})
            continue
        if len(ph) == 2 and not open_delta_done:
            conn = {"ab": "ab", "bc": "bc", "ac": "ca"}[ph]
            loads.append({"bus": b, "type": "delta", "connections": [conn], "p": [0.30], "q": [0.15]})
            open_delta_done = True
            continue
        if len(ph) == 3 and rng.random() < 0.5:
            continue
        base = float(rng.choice([20.0, 40.0]))
        p = [round(base * phase_weight[x] / 100.0, 6) for x in ph]
        q = [round(v * 0.5, 6) for v in p]
        loads.append({"bus": b, "type": "wye", "p": p, "q": q})
    net = {
        "name": f"synthetic-123-seed{seed}",
        "units": "ohm",
        "bases": {"kv": 4.16, "kva": 100.0},
        "buses": buses,
        "segments": segments,
        "loads": loads,
    }
    profile = _daily_profile(net, seed)
    return Fixture(net["name"], net, profile, dt=3600.0)


def _base_records(net: dict):
    recs = []
    for ld in net.get("loads", []):
        kind = ld.get("type", "wye")
        bus_phases = next(b["phases"] for b in net["buses"] if b["id"] == ld["bus"])
        keys = list(bus_phases) if kind == "wye" else list(ld["connections"])
        for k, p, q in zip(keys, ld["p"], ld["q"]):
            recs.append((ld["bus"], kind, k, float(p), float(q)))
    return recs


def _scaled_profile(net: dict, factors, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    rows = []
    for t, f in enumerate(factors):
        for bus, kind, k, p, q in _base_records(net):
            jitter = 1.0 + 0.03 * rng.standard_normal()
            rows.append({"step": t, "bus": bus, "kind": kind, "phase_or_pair": k,
                         "p": p * f * jitter, "q": q * f * jitter})
    return rows


def _daily_profile(net: dict, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed + 1000)
    # phase a peaks harder in the evening
    phase_shape = {
        "a": DAILY_SHAPE ** 1.3,
        "b": 0.25 + 0.75 * DAILY_SHAPE,
        "c": 0.30 + 0.70 * DAILY_SHAPE,
    }
    rows = []
    base = _base_records(net)
    for t in range(len(DAILY_SHAPE)):
        for bus, kind, k, p, q in base:
            shape = phase_shape[k[0]][t] if kind == "wye" else DAILY_SHAPE[t]
            jitter = 1.0 + 0.05 * rng.standard_normal()
            rows.append({"step": t, "bus": bus, "kind": kind, "phase_or_pair": k,
                         "p": p * shape * jitter, "q": q * shape * jitter})
    return rows


def fast_varying(
    seed: int = 7,
    horizon: int = 240,
    dt: float = 5.0,
    load_base: float = 0.5,
    pv_rating: float = 2.0,
    q_limit: float = 2.0,
) -> Fixture:
    """Synthetic-123 network with 5 s load and PV profiles for Volt-VAr tests.

    A midday case: loads fluctuate quickly around half their peak while PV
    output at the fleet buses follows passing clouds, so voltages swing both
    above and below nominal.  ``pv_rating`` and ``q_limit`` are per phase, in
    per-unit of the base power.
    """
    base = synthetic_123(seed)
    net = base.network
    rng = np.random.default_rng(seed + 2000)
    t = np.arange(horizon)
    load_level = load_base + 0.12 * np.sin(2 * np.pi * t / 36.0) + 0.05 * np.sin(2 * np.pi * t / 11.0)
    load_level += np.cumsum(0.01 * rng.standard_normal(horizon))
    irradiance = 0.7 + 0.3 * np.sin(2 * np.pi * t / 50.0)
    clouds = np.ones(horizon)
    k = 0
    while k < horizon:
        k += int(rng.integers(10, 30))
        width = int(rng.integers(4, 12))
        clouds[k : k + width] = float(rng.uniform(0.2, 0.5))
        k += width
    pv_level = np.clip(irradiance * clouds, 0.0, 1.0)

    rows = []
    recs = _base_records(net)
    for s in range(horizon):
        for bus, kind, key, p, q in recs:
            jitter = 1.0 + 0.03 * rng.standard_normal()
            rows.append({"step": s, "bus": bus, "kind": kind, "phase_or_pair": key,
                         "p": p * load_level[s] * jitter, "q": q * load_level[s] * jitter})
    phases = {b["id"]: b["phases"] for b in net["buses"]}
    locations = [[b, ph] for b in PV_BUSES for ph in phases[b]]
    for s in range(horizon):
        for b, ph in locations:
            rows.append({"step": s, "bus": b, "kind": "pv", "phase_or_pair": ph,
                         "p": pv_rating * pv_level[s], "q": 0.0})
    fleet = {"locations": locations, "q_min": -q_limit, "q_max": q_limit}
    scenario = {
        "dt": dt,
        "fleet": fleet,
        "controller": {"mode": "online", "alpha": VVC_ALPHA, "opf_period": 12},
    }
    return Fixture(f"fast-varying-seed{seed}", net, rows, dt=dt, fleet=fleet, scenario=scenario)


def gen_fixture(kind: str, seed: int = 7) -> Fixture:
    """Fixture by name: ``appendix-b``, ``chain``, ``synthetic-123`` or ``fast-varying``."""
    if kind == "appendix-b":
        return appendix_b()
    if kind == "chain":
        return chain(3, "a")
    if kind == "synthetic-123":
        return synthetic_123(seed)
    if kind == "fast-varying":
        return fast_varying(seed)
    raise ValueError(f"unknown fixture kind {kind!r}")
