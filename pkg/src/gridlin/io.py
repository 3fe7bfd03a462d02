"""File formats: network and scenario JSON, profile / operating-point / report CSV.

Every number is written with 17 significant digits so that a double survives
a write/read cycle unchanged.  JSON objects are emitted with sorted keys and
two-space indentation; arrays of scalars stay on one line.  A file written
here and read back re-serialises to identical bytes.

CSV layouts (header row first, columns in this order):

``profile``
    ``step,bus,kind,phase_or_pair,p,q``; ``kind`` is ``wye``, ``delta`` or ``pv``.
``operating point`` and ``linear solution``
    ``record,bus,phase,value1,value2``.  ``voltage`` rows carry magnitude and
    angle in degrees (operating point) or magnitude and squared magnitude
    (linear solution); ``flow`` rows carry P and Q of the circuit into
    ``bus``; ``wye`` / ``delta`` rows carry the load p and q.
``simulation report``
    ``step,model,mape_v,mape_p,mape_q``; trailing rows with ``step = mean``
    hold the per-model averages.
``vvc report``
    ``step,objective,objective_uncontrolled,q_<bus><phase>...``; a final
    ``mean`` row.
"""

from __future__ import annotations

import csv
import io as _io
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .errors import EmptyInput, ParseError, StepMismatch
from .linearizer import LinearSolution
from .loads import Loads
from .network import Network
from .powerflow import OperatingPoint, head_voltages, operating_point
from .simulation import FailureModel, MeasurementModel, SimulationReport
from .vvc import PvFleet, VvcConfig, VvcReport

PROFILE_COLUMNS = ("step", "bus", "kind", "phase_or_pair", "p", "q")
POINT_COLUMNS = ("record", "bus", "phase", "value1", "value2")
REPORT_COLUMNS = ("step", "model", "mape_v", "mape_p", "mape_q")
SEED_ENV = "GRIDLIN_SEED"


def fmt(x) -> str:
    """17-significant-digit text for a number; integers stay integers."""
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if not math.isfinite(x):
        raise ValueError(f"cannot serialise non-finite value {x}")
    return format(x, ".17g")


# ----------------------------------------------------------------- JSON


def _emit(obj, indent: int, out: list[str]) -> None:
    pad = "  " * indent
    if obj is None:
        out.append("null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, (bool, int, float, np.integer, np.floating, np.bool_)):
        out.append(fmt(obj))
    elif isinstance(obj, Mapping):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = sorted(obj.items(), key=lambda kv: str(kv[0]))
        for k, (key, val) in enumerate(items):
            out.append(f"{pad}  {json.dumps(str(key))}: ")
            _emit(val, indent + 1, out)
            out.append(",\n" if k < len(items) - 1 else "\n")
        out.append(pad + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
        elif all(not isinstance(v, (Mapping, list, tuple, np.ndarray)) for v in seq):
            parts: list[str] = []
            for v in seq:
                _emit(v, 0, parts)
                parts.append(", ")
            out.append("[" + "".join(parts[:-1]) + "]")
        else:
            out.append("[\n")
            for k, v in enumerate(seq):
                out.append(pad + "  ")
                _emit(v, indent + 1, out)
                out.append(",\n" if k < len(seq) - 1 else "\n")
            out.append(pad + "]")
    else:
        raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps_json(obj) -> str:
    """Canonical JSON text (sorted keys, 17-digit floats, trailing newline)."""
    out: list[str] = []
    _emit(obj, 0, out)
    return "".join(out) + "\n"


def loads_json(text: str, path=None):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, path, exc.lineno, exc.colno) from None


def read_json(path) -> Any:
    path = Path(path)
    return loads_json(path.read_text(), str(path))


def write_text(path, text: str) -> None:
    """Write ``text`` atomically so a failed run leaves no partial file."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def write_json(path, obj) -> None:
    write_text(path, dumps_json(obj))


# ----------------------------------------------------------------- CSV


def _csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return buf.getvalue()


def _read_csv(text: str, columns: Sequence[str], path=None) -> list[tuple[int, list[str]]]:
    """Rows of a CSV with a fixed header, each tagged with its line number."""
    reader = csv.reader(_io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("file is empty", path, 1, 1) from None
    header = [h.strip() for h in header]
    if header[: len(columns)] != list(columns):
        raise ParseError(f"expected header {','.join(columns)}", path, 1, 1)
    rows = []
    for row in reader:
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < len(columns):
            raise ParseError(f"expected {len(columns)} fields, got {len(row)}", path, reader.line_num, len(row) + 1)
        rows.append((reader.line_num, [c.strip() for c in row]))
    return rows


def _number(text: str, kind, path, line: int, col: int):
    try:
        return kind(text)
    except ValueError:
        raise ParseError(f"not a valid {kind.__name__}: {text!r}", path, line, col) from None


def _read_text(path) -> tuple[str, str]:
    path = Path(path)
    return path.read_text(), str(path)


# profiles


def profile_to_csv(records: Iterable[Mapping]) -> str:
    return _csv_text(PROFILE_COLUMNS, ([r[c] for c in PROFILE_COLUMNS] for r in records))


def profile_from_csv(text: str, path=None) -> list[dict]:
    out = []
    for line, row in _read_csv(text, PROFILE_COLUMNS, path):
        if row[2] not in ("wye", "delta", "pv"):
            raise ParseError(f"unknown load kind {row[2]!r}", path, line, 3)
        out.append(
            {
                "step": _number(row[0], int, path, line, 1),
                "bus": _number(row[1], int, path, line, 2),
                "kind": row[2],
                "phase_or_pair": row[3],
                "p": _number(row[4], float, path, line, 5),
                "q": _number(row[5], float, path, line, 6),
            }
        )
    return out


def read_profile(path) -> list[dict]:
    return profile_from_csv(*_read_text(path))


# operating points and linear solutions


def point_to_csv(net: Network, op: OperatingPoint) -> str:
    rows = []
    for ph, v in zip(net.phases(0), op.v0):
        rows.append(("voltage", 0, ph, abs(v), math.degrees(np.angle(v))))
    for (bus, ph), v in zip(net.node_labels(), op.v_complex):
        rows.append(("voltage", bus, ph, abs(v), math.degrees(np.angle(v))))
    for (bus, ph), p, q in zip(net.node_labels(), op.p_flow, op.q_flow):
        rows.append(("flow", bus, ph, p, q))
    for rec in op.loads.to_records(net):
        rows.append((rec["kind"], rec["bus"], rec["phase_or_pair"], rec["p"], rec["q"]))
    return _csv_text(POINT_COLUMNS, rows)


def point_from_csv(net: Network, text: str, path=None) -> OperatingPoint:
    """Operating point (a measurement snapshot) from its CSV form.

    Flows are taken from the file as measured; the current and injection
    fields are derived from the voltages.
    """
    pos = {lab: k for k, lab in enumerate(net.node_labels())}
    head = {ph: k for k, ph in enumerate(net.phases(0))}
    v = np.full(net.m, np.nan, dtype=complex)
    v0 = net.v0.copy()
    p = np.full(net.m, np.nan)
    q = np.full(net.m, np.nan)
    load_recs = []
    for line, row in _read_csv(text, POINT_COLUMNS, path):
        rec = row[0]
        bus = _number(row[1], int, path, line, 2)
        a = _number(row[3], float, path, line, 4)
        b = _number(row[4], float, path, line, 5)
        if rec in ("wye", "delta"):
            load_recs.append({"bus": bus, "kind": rec, "phase_or_pair": row[2], "p": a, "q": b})
            continue
        if rec == "voltage" and bus == 0:
            if row[2] not in head:
                raise ParseError(f"head bus has no phase {row[2]!r}", path, line, 3)
            v0[head[row[2]]] = a * np.exp(1j * math.radians(b))
            continue
        k = pos.get((bus, row[2]))
        if k is None:
            raise ParseError(f"unknown phase-node {bus}{row[2]}", path, line, 2)
        if rec == "voltage":
            v[k] = a * np.exp(1j * math.radians(b))
        elif rec == "flow":
            p[k], q[k] = a, b
        else:
            raise ParseError(f"unknown record {rec!r}", path, line, 1)
    if np.isnan(v).any() or np.isnan(p).any():
        raise ParseError("operating point does not cover every phase-node", path)
    loads = Loads.from_records(net, load_recs)
    op = operating_point(net, v, loads, v0=v0)
    current = np.conj((p + 1j * q) / head_voltages(net, v, v0))
    return OperatingPoint(v, v0, loads, op.s_hat, p, q, current)


def read_point(net: Network, path) -> OperatingPoint:
    return point_from_csv(net, *_read_text(path))


def solution_to_csv(net: Network, sol: LinearSolution) -> str:
    rows = []
    for (bus, ph), vsq in zip(net.node_labels(), sol.v_sq):
        rows.append(("voltage", bus, ph, math.sqrt(max(vsq, 0.0)), vsq))
    for (bus, ph), p, q in zip(net.node_labels(), sol.p_flow, sol.q_flow):
        rows.append(("flow", bus, ph, p, q))
    return _csv_text(POINT_COLUMNS, rows)


# reports


def report_to_csv(report: SimulationReport) -> str:
    rows = [[r[c] for c in REPORT_COLUMNS] for r in report.rows()]
    for model, stats in report.summary().items():
        rows.append(["mean", model, stats["mape_v"], stats["mape_p"], stats["mape_q"]])
    return _csv_text(REPORT_COLUMNS, rows)


@dataclass
class ReportTable:
    """Per-step MAPE rows of a simulation report, keyed by ``(step, model)``."""

    rows: dict[tuple[int, str], tuple[float, float, float]] = field(default_factory=dict)

    @property
    def steps(self) -> list[int]:
        return sorted({s for s, _ in self.rows})

    @property
    def models(self) -> list[str]:
        return sorted({m for _, m in self.rows})

    def mean(self, model: str) -> tuple[float, float, float]:
        vals = np.array([v for (s, m), v in self.rows.items() if m == model])
        return tuple(float(x) for x in vals.mean(axis=0))


def report_from_csv(text: str, path=None) -> ReportTable:
    table = ReportTable()
    for line, row in _read_csv(text, REPORT_COLUMNS, path):
        if row[0] == "mean":
            continue
        step = _number(row[0], int, path, line, 1)
        vals = tuple(_number(row[k], float, path, line, k + 1) for k in (2, 3, 4))
        table.rows[(step, row[1])] = vals
    return table


def read_report(path) -> ReportTable:
    return report_from_csv(*_read_text(path))


def compare_reports(tables: Sequence[ReportTable], labels: Sequence[str]) -> tuple[list[list], str]:
    """Summary rows and a per-step CSV comparing reports against the first.

    Returns
    -------
    summary : list of rows
        ``[label, model, mean mape_v, mean mape_p, mean mape_q]``.
    per_step : str
        CSV ``step,model,report,mape_v,mape_p,mape_q,d_mape_v,d_mape_p,d_mape_q``
        with differences taken against the first report.

    Raises
    ------
    EmptyInput
        If no report is given or any report has no rows.
    StepMismatch
        If the reports do not cover the same ``(step, model)`` keys.
    """
    if not tables:
        raise EmptyInput("no reports to compare")
    for t, label in zip(tables, labels):
        if not t.rows:
            raise EmptyInput(f"report {label} has no rows")
    ref = tables[0]
    for t, label in zip(tables[1:], labels[1:]):
        if set(t.rows) != set(ref.rows):
            raise StepMismatch(f"report {label} does not share the step index of {labels[0]}")
    summary = [[label, model, *t.mean(model)] for t, label in zip(tables, labels) for model in t.models]
    rows = []
    for key in sorted(ref.rows):
        base = np.array(ref.rows[key])
        for t, label in zip(tables, labels):
            vals = np.array(t.rows[key])
            rows.append([key[0], key[1], label, *vals, *(vals - base)])
    header = ("step", "model", "report", "mape_v", "mape_p", "mape_q", "d_mape_v", "d_mape_p", "d_mape_q")
    return summary, _csv_text(header, rows)


def vvc_report_to_csv(report: VvcReport, fleet: PvFleet) -> str:
    header = ["step", "objective", "objective_uncontrolled"] + [f"q_{b}{ph}" for b, ph in fleet.locations]
    rows = [[r[c] for c in header] for r in report.rows(fleet)]
    rows.append(["mean", report.mean_objective(), float(np.mean(report.objective_uncontrolled))]
                + list(report.q_g.mean(axis=0)))
    return _csv_text(header, rows)


# ----------------------------------------------------------------- scenarios


@dataclass(frozen=True)
class Scenario:
    """Everything a ``simulate`` or ``vvc`` run needs besides network and profile."""

    dt: float = 60.0
    update_every: int = 1
    measurement: MeasurementModel = MeasurementModel()
    failure: FailureModel = FailureModel()
    fleet: dict | None = None
    controller: dict = field(default_factory=dict)

    def vvc_config(self) -> VvcConfig:
        return VvcConfig(float(self.controller.get("alpha", VvcConfig.alpha)))

    @property
    def mode(self) -> str:
        return str(self.controller.get("mode", "online"))

    @property
    def opf_period(self) -> int:
        return int(self.controller.get("opf_period", 12))


def _windows(raw) -> tuple[tuple[int, int], ...]:
    return tuple((int(lo), int(hi)) for lo, hi in raw or ())


def _buses(raw, default):
    if raw == "all" or (raw is None and default is None):
        return None
    return tuple(int(b) for b in (raw if raw is not None else default))


def scenario_from_doc(doc: Mapping, env: Mapping[str, str] | None = None) -> Scenario:
    """Scenario from its JSON document; ``GRIDLIN_SEED`` overrides the noise seed.

    ``measurement.buses`` and ``failure.buses`` accept a list of bus ids or
    ``"all"``.  Omitted, noise applies to every bus and failure to none.
    """
    env = os.environ if env is None else env
    meas = doc.get("measurement") or {}
    fail = doc.get("failure") or {}
    seed = int(meas.get("seed", 0))
    if env.get(SEED_ENV):
        seed = int(env[SEED_ENV])
    mm = MeasurementModel(
        noise_sigma=float(meas.get("sigma", 0.0)),
        noisy_buses=_buses(meas.get("buses"), None),
        windows=_windows(meas.get("windows")),
        seed=seed,
    )
    fm = FailureModel(failed_buses=_buses(fail.get("buses"), ()), windows=_windows(fail.get("windows")))
    return Scenario(
        dt=float(doc.get("dt", 60.0)),
        update_every=int(doc.get("update_every", 1)),
        measurement=mm,
        failure=fm,
        fleet=doc.get("fleet"),
        controller=dict(doc.get("controller") or {}),
    )


def read_scenario(path, env=None) -> Scenario:
    doc = read_json(path)
    if not isinstance(doc, Mapping):
        raise ParseError("scenario must be a JSON object", str(path), 1, 1)
    try:
        return scenario_from_doc(doc, env)
    except (TypeError, ValueError, KeyError) as exc:
        raise ParseError(f"bad scenario: {exc}", str(path)) from None
