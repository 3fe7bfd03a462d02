"""``gridlin`` command-line entry point.

Exit codes: 0 success, 1 numerical failure (no convergence, singular
system), 2 usage error, 65 malformed or inconsistent input data, 66 input
file not found.  Outputs are written atomically, so a failed run leaves no
partial file behind.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Sequence

from . import io
from .errors import EmptyInput, GridlinError, LoadError, NetworkError, ParseError, StepMismatch
from .fixtures import gen_fixture
from .linearizer import build_model, solve_linear
from .loads import Loads, loads_from_spec
from .network import Network, build_network
from .powerflow import SweepOptions, solve_exact
from .simulation import TimeSeries, run_timeseries
from .vvc import fleet_from_spec, run_vvc_offline, run_vvc_online

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_DATA = 65
EXIT_NO_INPUT = 66

FIXTURE_KINDS = ("appendix-b", "chain", "synthetic-123", "fast-varying")


def _require(*paths) -> None:
    for p in paths:
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(p)


def load_network(path) -> tuple[Network, dict]:
    doc = io.read_json(path)
    try:
        return build_network(doc), doc
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, GridlinError):
            raise
        raise ParseError(f"bad network document: {exc!r}", str(path)) from None


def _step_loads(net: Network, records, step: int) -> Loads:
    rows = [r for r in records if r["step"] == step and r["kind"] != "pv"]
    if not rows:
        raise EmptyInput(f"no load rows for step {step}")
    return Loads.from_records(net, rows)


def _sweep(args) -> SweepOptions:
    return SweepOptions(tol=args.tol, max_iter=args.max_iter)


def cmd_validate(args) -> int:
    _require(args.network)
    net, doc = load_network(args.network)
    print(f"network {net.name or args.network}: {net.n_buses} buses, {net.m} phase-nodes, "
          f"{len(net.segments)} segments, {net.n_delta} delta connections")
    loads_from_spec(net, doc.get("loads", []))
    return EXIT_OK


def cmd_solve_exact(args) -> int:
    _require(args.network, args.loads)
    net, doc = load_network(args.network)
    if args.loads:
        loads = _step_loads(net, io.read_profile(args.loads), args.step)
    else:
        loads = loads_from_spec(net, doc.get("loads", []))
    op = solve_exact(net, loads, _sweep(args))
    io.write_text(args.output, io.point_to_csv(net, op))
    print(f"converged in {op.iterations} sweeps; min |V| = {op.v_mag.min():.6f} p.u.")
    return EXIT_OK


def cmd_solve_linear(args) -> int:
    _require(args.network, args.point, args.loads)
    net, _ = load_network(args.network)
    loads = _step_loads(net, io.read_profile(args.loads), args.step)
    if args.baseline == "lossless":
        model = build_model(net)
    else:
        model = build_model(net, io.read_point(net, args.point))
    sol = solve_linear(model, loads)
    io.write_text(args.output, io.solution_to_csv(net, sol))
    return EXIT_OK


def _series(args):
    _require(args.network, args.profile, args.scenario)
    net, _ = load_network(args.network)
    records = io.read_profile(args.profile)
    scenario = io.read_scenario(args.scenario)
    ts = TimeSeries.from_records(net, records, scenario.dt)
    return net, records, scenario, ts


def cmd_simulate(args) -> int:
    net, _, sc, ts = _series(args)
    report = run_timeseries(net, ts, sc.measurement, sc.failure, sc.update_every, _sweep(args))
    io.write_text(args.output, io.report_to_csv(report))
    for model, stats in report.summary().items():
        print(f"{model:9s} mape_v={stats['mape_v']:.6g} mape_p={stats['mape_p']:.6g} mape_q={stats['mape_q']:.6g}")
    return EXIT_OK


def cmd_vvc(args) -> int:
    net, records, sc, ts = _series(args)
    if not sc.fleet:
        raise ParseError("scenario has no fleet section", args.scenario)
    fleet = fleet_from_spec(sc.fleet, ts.horizon, [r for r in records if r["kind"] == "pv"])
    mode = args.mode or sc.mode
    if mode == "online":
        report = run_vvc_online(net, ts, fleet, sc.vvc_config(), sc.measurement, sc.failure, _sweep(args))
    else:
        report = run_vvc_offline(net, ts, fleet, sc.vvc_config(), sc.opf_period, _sweep(args))
    io.write_text(args.output, io.vvc_report_to_csv(report, fleet))
    u = report.objective_uncontrolled.mean()
    print(f"{mode}: mean objective {report.mean_objective():.6g} (uncontrolled {u:.6g})")
    return EXIT_OK


def cmd_gen_fixture(args) -> int:
    fx = gen_fixture(args.kind, args.seed)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    scenario = fx.scenario or {"dt": fx.dt, "update_every": 1, "measurement": {"sigma": 0.0, "seed": args.seed}}
    io.write_json(out / "network.json", fx.network)
    io.write_text(out / "profile.csv", io.profile_to_csv(fx.profile))
    io.write_json(out / "scenario.json", scenario)
    print(f"wrote {fx.name} to {out}")
    return EXIT_OK


def cmd_compare(args) -> int:
    _require(*args.reports)
    tables = [io.read_report(p) for p in args.reports]
    labels = [Path(p).stem for p in args.reports]
    summary, per_step = io.compare_reports(tables, labels)
    print(f"{'report':20s} {'model':9s} {'mape_v':>14s} {'mape_p':>14s} {'mape_q':>14s}")
    for label, model, mv, mp, mq in summary:
        print(f"{label:20s} {model:9s} {mv:14.6g} {mp:14.6g} {mq:14.6g}")
    if args.output:
        io.write_text(args.output, per_step)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridlin", description="Unbalanced distribution power flow and its online linearization.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    def sweep_flags(p):
        p.add_argument("--tol", type=float, default=1e-9, help="sweep tolerance on max |dV| in p.u. (default 1e-9)")
        p.add_argument("--max-iter", type=int, default=100, help="sweep iteration cap (default 100)")

    p = sub.add_parser("validate", help="check a network file and print a summary")
    p.add_argument("network", help="network JSON file")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("solve-exact", help="exact branch-flow solution, written as an operating-point CSV")
    p.add_argument("network", help="network JSON file")
    p.add_argument("--loads", help="profile CSV overriding the network's loads")
    p.add_argument("--step", type=int, default=0, help="profile step to use with --loads (default 0)")
    p.add_argument("-o", "--output", required=True, help="operating-point CSV to write")
    sweep_flags(p)
    p.set_defaults(func=cmd_solve_exact)

    p = sub.add_parser("solve-linear", help="linear-model solution for query loads")
    p.add_argument("network", help="network JSON file")
    p.add_argument("point", help="operating-point CSV the model is built at")
    p.add_argument("loads", help="profile CSV with the query loads")
    p.add_argument("--step", type=int, default=0, help="profile step holding the query loads (default 0)")
    p.add_argument("--baseline", choices=("online", "lossless"), default="online",
                   help="'lossless' ignores the operating point and uses LinDistFlow parameters")
    p.add_argument("-o", "--output", required=True, help="linear-solution CSV to write")
    p.set_defaults(func=cmd_solve_linear)

    p = sub.add_parser("simulate", help="closed-loop time series; per-step MAPE report")
    p.add_argument("network", help="network JSON file")
    p.add_argument("profile", help="profile CSV")
    p.add_argument("scenario", help="scenario JSON file")
    p.add_argument("-o", "--output", required=True, help="report CSV to write")
    sweep_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("vvc", help="Volt-VAr control run; per-step objective and setpoints")
    p.add_argument("network", help="network JSON file")
    p.add_argument("profile", help="profile CSV, including pv rows for the fleet")
    p.add_argument("scenario", help="scenario JSON file with fleet and controller sections")
    p.add_argument("--mode", choices=("online", "offline"), help="override the scenario's controller mode")
    p.add_argument("-o", "--output", required=True, help="VVC report CSV to write")
    sweep_flags(p)
    p.set_defaults(func=cmd_vvc)

    p = sub.add_parser("gen-fixture", help="write network.json, profile.csv and scenario.json for a fixture")
    p.add_argument("kind", choices=FIXTURE_KINDS)
    p.add_argument("--seed", type=int, default=7, help="generator seed (default 7)")
    p.add_argument("-o", "--output", required=True, help="directory to write into")
    p.set_defaults(func=cmd_gen_fixture)

    p = sub.add_parser("compare", help="tabulate simulation reports against the first one")
    p.add_argument("reports", nargs="+", help="report CSV files sharing a step index")
    p.add_argument("-o", "--output", help="per-step comparison CSV to write")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"gridlin: file not found: {exc.filename or exc}", file=sys.stderr)
        return EXIT_NO_INPUT
    except (ParseError, NetworkError, LoadError, StepMismatch, EmptyInput, ValueError) as exc:
        print(f"gridlin: {exc}", file=sys.stderr)
        return EXIT_DATA
    except GridlinError as exc:
        print(f"gridlin: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
