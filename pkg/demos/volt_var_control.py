"""
Volt/VAr control with a PV fleet
================================

Inverters adjust reactive power by projected gradient steps.  The online
controller refreshes its sensitivities from every measurement, the offline
one solves an OPF on the lossless model every twelve steps and holds it.
"""

import numpy as np

from gridlin import TimeSeries, build_network
from gridlin.fixtures import fast_varying
from gridlin.vvc import VvcConfig, fleet_from_spec, run_vvc_offline, run_vvc_online

fx = fast_varying(seed=7)
net = build_network(fx.network)
ts = TimeSeries.from_records(net, fx.profile, fx.dt)
pv = [r for r in fx.profile if r["kind"] == "pv"]
fleet = fleet_from_spec(fx.fleet, ts.horizon, pv)
cfg = VvcConfig(fx.scenario["controller"]["alpha"])
print(f"{fleet.n} inverters, {ts.horizon} steps of {ts.dt:g} s")

online = run_vvc_online(net, ts, fleet, cfg)
offline = run_vvc_offline(net, ts, fleet, cfg, opf_period=fx.scenario["controller"]["opf_period"])

base = online.objective_uncontrolled
print(f"uncontrolled {base.mean():.5f}")
for rep in (online, offline):
    f = rep.mean_objective()
    print(f"{rep.mode:8s}     {f:.5f}  ({1 - f / base.mean():.0%} lower)")

# hourly snapshot of the setpoints
for t in range(0, ts.horizon, 48):
    print(f"t={t:3d}  online q = {np.round(online.q_g[t], 3)}")
