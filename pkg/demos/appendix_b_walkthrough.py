"""
Walking through a three-bus feeder
==================================

Build the small two-segment feeder, look at its incidence blocks, solve the
exact power flow and compare the online model with the lossless one.
"""

import numpy as np

from gridlin import build_model, build_network, lindistflow_params, loads_from_spec, solve_exact, solve_linear
from gridlin.fixtures import appendix_b
from gridlin.linearizer import assemble_compact
from gridlin.network import incidence_blocks

np.set_printoptions(precision=5, suppress=True)

fx = appendix_b()
net = build_network(fx.network)
print(f"{net.n_buses} buses, {net.m} phase-nodes, {net.n_delta} delta loads")

# every column of the full incidence matrix has one +1 and one -1
inc = incidence_blocks(net)
print("full incidence:\n", inc.full)

# exact solution by the backward/forward sweep
loads = loads_from_spec(net, fx.network["loads"])
op = solve_exact(net, loads)
print(f"sweep converged in {op.iterations} iterations")
print("|V| =", op.v_mag)

# the online model is built at this point, so it reproduces it exactly
online = build_model(net, op)
lossless = assemble_compact(net, lindistflow_params(net))
for name, cm in (("online", online), ("lossless", lossless)):
    sol = solve_linear(cm, loads)
    print(f"{name:9s} max |dv^2| = {np.max(np.abs(sol.v_sq - op.v_sq)):.2e}")

# push the loads 10% higher and predict with the stale online model
heavier = loads.scaled(1.1)
truth = solve_exact(net, heavier)
for name, cm in (("online", online), ("lossless", lossless)):
    sol = solve_linear(cm, heavier)
    print(f"{name:9s} at +10%: max |d|V|| = {np.max(np.abs(sol.v_mag - truth.v_mag)):.2e}")
