"""
Noisy and frozen measurements
=============================

The online model only depends on the latest measurement, so a corrupted
window hurts while it lasts and is forgotten once clean data returns.
"""

import numpy as np

from gridlin import FailureModel, MeasurementModel, TimeSeries, build_network, run_timeseries
from gridlin.fixtures import synthetic_123

fx = synthetic_123()
net = build_network(fx.network)
ts = TimeSeries.from_records(net, fx.profile, fx.dt)
window = ((12, 16),)

runs = {
    "clean": run_timeseries(net, ts),
    "noise 1%": run_timeseries(net, ts, MeasurementModel(0.01, windows=window, seed=1)),
    "all frozen": run_timeseries(net, ts, fm=FailureModel(None, windows=window)),
    "bus 13 frozen": run_timeseries(net, ts, fm=FailureModel((13,), windows=window)),
}

steps = [s.step for s in runs["clean"].steps]
print("step " + "".join(f"{k:>15s}" for k in runs))
for i, t in enumerate(steps):
    print(f"{t:4d} " + "".join(f"{r.series('mape_v', 'online')[i]:15.4f}" for r in runs.values()))

# the lossless model ignores measurements and is the same in every run
lossless = runs["clean"].series("mape_v", "lossless")
print(f"lossless mean {lossless.mean():.4f}%")
