"""Unbalanced three-phase distribution power flow with an online linear model.

The exact branch-flow solver (:func:`solve_exact`) provides operating points;
:func:`build_model` linearizes the branch-flow equations around a measured
point, or returns the lossless LinDistFlow model when no point is given;
:func:`solve_linear` evaluates either model for new loads.
"""

from .errors import *  # noqa: F401,F403
from .linearizer import (
    CompactModel,
    LinearSolution,
    assemble_compact,
    build_model,
    lindistflow_params,
    modified_impedances,
    nonlinear_terms,
    sensitivity_blocks,
    solve_linear,
    update_parameters,
    voltage_sensitivity,
)
from .loads import Loads, delta_matrix, delta_transform, loads_from_spec, net_injection
from .network import Network, build_network, descendants, incidence_blocks
from .powerflow import OperatingPoint, SweepOptions, branch_flows_from_voltages, residual, solve_exact
from .simulation import FailureModel, MeasurementModel, TimeSeries, mape, run_timeseries
from .vvc import PvFleet, VvcConfig, run_vvc_offline, run_vvc_online, vvc_step

__version__ = "0.1.0"
