"""Learning vector fields of dynamical systems on networks from irregular samples.

The main objects are:

- ``Network`` and its generators (``netflow_id.graph``)
- ground-truth fields ``heat``, ``biochemical``, ``birthdeath`` (``netflow_id.dynamics``)
- ``solve_rkf45`` and the differentiable RK4 rollout (``netflow_id.integrate``)
- ``DnndModel``, the additive node/edge model, and ``train_dnnd`` (``netflow_id.dnnd``)
- ``NdcnModel``, the encoder/latent/decoder baseline (``netflow_id.ndcn``)
- extrapolation, Lyapunov and flow-consistency checks (``netflow_id.evaluate``)
"""

from .dnnd import DnndModel, TrainConfig, WarmupSchedule, train_dnnd
from .dynamics import make_field
from .errors import (ConfigError, DivergenceError, GraphFormatError, NetflowError, SolverError,
                     StepBudgetError, StiffnessError, TrainingError)
from .graph import Network, generate_ba, generate_er, generate_grid, generate_ws, laplacian, load_edge_list
from .integrate import SolverConfig, TimeSeries, solve_rk4_grid, solve_rkf45
from .ndcn import NdcnModel, train_ndcn

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DivergenceError",
    "DnndModel",
    "GraphFormatError",
    "NdcnModel",
    "NetflowError",
    "Network",
    "SolverConfig",
    "SolverError",
    "StepBudgetError",
    "StiffnessError",
    "TimeSeries",
    "TrainConfig",
    "TrainingError",
    "WarmupSchedule",
    "generate_ba",
    "generate_er",
    "generate_grid",
    "generate_ws",
    "laplacian",
    "load_edge_list",
    "make_field",
    "solve_rk4_grid",
    "solve_rkf45",
    "train_dnnd",
    "train_ndcn",
]
