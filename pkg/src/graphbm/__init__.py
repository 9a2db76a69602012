"""Brownian motions on metric graphs with Feller-Wentzell vertex conditions.

Modules: ``metric_graph`` (graphs and distances), ``calculus`` (functions,
vertex data, boundary conditions), ``bm1d`` (one-dimensional laws),
``resolvent`` (exact resolvent and exit-problem solver), ``simulator`` (exact
shell-kernel Monte Carlo), ``estimator`` (recovery of vertex data from exits)
and ``cli``.
"""

from .calculus import FWData, GraphData, GraphFunction, JumpMeasure, Density, parse_graph_data, revive_data
from .metric_graph import GraphValidationError, MetricGraph, distance, load_graph, parse_graph
from .resolvent import solve_resolvent

__version__ = "0.1.0"

__all__ = [
    "Density",
    "FWData",
    "GraphData",
    "GraphFunction",
    "GraphValidationError",
    "JumpMeasure",
    "MetricGraph",
    "distance",
    "load_graph",
    "parse_graph",
    "parse_graph_data",
    "revive_data",
    "solve_resolvent",
]
