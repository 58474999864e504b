"""Learning state-dependent consensus edge weights from demonstrations."""
from .dynamics import CaseStudy, GoalSpec, SimulationError, Trajectory, drift, generate_demo, simulate
from .graph import Graph, build_graph, in_laplacian, incidence
from .ioc import (IocProblem, LineSearchError, SolveReport, armijo_step, backward_pass,
                  gradient_Ju, hessian_check, learn, total_cost)
from .policy import PolicyGrid, SGrid, edge_distances, edge_weights, eval_u, weight

__version__ = "0.1.0"

__all__ = [
    "CaseStudy", "GoalSpec", "SimulationError", "Trajectory", "drift", "generate_demo",
    "simulate", "Graph", "build_graph", "in_laplacian", "incidence", "IocProblem",
    "LineSearchError", "SolveReport", "armijo_step", "backward_pass", "gradient_Ju",
    "hessian_check", "learn", "total_cost", "PolicyGrid", "SGrid", "edge_distances",
    "edge_weights", "eval_u", "weight",
]
