"""Adjoint-based recovery of the interaction policy from a demonstration.

The objective for a policy u on the s-grid is

    J(u) = int_t 1/2 |x - x_hat|^2 dt + int_s 1/2 (u - u_o)^2 ds
           + 1/2 |x(tf) - x_hat(tf)|^2

with x the RK4 rollout of the consensus dynamics from x_hat(t0). Both
integrals use the trapezoid rule on their grids. The co-state obeys

    d lambda/dt = (x - x_hat) - (df/dx)^T lambda,   lambda(tf) = -(x(tf) - x_hat(tf))

and the gradient of J in the ds-weighted grid inner product is

    J_u(s_q) = u(s_q) - u_o(s_q)
               + (1/omega_q) int_t sum_k lambda_i^T (x_i - x_j) dw_k/du_q dt

where ``dw_k/du_q`` equals omega_q for grid nodes strictly below the edge
distance and is split linearly inside the cell containing it.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .dynamics import (GoalSpec, SimulationError, Trajectory, goal_jacobian_blocks,
                       kernel_args, simulate)
from .graph import Graph
from .policy import PolicyGrid, SGrid, weight, weight_slope

log = logging.getLogger(__name__)

COINCIDENT_TOL = 1e-9

TERMINATIONS = ("gradient_tol", "max_iter", "line_search_fail")


class LineSearchError(RuntimeError):
    pass


class CoincidentAgentsWarning(RuntimeWarning):
    pass


@dataclass(eq=False)
class IocProblem:
    graph: Graph
    demo: Trajectory
    goal_spec: GoalSpec
    nominal: PolicyGrid
    regularization: float = 1.0

    def __post_init__(self):
        if self.demo.states.shape[1] != self.graph.dim:
            raise ValueError(f"demo state width {self.demo.states.shape[1]} != d*N = {self.graph.dim}")
        if self.goal_spec.goals.shape != (self.graph.num_nodes, self.graph.state_dim):
            raise ValueError("goal positions do not match the graph")
        if self.regularization <= 0:
            raise ValueError("regularization weight must be positive")

    @property
    def grid(self) -> SGrid:
        return self.nominal.grid

    @property
    def t0(self) -> float:
        return self.demo.t0

    @property
    def tf(self) -> float:
        return self.demo.tf

    @property
    def dt(self) -> float:
        return self.demo.dt

    def rollout(self, p: PolicyGrid) -> Trajectory:
        return simulate(self.demo.states[0], p, self.graph, self.goal_spec,
                        self.t0, self.tf, self.dt)


@dataclass(eq=False)
class CostateTrajectory:
    t0: float
    dt: float
    lambdas: np.ndarray  # (K+1, d*N), same time grid as the rollout


@dataclass(eq=False)
class SolveReport:
    learned: PolicyGrid
    cost_history: list = field(default_factory=list)
    grad_norm_history: list = field(default_factory=list)
    step_history: list = field(default_factory=list)
    iterations: int = 0
    termination: str = "max_iter"
    trajectory: Trajectory | None = None
    costate: CostateTrajectory | None = None

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "termination": self.termination,
            "initial_cost": self.cost_history[0] if self.cost_history else None,
            "final_cost": self.cost_history[-1] if self.cost_history else None,
            "final_grad_norm": self.grad_norm_history[-1] if self.grad_norm_history else None,
            "cost_history": list(self.cost_history),
            "grad_norm_history": list(self.grad_norm_history),
            "step_history": list(self.step_history),
        }


def _time_weights(n_samples: int, dt: float) -> np.ndarray:
    tw = np.full(n_samples, dt)
    tw[0] = tw[-1] = 0.5 * dt
    if n_samples == 1:
        tw[0] = 0.0
    return tw


def trajectory_cost(prob: IocProblem, traj: Trajectory) -> float:
    """Running plus terminal tracking cost of a rollout."""
    err = traj.states - prob.demo.states
    running = 0.5 * np.sum(err * err, axis=1)
    return float(np.dot(_time_weights(len(running), prob.dt), running) + running[-1])


def regularization_cost(prob: IocProblem, p: PolicyGrid) -> float:
    diff = p.values - prob.nominal.values
    return 0.5 * prob.regularization * prob.grid.inner(diff, diff)


def total_cost(prob: IocProblem, p: PolicyGrid, traj: Trajectory | None = None) -> float:
    if traj is None:
        traj = prob.rollout(p)
    return trajectory_cost(prob, traj) + regularization_cost(prob, p)


def dalpha_dx(x: np.ndarray, g: Graph) -> np.ndarray:
    """Jacobian of the edge distances, shape (m, d*N).

    Coincident endpoints get a zero row and a CoincidentAgentsWarning.
    """
    d = g.state_dim
    X = np.reshape(x, (g.num_nodes, d))
    z = X[g.heads] - X[g.tails]
    a = np.linalg.norm(z, axis=1)
    out = np.zeros((g.num_edges, g.dim))
    ok = a >= COINCIDENT_TOL
    if not np.all(ok):
        warnings.warn(f"edges {np.flatnonzero(~ok).tolist()} join coincident agents; "
                      "using a zero subgradient", CoincidentAgentsWarning, stacklevel=2)
    n = np.where(ok[:, None], z / np.where(ok, a, 1.0)[:, None], 0.0)
    for k in range(g.num_edges):
        i, j = g.heads[k], g.tails[k]
        out[k, i * d:(i + 1) * d] += n[k]
        out[k, j * d:(j + 1) * d] -= n[k]
    return out


def costate_rhs(lam: np.ndarray, x: np.ndarray, x_hat: np.ndarray, p: PolicyGrid,
                g: Graph, spec: GoalSpec) -> np.ndarray:
    """Time derivative of the co-state at one instant."""
    N, d = g.num_nodes, g.state_dim
    L = np.reshape(lam, (N, d))
    X = np.reshape(x, (N, d))
    J = goal_jacobian_blocks(x, spec)
    out = (np.asarray(x) - x_hat).reshape(N, d) - np.einsum("nji,nj->ni", J, L)
    if g.num_edges:
        z = X[g.heads] - X[g.tails]
        a = np.linalg.norm(z, axis=1)
        lam_head = L[g.heads]
        c = np.einsum("kd,kd->k", lam_head, z)
        ok = a >= COINCIDENT_TOL
        slope = np.where(ok, weight_slope(p, a) / np.where(ok, a, 1.0), 0.0)
        per_edge = weight(p, a)[:, None] * lam_head + (slope * c)[:, None] * z
        out += (g.head_matrix - g.tail_matrix) @ per_edge
    return out.reshape(-1)


def backward_pass(prob: IocProblem, p: PolicyGrid, fwd: Trajectory) -> CostateTrajectory:
    """RK4 integration of the co-state from tf back to t0.

    States at the RK4 half steps are linearly interpolated from the stored
    rollout and demonstration.
    """
    xs, xh = fwd.states, prob.demo.states
    if xs.shape != xh.shape:
        raise ValueError("rollout and demonstration are on different time grids")
    lams, failed = _kernels.costate_sweep(xs, xh, float(fwd.dt),
                                          *kernel_args(p, prob.graph, prob.goal_spec),
                                          COINCIDENT_TOL)
    if failed >= 0:
        raise SimulationError("co-state became non-finite", fwd.t0 + failed * fwd.dt)
    return CostateTrajectory(fwd.t0, fwd.dt, lams)


def gradient_Ju(prob: IocProblem, p: PolicyGrid, fwd: Trajectory,
                cst: CostateTrajectory) -> np.ndarray:
    """Gradient of ``total_cost`` w.r.t. the policy node values, ds-weighted."""
    g, grid = prob.graph, prob.grid
    grad = prob.regularization * (p.values - prob.nominal.values)
    if not g.num_edges:
        return grad
    inter = _kernels.interaction_gradient(fwd.states, cst.lambdas, float(fwd.dt), g.heads,
                                          g.tails, g.num_nodes, g.state_dim,
                                          float(grid.delta), float(grid.Delta),
                                          float(grid.spacing), grid.num_points)
    return grad + inter / grid.quad_weights


def grid_norm(prob: IocProblem, v: np.ndarray) -> float:
    return prob.grid.norm(v)


def _line_search(prob, p, grad, J_current, step0=1.0, beta=0.5, c=1e-4, max_backtracks=40):
    g2 = prob.grid.inner(grad, grad)
    if g2 == 0.0:
        return 0.0, p, J_current, None
    step = step0
    for _ in range(max_backtracks + 1):
        trial = p.with_values(p.values - step * grad)
        try:
            traj = prob.rollout(trial)
            J_trial = total_cost(prob, trial, traj)
        except SimulationError:
            J_trial = np.inf
        # the strict test matters once c*step*g2 falls below the rounding of J
        if J_trial <= J_current - c * step * g2 and J_trial < J_current:
            return step, trial, J_trial, traj
        step *= beta
    raise LineSearchError(f"no Armijo step found after {max_backtracks} backtracks "
                          f"(J={J_current:.6e}, |J_u|={np.sqrt(g2):.3e})")


def armijo_step(prob: IocProblem, p: PolicyGrid, direction: np.ndarray, J_current: float,
                step0: float = 1.0, beta: float = 0.5, c: float = 1e-4,
                max_backtracks: int = 40):
    """Backtracking along ``direction`` (the negative gradient).

    Returns ``(step, p_next, J_next)``; raises LineSearchError when no step
    ``step0 * beta**n`` with ``n <= max_backtracks`` gives sufficient decrease.
    """
    step, p_next, J_next, _ = _line_search(prob, p, -np.asarray(direction), J_current,
                                           step0, beta, c, max_backtracks)
    return step, p_next, J_next


def learn(prob: IocProblem, u_init: PolicyGrid | None = None, max_iter: int = 500,
          grad_tol: float = 1e-6, step0: float = 1.0, beta: float = 0.5, c: float = 1e-4,
          max_backtracks: int = 40, callback=None) -> SolveReport:
    """Gradient descent with Armijo backtracking on the policy grid values."""
    p = prob.nominal if u_init is None else u_init
    if p.grid != prob.grid:
        raise ValueError("initial policy is not on the problem grid")
    report = SolveReport(learned=p)
    fwd = prob.rollout(p)
    J = total_cost(prob, p, fwd)
    while True:
        cst = backward_pass(prob, p, fwd)
        grad = gradient_Ju(prob, p, fwd, cst)
        gnorm = prob.grid.norm(grad)
        report.cost_history.append(J)
        report.grad_norm_history.append(gnorm)
        report.learned, report.trajectory, report.costate = p, fwd, cst
        if callback is not None:
            callback(report.iterations, J, gnorm)
        log.debug("iter %d  J=%.10e  |J_u|=%.3e", report.iterations, J, gnorm)
        if gnorm <= grad_tol:
            report.termination = "gradient_tol"
            break
        if report.iterations >= max_iter:
            report.termination = "max_iter"
            break
        try:
            step, p, J, fwd = _line_search(prob, p, grad, J, step0, beta, c, max_backtracks)
        except LineSearchError as exc:
            log.warning("%s", exc)
            report.termination = "line_search_fail"
            break
        report.step_history.append(step)
        report.iterations += 1
    return report


def hessian_check(prob: IocProblem, p: PolicyGrid) -> float:
    """Smallest second derivative of the Hamiltonian in u(s) over the grid.

    The running cost contributes regularization/(tf - t0) at every node and
    the dynamics contribute nothing because they are linear in u, so the
    value does not depend on ``p``.
    """
    curvature_cost = np.full(prob.grid.num_points, prob.regularization / (prob.tf - prob.t0))
    curvature_dynamics = np.zeros(prob.grid.num_points)
    return float(np.min(curvature_cost + curvature_dynamics))
