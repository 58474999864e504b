"""Weighted-consensus ensemble dynamics with a saturated goal controller.

State vectors are flat arrays of length d*N, agent-major
(``x = [x_1; x_2; ...; x_N]``). Internally they are reshaped to (N, d).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import Graph, apply_in_laplacian, incidence, in_laplacian
from .policy import PolicyGrid, edge_weights, weight

ACTIVATION_MODES = ("always", "literal")


class SimulationError(ArithmeticError):
    """Raised when an integration produces non-finite values."""

    def __init__(self, message: str, time: float):
        super().__init__(f"{message} at t={time:.6g}")
        self.time = time


@dataclass(frozen=True, eq=False)
class GoalSpec:
    """Per-agent goal positions plus the regulator constants.

    ``gain_k == 0`` disables goal control entirely. With ``activation="literal"``
    an agent is driven only while ``|x_g - x|**3 < epsilon``; the default
    ``"always"`` mode ignores epsilon.
    """

    goals: np.ndarray  # (N, d)
    gain_k: float = 1.0
    epsilon: float = math.inf
    activation: str = "always"

    def __post_init__(self):
        goals = np.array(self.goals, dtype=float)
        if goals.ndim != 2:
            raise ValueError(f"goals must be an (N, d) array, got shape {goals.shape}")
        object.__setattr__(self, "goals", goals)
        if self.gain_k < 0:
            raise ValueError(f"gain_k must be >= 0, got {self.gain_k}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be > 0, got {self.epsilon}")
        if self.activation not in ACTIVATION_MODES:
            raise ValueError(f"activation must be one of {ACTIVATION_MODES}, got {self.activation!r}")


@dataclass(eq=False)
class Trajectory:
    t0: float
    dt: float
    states: np.ndarray  # (K+1, d*N)

    def __post_init__(self):
        self.states = np.ascontiguousarray(np.atleast_2d(np.asarray(self.states, dtype=float)))
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def num_steps(self) -> int:
        return self.states.shape[0] - 1

    @property
    def tf(self) -> float:
        return self.t0 + self.num_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.num_steps + 1)


def step_count(t0: float, tf: float, dt: float) -> int:
    """Number of uniform steps covering [t0, tf]; rejects non-integral ratios."""
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    ratio = (tf - t0) / dt
    n = round(ratio)
    if n < 0 or abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise ValueError(f"(tf - t0)/dt = {ratio} is not a non-negative integer")
    return int(n)


def _goal_terms(x: np.ndarray, spec: GoalSpec):
    """Offsets to goal, their norms and the active mask, all per agent."""
    num_nodes = spec.goals.shape[0]
    err = spec.goals - np.reshape(x, spec.goals.shape)
    r = np.linalg.norm(err, axis=1)
    if spec.activation == "literal":
        active = r**3 < spec.epsilon
    else:
        active = np.ones(num_nodes, dtype=bool)
    return err, r, active


def goal_control(x: np.ndarray, spec: GoalSpec) -> np.ndarray:
    """Soft-saturated proportional regulator k*tanh(r/k) * e/r per agent, e = x_goal - x."""
    if spec.gain_k == 0:
        return np.zeros_like(x)
    k = spec.gain_k
    err, r, active = _goal_terms(x, spec)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(r > 0, k * np.tanh(r / k) / r, 1.0)
    scale = np.where(active, scale, 0.0)
    return (scale[:, None] * err).reshape(-1)


def goal_jacobian_blocks(x: np.ndarray, spec: GoalSpec) -> np.ndarray:
    """Diagonal blocks d h_i / d x_i, shape (N, d, d).

    Active agents get ``-(a I + b n n^T)`` with ``a = k tanh(r/k)/r``,
    ``b = sech^2(r/k) - a`` and ``n = e/r``; the sign comes from e = x_goal - x.
    At r = 0 this tends to ``-I``. Inactive agents (literal mode only) get
    ``-I`` as well, mirroring the published branch even though h is zero there.
    """
    num_nodes, d = spec.goals.shape
    eye = np.eye(d)
    if spec.gain_k == 0:
        return np.zeros((num_nodes, d, d))
    k = spec.gain_k
    err, r, active = _goal_terms(x, spec)
    small = r < 1e-8
    rs = np.where(small, 1.0, r)
    a = np.where(small, 1.0, k * np.tanh(rs / k) / rs)
    b = np.where(small, 0.0, 1.0 / np.cosh(rs / k) ** 2 - a)
    n = err / rs[:, None]
    blocks = -(a[:, None, None] * eye + b[:, None, None] * n[:, :, None] * n[:, None, :])
    blocks[~active] = -eye
    return blocks


def goal_control_jacobian(x: np.ndarray, spec: GoalSpec) -> np.ndarray:
    """Dense block-diagonal d h / d x of size (d*N, d*N)."""
    blocks = goal_jacobian_blocks(x, spec)
    N, d, _ = blocks.shape
    J = np.zeros((N * d, N * d))
    for i in range(N):
        J[i * d:(i + 1) * d, i * d:(i + 1) * d] = blocks[i]
    return J


def drift(x: np.ndarray, p: PolicyGrid, g: Graph, spec: GoalSpec) -> np.ndarray:
    """Ensemble vector field h(x) - (L_in(w(alpha(x))) kron I_d) x."""
    w = edge_weights(p, x, g)
    return goal_control(x, spec) - apply_in_laplacian(g, w, x)


# The three forms below are written for cross-checking the production drift,
# not for speed.

def drift_node_form(x: np.ndarray, p: PolicyGrid, g: Graph, spec: GoalSpec) -> np.ndarray:
    """Per-agent sum: h_i + sum over edges (j, i) of w_k (x_j - x_i)."""
    X = np.asarray(x, dtype=float).reshape(g.num_nodes, g.state_dim)
    out = goal_control(x, spec).reshape(X.shape).copy()
    for (j, i) in g.edges:
        a = float(np.linalg.norm(X[i - 1] - X[j - 1]))
        out[i - 1] += weight(p, a) * (X[j - 1] - X[i - 1])
    return out.reshape(-1)


def drift_laplacian_form(x: np.ndarray, p: PolicyGrid, g: Graph, spec: GoalSpec) -> np.ndarray:
    """Explicit Kronecker form with materialized (L_in kron I_d)."""
    L = in_laplacian(g, edge_weights(p, x, g))
    return goal_control(x, spec) - np.kron(L, np.eye(g.state_dim)) @ x


def drift_hadamard_form(x: np.ndarray, p: PolicyGrid, g: Graph, spec: GoalSpec) -> np.ndarray:
    """Interchanged-diagonal form D_in_blk diag(D_blk^T x) (w kron 1_d)."""
    inc = incidence(g)
    I = np.eye(g.state_dim)
    Dblk = np.kron(inc.D, I)
    Din_blk = np.kron(inc.D_in, I)
    w = edge_weights(p, x, g)
    inter = Din_blk @ np.diag(Dblk.T @ x) @ np.kron(w, np.ones(g.state_dim))
    return goal_control(x, spec) - inter


def drift_scalar_form(x: np.ndarray, p: PolicyGrid, g: Graph, spec: GoalSpec) -> np.ndarray:
    """d = 1 form D_in diag(D^T x) w."""
    if g.state_dim != 1:
        raise ValueError("scalar form requires state_dim == 1")
    inc = incidence(g)
    w = edge_weights(p, x, g)
    return goal_control(x, spec) - inc.D_in @ np.diag(inc.D.T @ x) @ w


def rk4_step(f, x: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(x)
    k2 = f(x + 0.5 * dt * k1)
    k3 = f(x + 0.5 * dt * k2)
    k4 = f(x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def kernel_args(p: PolicyGrid, g: Graph, spec: GoalSpec) -> tuple:
    """Flattened arguments shared by the compiled kernels."""
    grid = p.grid
    return (g.heads, g.tails, float(grid.delta), float(grid.Delta), float(grid.spacing),
            p.values, p.cumulative, spec.goals, float(spec.gain_k), float(spec.epsilon),
            spec.activation == "literal")


def simulate(x0: np.ndarray, p: PolicyGrid, g: Graph, spec: GoalSpec,
             t0: float, tf: float, dt: float) -> Trajectory:
    """Fixed-step RK4 rollout from ``x0`` over [t0, tf]."""
    n = step_count(t0, tf, dt)
    x = np.array(x0, dtype=float)
    if x.shape != (g.dim,):
        raise ValueError(f"x0 has shape {x.shape}, expected ({g.dim},)")
    if spec.goals.shape != (g.num_nodes, g.state_dim):
        raise ValueError(f"goals have shape {spec.goals.shape}, expected {(g.num_nodes, g.state_dim)}")
    states, failed = _kernels.rollout(x, n, float(dt), *kernel_args(p, g, spec))
    if failed >= 0:
        raise SimulationError("state became non-finite", t0 + failed * dt)
    return Trajectory(t0, dt, states)


@dataclass
class CaseStudy:
    """Parameters of a demonstration run; defaults follow the 8-agent formation example."""

    graph: Graph
    x0: np.ndarray
    goals: np.ndarray
    true_policy: PolicyGrid
    gain_k: float = 1.0
    epsilon: float = math.inf
    activation: str = "always"
    t0: float = 0.0
    tf: float = 10.0
    dt: float = 0.01

    @property
    def goal_spec(self) -> GoalSpec:
        return GoalSpec(self.goals, self.gain_k, self.epsilon, self.activation)


def generate_demo(case: CaseStudy) -> Trajectory:
    return simulate(case.x0, case.true_policy, case.graph, case.goal_spec,
                    case.t0, case.tf, case.dt)
