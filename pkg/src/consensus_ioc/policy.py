"""Non-parametric interaction policy u(s) and the edge weights it induces.

The policy lives on a uniform grid over [delta, Delta] and is read as the
continuous piecewise-linear interpolant of its node values. An edge at
distance ``alpha`` gets the weight

    w(alpha) = integral of u(s) over delta <= s < min(alpha, Delta)

which is evaluated exactly for the interpolant (composite trapezoid on the
full cells plus the exact partial cell ending at ``alpha``).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np

from .graph import Graph


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class SGrid:
    delta: float
    Delta: float
    num_points: int = 256

    def __post_init__(self):
        if not (0.0 <= self.delta < self.Delta < np.inf):
            raise PolicyError(f"need 0 <= delta < Delta < inf, got [{self.delta}, {self.Delta}]")
        if self.num_points < 2:
            raise PolicyError(f"need at least 2 grid points, got {self.num_points}")

    @property
    def spacing(self) -> float:
        return (self.Delta - self.delta) / (self.num_points - 1)

    @property
    def length(self) -> float:
        return self.Delta - self.delta

    @cached_property
    def nodes(self) -> np.ndarray:
        s = self.delta + self.spacing * np.arange(self.num_points)
        s[-1] = self.Delta
        return s

    @cached_property
    def quad_weights(self) -> np.ndarray:
        """Composite-trapezoid weights; these define the ds-weighted grid inner product."""
        q = np.full(self.num_points, self.spacing)
        q[0] = q[-1] = 0.5 * self.spacing
        return q

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.dot(self.quad_weights * a, b))

    def norm(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.inner(a, a)))


@dataclass(frozen=True, eq=False)
class PolicyGrid:
    grid: SGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != (self.grid.num_points,):
            raise PolicyError(f"policy has {v.shape} values, grid has {self.grid.num_points} nodes")
        if not np.all(np.isfinite(v)):
            raise PolicyError("policy values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Integral of u from delta up to each node."""
        v = self.values
        c = np.zeros_like(v)
        c[1:] = np.cumsum(0.5 * self.grid.spacing * (v[1:] + v[:-1]))
        return c

    def with_values(self, values: np.ndarray) -> "PolicyGrid":
        return PolicyGrid(self.grid, values)

    def __add__(self, other: "PolicyGrid") -> "PolicyGrid":
        return PolicyGrid(self.grid, self.values + other.values)

    def __rmul__(self, a: float) -> "PolicyGrid":
        return PolicyGrid(self.grid, a * self.values)


def sample_policy(grid: SGrid, fn: Callable[[np.ndarray], np.ndarray]) -> PolicyGrid:
    return PolicyGrid(grid, np.asarray(fn(grid.nodes), dtype=float) * np.ones(grid.num_points))


def quadratic_policy(grid: SGrid, separation: float, gain: float = 3.0) -> PolicyGrid:
    """gain * (s - separation)**2, the ground-truth policy of the formation case study."""
    return sample_policy(grid, lambda s: gain * (s - separation) ** 2)


def linear_policy(grid: SGrid, separation: float, gain: float = 3.0) -> PolicyGrid:
    """gain * (s - separation), the nominal policy of the formation case study."""
    return sample_policy(grid, lambda s: gain * (s - separation))


def constant_policy(grid: SGrid, c: float) -> PolicyGrid:
    return PolicyGrid(grid, np.full(grid.num_points, float(c)))


def eval_u(p: PolicyGrid, s):
    """Piecewise-linear interpolation, constant beyond the grid ends."""
    out = np.interp(s, p.grid.nodes, p.values)
    return float(out) if np.ndim(out) == 0 else out


def _locate(grid: SGrid, alpha: np.ndarray):
    """Cell index and fractional offset for each alpha, clipped to [delta, Delta]."""
    a = np.clip(alpha, grid.delta, grid.Delta)
    pos = (a - grid.delta) / grid.spacing
    idx = np.minimum(pos.astype(np.intp), grid.num_points - 2)
    frac = pos - idx
    return idx, frac


def weight(p: PolicyGrid, alpha):
    """Edge weight for separation ``alpha`` (scalar or array)."""
    a = np.asarray(alpha, dtype=float)
    if np.any(a < 0):
        raise PolicyError("distance alpha must be non-negative")
    grid = p.grid
    idx, frac = _locate(grid, a)
    u0 = p.values[idx]
    u1 = p.values[idx + 1]
    h = grid.spacing
    # exact integral of the linear piece over [s_idx, s_idx + frac*h]
    partial = h * frac * (u0 + 0.5 * frac * (u1 - u0))
    out = p.cumulative[idx] + partial
    return float(out) if out.ndim == 0 else out


def weight_slope(p: PolicyGrid, alpha: np.ndarray) -> np.ndarray:
    """d weight / d alpha: u(alpha) inside (delta, Delta), zero where the integral saturates."""
    a = np.asarray(alpha, dtype=float)
    inside = (a > p.grid.delta) & (a < p.grid.Delta)
    return np.where(inside, np.interp(a, p.grid.nodes, p.values), 0.0)


def weight_sensitivity(grid: SGrid, alpha: np.ndarray) -> np.ndarray:
    """Matrix S with S[k, q] = d weight(alpha_k) / d values[q].

    Since the weight is linear in the node values, ``S @ values`` reproduces
    ``weight(p, alpha)``. Rows are the quadrature weights of the nodes below
    ``alpha_k`` with the partial cell split between its two end nodes.
    """
    a = np.atleast_1d(np.asarray(alpha, dtype=float))
    idx, frac = _locate(grid, a)
    h = grid.spacing
    M = grid.num_points
    q = np.arange(M)
    below = q[None, :] <= idx[:, None]
    S = np.where(below, h, 0.0)
    S[:, 0] = np.where(idx > 0, 0.5 * h, 0.0)
    rows = np.arange(a.size)
    # node idx carries h/2 from the full cells to its left (h*0 for idx=0) plus its partial share
    S[rows, idx] = np.where(idx > 0, 0.5 * h, 0.0) + 0.5 * h * frac * (2.0 - frac)
    S[rows, idx + 1] += 0.5 * h * frac * frac
    return S


def edge_distances(x: np.ndarray, g: Graph) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (g.dim,):
        raise PolicyError(f"state has shape {x.shape}, expected ({g.dim},)")
    X = x.reshape(g.num_nodes, g.state_dim)
    return np.linalg.norm(X[g.heads] - X[g.tails], axis=1)


def edge_weights(p: PolicyGrid, x: np.ndarray, g: Graph) -> np.ndarray:
    if not g.num_edges:
        return np.zeros(0)
    return weight(p, edge_distances(x, g))
