"""Experiment configuration: a single JSON document, validated into dataclasses.

Unspecified fields fall back to the 8-agent formation case study. Example::

    {
      "graph": {"num_nodes": 8, "state_dim": 2,
                "edges": [[1, 3], [2, 5], [3, 8], [4, 5], [4, 6], [6, 7], [7, 8]]},
      "horizon": {"t0": 0.0, "tf": 10.0, "dt": 0.01},
      "s_grid": {"delta": 0.15, "Delta": 3.02, "num_points": 256},
      "separation": 0.3,
      "goal": {"gain_k": 1.0, "epsilon": null, "activation": "always"},
      "true_policy": "quadratic_3(s-d)^2",
      "nominal_policy": "linear_3(s-d)",
      "positions": {"mode": "random", "seed": 0, "low": -2.0, "high": 2.0},
      "solver": {"max_iter": 500, "grad_tol": 1e-6,
                 "armijo": {"step0": 1.0, "beta": 0.5, "c": 1e-4, "max_backtracks": 40}},
      "output_dir": "runs/case_study"
    }

Policy specs are ``quadratic_3(s-d)^2``, ``linear_3(s-d)``, ``constant:<c>``
or a path to an ``s,u`` CSV (relative paths resolve against the config file).
"""
from __future__ import annotations

import copy
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dynamics import ACTIVATION_MODES, GoalSpec, step_count
from .graph import Graph, GraphError, build_graph
from .policy import PolicyError, PolicyGrid, SGrid, constant_policy, linear_policy, quadratic_policy

CASE_STUDY_EDGES = [[1, 3], [2, 5], [3, 8], [4, 5], [4, 6], [6, 7], [7, 8]]

DEFAULTS = {
    "graph": {"num_nodes": 8, "state_dim": 2, "edges": CASE_STUDY_EDGES},
    "horizon": {"t0": 0.0, "tf": 10.0, "dt": 0.01},
    "s_grid": {"delta": 0.15, "Delta": 3.02, "num_points": 256},
    "separation": 0.3,
    "goal": {"gain_k": 1.0, "epsilon": None, "activation": "always"},
    "true_policy": "quadratic_3(s-d)^2",
    "nominal_policy": "linear_3(s-d)",
    "positions": {"mode": "random", "seed": 0, "low": -2.0, "high": 2.0},
    "solver": {
        "max_iter": 500,
        "grad_tol": 1e-6,
        "armijo": {"step0": 1.0, "beta": 0.5, "c": 1e-4, "max_backtracks": 40},
    },
    "output_dir": "runs/case_study",
}


class ConfigError(ValueError):
    pass


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in override.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


@dataclass
class ExperimentConfig:
    raw: dict
    base_dir: Path
    graph: Graph
    grid: SGrid
    t0: float
    tf: float
    dt: float
    separation: float
    goal: dict
    true_policy: str
    nominal_policy: str
    x0: np.ndarray      # (N, d)
    goals: np.ndarray   # (N, d)
    solver: dict
    output_dir: Path

    @property
    def goal_spec(self) -> GoalSpec:
        eps = self.goal["epsilon"]
        return GoalSpec(self.goals, float(self.goal["gain_k"]),
                        math.inf if eps is None else float(eps), self.goal["activation"])

    def policy(self, spec: str) -> PolicyGrid:
        return make_policy(spec, self.grid, self.separation, self.base_dir)

    def resolved(self) -> dict:
        """The configuration with defaults filled in and positions made explicit.

        The output directory is left out so that the echo written into a run
        directory does not depend on where that directory lives.
        """
        out = copy.deepcopy(self.raw)
        out["positions"] = {"mode": "explicit", "initial": self.x0.tolist(),
                            "goals": self.goals.tolist()}
        if self.raw["positions"].get("mode") == "random":
            out["positions"]["seed"] = self.raw["positions"]["seed"]
        out.pop("output_dir", None)
        return out


def make_policy(spec: str, grid: SGrid, separation: float, base_dir: Path = Path(".")) -> PolicyGrid:
    if not isinstance(spec, str):
        raise ConfigError(f"policy spec must be a string, got {spec!r}")
    if spec == "quadratic_3(s-d)^2":
        return quadratic_policy(grid, separation)
    if spec == "linear_3(s-d)":
        return linear_policy(grid, separation)
    if spec.startswith("constant:"):
        try:
            return constant_policy(grid, float(spec.split(":", 1)[1]))
        except ValueError:
            raise ConfigError(f"bad constant policy {spec!r}") from None
    from .io import load_policy

    path = Path(spec)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"unknown policy spec {spec!r} (not a preset and no such file)")
    return load_policy(path, grid)


def _positions(pos: dict, n: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    mode = pos.get("mode", "random")
    if mode == "random":
        if pos.get("seed") is None:
            raise ConfigError("positions.seed is required when positions.mode is 'random'")
        low, high = float(pos.get("low", -2.0)), float(pos.get("high", 2.0))
        if not low < high:
            raise ConfigError("positions.low must be below positions.high")
        rng = np.random.default_rng(int(pos["seed"]))
        x0 = rng.uniform(low, high, size=(n, d))
        goals = rng.uniform(low, high, size=(n, d))
        return x0, goals
    if mode == "explicit":
        try:
            x0 = np.array(pos["initial"], dtype=float)
            goals = np.array(pos["goals"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"explicit positions need numeric 'initial' and 'goals': {exc}") from None
        for name, arr in (("initial", x0), ("goals", goals)):
            if arr.shape != (n, d):
                raise ConfigError(f"positions.{name} has shape {arr.shape}, expected {(n, d)}")
            if not np.all(np.isfinite(arr)):
                raise ConfigError(f"positions.{name} has non-finite entries")
        return x0, goals
    raise ConfigError(f"positions.mode must be 'random' or 'explicit', got {mode!r}")


def from_dict(data: dict, base_dir: Path | str = ".", seed: int | None = None,
              output_dir: str | None = None) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(DEFAULTS)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw = _merge(DEFAULTS, data)
    if seed is not None:
        raw["positions"] = {**raw["positions"], "mode": "random", "seed": int(seed)}
    if output_dir is not None:
        raw["output_dir"] = str(output_dir)
    try:
        gs = raw["graph"]
        graph = build_graph(gs["num_nodes"], gs["edges"], gs["state_dim"])
        sg = raw["s_grid"]
        grid = SGrid(float(sg["delta"]), float(sg["Delta"]), int(sg["num_points"]))
        hz = raw["horizon"]
        t0, tf, dt = float(hz["t0"]), float(hz["tf"]), float(hz["dt"])
        step_count(t0, tf, dt)
        goal = raw["goal"]
        if goal["activation"] not in ACTIVATION_MODES:
            raise ConfigError(f"goal.activation must be one of {ACTIVATION_MODES}")
        if float(goal["gain_k"]) < 0:
            raise ConfigError("goal.gain_k must be non-negative")
        if goal["epsilon"] is not None and not float(goal["epsilon"]) > 0:
            raise ConfigError("goal.epsilon must be positive")
        x0, goals = _positions(raw["positions"], graph.num_nodes, graph.state_dim)
        solver = raw["solver"]
        if int(solver["max_iter"]) < 0 or float(solver["grad_tol"]) < 0:
            raise ConfigError("solver.max_iter and solver.grad_tol must be non-negative")
        arm = solver["armijo"]
        if not (float(arm["step0"]) > 0 and 0 < float(arm["beta"]) < 1 and 0 < float(arm["c"]) < 1):
            raise ConfigError("armijo needs step0 > 0, 0 < beta < 1, 0 < c < 1")
        cfg = ExperimentConfig(
            raw=raw, base_dir=Path(base_dir), graph=graph, grid=grid, t0=t0, tf=tf, dt=dt,
            separation=float(raw["separation"]), goal=goal,
            true_policy=raw["true_policy"], nominal_policy=raw["nominal_policy"],
            x0=x0, goals=goals, solver=solver, output_dir=Path(raw["output_dir"]),
        )
        # fail early on goal or policy problems rather than mid-run
        cfg.goal_spec
        for spec in (cfg.true_policy, cfg.nominal_policy):
            cfg.policy(spec)
    except ConfigError:
        raise
    except (GraphError, PolicyError) as exc:
        raise ConfigError(str(exc)) from None
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    return cfg


def load_config(path: str | Path | None, seed: int | None = None,
                output_dir: str | None = None) -> ExperimentConfig:
    """Read a config file; ``None`` gives the built-in case-study defaults."""
    if path is None:
        return from_dict({}, seed=seed, output_dir=output_dir)
    from .io import DataFileError, read_json

    path = Path(path)
    if not path.is_file():
        raise DataFileError(f"{path}: config file not found")
    try:
        data = read_json(path)
    except DataFileError as exc:
        raise ConfigError(str(exc)) from None
    return from_dict(data, base_dir=path.parent, seed=seed, output_dir=output_dir)
