"""Command-line experiment harness: ``demo``, ``learn``, ``eval`` and ``all``.

Exit codes: 0 success, 2 config error, 3 numeric failure (blow-up or line
search), 4 I/O error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, ExperimentConfig, load_config
from .dynamics import CaseStudy, SimulationError, Trajectory, generate_demo, simulate
from .ioc import IocProblem, SolveReport, learn, total_cost
from .policy import PolicyGrid, edge_distances, edge_weights

log = logging.getLogger("consensus_ioc")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

DEMO_TRAJECTORY = "demo_trajectory.csv"
TRUE_WEIGHTS = "true_weights.csv"
CONFIG_ECHO = "config_resolved.json"
REPORT = "report.json"
LEARNED_POLICY = "policy_learned.csv"
LEARNED_WEIGHTS = "learned_weights.csv"
LEARNED_TRAJECTORY = "learned_trajectory.csv"
COSTATE = "costate.csv"
COST_HISTORY = "cost_history.csv"
METRICS = "metrics.json"
COMPARE_POLICY = "compare_policy.csv"
COMPARE_WEIGHTS = "compare_weights.csv"
COMPARE_TRAJECTORY = "compare_trajectory.csv"


@dataclass
class Metrics:
    traj_mse: float
    weight_mse: float
    policy_rmse_visited: float
    final_cost: float
    visited_min: float
    visited_max: float
    visited_nodes: int


def weight_series(p: PolicyGrid, traj: Trajectory, cfg: ExperimentConfig) -> np.ndarray:
    """Per-edge weights along a trajectory, shape (K+1, m)."""
    g = cfg.graph
    return np.array([edge_weights(p, x, g) for x in traj.states]).reshape(len(traj.states), g.num_edges)


def visited_range(traj: Trajectory, cfg: ExperimentConfig) -> tuple[float, float]:
    g = cfg.graph
    if not g.num_edges:
        return 0.0, 0.0
    a = np.array([edge_distances(x, g) for x in traj.states])
    return float(a.min()), float(a.max())


def _write_weights(path, times, W, m):
    names = [f"w{k}" for k in range(1, m + 1)]
    if m == 0:
        io.write_table(path, ["t"], [])
    else:
        io.save_series(path, times, W, names)


def _load_demo(cfg: ExperimentConfig, out: Path) -> Trajectory:
    g = cfg.graph
    demo = io.load_trajectory(out / DEMO_TRAJECTORY, g.num_nodes, g.state_dim, dt=cfg.dt)
    if abs(demo.t0 - cfg.t0) > 1e-9 or abs(demo.tf - cfg.tf) > 1e-9 * max(1.0, abs(cfg.tf)):
        raise ConfigError(f"demo covers [{demo.t0}, {demo.tf}] but the config horizon is "
                          f"[{cfg.t0}, {cfg.tf}]")
    return demo


def run_demo(cfg: ExperimentConfig, out: Path) -> Trajectory:
    out.mkdir(parents=True, exist_ok=True)
    g = cfg.graph
    true_policy = cfg.policy(cfg.true_policy)
    case = CaseStudy(g, cfg.x0.reshape(-1), cfg.goals, true_policy, cfg.goal_spec.gain_k,
                     cfg.goal_spec.epsilon, cfg.goal_spec.activation, cfg.t0, cfg.tf, cfg.dt)
    demo = generate_demo(case)
    io.save_trajectory(out / DEMO_TRAJECTORY, demo, g.num_nodes, g.state_dim)
    _write_weights(out / TRUE_WEIGHTS, demo.times, weight_series(true_policy, demo, cfg), g.num_edges)
    io.write_json(out / CONFIG_ECHO, cfg.resolved())
    log.info("demo: %d agents, %d edges, %d steps -> %s", g.num_nodes, g.num_edges,
             demo.num_steps, out)
    return demo


def run_learn(cfg: ExperimentConfig, out: Path) -> SolveReport:
    g = cfg.graph
    demo = _load_demo(cfg, out)
    nominal = cfg.policy(cfg.nominal_policy)
    prob = IocProblem(g, demo, cfg.goal_spec, nominal)
    arm = cfg.solver["armijo"]

    def progress(it, J, gnorm):
        log.debug("iter %4d  J=%.10e  |J_u|=%.3e", it, J, gnorm)

    report = learn(prob, nominal, max_iter=int(cfg.solver["max_iter"]),
                   grad_tol=float(cfg.solver["grad_tol"]), step0=float(arm["step0"]),
                   beta=float(arm["beta"]), c=float(arm["c"]),
                   max_backtracks=int(arm["max_backtracks"]), callback=progress)
    fwd, cst = report.trajectory, report.costate
    io.save_policy(out / LEARNED_POLICY, report.learned)
    _write_weights(out / LEARNED_WEIGHTS, fwd.times, weight_series(report.learned, fwd, cfg),
                   g.num_edges)
    io.save_trajectory(out / LEARNED_TRAJECTORY, fwd, g.num_nodes, g.state_dim)
    io.save_series(out / COSTATE, cst.t0 + cst.dt * np.arange(len(cst.lambdas)), cst.lambdas,
                   ["lam" + h[1:] for h in io.state_header(g.num_nodes, g.state_dim)])
    steps = [0.0] + list(report.step_history)
    io.write_table(out / COST_HISTORY, ["iteration", "cost", "grad_norm", "step"],
                   [(i, J, gn, st) for i, (J, gn, st) in
                    enumerate(zip(report.cost_history, report.grad_norm_history, steps))])
    io.write_json(out / REPORT, {**report.to_dict(), "policy_file": LEARNED_POLICY})
    log.info("learn: %s after %d iterations, J %.6e -> %.6e", report.termination,
             report.iterations, report.cost_history[0], report.cost_history[-1])
    return report


def compute_metrics(cfg: ExperimentConfig, demo: Trajectory, learned: PolicyGrid):
    """Metrics plus the rollout under ``learned`` and both weight series."""
    g = cfg.graph
    true_policy = cfg.policy(cfg.true_policy)
    fwd = simulate(demo.states[0], learned, g, cfg.goal_spec, demo.t0, demo.tf, demo.dt)
    W_learned = weight_series(learned, fwd, cfg)
    W_true = weight_series(true_policy, demo, cfg)
    lo, hi = visited_range(demo, cfg)
    nodes = cfg.grid.nodes
    inside = (nodes >= lo) & (nodes <= hi)
    diff = (learned.values - true_policy.values)[inside]
    prob = IocProblem(g, demo, cfg.goal_spec, cfg.policy(cfg.nominal_policy))
    metrics = Metrics(
        traj_mse=float(np.mean((fwd.states - demo.states) ** 2)),
        weight_mse=float(np.mean((W_learned - W_true) ** 2)) if g.num_edges else 0.0,
        policy_rmse_visited=float(np.sqrt(np.mean(diff ** 2))) if diff.size else 0.0,
        final_cost=total_cost(prob, learned, fwd),
        visited_min=lo, visited_max=hi, visited_nodes=int(inside.sum()),
    )
    return metrics, fwd, W_learned, W_true


def run_eval(cfg: ExperimentConfig, out: Path) -> Metrics:
    g = cfg.graph
    demo = _load_demo(cfg, out)
    learned = io.load_policy(out / LEARNED_POLICY)
    if learned.grid != cfg.grid:
        raise ConfigError(f"{LEARNED_POLICY} is on grid {learned.grid}, config grid is {cfg.grid}")
    true_policy = cfg.policy(cfg.true_policy)
    nominal = cfg.policy(cfg.nominal_policy)
    metrics, fwd, W_learned, W_true = compute_metrics(cfg, demo, learned)
    io.write_table(out / COMPARE_POLICY, ["s", "u_learned", "u_true", "u_nominal"],
                   np.column_stack([cfg.grid.nodes, learned.values, true_policy.values,
                                    nominal.values]))
    m = g.num_edges
    io.save_series(out / COMPARE_WEIGHTS, demo.times, np.hstack([W_learned, W_true]),
                   [f"w{k}_learned" for k in range(1, m + 1)] + [f"w{k}_true" for k in range(1, m + 1)])
    names = io.state_header(g.num_nodes, g.state_dim)
    io.save_series(out / COMPARE_TRAJECTORY, demo.times, np.hstack([fwd.states, demo.states]),
                   [n + "_learned" for n in names] + [n + "_true" for n in names])
    io.write_json(out / METRICS, asdict(metrics))
    log.info("eval: %s", asdict(metrics))
    return metrics


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consensus-ioc",
        description="Learn state-dependent consensus edge weights from a demonstration.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in (("demo", "generate the demonstration trajectory"),
                        ("learn", "recover the interaction policy from the demonstration"),
                        ("eval", "compare the learned policy against the ground truth"),
                        ("all", "demo, learn and eval in sequence")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", type=Path, default=None,
                       help="JSON experiment config (default: built-in case study)")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--seed", type=int, default=None,
                       help="override the position seed (forces random positions)")
        p.add_argument("-v", "--verbose", action="count", default=0)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, seed=args.seed,
                          output_dir=None if args.out is None else str(args.out))
        out = cfg.output_dir
        code = EXIT_OK
        if args.command in ("demo", "all"):
            run_demo(cfg, out)
        if args.command in ("learn", "all"):
            report = run_learn(cfg, out)
            print(f"learn: {report.termination} after {report.iterations} iterations, "
                  f"cost {report.cost_history[0]:.6e} -> {report.cost_history[-1]:.6e}")
            if report.termination == "line_search_fail":
                code = EXIT_NUMERIC
        if args.command in ("eval", "all"):
            metrics = run_eval(cfg, out)
            print("eval: " + ", ".join(f"{k}={v:.6g}" for k, v in asdict(metrics).items()))
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (io.DataFileError, OSError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
