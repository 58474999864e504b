"""Acceptance suite. Each criterion prints one PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or directly with ``python tests/test_acceptance.py``.
"""
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from conftest import CASE_EDGES, random_instance  # noqa: E402

from consensus_ioc import cli, ioc  # noqa: E402
from consensus_ioc.config import from_dict  # noqa: E402
from consensus_ioc.dynamics import (GoalSpec, drift, drift_hadamard_form,  # noqa: E402
                                    drift_laplacian_form, drift_node_form, drift_scalar_form,
                                    simulate)
from consensus_ioc.graph import build_graph  # noqa: E402
from consensus_ioc.policy import PolicyGrid, SGrid, constant_policy, linear_policy  # noqa: E402

RESULTS = []


def record(label, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


# ---------------------------------------------------------------- 1

def test_criterion_1_gradient_oracle():
    rng = np.random.default_rng(2024)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        tf = float(rng.choice([0.5, 1.0, 1.5, 2.0]))
        M = int(rng.choice([16, 32, 48, 64]))
        prob = random_instance(rng, tf=tf, dt=0.001, M=M)
        p = prob.nominal.with_values(prob.nominal.values + 0.3 * rng.normal(size=M))
        fwd = prob.rollout(p)
        grad = ioc.gradient_Ju(prob, p, fwd, ioc.backward_pass(prob, p, fwd))
        for _ in range(10):
            mu = rng.normal(size=M)
            eps = 1e-5
            fd = (ioc.total_cost(prob, p.with_values(p.values + eps * mu))
                  - ioc.total_cost(prob, p.with_values(p.values - eps * mu))) / (2 * eps)
            worst = max(worst, abs(prob.grid.inner(grad, mu) - fd) / abs(fd))
    elapsed = time.perf_counter() - start
    record("1 gradient vs finite differences", worst <= 1e-3 and elapsed <= 60,
           f"max rel err {worst:.2e} (<= 1e-3) over 20x10 checks in {elapsed:.1f}s (<= 60s)")


# ---------------------------------------------------------------- 2

def test_criterion_2_drift_forms():
    rng = np.random.default_rng(7)
    grid = SGrid(0.15, 3.02, 256)
    g2 = build_graph(8, CASE_EDGES, 2)
    g1 = build_graph(8, CASE_EDGES, 1)
    worst = worst1 = 0.0
    for _ in range(100):
        p = PolicyGrid(grid, rng.normal(size=256))
        spec = GoalSpec(rng.uniform(-2, 2, (8, 2)))
        x = rng.uniform(-2, 2, 16)
        ref = drift_node_form(x, p, g2, spec)
        for form in (drift, drift_laplacian_form, drift_hadamard_form):
            worst = max(worst, np.max(np.abs(form(x, p, g2, spec) - ref)))
        spec1 = GoalSpec(rng.uniform(-2, 2, (8, 1)))
        x1 = rng.uniform(-2, 2, 8)
        ref1 = drift_node_form(x1, p, g1, spec1)
        for form in (drift, drift_laplacian_form, drift_hadamard_form, drift_scalar_form):
            worst1 = max(worst1, np.max(np.abs(form(x1, p, g1, spec1) - ref1)))
    record("2 drift-form equivalence", max(worst, worst1) <= 1e-12,
           f"max diff d=2 {worst:.1e}, d=1 incl. scalar form {worst1:.1e} (<= 1e-12)")


# ---------------------------------------------------------------- 3

def test_criterion_3_stationarity_at_truth():
    cfg = from_dict({})
    nominal = cfg.policy(cfg.nominal_policy)
    demo = simulate(cfg.x0.ravel(), nominal, cfg.graph, cfg.goal_spec, cfg.t0, cfg.tf, cfg.dt)
    report = ioc.learn(ioc.IocProblem(cfg.graph, demo, cfg.goal_spec, nominal), nominal)
    gnorm = report.grad_norm_history[0]
    record("3 stationarity at truth", report.iterations == 0 and gnorm <= 1e-6,
           f"iterations {report.iterations}, |J_u| {gnorm:.1e} (<= 1e-6), {report.termination}")


# ---------------------------------------------------------------- 4

def solve_case_study(patch):
    cfg = from_dict(patch)
    truth = cfg.policy(cfg.true_policy)
    nominal = cfg.policy(cfg.nominal_policy)
    demo = simulate(cfg.x0.ravel(), truth, cfg.graph, cfg.goal_spec, cfg.t0, cfg.tf, cfg.dt)
    prob = ioc.IocProblem(cfg.graph, demo, cfg.goal_spec, nominal)
    report = ioc.learn(prob, nominal, max_iter=500)
    metrics, *_ = cli.compute_metrics(cfg, demo, report.learned)
    lo, hi = metrics.visited_min, metrics.visited_max
    visited = (cfg.grid.nodes >= lo) & (cfg.grid.nodes <= hi)
    return dict(cfg=cfg, report=report, metrics=metrics,
                umax=float(np.max(np.abs(truth.values[visited]))),
                beyond=cfg.grid.nodes > hi, nominal=nominal)


@pytest.fixture(scope="module")
def case_study():
    start = time.perf_counter()
    # oracle run at twice the time and s resolution, then the default run
    oracle = solve_case_study({"horizon": {"dt": 0.005}, "s_grid": {"num_points": 511}})
    base = solve_case_study({})
    return base, oracle, time.perf_counter() - start


def _both(case_study, fn):
    base, oracle, _ = case_study
    return fn(base), fn(oracle)


@pytest.mark.slow
def test_criterion_4a_cost_decrease(case_study):
    def ratio(run):
        J = run["report"].cost_history
        return bool(np.all(np.diff(J) < 0)), J[-1] / J[0], run["report"]
    (mono, r, rep), (mono2, r2, _) = _both(case_study, ratio)
    record("4a case study cost", mono and r <= 0.01 and case_study[2] <= 600,
           f"strictly decreasing {mono}, final/initial {r:.4f} (<= 0.01) after {rep.iterations} "
           f"iterations ({rep.termination}); 2x-resolution oracle {r2:.4f}; "
           f"both runs {case_study[2]:.0f}s (<= 600s)")


@pytest.mark.slow
def test_criterion_4b_policy_rmse(case_study):
    def rel(run):
        return run["metrics"].policy_rmse_visited, 0.05 * run["umax"]
    (rmse, bound), (rmse2, _) = _both(case_study, rel)
    record("4b case study policy", rmse <= bound,
           f"policy_rmse_visited {rmse:.3f} (<= 5% of max|u_true| = {bound:.3f}); "
           f"2x-resolution oracle {rmse2:.3f}")


@pytest.mark.slow
def test_criterion_4c_untouched_beyond_visited(case_study):
    def check(run):
        b = run["beyond"]
        same = np.array_equal(run["report"].learned.values[b], run["nominal"].values[b])
        return same, int(b.sum()), run["metrics"].visited_max
    (same, n, hi), (same2, n2, _) = _both(case_study, check)
    record("4c case study beyond visited range", same and same2,
           f"{n} grid nodes above the visited max {hi:.3f} (grid ends at 3.02), all equal to "
           f"u_o: {same}; oracle run {n2} nodes, {same2}")


@pytest.mark.slow
def test_criterion_4d_weight_mse(case_study):
    (w, w2) = _both(case_study, lambda run: run["metrics"].weight_mse)
    record("4d case study weights", w <= 1e-3,
           f"weight_mse {w:.4f} (<= 1e-3); 2x-resolution oracle {w2:.4f}")


# ---------------------------------------------------------------- 5

def test_criterion_5_second_order():
    rng = np.random.default_rng(5)
    g = build_graph(2, [(1, 2)], 1)
    grid = SGrid(0.15, 3.02, 64)
    spec = GoalSpec(np.zeros((2, 1)))
    demo = simulate(np.array([0.0, 1.0]), linear_policy(grid, 0.3), g, spec, 0.0, 10.0, 0.01)
    prob = ioc.IocProblem(g, demo, spec, linear_policy(grid, 0.3))
    values = {ioc.hessian_check(prob, PolicyGrid(grid, rng.normal(size=64))) for _ in range(10)}
    v = next(iter(values))
    record("5 second-order condition", len(values) == 1 and v == pytest.approx(0.1) and v > 0,
           f"{len(values)} distinct value(s) over 10 policies, value {v} (expected 1/(tf-t0) = 0.1)")


# ---------------------------------------------------------------- 6

def _smooth_setup():
    g = build_graph(3, [(1, 2), (2, 3), (3, 1)], 1)
    spec = GoalSpec(np.array([[0.0], [1.2], [2.0]]))
    grid = SGrid(0.15, 3.02, 64)
    return g, spec, grid, np.array([-0.5, 0.8, 1.9])


def test_criterion_6_integrator_orders():
    g, spec, grid, x0 = _smooth_setup()
    p = linear_policy(grid, 0.3)

    def final(dt):
        return simulate(x0, p, g, spec, 0.0, 4.0, dt).states[-1]
    ref = final(0.0005)
    fwd_ratio = np.linalg.norm(final(0.05) - ref) / np.linalg.norm(final(0.025) - ref)

    lam0 = []
    for dt in (0.02, 0.01, 0.005):
        demo = simulate(x0, p, g, spec, 0.0, 2.0, dt)
        prob = ioc.IocProblem(g, demo, spec, constant_policy(grid, 1.0))
        fwd = prob.rollout(prob.nominal)
        lam0.append(ioc.backward_pass(prob, prob.nominal, fwd).lambdas[0])
    bwd_ratio = np.linalg.norm(lam0[0] - lam0[1]) / np.linalg.norm(lam0[1] - lam0[2])
    record("6 integrator orders", fwd_ratio >= 12 and bwd_ratio >= 3.5,
           f"forward step-halving ratio {fwd_ratio:.1f} (>= 12), backward {bwd_ratio:.2f} (>= 3.5)")


# ---------------------------------------------------------------- 7

def test_criterion_7_determinism(tmp_path):
    codes = [cli.main(["all", "--seed", "3", "--out", str(tmp_path / name)]) for name in "ab"]
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    other = sorted(p.name for p in (tmp_path / "b").iterdir())
    same = names == other and all((tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes()
                                  for n in names)
    record("7 determinism", same and codes[0] == codes[1] and len(names) == 13,
           f"{len(names)} files byte-identical across two runs: {same} (exit codes {codes})")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
