#!/usr/bin/env python3
"""Smoke test for the eqtrack_py extension module.

Build the module first:

    cargo build -p eqtrack-py --release

then run this script from the repository root:

    python3 python/smoke_test.py
"""

import math
import os
import random
import shutil
import sys
import tempfile

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def import_module():
    candidates = [
        os.path.join(REPO_ROOT, "target", "release", "libeqtrack_py.so"),
        os.path.join(REPO_ROOT, "target", "debug", "libeqtrack_py.so"),
    ]
    built = next((p for p in candidates if os.path.exists(p)), None)
    if built is None:
        sys.exit("libeqtrack_py.so not found; run `cargo build -p eqtrack-py --release` first")
    staging = tempfile.mkdtemp(prefix="eqtrack_py_")
    shutil.copy(built, os.path.join(staging, "eqtrack_py.so"))
    sys.path.insert(0, staging)
    import eqtrack_py

    return eqtrack_py


def approx(a, b, tol=1e-9):
    assert abs(a - b) <= tol, f"{a} != {b} (tol {tol})"


def main():
    eq = import_module()
    print(f"eqtrack_py {eq.__version__} loaded")

    # scalar problem: constants and the closed-form equilibrium (2, 0)
    problem = eq.SaddleProblem.scalar(1.0, 0.5)
    approx(problem.gamma, 1.0)
    approx(problem.lipschitz, 1.0)
    approx(problem.epsilon, 0.5)
    gamma_hat, l_hat, eta_cap = problem.regularity()
    approx(gamma_hat, 0.5)
    approx(l_hat, 1.5)
    approx(eta_cap, min(2.0, 0.5 / 1.5**2))
    cfg = eq.SolverConfig(eta=0.1, max_iters=100_000, tolerance=1e-12)
    bar = eq.equilibrium_oracle(problem, cfg)
    approx(bar.x[0], 2.0, 1e-8)
    approx(bar.y[0], 0.0, 1e-8)
    print("equilibrium oracle:", bar.x[0], bar.y[0])

    # projection and gradient maps
    box = eq.ConstraintSet.box([-1.0, -1.0], [1.0, 1.0])
    assert box.project([0.5, 2.0]) == [0.5, 1.0]
    g = problem.stochastic_gradient(eq.DecisionPoint([1.0], [2.0]), [3.0])
    assert g == [-2.0, 2.0], g

    # retraining step from anchor 0 solves the frozen problem at mu0
    step = eq.retraining_step(problem, eq.DecisionPoint([0.0], [0.0]), cfg)
    approx(step.x[0], 1.0, 1e-8)

    # stochastic tracker on a noisy static stream is seed-reproducible
    noisy = eq.SaddleProblem.scalar(1.0, 0.5, noise_sigma=1.0)
    stream = eq.ProblemStream.constant(noisy, 200)
    z0 = eq.DecisionPoint([0.0], [0.0])
    run_cfg = eq.SolverConfig(eta=0.1, max_iters=100_000, tolerance=1e-12, seed=7)
    traj_a = eq.online_stochastic_primal_dual(stream, z0, run_cfg)
    traj_b = eq.online_stochastic_primal_dual(stream, z0, run_cfg)
    assert traj_a.errors() == traj_b.errors()
    theta, nu = traj_a.fitted_noise()
    print(f"stochastic run: final err {traj_a.errors()[-1]:.4f}, fitted (theta={theta}, nu={nu:.4f})")
    rows = traj_a.tracking_errors()
    assert all(err <= bound_exp + 1e-12 for (_, err, _, bound_exp) in rows[:1])

    # conceptual tracker decays inside the alpha envelope
    quiet_stream = eq.ProblemStream.constant(problem, 100)
    traj = eq.online_primal_dual(quiet_stream, eq.DecisionPoint([8.0], [-6.0]), run_cfg)
    errs = traj.errors()
    assert all(
        errs[t + 1] <= traj.alpha * errs[t] + 1e-9 for t in range(len(errs) - 1)
    )

    # sub-Weibull toolkit
    approx(eq.c_theta(1.0), 2.0 * math.e, 1e-12)
    assert eq.closure_sum((1.0, 1.0), (1.0, 2.0)) == (1.0, 3.0)
    assert eq.closure_product((1.0, 1.0), (1.0, 1.0)) == (2.0, 4.0)
    assert eq.closure_scale((1.0, 2.0), -3.0) == (1.0, 6.0)
    approx(eq.tail_from_moment(1.0, 1.0, 2 * math.e * math.log(200.0)), 0.01, 1e-12)
    rng = random.Random(1)
    samples = [abs(rng.gauss(0.0, 1.0)) for _ in range(20_000)]
    theta, nu = eq.fit_subweibull(samples)
    assert theta == 0.5, theta
    print(f"fit on |N(0,1)|: theta={theta}, nu={nu:.4f}")

    # bound calculators
    approx(eq.expectation_bound(0.9, 0.1, 0.01, 1.0, 1.0, 1.0, 10), 0.9**10 + 0.1 + 1.0, 1e-9)
    hp = eq.high_probability_bound(0.9, 0.1, 0.0, 1.0, 1.0, 0.0, 0.05, 3)
    approx(hp, 2 * math.e * math.log(40.0), 1e-9)

    # market: synthetic demand, elasticity schedule, one tracked stretch
    approx(eq.elasticity(350.0, 720), 0.5)
    approx(eq.elasticity(50.0, 360), 0.15)
    d1 = eq.generate_synthetic_demand(6, 8, 150.0, 10, 5.0, 7)
    d2 = eq.generate_synthetic_demand(6, 8, 150.0, 10, 5.0, 8)
    assert (d1.days, d1.minutes_per_day) == (10, 1440)
    market = eq.build_market_stream(d1, d2, 3, 0.05, 42).truncated(240)
    p0 = market.problem(0)
    approx(p0.gamma, 2.0)
    approx(p0.lipschitz, 2.0)
    mkt_cfg = eq.SolverConfig(eta=0.01, max_iters=200_000, tolerance=1e-10, seed=42)
    z0 = eq.DecisionPoint([4.0] * 3, [4.0] * 3)
    mkt = eq.online_stochastic_primal_dual(market, z0, mkt_cfg)
    assert mkt.errors()[-1] < mkt.errors()[0]
    print(f"market run: err {mkt.errors()[0]:.3f} -> {mkt.errors()[-1]:.3f} over {mkt.horizon} minutes")

    with tempfile.TemporaryDirectory() as tmp:
        csv_path = os.path.join(tmp, "traj.csv")
        mkt.to_csv(csv_path)
        header = open(csv_path).readline().strip()
        assert header == "t,err,xi_norm,bound_det,bound_exp,delta_t", header

        demand_path = os.path.join(tmp, "demand.csv")
        d1.save(demand_path)
        reloaded = eq.load_demand(demand_path)
        assert reloaded.day_values(3) == d1.day_values(3)

    print("smoke test: all checks passed")


if __name__ == "__main__":
    main()
