"""
Acceptance criteria 1-11.  Each test records one pass/fail line that is
printed in the terminal summary; the assertion uses the stated tolerance.

Criteria 6, 7 and 11 drive the command-line interface in-process with the
desk-scale configuration of ``demos/desk.toml`` (20x20 pixels on unit axes).
"""

from __future__ import annotations

import json
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.stats import multivariate_normal, poisson

from causal_density import (CausalModel, Dataset, Direction, Grid2D, InferenceConfig,
                            LatentProblem, MkdeModel, ModelConfig, apply_fisher_metric, compare_directions,
                            conditional_pdf, default_curve, estimate_elbo, fit_model, infectivity_of_load,
                            log_likelihood, make_grid, make_truth, mkde_density, mkde_fit, mkde_marginal,
                            poisson_problem, project_infectivity, run_mgvi, synthesize_counts)
from causal_density.cli import run
from causal_density.likelihood import GaussianLikelihood, LinearResponse

DESK = Path(__file__).resolve().parents[1] / "demos" / "desk.toml"
DESK_GRID = Grid2D(make_grid(20, 0.0, 0.05), make_grid(20, 0.0, 0.05))
DESK_INFERENCE = InferenceConfig(n_samples=12, n_global_iterations=6, optimizer_steps=6, cg_tolerance=1e-4,
                                 cg_max_iter=2000)
SEEDS = (1, 2, 3, 4, 5)


def test_criterion_01_conditional_normalization(report):
    t0 = time.perf_counter()
    grid = Grid2D(make_grid(90, 0.0, 1.0), make_grid(128, 3.8, 0.04))
    model = CausalModel(ModelConfig("XtoY", grid, rho0=22.0))
    rng = np.random.default_rng(1)
    worst = 0.0
    for _ in range(100):
        cond = model.realize(rng.standard_normal(model.dim)).cond.values
        worst = max(worst, float(np.max(np.abs(cond.sum(axis=1) * grid.gy.step - 1.0))))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 10.0
    report(1, ok, f"max |sum p dy - 1| = {worst:.2e} (tol 1e-10), {elapsed:.2f} s (limit 10 s)")
    assert ok


def test_criterion_02_gauge_invariance(report):
    grid = Grid2D(make_grid(90, 0.0, 1.0), make_grid(128, 3.8, 0.04))
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(50):
        g = rng.normal(0, 1, grid.gy.n_pixels)
        h = rng.normal(0, 1, grid.shape)
        g2 = rng.normal(0, 3, grid.gy.n_pixels)
        a = conditional_pdf(g, h, grid).values
        b = conditional_pdf(g, h + g2[None, :], grid).values
        worst = max(worst, float(np.max(np.abs(a - b))))
    ok = worst <= 1e-10
    report(2, ok, f"max-abs conditional change under h -> h + g'(y) = {worst:.2e} (tol 1e-10)")
    assert ok


def test_criterion_03_poisson_oracle(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(20):
        lam = rng.uniform(0.05, 8.0, (5, 5))
        n = rng.poisson(lam * rng.uniform(0.5, 1.5, (5, 5)))
        brute = float(sum(poisson.logpmf(int(k), float(m)) for k, m in zip(n.ravel(), lam.ravel())))
        worst = max(worst, abs(log_likelihood(lam, n) - brute))
    ok = worst <= 1e-12
    report(3, ok, f"max |loglik - sum log pmf| = {worst:.2e} (tol 1e-12)")
    assert ok


def test_criterion_04_gradient_check(report):
    grid = Grid2D(make_grid(12, 0.0, 1.0), make_grid(12, 3.8, 0.04))
    model = CausalModel(ModelConfig("XtoY", grid, rho0=20.0))
    rng = np.random.default_rng(4)
    xi = 0.5 * rng.standard_normal(model.dim)
    counts = rng.poisson(model.expected_counts(xi))
    problem = poisson_problem(model, counts)

    def log_joint(z):
        return -problem.energy(z) - 0.5 * float(z @ z)

    grad = -problem.at(xi).gradient - xi
    eps, worst = 1e-5, 0.0
    for _ in range(20):
        v = rng.standard_normal(model.dim)
        v /= np.linalg.norm(v)
        fd = (log_joint(xi + eps * v) - log_joint(xi - eps * v)) / (2 * eps)
        an = float(grad @ v)
        worst = max(worst, abs(fd - an) / max(abs(an), 1e-8))
    ok = worst <= 1e-4
    report(4, ok, f"max relative deviation from central differences = {worst:.2e} (tol 1e-4), 20 directions")
    assert ok


def test_criterion_05_linear_gaussian(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    dim, n = 12, 30
    R = rng.normal(0, 0.7, (n, dim))
    noise = 0.3**2
    truth = rng.standard_normal(dim)
    d = R @ truth + rng.normal(0, 0.3, n)
    problem = LatentProblem(LinearResponse(R), GaussianLikelihood(d, noise))
    post = run_mgvi(problem, InferenceConfig(n_samples=6, n_global_iterations=3, optimizer_steps=5, seed=5))
    cov = np.linalg.inv(R.T @ R / noise + np.eye(dim))
    mean = cov @ R.T @ d / noise
    mean_err = float(np.max(np.abs(post.xi_bar - mean)))
    log_ev = float(multivariate_normal(np.zeros(n), R @ R.T + noise * np.eye(n)).logpdf(d))
    elbo = estimate_elbo(post)
    upper = log_ev + max(2 * elbo.stderr, 1e-9)
    elapsed = time.perf_counter() - t0
    ok = mean_err <= 1e-6 and log_ev - 0.1 <= elbo.value <= upper and elapsed < 30
    report(5, ok, f"mean err {mean_err:.1e} (tol 1e-6); ELBO {elbo.value:.6f} +- {elbo.stderr:.1e} "
                  f"vs log-evidence {log_ev:.6f} (window [L-0.1, L]); {elapsed:.1f} s")
    assert ok


def _cli(*args) -> dict:
    code = run([str(a) for a in args], environ={})
    assert code == 0, f"CLI exited with {code}: {args}"
    out = Path(args[args.index("--out") + 1])
    return json.loads((out / "results.json").read_text())


def _run_protocol(tmp: Path, seed: int) -> tuple[dict, dict]:
    sim = tmp / f"sim{seed}"
    _cli("simulate", "--config", DESK, "--preset", "xtoy", "--n", 2000, "--coupling", 0.5, "--seed", seed,
         "--out", sim)
    data = sim / "data.csv"
    cmp = _cli("compare", "--config", DESK, "--data", data, "--threshold", 0.0, "--direction", "XtoY",
               "--seed", seed, "--out", tmp / f"cmp{seed}")
    null = _cli("nulltest", "--config", DESK, "--data", data, "--threshold", 0.0, "--direction", "XtoY",
                "--permutations", 5, "--seed", seed, "--out", tmp / f"null{seed}")
    return cmp, null


@pytest.fixture(scope="module")
def protocol_runs(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("protocol")
    t0 = time.perf_counter()
    runs = {s: _run_protocol(tmp, s) for s in SEEDS}
    return tmp, runs, time.perf_counter() - t0


def test_criterion_06_direction_recovery(protocol_runs, report):
    tmp, runs, elapsed = protocol_runs
    passed, strict, parts = 0, 0, []
    for seed, (cmp, null) in runs.items():
        row = cmp["comparisons"][0]
        d, s = row["delta"], row["stderr"]
        nulls = [(r["delta"], r["stderr"]) for r in null["permutations"] if r["status"] == "ok"]
        causal_ok = d + 2 * s > 2.0
        null_ok = len(nulls) == 5 and all(v - 2 * e < 0 for v, e in nulls)
        passed += causal_ok and null_ok
        strict += d > 2.0 and all(v < 0 for v, _ in nulls)
        parts.append(f"seed {seed}: dE={d:.1f}+-{s:.1f}, null max={max(v for v, _ in nulls):.1f}")
    ok = passed >= 4 and elapsed <= 600
    report(6, ok, f"{passed}/5 seeds pass (point estimates alone: {strict}/5); {elapsed:.0f} s (limit 600 s); "
                  + "; ".join(parts))
    assert ok


def test_criterion_07_independence_calibration(tmp_path, report):
    passed, parts = 0, []
    for seed in SEEDS:
        truth = make_truth(Direction.INDEPENDENT, DESK_GRID, 2000, seed=seed)
        data = synthesize_counts(truth, DESK_GRID, seed=seed, label=f"indep{seed}")
        cfg = InferenceConfig(**{**DESK_INFERENCE.__dict__, "seed": seed})
        d = compare_directions(data, DESK_GRID, inference=cfg, directions=("XtoY",)).deltas["XtoY"]
        passed += d.delta - 2 * d.stderr <= 0
        parts.append(f"{d.delta:.1f}+-{d.stderr:.1f}")
    ok = passed >= 4
    report(7, ok, f"{passed}/5 seeds with dE_xy <= 0 within 2 stderr: " + ", ".join(parts))
    assert ok


def test_criterion_08_swap_symmetry(report):
    grid = Grid2D(make_grid(10, 0.0, 0.1), make_grid(12, 0.0, 0.08))
    truth = make_truth(Direction.X_TO_Y, grid, 800, seed=8)
    data = synthesize_counts(truth, grid, seed=8, label="swap")
    cfg = InferenceConfig(n_samples=4, n_global_iterations=3, optimizer_steps=4, cg_tolerance=1e-4, seed=8)
    yx = compare_directions(data, grid, inference=cfg, directions=("YtoX",)).deltas["YtoX"]
    xy = compare_directions(data.swapped(), grid.transposed(), inference=cfg, directions=("XtoY",)).deltas["XtoY"]
    ok = yx.delta == xy.delta and yx.stderr == xy.stderr
    report(8, ok, f"dE_yx(D) = {yx.delta!r}, dE_xy(swap D) = {xy.delta!r} (bit-identical required)")
    assert ok


def test_criterion_09_mkde_recovery(report):
    t0 = time.perf_counter()
    n, N = 32, 3000
    grids = (make_grid(n, 0.0, 1 / n), make_grid(n, 0.0, 1 / n))
    c = grids[0].centers
    X, Y = np.meshgrid(c, c, indexing="ij")
    rho = (np.exp(-((X - 0.35) ** 2 + (Y - 0.4) ** 2) / (2 * 0.12**2))
           + 0.6 * np.exp(-((X - 0.7) ** 2 + (Y - 0.65) ** 2) / (2 * 0.1**2)) + 0.05)
    rho *= N / (rho.sum() / n**2)
    counts = np.random.default_rng(9).poisson(rho / n**2)
    post = mkde_fit(counts, MkdeModel(grids), InferenceConfig(n_samples=6, n_global_iterations=8,
                                                              optimizer_steps=10, cg_tolerance=1e-4,
                                                              cg_max_iter=2000, seed=9))
    mean, sd = mkde_density(post)
    coverage = float(np.mean(np.abs(mean - rho) <= 2 * sd))
    rmse = []
    for ax in (0, 1):
        m, _ = mkde_marginal(post, [ax])
        gt = rho.sum(axis=ax) / n
        rmse.append(float(np.sqrt(np.mean((m - gt) ** 2)) / gt.max()))
    elapsed = time.perf_counter() - t0
    ok = coverage >= 0.9 and max(rmse) <= 0.15 and elapsed <= 300
    report(9, ok, f"2-sigma coverage {coverage:.3f} (>= 0.90); marginal RMSE/peak {max(rmse):.3f} (<= 0.15); "
                  f"{elapsed:.1f} s")
    assert ok


def test_criterion_10_infectivity(report):
    grid = Grid2D(make_grid(16, 0.0, 5.0), make_grid(16, 3.8, 0.32))
    truth = make_truth(Direction.INDEPENDENT, grid, 1500, seed=10)
    data = synthesize_counts(truth, grid, seed=10, label="infect")
    fit = fit_model(data, grid, Direction.INDEPENDENT,
                    inference=InferenceConfig(n_samples=6, n_global_iterations=3, optimizer_steps=5,
                                              cg_tolerance=1e-4, seed=10))
    curve = default_curve()
    prof = project_infectivity(fit.posterior, fit.model, curve)
    spread = float(np.max(prof.samples.max(axis=1) - prof.samples.min(axis=1)))
    anchor = infectivity_of_load(5.4, curve)
    inside = bool(np.all((prof.samples > 0) & (prof.samples < 1)))
    ok = spread == 0.0 and abs(anchor - 0.05) <= 1e-12 and inside
    report(10, ok, f"per-sample spread over ages {spread!r} (exact 0); I(5.4) = {anchor:.15f}; "
                   f"all I(x) in (0,1): {inside}")
    assert ok


def test_criterion_11_determinism(protocol_runs, report):
    tmp, _, _ = protocol_runs
    seed = SEEDS[0]
    rerun = tmp / "rerun"
    rerun.mkdir()
    _run_protocol(rerun, seed)
    same = []
    for name in (f"sim{seed}/data.csv", f"sim{seed}/truth.npz", f"cmp{seed}/results.json",
                 f"cmp{seed}/delta_evidence.csv", f"null{seed}/results.json"):
        same.append((tmp / name).read_bytes() == (rerun / name).read_bytes())
    ok = all(same)
    report(11, ok, f"{sum(same)}/{len(same)} result files byte-identical across two seed-{seed} runs")
    assert ok
