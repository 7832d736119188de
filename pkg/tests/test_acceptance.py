"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run as ``pytest -s tests/test_acceptance.py`` to see the per-criterion lines.
Every tolerance and runtime budget is pinned here; nothing is deferred to
later calibration.
"""

import json
import subprocess
import sys
import time

import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from splap.config import build_control, build_stepper, normalize_config, time_grid
from splap.mesh import Field, Grid, difference_matrices, l2_norm, zero_field
from splap.noise import make_noise_model, sample_path
from splap.plaplace import (PLaplaceOperator, apply_values, energy_values,
                            monotonicity_gap)
from splap.resolvent import ResolventProblem, SolverOptions, solve_resolvent
from splap.skeleton import (Control, StepperConfig, random_control,
                            solve_skeleton, time_increment_statistic)
from splap.spde import coupled_pair, pair_sup_distance_sq
from splap.ldp import (RateOptions, RateProblem, condition_c1_experiment,
                       condition_c2_experiment, fit_loglog_slope,
                       rate_function_estimate)
from splap.tci import TciExperiment, tci_constant, tci_ratio_check

from conftest import interior_random_field, sine_initial


def report(number, name, ok, started, budget):
    elapsed = time.monotonic() - started
    print(f"\nACCEPTANCE {number:02d} {name}: {'PASS' if ok else 'FAIL'} "
          f"({elapsed:.1f}s / budget {budget:.0f}s)")
    assert ok, f"criterion {number} ({name}) failed"
    assert elapsed < budget, f"criterion {number} exceeded its {budget:.0f}s budget"


def default_cfg(**overrides):
    return build_stepper(normalize_config(overrides))


def test_01_linear_cross_check():
    started = time.monotonic()
    worst = 0.0
    for dim, n in ((1, 65), (2, 33)):
        grid = Grid(dim, 1.0, n)
        tau = 1.0 / 64
        idx = np.flatnonzero(grid.interior_mask())
        a = sp.identity(len(idx), format="csr")
        for d in difference_matrices(grid):
            di = d[:, idx]
            a = a + tau * (di.T @ di)
        lu = spla.splu(a.tocsc())
        op = PLaplaceOperator(2.0, 0.0)
        rng = np.random.default_rng(1001)
        for _ in range(20):
            f = interior_random_field(grid, rng)
            v, _ = solve_resolvent(ResolventProblem(op, tau, f),
                                   SolverOptions(), zero_field(grid))
            direct = lu.solve(f.values[idx])
            worst = max(worst, np.linalg.norm(v.values[idx] - direct)
                        / np.linalg.norm(direct))
    report(1, "linear cross-check", worst <= 1e-8, started, 10)


def test_02_energy_gradient_check():
    started = time.monotonic()
    worst = 0.0
    delta, step = 1e-3, 1e-7
    for p in (1.5, 2.0, 3.0, 4.0):
        for grid, count in ((Grid(1, 1.0, 33), 20), (Grid(2, 1.0, 9), 5)):
            rng = np.random.default_rng(int(1000 * p) + grid.dim)
            for _ in range(count):
                u = rng.standard_normal(grid.n_nodes)
                a = apply_values(grid, p, delta, u)
                num = np.zeros_like(u)
                for i in range(grid.n_nodes):
                    up = u.copy(); up[i] += step
                    um = u.copy(); um[i] -= step
                    num[i] = (energy_values(grid, p, delta, up)
                              - energy_values(grid, p, delta, um)) / (2 * step)
                num /= grid.weight
                worst = max(worst, np.linalg.norm(a + num) / np.linalg.norm(a))
    report(2, "energy-gradient check", worst <= 1e-5, started, 30)


def test_03_monotonicity_and_nonexpansiveness():
    started = time.monotonic()
    grid = Grid(1, 1.0, 33)
    ok = True
    for p in (1.5, 2.0, 3.0, 4.0, 6.0):
        rng = np.random.default_rng(int(100 * p))
        for delta in (0.0, 1e-4):
            op = PLaplaceOperator(p, delta)
            for _ in range(50):
                u = interior_random_field(grid, rng)
                v = interior_random_field(grid, rng)
                scale = (1 + l2_norm(u) + l2_norm(v)) ** 2
                ok &= monotonicity_gap(op, u, v) >= -1e-12 * scale
    for p in (1.5, 2.0, 3.0, 4.0):
        rng = np.random.default_rng(int(10 * p) + 3)
        op = PLaplaceOperator(p, 1e-4)
        opts = SolverOptions()
        for _ in range(50):
            f1 = interior_random_field(grid, rng)
            f2 = interior_random_field(grid, rng)
            v1, s1 = solve_resolvent(ResolventProblem(op, 0.05, f1), opts, zero_field(grid))
            v2, s2 = solve_resolvent(ResolventProblem(op, 0.05, f2), opts, zero_field(grid))
            ok &= l2_norm(v1 - v2) <= l2_norm(f1 - f2) + 2 * max(s1.tol_used, s2.tol_used)
    report(3, "monotonicity and nonexpansiveness", ok, started, 60)


def test_04_per_step_energy_identity():
    started = time.monotonic()
    ok = True
    for p in (1.5, 3.0):
        cfg = default_cfg(operator={"p": p, "delta_reg": 1e-4})
        steps, dt = 64, 1.0 / 64
        h = random_control(steps, cfg.noise.n_modes, dt, seed=41, stream=0, norm=1.5)
        sol = solve_skeleton(cfg, h)
        gaps = sol.diagnostics["identity_gap"]
        tols = sol.diagnostics["tol_used"]
        ok &= all(g <= 10 * t for g, t in zip(gaps, tols))
    report(4, "per-step energy identity", ok, started, 60)


def test_05_picard_fixed_point():
    started = time.monotonic()
    steps, dt = 64, 1.0 / 64
    add = default_cfg(noise={"family": "additive"})
    h = random_control(steps, add.noise.n_modes, dt, seed=51, stream=0, norm=1.5)
    sol_add = solve_skeleton(add, h)
    ok = sol_add.diagnostics["picard_sweeps"] == 2

    bounded = default_cfg()
    sol_b = solve_skeleton(bounded, h)
    diffs = sol_b.diagnostics["picard_diffs"]
    floor = 10 * bounded.resolved_picard_tol()
    ratios = [b / a for a, b in zip(diffs[1:], diffs[2:]) if a > floor]
    ok &= bool(ratios) and all(r <= 0.95 for r in ratios)
    report(5, "Picard fixed point", ok, started, 120)


def test_06_time_increment_law():
    started = time.monotonic()
    cfg = default_cfg()
    steps, dt = 64, 1.0 / 64
    h = random_control(steps, cfg.noise.n_modes, dt, seed=61, stream=0, norm=1.5)
    sol = solve_skeleton(cfg, h)
    deltas = [1.0 / 8, 1.0 / 16, 1.0 / 32, 1.0 / 64]
    stats = [time_increment_statistic(sol, d) for d in deltas]
    slope = fit_loglog_slope(deltas, stats)
    report(6, "time-increment law", slope >= 0.8, started, 120)


def test_07_condition_c1():
    started = time.monotonic()
    cfg = default_cfg()  # 1D n=64, K=64, J=8, bounded noise
    steps, dt = 64, 1.0 / 64
    h = build_control({"kind": "constant", "norm": 1.0}, steps,
                      cfg.noise.n_modes, dt, seed=71)
    rep = condition_c1_experiment(cfg, h, [0.4, 0.2, 0.1, 0.05],
                                  n_samples=200, seed=71, ball_bound=4.0)
    ok = rep["monotone_decreasing"] and abs(rep["slope"] - 2.0) <= 0.4
    report(7, "condition C1 (small-noise convergence)", ok, started, 600)


def test_08_condition_c2():
    started = time.monotonic()
    cfg = default_cfg()
    steps, dt = 64, 1.0 / 64
    h = build_control({"kind": "constant", "norm": 1.0}, steps,
                      cfg.noise.n_modes, dt, seed=81)
    rep = condition_c2_experiment(cfg, h, [2, 4, 8, 16], amplitude=1.0,
                                  ball_bound=16.0)
    report(8, "condition C2 (oscillation smoothing)", rep["decreasing"], started, 120)


def test_09_rate_function():
    started = time.monotonic()
    grid = Grid(1, 1.0, 33)
    u0 = sine_initial(grid)

    # (a) deterministic-flow target is reached by the zero control
    cfg_a = StepperConfig(PLaplaceOperator(3.0, 1e-4),
                          make_noise_model(grid, 2, "bounded"), u0)
    steps, dt = 8, 0.125
    flow = solve_skeleton(cfg_a, Control.zero(steps, 2, dt)).trajectory
    res_a = rate_function_estimate(cfg_a, RateProblem(flow, 50.0, dt))
    ok_a = res_a.i_hat <= 1e-6

    # (b) additive noise, p=2: the forward map is affine, so the quadratic
    # penalty problem has a closed-form normal-equations solution
    noise = make_noise_model(grid, 2, "additive")
    cfg_b = StepperConfig(PLaplaceOperator(2.0, 0.0), noise, u0)
    h_star = random_control(steps, 2, dt, seed=91, stream=0, norm=1.0)
    target = solve_skeleton(cfg_b, h_star).trajectory
    weight = 50.0
    res_b = rate_function_estimate(
        cfg_b, RateProblem(target, weight, dt),
        RateOptions(max_iter=400, misfit_mode="msq", misfit_tol=0.05))

    idx = np.flatnonzero(grid.interior_mask())

    def forward(hvals):
        sol = solve_skeleton(cfg_b, Control(hvals, dt))
        return np.concatenate([f.values[idx] for f in sol.trajectory[1:]])

    base = forward(np.zeros((steps, 2)))
    cols = []
    for k in range(steps):
        for j in range(2):
            e = np.zeros((steps, 2)); e[k, j] = 1.0
            cols.append(forward(e) - base)
    amat = np.column_stack(cols)
    rvec = np.concatenate([f.values[idx] for f in target[1:]]) - base
    m = 0.5 * dt * np.eye(2 * steps) + weight * dt * grid.weight * (amat.T @ amat)
    h_ne = np.linalg.solve(m, weight * dt * grid.weight * (amat.T @ rvec))
    i_ne = 0.5 * dt * float(np.sum(h_ne**2))
    ok_b = abs(res_b.i_hat - i_ne) <= 1e-4

    # (c) plant-and-recover upper bound
    cfg_c = StepperConfig(PLaplaceOperator(3.0, 1e-4), noise, u0)
    h_plant = random_control(steps, 2, dt, seed=92, stream=0, norm=0.8)
    target_c = solve_skeleton(cfg_c, h_plant).trajectory
    res_c = rate_function_estimate(
        cfg_c, RateProblem(target_c, 50.0, dt),
        RateOptions(max_iter=300, misfit_mode="msq", misfit_tol=0.05))
    ok_c = res_c.i_hat <= 0.5 * h_plant.norm_sq + 1e-3

    report(9, "rate function", ok_a and ok_b and ok_c, started, 600)


def test_10_tci():
    started = time.monotonic()
    ok = abs(tci_constant(1.0, 0.0, 1.0) - 2.0 * np.e**2) <= 1e-12

    cfg = default_cfg()
    steps, dt = 64, 1.0 / 64

    zero = Control.zero(steps, cfg.noise.n_modes, dt)
    from splap.tci import coupling_distance
    est0, _ = coupling_distance(TciExperiment(cfg, zero, 5, seed=100))
    ok &= est0 == 0.0

    for norm in (0.5, 1.0, 2.0):
        g = build_control({"kind": "constant", "norm": norm}, steps,
                          cfg.noise.n_modes, dt, seed=101)
        rep = tci_ratio_check(TciExperiment(cfg, g, 200, seed=101))
        ok &= rep["pass"] and rep["ratio"] <= rep["constant"]
    report(10, "transportation-cost inequality", ok, started, 300)


def test_11_reproducibility(tmp_path):
    started = time.monotonic()
    cfg_text = """\
grid: {dim: 1, half_width: 1.0, points: 33}
time: {horizon: 1.0, steps: 16}
operator: {p: 3.0, delta_reg: 1.0e-4}
noise: {family: bounded, modes: 4}
initial: {kind: rough}
seed: 1234
simulate: {epsilon: 0.5, samples: 6}
tci: {control: {kind: constant, norm: 1.0}, n_samples: 10}
"""
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(cfg_text)
    ok = True
    for sub, files in (("simulate", ("report.json", "cells.csv")),
                       ("tci", ("report.json",))):
        blobs = {}
        for tag, workers in (("w1a", 1), ("w1b", 1), ("w4a", 4), ("w4b", 4)):
            out = tmp_path / f"{sub}-{tag}"
            r = subprocess.run(
                [sys.executable, "-m", "splap", sub, "--config", str(cfg_path),
                 "--out", str(out), "--workers", str(workers)],
                capture_output=True, text=True)
            ok &= r.returncode == 0
            blobs[tag] = tuple((out / f).read_bytes() for f in files)
        ok &= len({blobs[t] for t in blobs}) == 1
    report(11, "byte-identical reproducibility", ok, started, 300)
