"""Experiment orchestration: subcommand dispatch, seeding and persistence.

Usage::

    splap <subcommand> --config cfg.yaml --out results/ [--workers N] [--seed S]

Subcommands: ``validate``, ``step-check``, ``skeleton``, ``simulate``,
``ldp-c1``, ``ldp-c2``, ``ldp-rate``, ``rare-event``, ``tci``, ``refine``.

Every artifact embeds the config hash and seed (JSON fields, CSV header
comments; raw binary trajectory dumps are indexed by ``dumps.csv``).  Given
the same config and seed, reruns are byte-identical regardless of the worker
count: Monte Carlo streams are counter-keyed per sample and all reductions
run in a fixed order.  The environment variable ``SPLAP_OUT`` overrides the
output directory and nothing else.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError
from .ldp import (RateOptions, RateProblem, condition_c1_experiment,
                  condition_c2_experiment, rare_event_probability,
                  rate_function_estimate)
from .mesh import l2_norm, write_field_binary, write_field_csv
from .noise import random_field, sample_path
from .plaplace import monotonicity_gap
from .resolvent import ResolventProblem, solve_resolvent
from .skeleton import Control, solve_skeleton, write_control_csv
from .spde import moment_estimates, simulate
from .tci import TciExperiment, tci_ratio_check

_SUBCOMMANDS = ("validate", "step-check", "skeleton", "simulate", "ldp-c1",
                "ldp-c2", "ldp-rate", "rare-event", "tci", "refine")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="splap",
        description="experiments around the stochastic p-Laplace evolution")
    parser.add_argument("subcommand", choices=_SUBCOMMANDS)
    parser.add_argument("--config", required=True, help="YAML config path")
    parser.add_argument("--out", default="splap-out", help="output directory")
    parser.add_argument("--workers", type=int, default=1,
                        help="max parallel Monte Carlo workers")
    parser.add_argument("--seed", type=int, default=None,
                        help="override the config seed")
    args = parser.parse_args(argv)

    out_dir = Path(os.environ.get("SPLAP_OUT", args.out))
    try:
        cfg = cfgmod.load_config(args.config)
        if args.seed is not None:
            cfg["seed"] = args.seed
        if args.subcommand == "validate":
            return _run_validate(cfg, out_dir)
        diags = cfgmod.validate_config(cfg, args.subcommand)
        if diags:
            raise ConfigError(diags)
        return _dispatch(args.subcommand, cfg, out_dir, max(1, args.workers))
    except ConfigError as e:
        _write_error(out_dir, "config", str(e), {"diagnostics": e.diagnostics})
        return 2
    except Exception as e:  # solver failures surface with context
        _write_error(out_dir, type(e).__name__, str(e), {})
        return 3


def _write_error(out_dir: Path, kind: str, message: str, context: dict) -> None:
    payload = {"error": {"type": kind, "message": message, **context}}
    print(json.dumps(payload), file=sys.stderr)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "error.json").write_text(json.dumps(payload, indent=2) + "\n")
    except OSError:
        pass


def _run_validate(cfg: dict, out_dir: Path) -> int:
    diags = cfgmod.validate_config(cfg)
    for block in cfgmod._EXPERIMENT_BLOCKS.values():
        got = cfg.get(block, cfgmod._EXPERIMENT_DEFAULTS[block])
        if isinstance(got, dict):
            diags.extend(cfgmod._validate_experiment(block, got))
        else:
            diags.append(f"{block}: must be a mapping")
    report = {"diagnostics": diags, "valid": not diags}
    if not diags:
        # which noise conditions the family certifies, without running solvers
        grid = cfgmod.build_grid(cfg)
        noise = cfgmod.build_noise(cfg, grid)
        report["noise_certification"] = {
            "family": noise.multiplier,
            "lipschitz_const": noise.lipschitz_const,
            "growth_const": noise.growth_const,
            "uniform_bound": noise.uniform_bound,
            "eigenvalue_sq_sum": noise.eigenvalue_sq_sum,
        }
        report["config_hash"] = cfgmod.config_hash(cfg)
    print(json.dumps(report, indent=2))
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.json").write_text(json.dumps(report, indent=2) + "\n")
    return 0 if not diags else 2


def _dispatch(sub: str, cfg: dict, out_dir: Path, workers: int) -> int:
    out_dir.mkdir(parents=True, exist_ok=True)
    chash = cfgmod.config_hash(cfg)
    seed = cfg["seed"]
    stepper = cfgmod.build_stepper(cfg)
    steps, dt = cfgmod.time_grid(cfg)
    runner = {
        "step-check": _run_step_check,
        "skeleton": _run_skeleton,
        "simulate": _run_simulate,
        "ldp-c1": _run_ldp_c1,
        "ldp-c2": _run_ldp_c2,
        "ldp-rate": _run_ldp_rate,
        "rare-event": _run_rare_event,
        "tci": _run_tci,
        "refine": _run_refine,
    }[sub]
    report = runner(cfg, stepper, steps, dt, out_dir, workers)
    report = {"subcommand": sub, "config_hash": chash, "seed": seed, **report}
    (out_dir / "report.json").write_text(_dumps(report) + "\n")
    return 0


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, default=_json_default)


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o)}")


def _csv_header(cfg: dict) -> str:
    return f"# config_hash={cfgmod.config_hash(cfg)} seed={cfg['seed']}\n"


def _write_cells(cfg: dict, out_dir: Path, columns: list[str], rows) -> None:
    with open(out_dir / "cells.csv", "w") as f:
        f.write(_csv_header(cfg))
        f.write(",".join(columns) + "\n")
        for row in rows:
            f.write(",".join(_cell(v) for v in row) + "\n")


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_steps_csv(cfg: dict, out_dir: Path, sol) -> None:
    d = sol.diagnostics
    cols = ["k", "l2", "energy", "iterations", "residual",
            "residual_unregularized", "identity_gap"]
    coupled = d.get("coupled_residual")
    if coupled is not None:
        cols.append("coupled_residual")
    with open(out_dir / "steps.csv", "w") as f:
        f.write(_csv_header(cfg))
        f.write(",".join(cols) + "\n")
        for k in range(len(d["l2"])):
            row = [k, d["l2"][k], d["energy"][k]]
            if k == 0:
                row += [0, 0.0, 0.0, 0.0] + ([0.0] if coupled is not None else [])
            else:
                row += [d["iterations"][k - 1], d["residual"][k - 1],
                        d["residual_unregularized"][k - 1], d["identity_gap"][k - 1]]
                if coupled is not None:
                    row.append(coupled[k - 1])
            f.write(",".join(_cell(v) for v in row) + "\n")


def _dump_snapshots(cfg: dict, out_dir: Path, trajectory, stride: int) -> None:
    if stride <= 0:
        return
    snap = out_dir / "snapshots"
    snap.mkdir(exist_ok=True)
    rows = []
    for k in range(0, len(trajectory), stride):
        name = f"u_{k:06d}.bin"
        write_field_binary(trajectory[k], snap / name)
        digest = hashlib.sha256((snap / name).read_bytes()).hexdigest()[:16]
        rows.append((k, f"snapshots/{name}", digest))
    with open(out_dir / "dumps.csv", "w") as f:
        f.write(_csv_header(cfg))
        f.write("step,file,sha256\n")
        for r in rows:
            f.write(f"{r[0]},{r[1]},{r[2]}\n")


# -- runners -------------------------------------------------------------------

def _run_step_check(cfg, stepper, steps, dt, out_dir, workers):
    """Exercise the implicit step on the configured operator: residual
    contract, nonexpansiveness, monotonicity and the per-step energy identity."""
    b = cfg["step_check"]
    n_random = b["n_random"]
    tau = float(b["tau"]) if b.get("tau") else dt
    grid = stepper.u0.grid
    seed = cfg["seed"]

    max_res = 0.0
    max_ratio = 0.0
    min_gap = np.inf
    for i in range(n_random):
        f1 = random_field(grid, seed, 2 * i, block=5)
        f2 = random_field(grid, seed, 2 * i + 1, block=5)
        v1, s1 = solve_resolvent(ResolventProblem(stepper.op, tau, f1),
                                 stepper.options, f1)
        v2, s2 = solve_resolvent(ResolventProblem(stepper.op, tau, f2),
                                 stepper.options, f2)
        max_res = max(max_res, s1.residual / s1.tol_used, s2.residual / s2.tol_used)
        dv, df = l2_norm(v1 - v2), l2_norm(f1 - f2)
        if df > 0:
            max_ratio = max(max_ratio, dv / (df + 2 * max(s1.tol_used, s2.tol_used)))
        min_gap = min(min_gap, monotonicity_gap(stepper.op, f1, f2))
    flow = solve_skeleton(stepper, Control.zero(min(steps, 8), stepper.noise.n_modes, dt))
    return {
        "tau": tau,
        "n_random": n_random,
        "max_residual_over_tol": max_res,
        "max_nonexpansive_ratio": max_ratio,
        "min_monotonicity_gap": float(min_gap),
        "max_identity_gap": float(max(flow.diagnostics["identity_gap"])),
        "pass": bool(max_res <= 1.0 and max_ratio <= 1.0 and min_gap > -1e-10),
    }


def _solution_report(sol) -> dict:
    d = sol.diagnostics
    return {
        "steps": sol.steps,
        "dt": sol.dt,
        "control_norm_sq": sol.control.norm_sq,
        "sup_l2_sq": d["sup_l2_sq"],
        "y_integral_qmin": d["y_integral_qmin"],
        "y_integral_qmax": d["y_integral_qmax"],
        "final_l2": d["l2"][-1],
        "picard_sweeps": d.get("picard_sweeps"),
        "picard_diffs": d.get("picard_diffs"),
        "max_identity_gap": float(max(d["identity_gap"])),
        "max_residual": float(max(d["residual"])),
    }


def _run_skeleton(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["skeleton"]
    control = cfgmod.build_control(b.get("control"), steps,
                                   stepper.noise.n_modes, dt, cfg["seed"])
    sol = solve_skeleton(stepper, control)
    _write_steps_csv(cfg, out_dir, sol)
    _dump_snapshots(cfg, out_dir, sol.trajectory, b.get("snapshot_stride", 0))
    write_field_csv(sol.trajectory[-1], out_dir / "final_state.csv",
                    header=_csv_header(cfg).strip("# \n"))
    return _solution_report(sol)


def _run_simulate(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["simulate"]
    epsilon = float(b["epsilon"])
    control = None
    if b.get("control"):
        control = cfgmod.build_control(b["control"], steps,
                                       stepper.noise.n_modes, dt, cfg["seed"])
    runs = []
    rows = []
    for i in range(b["samples"]):
        path = sample_path(stepper.noise, steps, dt, cfg["seed"], i)
        run = simulate(stepper, epsilon, path, control)
        runs.append(run)
        rows.append((i, run.diagnostics["sup_l2_sq"], run.diagnostics["y_integral_qmin"]))
    _write_cells(cfg, out_dir, ["sample", "sup_l2_sq", "y_integral_qmin"], rows)
    if b["samples"] == 1:
        sol = runs[0]
        _dump_snapshots(cfg, out_dir, sol.trajectory, b.get("snapshot_stride", 0))
    report = {"epsilon": epsilon, "moments": moment_estimates(runs, stepper.op.p)}
    return report


def _run_ldp_c1(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["ldp_c1"]
    control = cfgmod.build_control(b["control"], steps, stepper.noise.n_modes,
                                   dt, cfg["seed"])
    rep = condition_c1_experiment(stepper, control, b["eps_list"], b["n_samples"],
                                  cfg["seed"], b["ball_bound"], workers)
    _write_cells(cfg, out_dir, ["epsilon", "n", "mean", "stderr"],
                 [(c["epsilon"], c["n"], c["mean"], c["stderr"]) for c in rep["cells"]])
    return rep


def _run_ldp_c2(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["ldp_c2"]
    control = cfgmod.build_control(b["control"], steps, stepper.noise.n_modes,
                                   dt, cfg["seed"])
    rep = condition_c2_experiment(stepper, control, b["frequencies"],
                                  float(b["amplitude"]), b["ball_bound"])
    _write_cells(cfg, out_dir, ["frequency", "sup_distance", "increment_constant"],
                 [(r["frequency"], r["sup_distance"], r["increment_constant"])
                  for r in rep["rows"]])
    return rep


def _run_ldp_rate(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["ldp_rate"]
    tgt = b["target"]
    planted_energy = None
    if tgt["kind"] == "flow":
        ref = solve_skeleton(stepper, Control.zero(steps, stepper.noise.n_modes, dt))
    else:
        planted = cfgmod.build_control(tgt.get("control"), steps,
                                       stepper.noise.n_modes, dt, cfg["seed"])
        planted_energy = 0.5 * planted.norm_sq
        ref = solve_skeleton(stepper, planted)
    prob = RateProblem(ref.trajectory, float(b["weight"]), dt)
    opts = RateOptions(max_iter=b["max_iter"], misfit_mode=b["misfit_mode"],
                       gradient_mode=b["gradient_mode"],
                       misfit_tol=float(b["misfit_tol"]))
    res = rate_function_estimate(stepper, prob, opts)
    write_control_csv(res.control, out_dir / "control.csv",
                      header=_csv_header(cfg).strip("# \n"))
    return {
        "i_hat": res.i_hat,
        "misfit_sup": res.misfit_sup,
        "objective": res.objective,
        "iterations": res.iterations,
        "forward_solves": res.forward_solves,
        "planted_energy": planted_energy,
        "target_kind": tgt["kind"],
    }


def _run_rare_event(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["rare_event"]
    cells = [rare_event_probability(stepper, steps, dt, e, float(b["gamma"]),
                                    b["n_samples"], cfg["seed"], workers)
             for e in b["epsilon_list"]]
    _write_cells(cfg, out_dir,
                 ["epsilon", "gamma", "n", "hits", "p_hat", "wilson_low",
                  "wilson_high", "exponent", "exponent_lower_bound"],
                 [(c["epsilon"], c["gamma"], c["n"], c["hits"], c["p_hat"],
                   c["wilson_low"], c["wilson_high"], c["exponent"],
                   c["exponent_lower_bound"]) for c in cells])
    return {"cells": cells}


def _run_tci(cfg, stepper, steps, dt, out_dir, workers):
    b = cfg["tci"]
    g = cfgmod.build_control(b["control"], steps, stepper.noise.n_modes, dt,
                             cfg["seed"])
    exp = TciExperiment(stepper, g, b["n_samples"], cfg["seed"])
    return tci_ratio_check(exp, workers)


def _run_refine(cfg, stepper, steps, dt, out_dir, workers):
    """Doubling diagnostics along one axis: time step, grid spacing, box
    half-width or noise-mode count; reports successive solution distances
    restricted to the shared nodes and times."""
    b = cfg["refine"]
    mode, levels = b["mode"], b["levels"]
    if mode == "box":
        # enlarging the box only makes sense for a box-independent problem:
        # a localized initial state and the uncontrolled flow
        if cfg["grid"]["points"] % 2 == 0:
            raise ValueError("box doubling needs an odd grid.points so nodes nest")
        if cfg["initial"]["kind"] != "bump":
            raise ValueError("box doubling requires the localized initial "
                             "condition (initial.kind: bump)")
    base_cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in cfg.items()}
    sols = []
    descs = []
    for lv in range(levels + 1):
        c = {k: (dict(v) if isinstance(v, dict) else v) for k, v in base_cfg.items()}
        if mode == "time":
            c["time"]["steps"] = cfg["time"]["steps"] * 2**lv
        elif mode == "space":
            c["grid"]["points"] = (cfg["grid"]["points"] - 1) * 2**lv + 1
        elif mode == "box":
            c["grid"]["half_width"] = cfg["grid"]["half_width"] * 2**lv
            c["grid"]["points"] = (cfg["grid"]["points"] - 1) * 2**lv + 1
        elif mode == "modes":
            c["noise"]["modes"] = cfg["noise"]["modes"] * 2**lv
        st = cfgmod.build_stepper(c)
        ksteps, kdt = cfgmod.time_grid(c)
        control_spec = None if mode == "box" else b.get("control")
        control = cfgmod.build_control(control_spec, ksteps,
                                       st.noise.n_modes, kdt, cfg["seed"])
        sols.append((c, solve_skeleton(st, control)))
        descs.append(_refine_descriptor(c, mode))
    rows = []
    for lv in range(levels):
        sup_d, final_d = _refine_distance(mode, sols[lv], sols[lv + 1])
        rows.append((lv, descs[lv], descs[lv + 1], sup_d, final_d))
    _write_cells(cfg, out_dir,
                 ["level", "coarse", "fine", "sup_distance", "final_distance"],
                 rows)
    return {"mode": mode, "levels": levels,
            "distances": [r[3] for r in rows],
            "final_distances": [r[4] for r in rows],
            "descriptors": descs}


def _refine_descriptor(c, mode):
    return {"time": f"steps={c['time']['steps']}",
            "space": f"points={c['grid']['points']}",
            "box": f"half_width={c['grid']['half_width']}",
            "modes": f"modes={c['noise']['modes']}"}[mode]


def _refine_distance(mode, coarse, fine) -> tuple[float, float]:
    """(sup-in-time, final-time) L2 distance on the shared nodes and times."""
    _, csol = coarse
    _, fsol = fine
    if mode == "time":
        ratio = (len(fsol.trajectory) - 1) // (len(csol.trajectory) - 1)
        dists = [l2_norm(csol.trajectory[k] - fsol.trajectory[k * ratio])
                 for k in range(len(csol.trajectory))]
        return max(dists), dists[-1]
    if mode == "modes":
        dists = [l2_norm(a - b) for a, b in zip(csol.trajectory, fsol.trajectory)]
        return max(dists), dists[-1]
    # spatial refinements: compare on the coarse nodes
    cg = csol.trajectory[0].grid
    fg = fsol.trajectory[0].grid
    if mode == "box":
        offset = (fg.points_per_axis - cg.points_per_axis) // 2
        sel_1d = np.arange(cg.points_per_axis) + offset
    else:
        sel_1d = np.arange(cg.points_per_axis) * 2
    if cg.dim == 1:
        sel = sel_1d
    else:
        sel = (sel_1d[:, None] * fg.points_per_axis + sel_1d[None, :]).ravel()
    w = cg.weight**0.5
    dists = [w * float(np.linalg.norm(a.values - b.values[sel]))
             for a, b in zip(csol.trajectory, fsol.trajectory)]
    return max(dists), dists[-1]


if __name__ == "__main__":
    sys.exit(main())
