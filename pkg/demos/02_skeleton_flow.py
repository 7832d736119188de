"""The deterministic controlled evolution and its diagnostics.

Without a control the flow dissipates; with a multiplicative-noise control
the trajectory is computed by Picard iteration over frozen-coefficient
sweeps.  The script prints the energy decay, the Picard contraction log,
and the time-increment statistic whose linear-in-delta scaling underpins
the compactness argument.
"""

import numpy as np

from splap import Control, solve_skeleton, time_increment_statistic
from splap.config import build_control, build_stepper, normalize_config, time_grid

cfg = normalize_config({})  # 1D, 64 nodes, bounded noise, p = 3
stepper = build_stepper(cfg)
steps, dt = time_grid(cfg)

print("-- pure flow (zero control): L2 norm is non-increasing --")
flow = solve_skeleton(stepper, Control.zero(steps, stepper.noise.n_modes, dt))
l2 = flow.diagnostics["l2"]
for k in (0, 1, 2, 4, 8, 16, 32, 64):
    print(f"  t = {k * dt:.3f}   ||u|| = {l2[k]:.5f}")

print("\n-- controlled flow: Picard sweeps over frozen coefficients --")
h = build_control({"kind": "random", "norm": 1.5, "stream": 4242},
                  steps, stepper.noise.n_modes, dt, cfg["seed"])
sol = solve_skeleton(stepper, h)
print(f"  control norm^2 = {h.norm_sq:.3f}, sweeps = {sol.diagnostics['picard_sweeps']}")
for m, d in enumerate(sol.diagnostics["picard_diffs"], start=2):
    print(f"  sweep {m}: successive difference {d:.3e}")

print("\n-- time-increment statistic: int ||u(t) - u(t_delta)||^2 dt --")
for frac in (8, 16, 32, 64):
    delta = steps // frac * dt
    stat = time_increment_statistic(sol, delta)
    print(f"  delta = T/{frac:<3d} statistic = {stat:.4e}   statistic/delta = {stat / delta:.4f}")
print("  (the ratio staying flat is the linear-in-delta law)")
