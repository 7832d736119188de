"""Ensembles of the noisy evolution and uniform-in-amplitude moments.

The semi-implicit driver treats the diffusion implicitly and the noise
increment explicitly.  Two views of the pathwise second moment:

* from the default initial state the dissipation dominates and the
  supremum sits at t = 0 for every path (zero variance, trivially uniform);
* from rest with additive noise the supremum is noise-driven, grows like
  the squared amplitude, and stays far below a fixed ceiling -- the
  uniform-in-amplitude bound at desk scale.
"""

import numpy as np

from splap import moment_estimates, sample_path, simulate
from splap.config import build_stepper, normalize_config, time_grid
from splap.mesh import zero_field
from splap.skeleton import StepperConfig

cfg = normalize_config({"noise": {"family": "additive"}})
stepper = build_stepper(cfg)
steps, dt = time_grid(cfg)

print("-- default start: dissipation dominates --")
runs = [simulate(stepper, 0.4, sample_path(stepper.noise, steps, dt, cfg["seed"], i))
        for i in range(32)]
rep = moment_estimates(runs, stepper.op.p)
print(f"  E[sup ||v||^2] = {rep['sup_l2_sq_mean']:.5f} "
      f"+- {rep['sup_l2_sq_stderr']:.1e}  (the supremum is ||u0||^2 itself)\n")

rest = StepperConfig(stepper.op, stepper.noise, zero_field(stepper.u0.grid),
                     stepper.options)

print("-- from rest: the supremum is noise-driven --")
print("epsilon   E[sup_t ||v||^2]   stderr      E[int ||v||_Y^q dt]")
for c, eps in enumerate((0.4, 0.2, 0.1)):
    runs = [simulate(rest, eps,
                     sample_path(rest.noise, steps, dt, cfg["seed"], 1000 + c * 64 + i))
            for i in range(64)]
    rep = moment_estimates(runs, rest.op.p)
    print(f"  {eps:.2f}    {rep['sup_l2_sq_mean']:.6f}         "
          f"{rep['sup_l2_sq_stderr']:.2e}    {rep['y_integral_mean']:.6f}")

print("\nmeans shrink with the amplitude and never threaten a fixed bound:")
print("the second moment is bounded uniformly in the noise amplitude")
