"""Numerical toolkit for the stochastic evolutionary p-Laplace equation.

Core layers:

* :mod:`splap.mesh` -- truncated-box grids, fields, staggered calculus, norms
* :mod:`splap.plaplace` -- the (regularized) p-Laplacian and its convex energy
* :mod:`splap.resolvent` -- the implicit monotone time step
* :mod:`splap.noise` -- truncated cylindrical noise with certified constants
* :mod:`splap.skeleton` -- deterministic controlled evolution (Picard loop)
* :mod:`splap.spde` -- semi-implicit Euler-Maruyama driver and couplings
* :mod:`splap.ldp` -- large-deviation experiments and the rate functional
* :mod:`splap.tci` -- transportation-cost inequality check
* :mod:`splap.cli` -- experiment orchestration from config files
"""

from .mesh import Field, GradientField, Grid, divergence, gradient, l2_norm, lp_grad_norm, y_norm, zero_field
from .noise import BrownianPath, NoiseModel, apply_sigma, certify_constants, hs_norm, make_noise_model, sample_path
from .plaplace import PLaplaceOperator, apply, energy, monotonicity_gap
from .resolvent import NonConvergence, ResolventProblem, SolverOptions, StepStats, solve_resolvent
from .skeleton import (Control, PicardStall, SkeletonSolution, StepperConfig,
                       solve_auxiliary, solve_skeleton, solve_skeleton_general,
                       time_increment_statistic, uniform_estimate_check)
from .spde import SpdeRun, coupled_pair, moment_estimates, simulate
from .ldp import (BudgetExceeded, NoDescent, RateOptions, RateProblem, RateResult,
                  condition_c1_experiment, condition_c2_experiment,
                  rare_event_probability, rate_function_estimate, wilson_interval)
from .tci import TciExperiment, coupling_distance, entropy, tci_constant, tci_ratio_check

__version__ = "0.1.0"
