"""Deterministic controlled evolution (skeleton equation) and diagnostics.

The controlled equation replaces the noise increment with ``sigma(u) h dt``
for a piecewise-constant control ``h``.  It is solved by the same
semi-implicit recursion as the noisy equation: the diffusion is implicit
(one resolvent solve per step) and the control forcing is explicit.  For
multiplicative noise the coefficient is frozen along a reference trajectory
and updated by Picard iteration, whose contraction is monitored through the
successive sweep differences.

Controls are ``steps x modes`` coefficient matrices in the noise-mode basis;
their squared ``L^2(0,T;H)`` norm is ``dt * sum(values**2)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .mesh import Field, l2_norm, y_norm
from .noise import NoiseModel, apply_sigma, counter_rng
from .plaplace import PLaplaceOperator, energy
from .resolvent import (ResolventProblem, SolverOptions, energy_identity_gap,
                        solve_resolvent)


class PicardStall(RuntimeError):
    """No contraction within the allowed number of outer sweeps."""

    def __init__(self, diffs):
        self.diffs = list(diffs)
        super().__init__(
            f"Picard iteration stalled after {len(diffs)} sweeps; "
            f"successive differences {['%.3e' % d for d in self.diffs[-4:]]} "
            "(pathological control or too-coarse discretization)"
        )


@dataclass
class Control:
    """Piecewise-constant control: row ``k`` holds the mode coefficients on
    ``[k*dt, (k+1)*dt)``."""

    values: np.ndarray  # (steps, modes)
    dt: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2:
            raise ValueError("control values must be a (steps, modes) matrix")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("control values must be finite")

    @property
    def steps(self) -> int:
        return self.values.shape[0]

    @property
    def modes(self) -> int:
        return self.values.shape[1]

    @property
    def duration(self) -> float:
        return self.steps * self.dt

    @property
    def norm_sq(self) -> float:
        """Squared ``L^2(0,T;H)`` norm, ``dt * sum(values**2)``."""
        return self.dt * float(np.sum(self.values**2))

    def row_norms(self) -> np.ndarray:
        return np.linalg.norm(self.values, axis=1)

    def in_ball(self, bound: float, slack: float = 1e-12) -> bool:
        return self.norm_sq <= bound + slack

    def scaled(self, a: float) -> "Control":
        return Control(a * self.values, self.dt)

    def clipped(self, level: float) -> "Control":
        """Scale each row whose H-norm exceeds ``level`` down to ``level``."""
        if not level > 0:
            raise ValueError("clip level must be positive")
        norms = self.row_norms()
        over = norms > level
        if not np.any(over):
            return Control(self.values.copy(), self.dt)
        vals = self.values.copy()
        vals[over] *= (level / norms[over])[:, None]
        return Control(vals, self.dt)

    @staticmethod
    def zero(steps: int, modes: int, dt: float) -> "Control":
        return Control(np.zeros((steps, modes)), dt)

    @staticmethod
    def constant(coeffs, steps: int, dt: float) -> "Control":
        row = np.asarray(coeffs, dtype=float)
        return Control(np.tile(row, (steps, 1)), dt)


def random_control(steps: int, modes: int, dt: float, seed: int, stream: int,
                   norm: float | None = None) -> Control:
    """Gaussian control rows (counter-keyed); optionally rescaled so that
    the ``L^2(0,T;H)`` norm is exactly ``norm``."""
    rng = counter_rng(seed, stream, block=777)
    vals = rng.standard_normal((steps, modes))
    c = Control(vals, dt)
    if norm is not None:
        cur = np.sqrt(c.norm_sq)
        if cur == 0:
            raise ValueError("cannot rescale a zero control")
        c = c.scaled(norm / cur)
    return c


def write_control_csv(c: Control, path, header: str | None = None) -> None:
    """CSV rows ``k,j,value``."""
    with open(path, "w") as f:
        if header:
            f.write(f"# {header}\n")
        f.write(f"# dt={c.dt!r}\n")
        f.write("k,j,value\n")
        for k in range(c.steps):
            for j in range(c.modes):
                f.write(f"{k},{j},{float(c.values[k, j])!r}\n")


def read_control_csv(path, dt: float) -> Control:
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line or line.startswith("#") or line.startswith("k,"):
                continue
            k, j, v = line.split(",")
            rows.append((int(k), int(j), float(v)))
    steps = max(r[0] for r in rows) + 1
    modes = max(r[1] for r in rows) + 1
    vals = np.zeros((steps, modes))
    for k, j, v in rows:
        vals[k, j] = v
    return Control(vals, dt)


@dataclass(frozen=True, eq=False)
class StepperConfig:
    """Everything the semi-implicit recursion needs besides the forcing."""

    op: PLaplaceOperator
    noise: NoiseModel
    u0: Field
    options: SolverOptions = SolverOptions()
    picard_tol: float | None = None
    picard_max_iter: int = 50

    def resolved_picard_tol(self) -> float:
        if self.picard_tol is not None:
            return self.picard_tol
        return 1e-8 * (1.0 + l2_norm(self.u0))


@dataclass
class SkeletonSolution:
    """Trajectory plus per-step and per-solve diagnostics."""

    trajectory: list[Field]
    dt: float
    control: Control
    diagnostics: dict = dc_field(default_factory=dict)

    @property
    def steps(self) -> int:
        return len(self.trajectory) - 1

    def sup_l2_sq(self) -> float:
        return max(l2_norm(u) ** 2 for u in self.trajectory)


def _run_steps(cfg: StepperConfig, dt: float, coeff_rows: np.ndarray,
               frozen: list[Field] | None):
    """Shared semi-implicit sweep.

    ``coeff_rows[k]`` is the mode-coefficient increment entering step ``k``
    (already scaled by ``dt`` or the Brownian increment).  The multiplier of
    the noise operator is evaluated at ``frozen[k]`` when a reference
    trajectory is given, otherwise explicitly at the current state.
    """
    u = cfg.u0.copy()
    traj = [u]
    diag = {"l2": [l2_norm(u)], "energy": [energy(cfg.op, u)],
            "iterations": [], "residual": [], "residual_unregularized": [],
            "tol_used": [], "identity_gap": []}
    for k in range(coeff_rows.shape[0]):
        base = frozen[k] if frozen is not None else u
        forcing = apply_sigma(cfg.noise, base, coeff_rows[k])
        rhs = Field(u.grid, u.values + forcing.values)
        prob = ResolventProblem(cfg.op, dt, rhs)
        nxt, st = solve_resolvent(prob, cfg.options, guess=u)
        diag["iterations"].append(st.iterations)
        diag["residual"].append(st.residual)
        diag["residual_unregularized"].append(st.residual_unregularized)
        diag["tol_used"].append(st.tol_used)
        diag["identity_gap"].append(
            energy_identity_gap(cfg.op, dt, u, nxt, forcing))
        diag["l2"].append(l2_norm(nxt))
        diag["energy"].append(energy(cfg.op, nxt))
        u = nxt
        traj.append(u)
    _add_integrals(cfg, diag, traj, dt)
    return traj, diag


def _add_integrals(cfg: StepperConfig, diag: dict, traj, dt: float) -> None:
    p = cfg.op.p
    qmin, qmax = min(p, 2.0), max(p, 2.0)
    ys = [y_norm(u, p) for u in traj[1:]]
    diag["y_integral_qmin"] = dt * float(np.sum(np.asarray(ys) ** qmin))
    diag["y_integral_qmax"] = dt * float(np.sum(np.asarray(ys) ** qmax))
    diag["sup_l2_sq"] = float(max(v**2 for v in diag["l2"]))


def solve_auxiliary(cfg: StepperConfig, rho: list[Field], control: Control) -> SkeletonSolution:
    """One frozen-coefficient sweep: forcing ``sigma(rho_k) h_k dt`` per step."""
    if len(rho) != control.steps + 1:
        raise ValueError("reference trajectory must have steps+1 entries")
    for r in rho:
        if r.grid != cfg.u0.grid:
            raise ValueError("reference trajectory on a different grid")
    traj, diag = _run_steps(cfg, control.dt, control.dt * control.values, rho)
    return SkeletonSolution(traj, control.dt, control, diag)


def solve_skeleton(cfg: StepperConfig, control: Control) -> SkeletonSolution:
    """Picard fixed point of the frozen-coefficient map.

    Starts from the constant-in-time reference ``rho == u0`` and sweeps until
    the maximal L2 distance between successive trajectories drops below the
    Picard tolerance.  For the additive family the second sweep reproduces
    the first bitwise, so the loop ends after exactly two sweeps.
    """
    tol = cfg.resolved_picard_tol()
    rho = [cfg.u0] * (control.steps + 1)
    prev = None
    diffs: list[float] = []
    for sweep in range(1, cfg.picard_max_iter + 1):
        sol = solve_auxiliary(cfg, rho, control)
        if prev is not None:
            d = max(l2_norm(a - b) for a, b in zip(sol.trajectory, prev))
            diffs.append(d)
            if d <= tol:
                sol.diagnostics["picard_diffs"] = diffs
                sol.diagnostics["picard_sweeps"] = sweep
                _coupled_residuals(cfg, sol)
                return sol
        prev = sol.trajectory
        rho = sol.trajectory
    raise PicardStall(diffs)


def _coupled_residuals(cfg: StepperConfig, sol: SkeletonSolution) -> None:
    """Post-hoc residual of the coupled scheme (multiplier at u_k itself)."""
    from .plaplace import apply_values

    grid = cfg.u0.grid
    idx = np.flatnonzero(grid.interior_mask())
    sqw = grid.weight**0.5
    res = []
    for k in range(sol.steps):
        u, un = sol.trajectory[k], sol.trajectory[k + 1]
        forcing = apply_sigma(cfg.noise, u, sol.dt * sol.control.values[k])
        full = (un.values
                - sol.dt * apply_values(grid, cfg.op.p, cfg.op.delta_reg, un.values)
                - u.values - forcing.values)
        res.append(sqw * float(np.linalg.norm(full[idx])))
    sol.diagnostics["coupled_residual"] = res


def solve_skeleton_general(cfg: StepperConfig, control: Control,
                           clip_levels) -> tuple[SkeletonSolution, list[dict]]:
    """Solve with the control clipped at increasing levels.

    Realizes the approximation of a general square-integrable control by
    bounded ones; returns the finest-level solution together with a record
    of the distances between consecutive levels (solution sup-distance in
    time vs. control distance), which should display the Cauchy property.
    """
    levels = [float(v) for v in clip_levels]
    if not levels or any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("clip_levels must be strictly increasing and nonempty")
    sols = [solve_skeleton(cfg, control.clipped(lv)) for lv in levels]
    record = []
    for (la, sa), (lb, sb) in zip(zip(levels, sols), zip(levels[1:], sols[1:])):
        sup = max(l2_norm(a - b) for a, b in zip(sa.trajectory, sb.trajectory))
        dc = np.sqrt(Control(control.clipped(lb).values - control.clipped(la).values,
                             control.dt).norm_sq)
        record.append({"level_low": la, "level_high": lb,
                       "sup_distance": sup, "control_distance": float(dc)})
    return sols[-1], record


def time_increment_statistic(sol: SkeletonSolution, delta: float) -> float:
    """Quadrature of ``int_0^T ||u(t) - u(floor(t/delta)*delta)||^2 dt``.

    The trajectory is read as the right-continuous step interpolant, so for
    ``delta == dt`` the statistic reduces to ``dt * sum ||u_{k+1} - u_k||^2``.
    ``delta`` must be a positive multiple of ``dt``.
    """
    m = delta / sol.dt
    if not delta > 0 or abs(m - round(m)) > 1e-9:
        raise ValueError(f"delta={delta} is not a positive multiple of dt={sol.dt}")
    m = int(round(m))
    total = 0.0
    for k in range(sol.steps):
        ref = m * (k // m)
        total += l2_norm(sol.trajectory[k + 1] - sol.trajectory[ref]) ** 2
    return sol.dt * total


def uniform_estimate_check(cfg: StepperConfig, controls, bound: float) -> dict:
    """Max of ``sup_t ||u_h||^2 + int ||u_h||_Y^q dt`` over a control sample.

    All controls must satisfy ``||h||^2 <= bound``.  The maximum is monotone
    in the sample, so growing the sample can only increase the report.
    """
    stats = []
    for c in controls:
        if not c.in_ball(bound):
            raise ValueError(f"control with ||h||^2={c.norm_sq:.4g} outside the {bound}-ball")
        sol = solve_skeleton(cfg, c)
        stats.append(sol.diagnostics["sup_l2_sq"] + sol.diagnostics["y_integral_qmin"])
    return {
        "bound": bound,
        "n_controls": len(stats),
        "per_control": stats,
        "max_statistic": float(max(stats)) if stats else 0.0,
    }
