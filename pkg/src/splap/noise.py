"""Truncated cylindrical noise and diagonal multiplicative operators.

The driving Hilbert space is identified with the span of ``J`` orthonormal
grid modes (a discrete sine basis, re-orthonormalized in the weighted node
inner product).  A noise operator maps a coefficient vector ``c`` to the
field ``sum_j lam_j * m(u) * e_j * c_j`` where ``m`` is a scalar pointwise
multiplier:

* ``additive``:  m(u) = 1         (constant operator, Lipschitz constant 0)
* ``bounded``:   m(u) = u/(1+|u|) (uniformly bounded, Lipschitz)
* ``linear``:    m(u) = u         (linear growth)

Each family comes with closed-form Lipschitz/growth/uniform bounds derived
from the eigenvalue sequence and the mode sup-norm envelopes;
:func:`certify_constants` stress-tests the declared constants on random
fields and raises if they are ever exceeded.

Brownian increments are drawn from a counter-based generator (Philox) keyed
by ``(seed, stream)`` with a disjoint counter block per time step, so paths
are reproducible and independent of evaluation order across parallel
workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import Field, Grid

_MASK64 = (1 << 64) - 1
_STEP_BLOCK = 1 << 20  # counter outputs reserved per time step


class CertificationError(RuntimeError):
    """Empirical Lipschitz/growth ratio exceeded a declared constant."""


def counter_rng(seed: int, stream: int, block: int = 0) -> np.random.Generator:
    """Philox generator keyed by ``(seed, stream)``, jumped to counter block."""
    key = np.array([seed & _MASK64, stream & _MASK64], dtype=np.uint64)
    bg = np.random.Philox(key=key)
    if block:
        bg.advance(block * _STEP_BLOCK)
    return np.random.Generator(bg)


def random_field(grid: Grid, seed: int, stream: int, scale: float = 1.0,
                 block: int = 0) -> Field:
    """Gaussian field on the interior nodes (boundary 0), counter-keyed."""
    rng = counter_rng(seed, stream, block)
    values = np.zeros(grid.n_nodes)
    idx = np.flatnonzero(grid.interior_mask())
    values[idx] = scale * rng.standard_normal(len(idx))
    return Field(grid, values)


def _sine_modes(grid: Grid, modes: int) -> np.ndarray:
    """Discrete sine basis columns (n_nodes x modes), re-orthonormalized."""
    n = grid.points_per_axis
    xi = (grid.axis_coords() + grid.half_width) / (2 * grid.half_width)  # in [0, 1]
    if grid.dim == 1:
        if modes > n - 2:
            raise ValueError(f"at most {n - 2} independent modes on this grid")
        mat = np.column_stack([np.sin(j * np.pi * xi) for j in range(1, modes + 1)])
    else:
        if modes > (n - 2) ** 2:
            raise ValueError(f"at most {(n - 2) ** 2} independent modes on this grid")
        # tensor sine products ordered by increasing j1^2 + j2^2 (then j1)
        limit = modes + 1
        pairs = sorted(((j1 * j1 + j2 * j2, j1, j2)
                        for j1 in range(1, limit + 1)
                        for j2 in range(1, limit + 1)))[:modes]
        cols = []
        for _, j1, j2 in pairs:
            cols.append(np.outer(np.sin(j1 * np.pi * xi), np.sin(j2 * np.pi * xi)).ravel())
        mat = np.column_stack(cols)
    # orthonormalize in the weighted inner product; fix signs for determinism
    q, _ = np.linalg.qr(mat * grid.weight**0.5)
    q = q / grid.weight**0.5
    for j in range(q.shape[1]):
        k = int(np.argmax(np.abs(q[:, j])))
        if q[k, j] < 0:
            q[:, j] = -q[:, j]
    return q


_MULTIPLIERS = ("additive", "bounded", "linear")


@dataclass
class NoiseModel:
    """Diagonal noise operator family with certified constants.

    ``lipschitz_const`` and ``growth_const`` bound the operator's Hilbert-
    Schmidt Lipschitz modulus and linear growth; ``uniform_bound`` is the
    uniform Hilbert-Schmidt bound available for the additive and bounded
    families only.  Treat instances as immutable; they are safe to share.
    """

    grid: Grid
    eigenvalues: np.ndarray = field(repr=False)  # (modes,)
    modes: np.ndarray = field(repr=False)        # (n_nodes, modes), orthonormal
    multiplier: str
    lipschitz_const: float
    growth_const: float
    uniform_bound: float | None

    @property
    def n_modes(self) -> int:
        return len(self.eigenvalues)

    @property
    def eigenvalue_sq_sum(self) -> float:
        return float(np.sum(self.eigenvalues**2))

    def multiplier_values(self, u: Field) -> np.ndarray:
        if self.multiplier == "additive":
            return np.ones(self.grid.n_nodes)
        if self.multiplier == "bounded":
            return u.values / (1.0 + np.abs(u.values))
        return u.values


def make_noise_model(grid: Grid, modes: int, multiplier: str,
                     lambda_decay: float = 0.5, lambda_scale: float = 1.0) -> NoiseModel:
    """Build a noise model with ``lam_j = lambda_scale * lambda_decay**j``.

    The default decay gives ``lam_j = 2**-j`` whose squared sum tends to 1/3.
    ``lambda_scale = 0`` is allowed and yields the silent (no-noise) operator.
    """
    if multiplier not in _MULTIPLIERS:
        raise ValueError(f"multiplier must be one of {_MULTIPLIERS}, got {multiplier!r}")
    if modes < 1:
        raise ValueError("modes must be >= 1")
    if not 0 < lambda_decay < 1:
        raise ValueError("lambda_decay must lie in (0, 1)")
    if lambda_scale < 0:
        raise ValueError("lambda_scale must be nonnegative")
    mode_mat = _sine_modes(grid, modes)
    gram = mode_mat.T @ mode_mat * grid.weight
    if np.max(np.abs(gram - np.eye(modes))) > 1e-10:
        raise CertificationError("mode orthonormalization failed")
    lam = lambda_scale * lambda_decay ** np.arange(1, modes + 1, dtype=float)
    envelopes = np.max(np.abs(mode_mat), axis=0)
    hs_of_unit = float(np.sqrt(np.sum(lam**2)))
    envelope_hs = float(np.sqrt(np.sum(lam**2 * envelopes**2)))
    if multiplier == "additive":
        lipschitz, growth, uniform = 0.0, hs_of_unit, hs_of_unit
    elif multiplier == "bounded":
        lipschitz, growth, uniform = envelope_hs, hs_of_unit, hs_of_unit
    else:
        lipschitz, growth, uniform = envelope_hs, envelope_hs, None
    lam.flags.writeable = False
    mode_mat.flags.writeable = False
    return NoiseModel(grid, lam, mode_mat, multiplier, lipschitz, growth, uniform)


def apply_sigma(model: NoiseModel, u: Field, coeffs: np.ndarray) -> Field:
    """Field ``sum_j lam_j * m(u) * e_j * coeffs_j``; rejects length mismatch."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.shape != (model.n_modes,):
        raise ValueError(f"coeffs must have shape ({model.n_modes},), got {coeffs.shape}")
    combo = model.modes @ (model.eigenvalues * coeffs)
    return Field(model.grid, model.multiplier_values(u) * combo)


def hs_norm(model: NoiseModel, u: Field) -> float:
    """Hilbert-Schmidt norm ``sqrt(sum_j lam_j^2 ||m(u) e_j||_L2^2)``."""
    m2 = model.multiplier_values(u) ** 2
    col = (model.modes**2) @ (model.eigenvalues**2)
    return float(np.sqrt(model.grid.weight * np.dot(m2, col)))


def hs_norm_difference(model: NoiseModel, u: Field, v: Field) -> float:
    """Hilbert-Schmidt norm of ``sigma(u) - sigma(v)`` (diagonal family)."""
    dm = model.multiplier_values(u) - model.multiplier_values(v)
    col = (model.modes**2) @ (model.eigenvalues**2)
    return float(np.sqrt(model.grid.weight * np.dot(dm**2, col)))


def certify_constants(model: NoiseModel, n_samples: int, seed: int = 0,
                      scale: float = 2.0):
    """Empirical maxima of the Lipschitz/growth (and uniform) ratios.

    Samples ``n_samples`` random field pairs and returns
    ``(lipschitz_emp, growth_emp, uniform_emp)`` (the last is None for the
    linear family).  Raises :class:`CertificationError` if any empirical
    ratio exceeds the declared constant, which signals a construction bug.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    lip_emp = growth_emp = uniform_emp = 0.0
    sqw = model.grid.weight**0.5
    for i in range(n_samples):
        u = random_field(model.grid, seed, 2 * i, scale=scale)
        v = random_field(model.grid, seed, 2 * i + 1, scale=scale)
        dn = sqw * float(np.linalg.norm(u.values - v.values))
        if dn > 0:
            lip_emp = max(lip_emp, hs_norm_difference(model, u, v) / dn)
        un = sqw * float(np.linalg.norm(u.values))
        hu = hs_norm(model, u)
        growth_emp = max(growth_emp, hu / (1.0 + un))
        uniform_emp = max(uniform_emp, hu)
    slack = 1e-9
    if lip_emp > model.lipschitz_const + slack:
        raise CertificationError(
            f"Lipschitz ratio {lip_emp:.6e} exceeds declared {model.lipschitz_const:.6e}")
    if growth_emp > model.growth_const + slack:
        raise CertificationError(
            f"growth ratio {growth_emp:.6e} exceeds declared {model.growth_const:.6e}")
    if model.uniform_bound is not None:
        if uniform_emp > model.uniform_bound + slack:
            raise CertificationError(
                f"uniform norm {uniform_emp:.6e} exceeds declared {model.uniform_bound:.6e}")
        return lip_emp, growth_emp, uniform_emp
    return lip_emp, growth_emp, None


@dataclass(frozen=True)
class BrownianPath:
    """Time-step increments of the truncated Wiener process, ``N(0, tau)`` entries."""

    increments: np.ndarray  # (steps, modes)
    tau: float
    seed: int
    stream: int

    @property
    def steps(self) -> int:
        return self.increments.shape[0]


def sample_path(model: NoiseModel, steps: int, tau: float,
                seed: int, stream: int) -> BrownianPath:
    """Draw a ``steps x modes`` increment matrix, one counter block per step.

    The entry ``(k, j)`` depends only on ``(seed, stream, k, j)``; repeated
    calls with the same keys reproduce the matrix bitwise.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if not tau > 0:
        raise ValueError("tau must be positive")
    out = np.empty((steps, model.n_modes))
    root = np.sqrt(tau)
    for k in range(steps):
        rng = counter_rng(seed, stream, block=k)
        out[k] = root * rng.standard_normal(model.n_modes)
    out.flags.writeable = False
    return BrownianPath(out, tau, seed, stream)
