"""Uniform-grid discretization of a truncated box with staggered gradients.

The spatial domain is the box ``[-L, L]^d`` (``d`` in {1, 2}) with homogeneous
Dirichlet boundary, used as a computational stand-in for the whole space.
Scalar fields live on the ``n^d`` nodes of a uniform grid; gradients live on
the faces between neighbouring nodes (forward differences).  Divergence is
defined as the exact negative adjoint of the gradient with respect to the
discrete inner products, with ghost face values 0 outside the box, so that
summation by parts holds to machine precision.

All quadrature is the uniform node/face weight ``dx**d``.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-half_width, half_width]^dim`` with Dirichlet boundary.

    Parameters
    ----------
    dim : int
        Spatial dimension, 1 or 2.
    half_width : float
        Half side length ``L`` of the box.
    points_per_axis : int
        Number of nodes per axis (``>= 3``); includes the two boundary nodes.
    """

    dim: int
    half_width: float
    points_per_axis: int

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.points_per_axis < 3:
            raise ValueError(f"points_per_axis must be >= 3, got {self.points_per_axis}")
        if not self.half_width > 0:
            raise ValueError(f"half_width must be positive, got {self.half_width}")

    @property
    def dx(self) -> float:
        """Node spacing ``2L / (n - 1)``."""
        return 2.0 * self.half_width / (self.points_per_axis - 1)

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.dim

    @property
    def n_nodes(self) -> int:
        return self.points_per_axis**self.dim

    @property
    def weight(self) -> float:
        """Quadrature weight ``dx**dim`` shared by nodes and faces."""
        return self.dx**self.dim

    def axis_coords(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.linspace(-self.half_width, self.half_width, self.points_per_axis)

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(n_nodes, dim)`` in row-major node order."""
        x = self.axis_coords()
        if self.dim == 1:
            return x[:, None]
        a, b = np.meshgrid(x, x, indexing="ij")
        return np.column_stack([a.ravel(), b.ravel()])

    def interior_mask(self) -> np.ndarray:
        """Boolean mask over flat node order, True away from the boundary."""
        return _interior_mask(self)

    def face_shapes(self) -> tuple[tuple[int, ...], ...]:
        """Shapes of the per-axis face arrays (forward differences)."""
        n = self.points_per_axis
        if self.dim == 1:
            return ((n - 1,),)
        return ((n - 1, n), (n, n - 1))

    def n_faces(self) -> int:
        return sum(int(np.prod(s)) for s in self.face_shapes())


@functools.lru_cache(maxsize=None)
def _interior_mask(grid: Grid) -> np.ndarray:
    m = np.zeros(grid.shape, dtype=bool)
    m[(slice(1, -1),) * grid.dim] = True
    m = m.ravel()
    m.flags.writeable = False
    return m


@functools.lru_cache(maxsize=None)
def difference_matrices(grid: Grid) -> tuple[sp.csr_matrix, ...]:
    """Per-axis forward-difference matrices ``D_a`` (faces x nodes), entries ±1/dx.

    ``gradient(u)`` along axis ``a`` equals ``D_a @ u`` and
    ``divergence(g) = -sum_a D_a.T @ g_a`` as plain matrix algebra.
    """
    n = grid.points_per_axis
    d1 = sp.diags([-np.ones(n - 1), np.ones(n - 1)], [0, 1],
                  shape=(n - 1, n), format="csr") / grid.dx
    if grid.dim == 1:
        return (d1.tocsr(),)
    eye = sp.identity(n, format="csr")
    return (sp.kron(d1, eye, format="csr"), sp.kron(eye, d1, format="csr"))


@dataclass
class Field:
    """Scalar grid function: flat array of node values in row-major order."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"values must have shape ({self.grid.n_nodes},), got {self.values.shape}"
            )
        if not np.all(np.isfinite(self.values)):
            raise ValueError("field values must be finite")

    def reshaped(self) -> np.ndarray:
        return self.values.reshape(self.grid.shape)

    def copy(self) -> "Field":
        return Field(self.grid, self.values.copy())

    def __add__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        _check_same_grid(self, other)
        return Field(self.grid, self.values - other.values)

    def __rmul__(self, a: float) -> "Field":
        return Field(self.grid, float(a) * self.values)


@dataclass
class GradientField:
    """Vector of per-axis face arrays produced by :func:`gradient`."""

    grid: Grid
    components: tuple[np.ndarray, ...]

    def __post_init__(self):
        shapes = self.grid.face_shapes()
        if len(self.components) != self.grid.dim:
            raise ValueError("one component per axis required")
        comps = []
        for c, s in zip(self.components, shapes):
            c = np.asarray(c, dtype=float)
            if c.shape != s:
                raise ValueError(f"component shape {c.shape} does not match face layout {s}")
            comps.append(c)
        self.components = tuple(comps)


def zero_field(grid: Grid) -> Field:
    return Field(grid, np.zeros(grid.n_nodes))


def _check_same_grid(a, b) -> None:
    if a.grid != b.grid:
        raise ValueError("fields are defined on different grids")


# -- differential operators (array level, used by the solvers) --------------

def gradient_values(grid: Grid, u: np.ndarray) -> tuple[np.ndarray, ...]:
    v = u.reshape(grid.shape)
    return tuple(np.diff(v, axis=a) / grid.dx for a in range(grid.dim))


def divergence_values(grid: Grid, comps: tuple[np.ndarray, ...]) -> np.ndarray:
    out = np.zeros(grid.shape)
    for a, g in enumerate(comps):
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        gp = np.pad(g, pad)  # ghost faces carry 0 outside the box
        out += np.diff(gp, axis=a) / grid.dx
    return out.ravel()


def gradient(u: Field) -> GradientField:
    """Forward differences on the faces between neighbouring nodes."""
    return GradientField(u.grid, gradient_values(u.grid, u.values))


def divergence(g: GradientField) -> Field:
    """Exact negative adjoint of :func:`gradient`; ghost faces are 0."""
    return Field(g.grid, divergence_values(g.grid, g.components))


# -- inner products and norms ------------------------------------------------

def node_inner(u: Field, v: Field) -> float:
    _check_same_grid(u, v)
    return float(np.dot(u.values, v.values)) * u.grid.weight


def face_inner(g: GradientField, h: GradientField) -> float:
    _check_same_grid(g, h)
    w = g.grid.weight
    return w * sum(float(np.dot(a.ravel(), b.ravel()))
                   for a, b in zip(g.components, h.components))


def l2_norm(u: Field) -> float:
    """Discrete L2 norm with uniform weight ``dx**dim``."""
    return float(np.linalg.norm(u.values)) * u.grid.weight**0.5


def lp_grad_norm(u: Field, p: float) -> float:
    """Discrete L^p norm of the face gradient; rejects ``p <= 1``."""
    if p <= 1:
        raise ValueError(f"p must exceed 1, got {p}")
    comps = gradient_values(u.grid, u.values)
    s = sum(float(np.sum(np.abs(c) ** p)) for c in comps)
    return (s * u.grid.weight) ** (1.0 / p)


def y_norm(u: Field, p: float) -> float:
    """Sum of the L2 node norm and the L^p face-gradient norm."""
    return l2_norm(u) + lp_grad_norm(u, p)


# -- serialization -------------------------------------------------------------

def write_field_csv(u: Field, path, header: str | None = None) -> None:
    """CSV rows: node index, coordinate(s), value."""
    coords = u.grid.coords()
    with open(path, "w") as f:
        if header:
            f.write(f"# {header}\n")
        cols = ",".join(f"x{a}" for a in range(u.grid.dim))
        f.write(f"index,{cols},value\n")
        for i, v in enumerate(u.values):
            c = ",".join(repr(float(x)) for x in coords[i])
            f.write(f"{i},{c},{float(v)!r}\n")


def write_field_binary(u: Field, path) -> None:
    """Raw float64 dump of the node values in row-major order."""
    u.values.astype("<f8").tofile(path)


def read_field_binary(grid: Grid, path) -> Field:
    return Field(grid, np.fromfile(path, dtype="<f8"))
