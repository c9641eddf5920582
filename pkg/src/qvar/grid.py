"""Uniform 1-D meshes on (0,1), nodal grid functions, discrete norms and lattice operations.

Degrees of freedom are interior nodes for dirichlet meshes (boundary values are
implicitly zero) and all nodes for neumann meshes.  The trapezoid end-weights
w_0 = w_n = 1/2 are used consistently for integrals, the l2 norm and duality
pairings, so discrete symmetry statements hold exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import cholesky_banded, cho_solve_banded

from .errors import GridMismatchError, MeshError

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
_BC_TAGS = (DIRICHLET, NEUMANN)


@dataclass(frozen=True)
class Mesh:
    """Uniform mesh with `n` cells on (0,1) and a boundary-condition tag."""

    n: int
    bc: str

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def dof_count(self) -> int:
        return self.n - 1 if self.bc == DIRICHLET else self.n + 1

    def nodes(self) -> np.ndarray:
        """All node coordinates 0, h, ..., 1 (including boundary)."""
        return np.linspace(0.0, 1.0, self.n + 1)

    def dof_nodes(self) -> np.ndarray:
        """Coordinates of the degrees of freedom."""
        nodes = self.nodes()
        return nodes[1:-1] if self.bc == DIRICHLET else nodes

    def weights(self) -> np.ndarray:
        """Trapezoid weights per dof (1/2 at boundary nodes, 1 inside)."""
        w = np.ones(self.dof_count)
        if self.bc == NEUMANN:
            w[0] = 0.5
            w[-1] = 0.5
        return w


def make_mesh(n: int, bc: str) -> Mesh:
    if n < 2:
        raise MeshError(f"cell count must be >= 2, got {n}")
    if bc not in _BC_TAGS:
        raise MeshError(f"boundary tag must be one of {_BC_TAGS}, got {bc!r}")
    return Mesh(int(n), bc)


@dataclass
class GridFunction:
    """Nodal values on a mesh, one per degree of freedom."""

    mesh: Mesh
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.shape != (self.mesh.dof_count,):
            raise GridMismatchError(
                f"expected {self.mesh.dof_count} values, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        self.values = v

    @classmethod
    def zeros(cls, mesh: Mesh) -> "GridFunction":
        return cls(mesh, np.zeros(mesh.dof_count))

    @classmethod
    def constant(cls, mesh: Mesh, c: float) -> "GridFunction":
        return cls(mesh, np.full(mesh.dof_count, float(c)))

    @classmethod
    def from_callable(cls, mesh: Mesh, fn) -> "GridFunction":
        return cls(mesh, np.array([fn(x) for x in mesh.dof_nodes()], dtype=np.float64))

    def copy(self) -> "GridFunction":
        return GridFunction(self.mesh, self.values)

    def with_boundary(self) -> np.ndarray:
        """Values at all nodes, zeros filled in at dirichlet boundaries."""
        if self.mesh.bc == NEUMANN:
            return self.values.copy()
        full = np.zeros(self.mesh.n + 1)
        full[1:-1] = self.values
        return full

    def __add__(self, other: "GridFunction") -> "GridFunction":
        _check_same_mesh(self, other)
        return GridFunction(self.mesh, self.values + other.values)

    def __sub__(self, other: "GridFunction") -> "GridFunction":
        _check_same_mesh(self, other)
        return GridFunction(self.mesh, self.values - other.values)

    def __mul__(self, scalar: float) -> "GridFunction":
        return GridFunction(self.mesh, self.values * float(scalar))

    __rmul__ = __mul__


def _check_same_mesh(u: GridFunction, v: GridFunction) -> None:
    if u.mesh != v.mesh:
        raise GridMismatchError(f"incompatible meshes: {u.mesh} vs {v.mesh}")


def trapezoid_integral(u: GridFunction) -> float:
    """Trapezoid rule over (0,1); dirichlet boundary values count as zero."""
    return float(u.mesh.h * np.dot(u.mesh.weights(), u.values))


def norm(u: GridFunction, kind: str = "l2") -> float:
    """Discrete l2, h1 or sup norm.

    l2 uses trapezoid weights; h1 adds the squared difference quotients over
    all edges, boundary edges included (with implicit zeros for dirichlet).
    """
    mesh = u.mesh
    if kind == "sup":
        return float(np.max(np.abs(u.values))) if u.values.size else 0.0
    l2sq = mesh.h * np.dot(mesh.weights(), u.values**2)
    if kind == "l2":
        return float(np.sqrt(l2sq))
    if kind == "h1":
        full = u.with_boundary()
        grad_sq = np.sum(np.diff(full) ** 2) / mesh.h
        return float(np.sqrt(l2sq + grad_sq))
    raise ValueError(f"unknown norm kind {kind!r}")


def pos_part(u: GridFunction) -> GridFunction:
    return GridFunction(u.mesh, np.maximum(u.values, 0.0))


def lattice_min(u: GridFunction, v: GridFunction) -> GridFunction:
    _check_same_mesh(u, v)
    return GridFunction(u.mesh, np.minimum(u.values, v.values))


def lattice_max(u: GridFunction, v: GridFunction) -> GridFunction:
    _check_same_mesh(u, v)
    return GridFunction(u.mesh, np.maximum(u.values, v.values))


def leq(u: GridFunction, v: GridFunction, tol: float = 0.0) -> bool:
    """Componentwise u <= v + tol."""
    _check_same_mesh(u, v)
    if tol < 0:
        raise ValueError("tolerance must be nonnegative")
    return bool(np.all(u.values <= v.values + tol))


def duality_pairing(g: GridFunction, v: GridFunction) -> float:
    """Weighted pairing <g, v> = h * sum_i w_i g_i v_i."""
    _check_same_mesh(g, v)
    return float(g.mesh.h * np.dot(g.mesh.weights() * g.values, v.values))


@lru_cache(maxsize=64)
def _h1_gram_banded(mesh: Mesh):
    """(offdiag, diag) bands of the h1 Gram matrix W + K1 (a=1 stiffness)."""
    h = mesh.h
    diag = h * mesh.weights()
    off = np.zeros(mesh.dof_count)
    diag = diag + 2.0 / h
    if mesh.bc == NEUMANN:
        diag[0] -= 1.0 / h
        diag[-1] -= 1.0 / h
    off[1:] = -1.0 / h
    diag.setflags(write=False)
    off.setflags(write=False)
    return off, diag


@lru_cache(maxsize=64)
def _h1_gram_cholesky(mesh: Mesh):
    """Banded Cholesky factor (upper form) of the h1 Gram matrix."""
    off, diag = _h1_gram_banded(mesh)
    ab = np.vstack([off, diag])
    return cholesky_banded(ab, lower=False)


def dual_norm(g: GridFunction, kind: str = "h1") -> float:
    """Norm of g as a dual element: sup <g,v>/||v||.

    With the weighted pairing, the l2-dual norm equals the l2 norm; the
    h1-dual norm requires a tridiagonal solve with the h1 Gram matrix.
    """
    if kind == "l2":
        return norm(g, "l2")
    if kind != "h1":
        raise ValueError(f"unknown norm kind {kind!r}")
    wg = g.mesh.h * g.mesh.weights() * g.values
    factor = _h1_gram_cholesky(g.mesh)
    z = cho_solve_banded((factor, False), wg)
    return float(np.sqrt(max(np.dot(wg, z), 0.0)))


def to_csv(u: GridFunction) -> str:
    """Serialize as `x,value` rows, boundary nodes included (zeros for dirichlet)."""
    xs = u.mesh.nodes()
    vals = u.with_boundary()
    lines = ["x,value"]
    lines += [f"{x:.17g},{v:.17g}" for x, v in zip(xs, vals)]
    return "\n".join(lines) + "\n"


def from_csv(text: str, bc: str) -> GridFunction:
    """Parse the `x,value` format back into a grid function."""
    rows = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if rows and rows[0].replace(" ", "").lower().startswith("x,value"):
        rows = rows[1:]
    data = np.array([[float(c) for c in ln.split(",")] for ln in rows])
    if data.ndim != 2 or data.shape[1] != 2 or data.shape[0] < 3:
        raise ValueError("expected at least three x,value rows")
    n = data.shape[0] - 1
    mesh = make_mesh(n, bc)
    vals = data[:, 1]
    return GridFunction(mesh, vals[1:-1] if bc == DIRICHLET else vals)
