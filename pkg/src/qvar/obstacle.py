"""Solution-dependent obstacle mappings: the quasi-variational coupling.

Three variants:
  constant_mean  Phi(y) = c0 + alpha * integral of y        (constant output)
  kernel         Phi(y)_i = psi_i + alpha * sum_j w_j h k(x_i,x_j) max(y_j, 0)
  fixed          Phi(y) = psi  (ordinary obstacle problem)

Kernel evaluation uses the same trapezoid weights as the l2 pairing, so the
reported Lipschitz bound is a true bound for the discrete map.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import eigh

from .errors import GridMismatchError
from .grid import GridFunction, Mesh, trapezoid_integral, _h1_gram_banded

CONSTANT_MEAN = "constant_mean"
KERNEL = "kernel"
FIXED = "fixed"


class ObstacleMap:
    """Obstacle mapping y -> Phi(y) on a fixed mesh.

    Negative coupling weights are rejected at construction: every monotone
    iteration downstream requires an increasing map, and a negative alpha
    would break it silently.
    """

    def __init__(
        self,
        mesh: Mesh,
        variant: str,
        c0: float = 0.0,
        alpha: float = 0.0,
        psi_base: GridFunction | None = None,
        kernel_samples: np.ndarray | None = None,
    ):
        if variant not in (CONSTANT_MEAN, KERNEL, FIXED):
            raise ValueError(f"unknown obstacle variant {variant!r}")
        if alpha < 0:
            raise ValueError(f"coupling weight alpha must be nonnegative, got {alpha}")
        self.mesh = mesh
        self.variant = variant
        self.c0 = float(c0)
        self.alpha = float(alpha)
        self.psi_base = None
        self.kernel_samples = None
        m = mesh.dof_count
        if variant in (KERNEL, FIXED):
            if psi_base is None:
                raise ValueError(f"{variant} maps need a base obstacle psi_base")
            if psi_base.mesh != mesh:
                raise GridMismatchError("psi_base lives on a different mesh")
            self.psi_base = psi_base.copy()
        if variant == KERNEL:
            if kernel_samples is None:
                raise ValueError("kernel maps need kernel samples k(x_i, x_j)")
            k = np.asarray(kernel_samples, dtype=np.float64).copy()
            if k.shape != (m, m):
                raise GridMismatchError(f"kernel samples must be {m}x{m}, got {k.shape}")
            self.kernel_samples = k

    @classmethod
    def constant_mean(cls, mesh: Mesh, c0: float, alpha: float) -> "ObstacleMap":
        return cls(mesh, CONSTANT_MEAN, c0=c0, alpha=alpha)

    @classmethod
    def fixed(cls, mesh: Mesh, psi: GridFunction) -> "ObstacleMap":
        return cls(mesh, FIXED, psi_base=psi)

    @classmethod
    def kernel(
        cls, mesh: Mesh, psi: GridFunction, alpha: float, kernel_fn
    ) -> "ObstacleMap":
        """Build a kernel map by sampling kernel_fn(x, xi) at dof nodes."""
        xs = mesh.dof_nodes()
        k = np.array([[kernel_fn(xi, xj) for xj in xs] for xi in xs], dtype=np.float64)
        return cls(mesh, KERNEL, alpha=alpha, psi_base=psi, kernel_samples=k)

    def shifted(self, delta: float) -> "ObstacleMap":
        """Copy of the map with its base level raised by delta."""
        if self.variant == CONSTANT_MEAN:
            return ObstacleMap(self.mesh, CONSTANT_MEAN, c0=self.c0 + delta, alpha=self.alpha)
        psi = GridFunction(self.mesh, self.psi_base.values + delta)
        if self.variant == FIXED:
            return ObstacleMap(self.mesh, FIXED, psi_base=psi)
        return ObstacleMap(
            self.mesh, KERNEL, alpha=self.alpha, psi_base=psi, kernel_samples=self.kernel_samples
        )


def eval_obstacle(omap: ObstacleMap, y: GridFunction) -> GridFunction:
    """Evaluate the constraint level Phi(y)."""
    if y.mesh != omap.mesh:
        raise GridMismatchError("input lives on a different mesh than the obstacle map")
    if omap.variant == CONSTANT_MEAN:
        level = omap.c0 + omap.alpha * trapezoid_integral(y)
        return GridFunction.constant(omap.mesh, level)
    if omap.variant == FIXED:
        return omap.psi_base.copy()
    hw = omap.mesh.h * omap.mesh.weights()
    coupled = omap.kernel_samples @ (hw * np.maximum(y.values, 0.0))
    return GridFunction(omap.mesh, omap.psi_base.values + omap.alpha * coupled)


def lipschitz_bound(omap: ObstacleMap, norm_tag: str = "l2") -> float:
    """Computable Lipschitz bound for the discrete map in the tagged norm.

    constant_mean: alpha (Cauchy-Schwarz on the unit-length domain, valid for
    both tags since the output is constant).  kernel in l2: the weighted
    Frobenius bound alpha * sqrt(sum_ij w_i w_j h^2 k_ij^2); kernel in h1: the
    exact l2->h1 operator norm of the linear coupling part.  fixed: 0.
    """
    if norm_tag not in ("l2", "h1"):
        raise ValueError(f"unknown norm tag {norm_tag!r}")
    if omap.variant == FIXED:
        return 0.0
    if omap.variant == CONSTANT_MEAN:
        return omap.alpha
    mesh = omap.mesh
    hw = mesh.h * mesh.weights()
    if norm_tag == "l2":
        frob_sq = float(np.einsum("i,j,ij->", hw, hw, omap.kernel_samples**2))
        return omap.alpha * float(np.sqrt(frob_sq))
    # h1 tag: sup ||B z||_h1 / ||z||_l2 with B z = alpha * K (hw z)
    B = omap.alpha * omap.kernel_samples * hw[None, :]
    off, diag = _h1_gram_banded(mesh)
    G1 = np.diag(diag) + np.diag(off[1:], -1) + np.diag(off[1:], 1)
    M = B.T @ G1 @ B
    W = np.diag(hw)
    mu = eigh(M, W, eigvals_only=True)
    return float(np.sqrt(max(mu[-1], 0.0)))


def check_order_preserving(omap: ObstacleMap, trials: int = 100, seed: int = 0) -> bool:
    """Sample ordered pairs y1 <= y2 and verify Phi(y1) <= Phi(y2) + 1e-12."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    m = omap.mesh.dof_count
    for _ in range(trials):
        y1 = GridFunction(omap.mesh, rng.standard_normal(m))
        bump = np.abs(rng.standard_normal(m))
        y2 = GridFunction(omap.mesh, y1.values + bump)
        p1 = eval_obstacle(omap, y1)
        p2 = eval_obstacle(omap, y2)
        if not np.all(p1.values <= p2.values + 1e-12):
            return False
    return True
