"""Inner obstacle-problem solvers for S(f, psi), the map the outer iteration uses.

The reference linear solver is projected SOR (ascending dof order, part of the
determinism contract); nonlinear operators use a damped projected iteration
with diagonal scaling.  A brute-force active-set enumeration oracle covers
correctness on small instances, and the complementarity residual

    kkt(y) = max_i | min(psi_i - y_i, (f - A(y))_i) |

is the common convergence measure (zero exactly at the solution).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (
    GridMismatchError,
    OracleInfeasibleError,
    OracleSizeError,
    SolverError,
    StagnationError,
)
from .grid import GridFunction
from .operators import (
    LinearEllipticOperator,
    NonMonotoneOperator,
    PLaplacianOperator,
    RegularizedOperator,
    estimate_constants,
)

_ORACLE_MAX_DOF = 20
_TAU_FLOOR = 1e-12


@dataclass
class VIParams:
    """Inner-solver controls.

    omega is the SOR relaxation (None picks 2/(1+sin(pi*h)) per mesh); tau is
    the damping step of the projected iteration ('auto' starts from the
    classical c/L**2 step of the estimated constants and is then adapted:
    halved on rejected trial steps, grown gently while steps are accepted).
    An explicit tau is never grown beyond its given value.
    """

    tol: float = 1e-10
    max_iter: int = 10000
    omega: float | None = None
    tau: float | str = "auto"

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError(f"tolerance must be positive, got {self.tol}")
        if self.max_iter <= 0:
            raise ValueError(f"max_iter must be positive, got {self.max_iter}")
        if self.omega is not None and not (0.0 < self.omega < 2.0):
            raise ValueError(f"relaxation omega must lie in (0,2), got {self.omega}")
        if self.tau != "auto" and (not np.isfinite(self.tau) or self.tau <= 0):
            raise ValueError(f"damping tau must be positive or 'auto', got {self.tau}")


@dataclass
class VISolveReport:
    solution: GridFunction = field(repr=False)
    iterations: int
    kkt_residual: float
    converged: bool

    def csv_row(self) -> str:
        return f"{self.iterations},{self.kkt_residual:.17g},{self.converged}"


def kkt_residual(op, f: GridFunction, psi: GridFunction, y: GridFunction) -> float:
    """Complementarity residual max | min(psi - y, f - A(y)) |."""
    for g in (f, psi, y):
        if g.mesh != op.mesh:
            raise GridMismatchError("kkt residual inputs live on different meshes")
    r = f.values - op.matvec(y.values)
    gap = psi.values - y.values
    return float(np.max(np.abs(np.minimum(gap, r))))


def _feasible_start(psi: np.ndarray) -> np.ndarray:
    return np.minimum(0.0, psi)


def solve_vi_psor(
    op: LinearEllipticOperator, f: GridFunction, psi: GridFunction, params: VIParams
) -> VISolveReport:
    """Projected SOR for linear operators from the feasible start min(0, psi)."""
    if not getattr(op, "is_linear", False):
        raise SolverError("PSOR requires a linear (tridiagonal) operator")
    if f.mesh != op.mesh or psi.mesh != op.mesh:
        raise GridMismatchError("force/obstacle live on a different mesh")
    omega = params.omega if params.omega is not None else 2.0 / (1.0 + math.sin(math.pi * op.mesh.h))
    y = _feasible_start(psi.values)
    iters, kkt = _kernels.psor_solve(
        op.lower, op.diag, op.upper, f.values, psi.values, y,
        float(omega), float(params.tol), int(params.max_iter),
    )
    return VISolveReport(GridFunction(op.mesh, y), int(iters), float(kkt), kkt <= params.tol)


def _tridiag_sine_form(op):
    """Unwrap op into (lower, diag, upper, lam) when it is a tridiagonal plus
    lam*sin composite (possibly eps/delta-regularized); None otherwise."""
    if isinstance(op, NonMonotoneOperator) and op.is_sine:
        b = op.base
        return b.lower, b.diag, b.upper, op.lam
    if isinstance(op, RegularizedOperator):
        inner = _tridiag_sine_form(op.inner)
        if inner is None:
            return None
        lower, diag, upper, lam = inner
        diag = diag + op.eps
        if op.delta > 0.0:
            lower = lower + op.delta * op.R.lower
            diag = diag + op.delta * op.R.diag
            upper = upper + op.delta * op.R.upper
        return lower, diag, upper, lam
    return None


def _plap_form(op):
    """Unwrap op into (p, eps, reg_eps) for the p-Laplacian kernel; None otherwise."""
    if isinstance(op, PLaplacianOperator):
        return op.p, op.eps, 0.0
    if isinstance(op, RegularizedOperator) and op.delta == 0.0:
        inner = _plap_form(op.inner)
        if inner is None:
            return None
        p, eps, reg = inner
        return p, eps, reg + op.eps
    return None


def _auto_tau(op) -> float:
    con = estimate_constants(op, "l2", trials=20, seed=0)
    if con.L > 0 and con.c > 0:
        return float(min(max(con.c / con.L**2, 1e-8), 1.0))
    return 1e-3


def solve_vi_projected(op, f: GridFunction, psi: GridFunction, params: VIParams) -> VISolveReport:
    """Damped projected iteration y <- min(psi, y + tau * D^{-1} (f - op(y))).

    D is the diagonal of the linearization at the current iterate (the base
    row diagonal for composite operators).  Trial steps are accepted on the
    operator's potential when one exists (the complementarity residual is not
    a descent measure for a simultaneous update); tau is halved on rejected
    steps and grown gently otherwise.  Underflow below 1e-12 raises a
    stagnation error; the residual is the termination test throughout.
    """
    if f.mesh != op.mesh or psi.mesh != op.mesh:
        raise GridMismatchError("force/obstacle live on a different mesh")
    if params.tau == "auto":
        tau = _auto_tau(op)
        tau_cap = 1.0
    else:
        tau = float(params.tau)
        tau_cap = tau
    y = _feasible_start(psi.values)
    hw = op.mesh.h * op.mesh.weights()

    tri = _tridiag_sine_form(op)
    if tri is not None:
        lower, diag, upper, lam = tri
        iters, kkt, _, stagnated = _kernels.projected_tridiag_sine(
            lower, diag, upper, hw, float(lam), f.values, psi.values, y,
            tau, float(params.tol), int(params.max_iter), tau_cap,
        )
        if stagnated:
            raise StagnationError(f"damping step underflowed at residual {kkt:.3e}")
        return VISolveReport(GridFunction(op.mesh, y), int(iters), float(kkt), kkt <= params.tol)

    plap = _plap_form(op)
    if plap is not None:
        p, eps, reg_eps = plap
        iters, kkt, _, stagnated = _kernels.projected_plap(
            float(p), float(eps), float(op.mesh.h), float(reg_eps), hw,
            f.values, psi.values, y, tau, float(params.tol), int(params.max_iter), tau_cap,
        )
        if stagnated:
            raise StagnationError(f"damping step underflowed at residual {kkt:.3e}")
        return VISolveReport(GridFunction(op.mesh, y), int(iters), float(kkt), kkt <= params.tol)

    return _projected_generic(op, f, psi, params, y, tau, tau_cap, hw)


def _projected_generic(op, f, psi, params, y, tau, tau_cap, hw) -> VISolveReport:
    """Pure-numpy projected iteration for operators without a compiled kernel."""
    fv, pv = f.values, psi.values

    try:
        def merit(v):
            return op.energy(v) - float(np.dot(hw * fv, v))

        e = merit(y)
        have_energy = True
    except (AttributeError, NotImplementedError):
        have_energy = False

    def residual(v):
        return fv - op.matvec(v)

    def kkt_of(v, r):
        return float(np.max(np.abs(np.minimum(pv - v, r))))

    kkt = np.inf
    kkt_ref = np.inf
    iters = params.max_iter
    for it in range(1, params.max_iter + 1):
        r = residual(y)
        d = np.asarray(op.diag_at(y), dtype=np.float64)
        d = np.maximum(d, 1e-12 * max(float(np.max(d)), 1e-300))
        yt = np.minimum(pv, y + tau * r / d)
        if have_energy:
            et = merit(yt)
            accept = et <= e + 1e-14 * (abs(e) + 1.0)
        else:
            kkt_t = kkt_of(yt, residual(yt))
            accept = kkt_t <= kkt_ref
        if accept:
            y = yt
            if have_energy:
                e = et
            rnew = residual(y)
            kkt = kkt_of(y, rnew)
            kkt_ref = min(kkt_ref, kkt)
            if kkt <= params.tol:
                iters = it
                break
            tau = min(tau * 1.25, tau_cap)
        else:
            tau *= 0.5
            if tau < _TAU_FLOOR:
                raise StagnationError(f"damping step underflowed at residual {kkt:.3e}")
    return VISolveReport(GridFunction(op.mesh, y), int(iters), float(kkt), kkt <= params.tol)


def solve_vi(op, f: GridFunction, psi: GridFunction, params: VIParams) -> VISolveReport:
    """Dispatch to PSOR for linear operators, projected iteration otherwise."""
    if getattr(op, "is_linear", False):
        return solve_vi_psor(op, f, psi, params)
    return solve_vi_projected(op, f, psi, params)


def active_set_candidates(op: LinearEllipticOperator, f: GridFunction, psi: GridFunction):
    """All accepted (active_mask, solution) pairs from exhaustive enumeration."""
    m = op.mesh.dof_count
    if m > _ORACLE_MAX_DOF:
        raise OracleSizeError(f"enumeration limited to {_ORACLE_MAX_DOF} dofs, got {m}")
    A = op.dense()
    fv, pv = f.values, psi.values
    accepted = []
    for mask_bits in range(2**m):
        active = np.array([(mask_bits >> i) & 1 == 1 for i in range(m)])
        inactive = ~active
        y = pv.copy()
        if np.any(inactive):
            Acc = A[np.ix_(inactive, inactive)]
            rhs = fv[inactive] - A[np.ix_(inactive, active)] @ pv[active]
            try:
                y[inactive] = np.linalg.solve(Acc, rhs)
            except np.linalg.LinAlgError:
                continue
        if not np.all(y <= pv + 1e-10):
            continue
        mult = fv - A @ y
        if np.any(active) and not np.all(mult[active] >= -1e-10):
            continue
        accepted.append((tuple(np.nonzero(active)[0]), GridFunction(op.mesh, y)))
    return accepted


def solve_vi_active_set_oracle(
    op: LinearEllipticOperator, f: GridFunction, psi: GridFunction
) -> GridFunction:
    """Brute-force reference solution by active-set enumeration (<= 20 dofs)."""
    accepted = active_set_candidates(op, f, psi)
    if not accepted:
        raise OracleInfeasibleError("no active set accepted; operator is not a valid instance")
    return accepted[0][1]
