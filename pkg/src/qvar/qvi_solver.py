"""Outer solvers for obstacle problems whose constraint depends on the solution.

The workhorse is the fixed-point iteration y^{k+1} = S(f, Phi(y^k)); started
from 0 it climbs monotonically to the minimal solution, started from the
unconstrained supersolution A^{-1}(F) it descends to the maximal one.  The
monotone modes hard-assert iterate ordering: a violation means the structural
hypotheses (increasing obstacle map, nonnegative force) are broken and must
surface rather than be iterated over.

When the coupling is weak enough -- L_phi < (c - gamma)/(L_A + L_N) -- the
outer map is a contraction with ratio rho = (L_A + L_N) L_phi / (c - gamma);
the certificate below packages exactly that check.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrderingViolationError, SolverError
from .grid import GridFunction, dual_norm, leq, norm
from .obstacle import ObstacleMap, eval_obstacle, lipschitz_bound
from .operators import (
    LinearEllipticOperator,
    NonMonotoneOperator,
    OperatorConstants,
    RegularizedOperator,
    add_regularization,
    estimate_constants,
    solve_unconstrained,
)
from .vi_solver import VIParams, solve_vi, solve_vi_projected

_ORDER_TOL = 1e-9
_RHO_BURN_IN = 2


@dataclass
class OuterParams:
    tol: float = 1e-8
    max_iter: int = 200

    def __post_init__(self):
        if self.tol <= 0 or self.max_iter <= 0:
            raise ValueError("outer tolerance and iteration cap must be positive")


@dataclass
class QVIProblem:
    """Problem bundle: operator, force, obstacle map, optional upper force."""

    operator: object
    f: GridFunction
    obstacle_map: ObstacleMap
    F: GridFunction | None = None

    def __post_init__(self):
        mesh = self.operator.mesh
        if self.f.mesh != mesh or self.obstacle_map.mesh != mesh:
            raise ValueError("problem components live on different meshes")
        if self.F is not None:
            if self.F.mesh != mesh:
                raise ValueError("upper force lives on a different mesh")
            if not leq(self.f, self.F, 0.0):
                raise ValueError("upper force must dominate the force: f <= F")

    def with_operator(self, op) -> "QVIProblem":
        return QVIProblem(op, self.f, self.obstacle_map, self.F)


@dataclass
class QVIReport:
    solution: GridFunction = field(repr=False)
    outer_iterations: int
    step_norms: list
    ratios: list
    rho_observed: float
    converged: bool
    monotone_trace: str
    inner_iterations: int = 0

    def csv_text(self) -> str:
        lines = ["outer_iter,step_norm,ratio"]
        for k, s in enumerate(self.step_norms):
            ratio = f"{self.ratios[k - 1]:.17g}" if k >= 1 else ""
            lines.append(f"{k + 1},{s:.17g},{ratio}")
        lines.append(
            f"# summary outer_iterations={self.outer_iterations} "
            f"rho_observed={self.rho_observed:.17g} converged={self.converged} "
            f"monotone_trace={self.monotone_trace}"
        )
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class ContractionCertificate:
    c: float
    L_A: float
    L_N: float
    gamma: float
    L_phi: float
    rho: float
    smallness_ok: bool

    def csv_row(self) -> str:
        return (
            f"{self.c:.17g},{self.L_A:.17g},{self.L_N:.17g},{self.gamma:.17g},"
            f"{self.L_phi:.17g},{self.rho:.17g},{self.smallness_ok}"
        )


def contraction_certificate(
    constants: OperatorConstants, L_phi: float, L_N: float = 0.0
) -> ContractionCertificate:
    """Smallness check rho = (L_A + L_N) * L_phi / (c - gamma) < 1.

    `constants.L` is the Lipschitz constant of the full operator; `L_N` is the
    share attributable to the nonlinearity (0 for purely monotone operators)
    and only affects the reported split, not rho.
    """
    if L_phi < 0 or L_N < 0 or L_N > constants.L:
        raise ValueError("invalid Lipschitz data for the certificate")
    denom = constants.c - constants.gamma
    if denom > 0:
        rho = constants.L * L_phi / denom
        ok = rho < 1.0
    else:
        rho = np.inf
        ok = False
    return ContractionCertificate(
        c=constants.c,
        L_A=constants.L - L_N,
        L_N=L_N,
        gamma=constants.gamma,
        L_phi=L_phi,
        rho=float(rho),
        smallness_ok=ok,
    )


def operator_structural_constants(op, norm_tag: str = "h1", trials: int = 100, seed: int = 0):
    """Constants and nonlinear Lipschitz split used for certificates.

    Linear: eigenvalue-accurate.  Sine composites: eigenvalue-accurate base
    plus the closed-form |lam| bounds.  Anything else: sampled bounds.
    """
    if isinstance(op, NonMonotoneOperator) and op.is_sine:
        base = estimate_constants(op.base, norm_tag, trials=trials, seed=seed)
        lam = abs(op.lam)
        constants = OperatorConstants(
            c=base.c, L=base.L + lam, gamma=lam, norm_tag=norm_tag, method="eig"
        )
        return constants, lam
    constants = estimate_constants(op, norm_tag, trials=trials, seed=seed)
    return constants, 0.0


def problem_certificate(
    problem: QVIProblem, norm_tag: str = "h1", trials: int = 100, seed: int = 0
) -> ContractionCertificate:
    constants, l_n = operator_structural_constants(
        problem.operator, norm_tag, trials=trials, seed=seed
    )
    return contraction_certificate(constants, lipschitz_bound(problem.obstacle_map, norm_tag), l_n)


def _classify_trace(iterates) -> str:
    nondecreasing = all(
        np.min(b.values - a.values) >= -_ORDER_TOL for a, b in zip(iterates, iterates[1:])
    )
    if nondecreasing:
        return "increasing"
    nonincreasing = all(
        np.max(b.values - a.values) <= _ORDER_TOL for a, b in zip(iterates, iterates[1:])
    )
    return "decreasing" if nonincreasing else "none"


def solve_qvi_fixed_point(
    problem: QVIProblem,
    y0: GridFunction,
    outer: OuterParams | None = None,
    inner: VIParams | None = None,
    _order_check: str | None = None,
) -> QVIReport:
    """Iterate y^{k+1} = S(f, Phi(y^k)) until the sup-norm step stagnates.

    Records step norms, consecutive ratios and rho_observed (the largest
    ratio after a 2-step burn-in; early ratios are polluted by active-set
    discovery in the inner solver).
    """
    outer = outer or OuterParams()
    inner = inner or VIParams()
    y = y0.copy()
    iterates = [y]
    step_norms: list[float] = []
    inner_total = 0
    converged = False
    for _ in range(outer.max_iter):
        psi = eval_obstacle(problem.obstacle_map, y)
        rep = solve_vi(problem.operator, problem.f, psi, inner)
        inner_total += rep.iterations
        if not rep.converged:
            raise SolverError(
                f"inner solve stalled at residual {rep.kkt_residual:.3e} "
                f"after {rep.iterations} iterations"
            )
        ynew = rep.solution
        if _order_check == "increasing" and not leq(y, ynew, _ORDER_TOL):
            raise OrderingViolationError(
                "iterates failed to increase; obstacle map or force violates the monotone hypotheses"
            )
        if _order_check == "decreasing" and not leq(ynew, y, _ORDER_TOL):
            raise OrderingViolationError(
                "iterates failed to decrease from the supersolution"
            )
        step_norms.append(float(np.max(np.abs(ynew.values - y.values))))
        iterates.append(ynew)
        y = ynew
        if step_norms[-1] <= outer.tol:
            converged = True
            break
    ratios = [
        step_norms[k + 1] / step_norms[k] if step_norms[k] > 0 else 0.0
        for k in range(len(step_norms) - 1)
    ]
    tail = ratios[_RHO_BURN_IN:]
    rho_observed = max(tail) if tail else 0.0
    return QVIReport(
        solution=y,
        outer_iterations=len(step_norms),
        step_norms=step_norms,
        ratios=ratios,
        rho_observed=float(rho_observed),
        converged=converged,
        monotone_trace=_classify_trace(iterates),
        inner_iterations=inner_total,
    )


def solve_qvi_minimal(
    problem: QVIProblem, outer: OuterParams | None = None, inner: VIParams | None = None
) -> QVIReport:
    """Non-decreasing iteration from 0; the limit approximates the minimal solution."""
    if np.min(problem.f.values) < 0:
        raise ValueError("the monotone modes require a nonnegative force")
    y0 = GridFunction.zeros(problem.operator.mesh)
    return solve_qvi_fixed_point(problem, y0, outer, inner, _order_check="increasing")


def _linear_part(op):
    if isinstance(op, LinearEllipticOperator):
        return op
    if isinstance(op, NonMonotoneOperator):
        return op.base
    if isinstance(op, RegularizedOperator):
        inner_linear = _linear_part(op.inner)
        if inner_linear is None:
            return None
        return add_regularization(inner_linear, op.eps, op.delta, op.R)
    return None


def unconstrained_supersolution(op, F: GridFunction, inner: VIParams | None = None) -> GridFunction:
    """Solve op(y) = F without constraints: the start iterate for the maximal mode.

    Composite operators use their linear part; genuinely nonlinear operators
    fall back to the projected iteration with the obstacle pushed to infinity.
    """
    linear = _linear_part(op)
    if linear is not None:
        return solve_unconstrained(linear, F)
    inner = inner or VIParams()
    huge = GridFunction.constant(op.mesh, 1e300)
    rep = solve_vi_projected(op, F, huge, inner)
    if not rep.converged:
        raise SolverError("unconstrained nonlinear solve did not converge")
    return rep.solution


def solve_qvi_maximal(
    problem: QVIProblem,
    outer: OuterParams | None = None,
    inner: VIParams | None = None,
    minimal: GridFunction | None = None,
) -> QVIReport:
    """Non-increasing iteration from the supersolution A^{-1}(F)."""
    if problem.F is None:
        raise ValueError("the maximal mode needs an upper force F with f <= F")
    y0 = unconstrained_supersolution(problem.operator, problem.F, inner)
    report = solve_qvi_fixed_point(problem, y0, outer, inner, _order_check="decreasing")
    if minimal is not None and not leq(minimal, report.solution, _ORDER_TOL):
        raise OrderingViolationError("minimal solution exceeds the maximal solution")
    return report


def solve_qvi_regularized(
    problem: QVIProblem,
    eps: float,
    delta: float = 0.0,
    R: LinearEllipticOperator | None = None,
    outer: OuterParams | None = None,
    inner: VIParams | None = None,
) -> QVIReport:
    """Fixed-point solve of the eps- (and optionally delta-) regularized problem
    from the minimal-mode start y0 = 0."""
    reg_problem = problem.with_operator(add_regularization(problem.operator, eps, delta, R))
    y0 = GridFunction.zeros(problem.operator.mesh)
    return solve_qvi_fixed_point(reg_problem, y0, outer, inner)


def uniform_bound_holds(
    problem: QVIProblem, report: QVIReport, norm_tag: str = "h1", slack: float = 1e-6
) -> bool:
    """Check ||y|| <= (1/c) ||f||_dual + slack in the matched norm pair."""
    constants, _ = operator_structural_constants(problem.operator, norm_tag)
    if constants.c <= 0:
        return False
    bound = dual_norm(problem.f, norm_tag) / constants.c
    return norm(report.solution, norm_tag) <= bound + slack
