"""The constant-obstacle worked example, end to end.

The operator is -u'' + u with natural boundary conditions on (0,1), the force
is 1, and the obstacle is the solution-coupled level 1/2 + (1/4) * integral(y).
Because constants are reproduced exactly by the stencil, the whole story is
visible in closed form: the fixed-point iteration climbs along the recurrence
C_{k+1} = 1/2 + C_k / 4 to the minimal solution 2/3, contracting by exactly
1/4 per step.
"""

import numpy as np

from qvar import (
    OuterParams,
    builtin_problem,
    problem_certificate,
    solve_qvi_maximal,
    solve_qvi_minimal,
    solve_qvi_regularized,
)

problem = builtin_problem("example1d", n=64)

print("== minimal solution from y0 = 0 ==")
report = solve_qvi_minimal(problem)
print(f"plateau value : {report.solution.values[0]:.10f}   (expected 2/3)")
print(f"outer steps   : {report.outer_iterations}, trace {report.monotone_trace}")
print(f"step norms    : {['%.3e' % s for s in report.step_norms[:5]]} ...")
print(f"observed rho  : {report.rho_observed:.6f}   (analytic 1/4)")

print("\n== certificate ==")
cert = problem_certificate(problem)
print(f"c={cert.c:.3f}  L_A={cert.L_A:.3f}  L_phi={cert.L_phi:.3f}  rho={cert.rho:.3f}")

print("\n== maximal solution from the supersolution ==")
report_max = solve_qvi_maximal(problem, minimal=report.solution)
gap = np.max(np.abs(report_max.solution.values - report.solution.values))
print(f"maximal plateau {report_max.solution.values[0]:.10f}, gap to minimal {gap:.2e}")
print("(unique-solution regime: both monotone iterations meet)")

print("\n== regularized branch formula ==")
print("eps    solve        min{1/(1+eps), 2/3}")
for eps in (1.0, 0.75, 0.5, 0.25, 0.1):
    rep = solve_qvi_regularized(problem, eps, outer=OuterParams())
    expected = min(1.0 / (1.0 + eps), 2.0 / 3.0)
    print(f"{eps:<6} {rep.solution.values[0]:.8f}   {expected:.8f}")
