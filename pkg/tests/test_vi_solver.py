import numpy as np
import pytest

from qvar.errors import (
    GridMismatchError,
    OracleInfeasibleError,
    OracleSizeError,
    SolverError,
)
from qvar.grid import GridFunction, dual_norm, leq, make_mesh, norm
from qvar.operators import (
    LinearEllipticOperator,
    NonMonotoneOperator,
    PLaplacianOperator,
    assemble_linear,
    estimate_constants,
    solve_unconstrained,
)
from qvar.vi_solver import (
    VIParams,
    active_set_candidates,
    kkt_residual,
    solve_vi_active_set_oracle,
    solve_vi_projected,
    solve_vi_psor,
)


def random_instance(rng, ndof):
    mesh = make_mesh(ndof + 1, "dirichlet")
    op = assemble_linear(mesh, rng.uniform(0.5, 2.0, mesh.n), rng.uniform(0.0, 1.0, ndof))
    f = GridFunction(mesh, rng.standard_normal(ndof))
    psi = GridFunction(mesh, rng.uniform(-0.5, 1.0, ndof))
    return op, f, psi


class TestParams:
    def test_omega_range(self):
        with pytest.raises(ValueError):
            VIParams(omega=2.5)
        with pytest.raises(ValueError):
            VIParams(omega=0.0)

    def test_tau_positive(self):
        with pytest.raises(ValueError):
            VIParams(tau=-1.0)

    def test_tol_positive(self):
        with pytest.raises(ValueError):
            VIParams(tol=0.0)


class TestPsor:
    def test_inactive_constraint(self):
        mesh = make_mesh(32, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        rep = solve_vi_psor(
            op, GridFunction.constant(mesh, 1.0), GridFunction.constant(mesh, 10.0), VIParams()
        )
        assert rep.converged
        assert np.max(np.abs(rep.solution.values - 1.0)) <= 1e-8

    def test_fully_active(self):
        mesh = make_mesh(32, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        rep = solve_vi_psor(
            op, GridFunction.constant(mesh, 1.0), GridFunction.constant(mesh, 0.5), VIParams()
        )
        assert rep.converged
        assert np.max(np.abs(rep.solution.values - 0.5)) == 0.0
        # multiplier f - A psi = 0.5 >= 0 at every node
        mult = 1.0 - op.matvec(rep.solution.values)
        assert np.min(mult) >= -1e-12

    def test_feasibility(self):
        rng = np.random.default_rng(12)
        for _ in range(25):
            op, f, psi = random_instance(rng, 8)
            rep = solve_vi_psor(op, f, psi, VIParams())
            assert rep.converged
            assert leq(rep.solution, psi, 1e-9)

    def test_report_on_exhaustion(self):
        mesh = make_mesh(64, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        rep = solve_vi_psor(
            op,
            GridFunction.constant(mesh, 1.0),
            GridFunction.constant(mesh, 10.0),
            VIParams(max_iter=2),
        )
        assert not rep.converged
        assert rep.iterations == 2


class TestKkt:
    def test_unconstrained_solution(self):
        mesh = make_mesh(16, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        f = GridFunction.constant(mesh, 1.0)
        y = solve_unconstrained(op, f)
        psi = GridFunction.constant(mesh, 1e6)
        assert kkt_residual(op, f, psi, y) <= 1e-10

    def test_active_branch(self):
        mesh = make_mesh(16, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.5)
        assert kkt_residual(op, f, psi, psi) <= 1e-10

    def test_violation_measured(self):
        # constant overshoot of 0.1 keeps f - A y = 0.4 positive, so the
        # residual picks up the feasibility gap exactly
        mesh = make_mesh(16, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.5)
        y = GridFunction.constant(mesh, 0.6)
        assert kkt_residual(op, f, psi, y) == pytest.approx(0.1)

    def test_mesh_mismatch(self):
        op = assemble_linear(make_mesh(8, "neumann"), 1.0, 1.0)
        other = GridFunction.zeros(make_mesh(4, "neumann"))
        with pytest.raises(GridMismatchError):
            kkt_residual(op, other, other, other)


class TestOracle:
    def test_inactive_equals_unconstrained(self):
        rng = np.random.default_rng(21)
        op, f, _ = random_instance(rng, 6)
        psi = GridFunction.constant(op.mesh, 1e6)
        y = solve_vi_active_set_oracle(op, f, psi)
        u = solve_unconstrained(op, f)
        assert np.max(np.abs(y.values - u.values)) <= 1e-10

    def test_fully_active(self):
        mesh = make_mesh(7, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.5)
        y = solve_vi_active_set_oracle(op, f, psi)
        assert np.max(np.abs(y.values - 0.5)) <= 1e-12

    def test_unique_accepted_set(self):
        rng = np.random.default_rng(33)
        op, f, psi = random_instance(rng, 6)
        accepted = active_set_candidates(op, f, psi)
        assert len(accepted) == 1

    def test_size_guard(self):
        mesh = make_mesh(32, "dirichlet")
        op = assemble_linear(mesh, 1.0, 0.0)
        f = GridFunction.zeros(mesh)
        with pytest.raises(OracleSizeError):
            solve_vi_active_set_oracle(op, f, f)

    def test_infeasible_instance_detected(self):
        # negative-definite diagonal: the complementarity system has no solution
        mesh = make_mesh(4, "dirichlet")
        m = mesh.dof_count
        op = LinearEllipticOperator(mesh, np.zeros(m), -np.ones(m), np.zeros(m))
        f = GridFunction.constant(mesh, -1.0)
        psi = GridFunction.zeros(mesh)
        with pytest.raises(OracleInfeasibleError):
            solve_vi_active_set_oracle(op, f, psi)

    def test_psor_matches_oracle(self):
        rng = np.random.default_rng(7)
        params = VIParams(tol=1e-11)
        for _ in range(30):
            op, f, psi = random_instance(rng, int(rng.integers(3, 9)))
            ref = solve_vi_active_set_oracle(op, f, psi)
            rep = solve_vi_psor(op, f, psi, params)
            assert rep.converged
            assert np.max(np.abs(ref.values - rep.solution.values)) <= 1e-8


class TestProjected:
    def test_p2_matches_psor(self):
        mesh = make_mesh(32, "dirichlet")
        plap = PLaplacianOperator(mesh, 2.0, 0.0)
        lin = assemble_linear(mesh, 1.0, 0.0)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.05)
        a = solve_vi_projected(plap, f, psi, VIParams())
        b = solve_vi_psor(lin, f, psi, VIParams())
        assert a.converged and b.converged
        assert np.max(np.abs(a.solution.values - b.solution.values)) <= 1e-8

    def test_zero_amplitude_matches_psor(self):
        mesh = make_mesh(32, "neumann")
        base = assemble_linear(mesh, 1.0, 1.0)
        comp = NonMonotoneOperator(base, 0.0)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.5)
        a = solve_vi_projected(comp, f, psi, VIParams())
        b = solve_vi_psor(base, f, psi, VIParams())
        assert np.max(np.abs(a.solution.values - b.solution.values)) <= 1e-8

    def test_p3_symmetric_solution(self):
        mesh = make_mesh(32, "dirichlet")
        plap = PLaplacianOperator(mesh, 3.0, 1e-3)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 10.0)
        rep = solve_vi_projected(plap, f, psi, VIParams())
        assert rep.converged
        assert rep.kkt_residual <= 1e-10
        assert np.max(np.abs(rep.solution.values - rep.solution.values[::-1])) <= 1e-8

    def test_explicit_tau(self):
        mesh = make_mesh(16, "dirichlet")
        plap = PLaplacianOperator(mesh, 3.0, 1e-2)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.1)
        rep = solve_vi_projected(plap, f, psi, VIParams(tau=0.5))
        assert rep.converged
        assert leq(rep.solution, psi, 1e-12)

    def test_regularized_plap_path(self):
        from qvar.operators import add_regularization

        mesh = make_mesh(32, "dirichlet")
        plap = PLaplacianOperator(mesh, 3.0, 1e-3)
        reg = add_regularization(plap, 0.25)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.05)
        rep = solve_vi_projected(reg, f, psi, VIParams())
        assert rep.converged
        assert kkt_residual(reg, f, psi, rep.solution) <= 1e-10

    def test_custom_nonlinearity_without_potential(self):
        # tanh composite has no known potential: the residual-based fallback
        # still converges in the diagonally dominant regime
        mesh = make_mesh(32, "neumann")
        base = assemble_linear(mesh, 1.0, 1.0)
        comp = NonMonotoneOperator(base, 0.1, func=np.tanh)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction(mesh, 0.4 + 0.5 * np.abs(mesh.dof_nodes() - 0.5))
        rep = solve_vi_projected(comp, f, psi, VIParams(tol=1e-9, max_iter=200000))
        assert rep.converged
        assert kkt_residual(comp, f, psi, rep.solution) <= 1e-9
        assert leq(rep.solution, psi, 1e-12)


class TestOrderProperties:
    def test_comparison_principle_in_f(self):
        rng = np.random.default_rng(41)
        params = VIParams()
        for _ in range(50):
            op, f1, psi = random_instance(rng, 10)
            bump = np.abs(rng.standard_normal(10))
            f2 = GridFunction(f1.mesh, f1.values + bump)
            s1 = solve_vi_psor(op, f1, psi, params).solution
            s2 = solve_vi_psor(op, f2, psi, params).solution
            assert leq(s1, s2, 1e-9)

    def test_obstacle_monotonicity(self):
        rng = np.random.default_rng(43)
        params = VIParams()
        for _ in range(50):
            op, f, psi1 = random_instance(rng, 10)
            bump = np.abs(rng.standard_normal(10))
            psi2 = GridFunction(psi1.mesh, psi1.values + bump)
            s1 = solve_vi_psor(op, f, psi1, params).solution
            s2 = solve_vi_psor(op, f, psi2, params).solution
            assert leq(s1, s2, 1e-9)

    def test_lipschitz_stability_in_f(self):
        rng = np.random.default_rng(47)
        mesh = make_mesh(24, "dirichlet")
        op = assemble_linear(mesh, 1.0, 0.5)
        c = estimate_constants(op, "h1", seed=0).c
        params = VIParams()
        psi = GridFunction.constant(mesh, 0.1)
        for _ in range(50):
            f1 = GridFunction(mesh, rng.standard_normal(mesh.dof_count))
            f2 = GridFunction(mesh, f1.values + 0.3 * rng.standard_normal(mesh.dof_count))
            s1 = solve_vi_psor(op, f1, psi, params).solution
            s2 = solve_vi_psor(op, f2, psi, params).solution
            assert norm(s1 - s2, "h1") <= dual_norm(f1 - f2, "h1") / c + 1e-8

    def test_obstacle_continuity(self):
        # shrinking obstacle perturbations: error <= C * ||psi_n - psi||_sup
        # with a stable fitted C across the sequence
        mesh = make_mesh(32, "dirichlet")
        op = assemble_linear(mesh, 1.0, 0.0)
        f = GridFunction.constant(mesh, 1.0)
        psi = GridFunction.constant(mesh, 0.05)
        params = VIParams(tol=1e-12)
        base = solve_vi_psor(op, f, psi, params).solution
        bump = np.sin(np.pi * mesh.dof_nodes())
        ratios = []
        for k in range(1, 7):
            delta = 2.0**-k * 0.1
            psin = GridFunction(mesh, psi.values + delta * bump)
            sol = solve_vi_psor(op, f, psin, params).solution
            err = norm(sol - base, "h1")
            ratios.append(err / delta)
        c_fit = max(ratios[:2])
        assert all(r <= 1.5 * c_fit + 1e-9 for r in ratios)


class TestDispatch:
    def test_psor_requires_linear(self):
        mesh = make_mesh(8, "dirichlet")
        plap = PLaplacianOperator(mesh, 3.0, 0.0)
        f = GridFunction.zeros(mesh)
        with pytest.raises(SolverError):
            solve_vi_psor(plap, f, f, VIParams())

    def test_report_csv_row(self):
        mesh = make_mesh(16, "neumann")
        op = assemble_linear(mesh, 1.0, 1.0)
        rep = solve_vi_psor(
            op, GridFunction.constant(mesh, 1.0), GridFunction.constant(mesh, 0.5), VIParams()
        )
        fields = rep.csv_row().split(",")
        assert int(fields[0]) == rep.iterations
        assert float(fields[1]) == rep.kkt_residual
        assert fields[2] == "True"
