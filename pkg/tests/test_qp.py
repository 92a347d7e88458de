import numpy as np
import pytest

from rgov.errors import TooLargeError
from helpers import random_qp_problem as random_problem
from rgov.qp import QpProblem, oracle_qp, solve_qp


class TestExamples:
    def test_clamped_scalar(self):
        # minimize (z - 1)^2 s.t. z <= 0.5
        p = QpProblem(np.array([[2.0]]), np.array([-2.0]),
                      np.array([[1.0]]), np.array([0.5]))
        for solver in (solve_qp, oracle_qp):
            sol = solver(p)
            assert sol.status == "optimal"
            assert sol.z[0] == pytest.approx(0.5, abs=1e-9)

    def test_2d_kkt_by_hand(self):
        # minimize ||z - (2, 0)||^2 s.t. z1 + z2 <= 1, -z2 <= 0 -> (1, 0)
        p = QpProblem(2.0 * np.eye(2), np.array([-4.0, 0.0]),
                      np.array([[1.0, 1.0], [0.0, -1.0]]), np.array([1.0, 0.0]))
        for solver in (solve_qp, oracle_qp):
            sol = solver(p)
            assert sol.status == "optimal"
            assert np.allclose(sol.z, [1.0, 0.0], atol=1e-8)

    def test_contradictory_bounds(self):
        p = QpProblem(np.array([[1.0]]), np.zeros(1),
                      np.array([[1.0], [-1.0]]), np.array([0.0, -1.0]))
        assert solve_qp(p).status == "infeasible"
        assert oracle_qp(p).status == "infeasible"

    def test_solver_agreement_on_examples(self):
        p = QpProblem(2.0 * np.eye(2), np.array([-4.0, 0.0]),
                      np.array([[1.0, 1.0], [0.0, -1.0]]), np.array([1.0, 0.0]))
        a = solve_qp(p)
        b = oracle_qp(p)
        assert np.abs(a.z - b.z).max() <= 1e-7


class TestOracleEquivalence:
    def test_feasible_instances(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            p = random_problem(rng, feasible_bias=True)
            got = solve_qp(p)
            ref = oracle_qp(p)
            assert got.status == ref.status == "optimal"
            assert np.abs(got.z - ref.z).max() <= 1e-6
            assert abs(got.objective - ref.objective) <= 1e-8 * (1.0 + abs(ref.objective))

    def test_feasibility_verdicts_agree(self):
        rng = np.random.default_rng(43)
        statuses = {"optimal": 0, "infeasible": 0}
        for _ in range(200):
            p = random_problem(rng, feasible_bias=False)
            got = solve_qp(p)
            ref = oracle_qp(p)
            assert got.status == ref.status
            statuses[got.status] += 1
            if got.status == "optimal":
                assert np.abs(got.z - ref.z).max() <= 1e-6
        # the ensemble actually exercises both verdicts
        assert statuses["infeasible"] > 10
        assert statuses["optimal"] > 10


class TestInvariants:
    def test_redundant_row_does_not_move_minimizer(self):
        rng = np.random.default_rng(44)
        for _ in range(50):
            p = random_problem(rng, feasible_bias=True)
            base = solve_qp(p)
            # duplicate a row with extra slack: dominated, never active
            i = int(rng.integers(0, p.n_constraints))
            a2 = np.vstack([p.A, p.A[i]])
            b2 = np.concatenate([p.b, [p.b[i] + 1.0]])
            again = solve_qp(QpProblem(p.H, p.g, a2, b2))
            assert np.abs(base.z - again.z).max() <= 1e-8

    def test_kkt_residuals_on_optimal(self):
        rng = np.random.default_rng(45)
        for _ in range(100):
            p = random_problem(rng, feasible_bias=True)
            sol = solve_qp(p)
            assert sol.status == "optimal"
            assert (p.A @ sol.z - p.b).max() <= 1e-8
            lam = sol.lam
            act = list(sol.active_set)
            stat = p.H @ sol.z + p.g
            if act:
                stat = stat + p.A[act].T @ lam
                assert lam.min() >= -1e-10
            assert np.abs(stat).max() <= 1e-8 * (1.0 + np.abs(p.g).max())

    def test_warm_start_agrees_with_cold(self):
        rng = np.random.default_rng(46)
        for _ in range(30):
            p = random_problem(rng, feasible_bias=True)
            cold = solve_qp(p)
            warm = solve_qp(p, warm_start=cold.active_set)
            assert np.abs(cold.z - warm.z).max() <= 1e-8

    def test_z0_hint_shortcuts_phase1(self):
        p = QpProblem(np.array([[2.0]]), np.array([-2.0]),
                      np.array([[1.0]]), np.array([0.5]))
        sol = solve_qp(p, z0=np.array([0.0]))
        assert sol.status == "optimal"
        assert sol.z[0] == pytest.approx(0.5, abs=1e-9)

    def test_oracle_enumeration_bound(self):
        rng = np.random.default_rng(47)
        p = QpProblem(np.eye(2), np.zeros(2),
                      rng.normal(size=(13, 2)), np.ones(13))
        with pytest.raises(TooLargeError):
            oracle_qp(p)
