import numpy as np
import pytest

from rgov.bounds import Certificate, certify
from rgov.errors import NotAffineError
from rgov.governor import Governor, GovernorConfig, move_set, v1_prime
from rgov.linalg import mat_exp
from rgov.model import PlantModel, Polytope, example1, spacecraft
from rgov.norms import NormSpec, support_rows, vec_norm


def make_linear_model():
    """Stable linear plant with exactly zero nonlinearity bounds."""
    a = np.array([[-1.0, 0.2], [0.0, -2.0]])
    b = np.array([[1.0], [0.5]])
    ainv_b = -np.linalg.solve(a, b)

    return PlantModel(
        name="linear_test",
        n=2,
        n_v=1,
        f=lambda x, v: a @ x + b @ v,
        f_x=lambda x, v: a,
        f_v=lambda x, v: b,
        x_v=lambda v: ainv_b @ v,
        X=Polytope.box([-5.0, -5.0], [5.0, 5.0]),
        V=Polytope.box([-2.0], [2.0]),
    )


class TestConfig:
    def test_check_grid_cannot_be_finer_than_sampling(self):
        with pytest.raises(ValueError):
            GovernorConfig(dt_sample=0.05, dt_check=0.01)

    def test_tolerance_range(self):
        with pytest.raises(ValueError):
            GovernorConfig(tol_T=1.0)

    def test_roundtrip(self):
        cfg = GovernorConfig(S=np.eye(2), dt_sample=0.1, dt_check=0.2,
                             convergence_augmentation=True, kappa=1e-6)
        again = GovernorConfig.from_dict(cfg.to_dict())
        assert again.to_dict() == cfg.to_dict()


class TestMoveSet:
    def test_scalar_unit(self):
        ms = move_set(np.zeros(1), np.ones(1), np.eye(1), NormSpec.l2())
        assert np.allclose(ms.u, [1.0, 1.0])
        assert ms.v_bar == pytest.approx(1.0)

    def test_converged_box_collapses(self):
        ms = move_set(np.array([0.3]), np.array([0.3]), np.eye(1), NormSpec.l2())
        assert ms.u.max() == 0.0
        assert ms.v_bar == 0.0

    def test_weighted_cost_vertices(self):
        ms = move_set(np.zeros(2), np.array([1.0, 1.0]),
                      np.diag([2.0, 1.0]), NormSpec.l2())
        assert np.allclose(ms.u, [2.0, 1.0, 2.0, 1.0])
        assert ms.v_bar == pytest.approx(np.sqrt(5.0))

    def test_floor_keeps_box_full_dimensional(self):
        ms = move_set(np.array([0.5, 0.2]), np.array([0.5, 0.9]),
                      np.eye(2), NormSpec.l2())
        assert ms.u.min() > 0.0
        assert ms.u.min() == pytest.approx(1e-12 * ms.u.max())


class TestV1Prime:
    def test_spacecraft_zero_margin(self):
        m = spacecraft()
        p = v1_prime(m, 0.0, NormSpec.l2())
        # angle rows reduce to |v_i| <= 0.2; omega rows become 0 <= 0.05
        verts = [np.array([0.2, 0.0, 0.0]), np.array([0.0, -0.2, 0.0])]
        for v in verts:
            assert p.contains(v, tol=1e-12)
        assert not p.contains(np.array([0.21, 0.0, 0.0]))

    def test_spacecraft_l2_margin(self):
        m = spacecraft()
        p = v1_prime(m, 0.05, NormSpec.l2())
        assert p.contains(np.array([0.15, 0.0, 0.0]), tol=1e-12)
        assert not p.contains(np.array([0.1501, 0.0, 0.0]))

    def test_example1_not_affine(self):
        with pytest.raises(NotAffineError):
            v1_prime(example1(), 0.01, NormSpec.l2())


@pytest.fixture(scope="module")
def ex1_setup():
    model = example1()
    spec = NormSpec.l2()
    certs = certify(model, spec, grid_density=41)
    return model, spec, certs


@pytest.fixture(scope="module")
def lin_setup():
    model = make_linear_model()
    spec = NormSpec.l2()
    cert = Certificate(region=model.V, mu_e=-0.9, eta_x=0.0, eta_v=0.0,
                       grid_density=2, safety_inflation=1.0)
    return model, spec, [cert]


class TestAssemble:
    def test_example1_row_count(self, ex1_setup):
        model, spec, certs = ex1_setup
        cfg = GovernorConfig(dt_sample=0.05, scalar_mode=False)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1))
        qp = gov.assemble(gov.x_k, np.array([0.5]))
        n = gov.linearization.N
        # (N+1) blocks of the 4 state rows + 2 command rows + box (2) + zeta (1)
        assert qp.n_constraints == (n + 1) * 4 + 2 + 3

    def test_scalar_mode_adds_two_rows(self, ex1_setup):
        model, spec, certs = ex1_setup
        cfg = GovernorConfig(dt_sample=0.05, scalar_mode=True)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1))
        qp, _ = gov._assemble(gov.x_k, np.array([0.5]))
        n = gov.linearization.N
        assert qp.n_constraints == (n + 1) * 4 + 2 + 3 + 2

    def test_degenerate_first_block_rows(self, lin_setup):
        # linear plant, w_max = 0, x at steady state: the j = 0 block
        # reduces to 0 * dv <= m - delta - M x_k
        model, spec, certs = lin_setup
        cfg = GovernorConfig(dt_sample=0.05, delta=1e-4)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1), w_max=0.0,
                       kind="RG_L")
        qp = gov.assemble(gov.x_k, np.zeros(1))
        n_m = model.X.M.shape[0]
        first_a = qp.A[:n_m]
        first_b = qp.b[:n_m]
        assert np.abs(first_a[:, 0]).max() <= 1e-12          # no dv coupling at t=0
        assert np.abs(first_a[:, 1]).max() <= 1e-12          # gamma terms all zero
        expected = model.X.m - 1e-4 - model.X.M @ gov.x_k
        assert np.allclose(first_b, expected)

    def test_h2_component_formula(self, ex1_setup):
        # row (0, 1) under l2 has unit support; H2 = (G_w + L_w) w_max there,
        # e.g. 2.4 * 0.01 * 1 = 0.024 with zero intersample inflation
        model, spec, certs = ex1_setup
        w_max = 0.01
        cfg = GovernorConfig(dt_sample=0.05)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1), w_max=w_max)
        lin = gov.linearization
        row_support = support_rows(model.X.M, spec)[1]
        assert row_support == pytest.approx(1.0)
        assert lin.h2_const[1] == pytest.approx(
            (lin.gains.gamma_w + lin.gains.lambda_w) * w_max * row_support)
        hypothetical = 2.4 * w_max * row_support
        assert hypothetical == pytest.approx(0.024)

    def test_phi_power_cache_matches_mat_exp(self, ex1_setup):
        model, spec, certs = ex1_setup
        cfg = GovernorConfig(dt_sample=0.05)
        gov = Governor(model, certs, spec, cfg, v0=np.array([0.2]))
        lin = gov.linearization
        dtc = gov.dt_check
        for j in (0, 1, 2, 7, lin.N // 2, lin.N):
            ref = mat_exp(lin.A, j * dtc)
            assert np.abs(lin.phi[j] - ref).max() <= 1e-9


class TestStep:
    def test_fixed_point_when_converged(self, ex1_setup):
        model, spec, certs = ex1_setup
        r = np.array([0.3])
        cfg = GovernorConfig(dt_sample=0.05, scalar_mode=True)
        gov = Governor(model, certs, spec, cfg, v0=r.copy())
        v_next, diag = gov.step(model.x_v(r), r)
        assert diag.qp_status == "optimal"
        assert np.abs(v_next - r).max() <= 1e-9

    def test_accepted_rows_hold_with_slack(self, ex1_setup):
        model, spec, certs = ex1_setup
        cfg = GovernorConfig(dt_sample=0.05, scalar_mode=True)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1))
        r = np.array([np.sin(np.pi / 4)])
        x = model.x_v(np.zeros(1)).copy()
        h = 0.005
        for k in range(40):
            qp, _ = gov._assemble(x, r)
            v, diag = gov.step(x, r)
            if diag.accepted:
                z = np.concatenate([diag.delta_v, [diag.zeta]])
                assert (qp.A @ z - qp.b).max() <= 1e-8
            for _ in range(10):
                k1 = model.f(x, v)
                k2 = model.f(x + 0.5 * h * k1, v)
                k3 = model.f(x + 0.5 * h * k2, v)
                k4 = model.f(x + h * k3, v)
                x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    def test_cost_scale_invariance(self, ex1_setup):
        # scaling S (with zeta_reg tied to trace S) must not move dv*
        model, spec, certs = ex1_setup
        r = np.array([0.4])
        outs = []
        for c in (1.0, 50.0):
            cfg = GovernorConfig(S=c * np.eye(1), dt_sample=0.05, scalar_mode=True)
            gov = Governor(model, certs, spec, cfg, v0=np.zeros(1))
            _, diag = gov.step(model.x_v(np.zeros(1)), r)
            outs.append(diag.delta_v.copy())
        assert np.abs(outs[0] - outs[1]).max() <= 1e-8

    def test_linear_plant_rg_nl_equals_rg_l(self, lin_setup):
        # eta = 0 certificates make both kinds coincide
        model, spec, certs = lin_setup
        r = np.array([1.0])
        traces = {}
        for kind in ("RG_NL", "RG_L"):
            cfg = GovernorConfig(dt_sample=0.05)
            gov = Governor(model, certs, spec, cfg, v0=np.zeros(1), kind=kind)
            x = model.x_v(np.zeros(1)).copy()
            h = 0.005
            vs = []
            for k in range(30):
                v, _ = gov.step(x, r)
                vs.append(v.copy())
                for _ in range(10):
                    k1 = model.f(x, v)
                    k2 = model.f(x + 0.5 * h * k1, v)
                    k3 = model.f(x + 0.5 * h * k2, v)
                    k4 = model.f(x + h * k3, v)
                    x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            traces[kind] = np.array(vs)
        assert np.abs(traces["RG_NL"] - traces["RG_L"]).max() <= 1e-9

    def test_infeasible_falls_back_to_hold(self, lin_setup):
        model, spec, certs = lin_setup
        cfg = GovernorConfig(dt_sample=0.05)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1), kind="RG_L")
        # measured state far outside X makes the tightened rows inconsistent
        x_bad = np.array([30.0, -30.0])
        v, diag = gov.step(x_bad, np.array([1.0]))
        assert diag.qp_status in ("infeasible", "rejected_jump")
        assert np.allclose(v, 0.0)

    def test_jump_check_rejects_uncovered_state(self, ex1_setup):
        # non-scalar sequential mode: a state jump larger than
        # Lambda_v ||dv*|| + Lambda_w w_max must hold the command
        model, spec, certs = ex1_setup
        cfg = GovernorConfig(dt_sample=0.05, scalar_mode=False)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1), w_max=0.0)
        x_off = model.x_v(np.zeros(1)) + np.array([0.15, 0.05])
        v, diag = gov.step(x_off, np.array([0.1]))
        if not diag.accepted:
            assert diag.qp_status in ("rejected_jump", "infeasible")
            assert np.allclose(v, 0.0)
        else:
            g = gov.linearization.gains
            assert vec_norm(x_off - model.x_v(v * 0), spec) <= \
                g.lambda_v * abs(diag.delta_v[0]) + 1e-9


class TestScalarFastPath:
    def test_matches_active_set_solver(self, ex1_setup):
        # the one-command reduction must agree with the general QP solver
        # on the very problems the governor assembles
        from rgov.governor import _solve_1d
        from rgov.qp import solve_qp

        model, spec, certs = ex1_setup
        cfg = GovernorConfig(dt_sample=0.05, dt_check=0.1, scalar_mode=True)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(1), w_max=1e-2)
        rng = np.random.default_rng(17)
        r = np.array([np.sin(np.pi / 4)])
        x = model.x_v(np.zeros(1)).copy()
        h = 0.005
        counts = {"optimal": 0, "infeasible": 0}
        for k in range(60):
            qp, (ms, _, _) = gov._assemble(x, r)
            status, z = _solve_1d(qp.A, qp.b, ms.u[0], ms.u[1],
                                  float(gov.S[0, 0]), max(gov.zeta_reg, 1e-14),
                                  float(r[0] - gov.v_k[0]))
            ref = solve_qp(qp)
            assert status == ref.status
            counts[status] += 1
            if status == "optimal":
                assert abs(z[0] - ref.z[0]) <= 1e-8
            v, _ = gov.step(x, r)
            for _ in range(10):
                w = np.array([float(rng.uniform(-1e-2, 1e-2)), 0.0])
                k1 = model.f(x, v) + w
                k2 = model.f(x + 0.5 * h * k1, v) + w
                k3 = model.f(x + 0.5 * h * k2, v) + w
                k4 = model.f(x + h * k3, v) + w
                x = x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        # the sweep exercises both the accepted-step and the hold branch
        assert counts["optimal"] >= 5
        assert counts["infeasible"] >= 5


class TestAugmentation:
    def test_epsilon_validation(self):
        model = spacecraft()
        spec = NormSpec.weighted(model.meta["P"])
        certs = certify(model, spec, grid_density=3)
        cfg = GovernorConfig(dt_sample=0.05, dt_check=0.2,
                             convergence_augmentation=True, epsilon=1e-4)
        with pytest.raises(ValueError):
            Governor(model, certs, spec, cfg, v0=np.zeros(3), w_max=2e-3)

    def test_auto_epsilon_accepts_target(self):
        model = spacecraft()
        spec = NormSpec.weighted(model.meta["P"])
        certs = certify(model, spec, grid_density=3)
        cfg = GovernorConfig(dt_sample=0.05, dt_check=0.2,
                             convergence_augmentation=True)
        gov = Governor(model, certs, spec, cfg, v0=np.zeros(3), w_max=2e-3)
        assert gov.kappa > 0.0
        r_s = np.array([np.pi / 20] * 3)
        assert gov.v1p.contains(r_s)
