import numpy as np
import pytest
import scipy.sparse as sp

from pfiga.assembly import Discretization
from pfiga.constitutive import MaterialParams
from pfiga.multipatch import InterfaceDecl, ModelError, MultipatchModel, classify_dofs
from pfiga.problems import ProblemDefinition, dofs, independent, points_where, rect_patch
from pfiga.solver import (
    LoadSchedule,
    NonConvergenceError,
    PhaseFieldBandError,
    SingularSystemError,
    SolverConfig,
    _check_phi,
    apply_dirichlet,
    initial_state,
    linear_solve,
    reaction_force,
    run_simulation,
    staggered_step,
)

LAM, MU = 121.15, 80.77
E_PS = (LAM + 2 * MU) - LAM ** 2 / (LAM + 2 * MU)
NU_PS = LAM / (LAM + 2 * MU)


def bar_problem(g_c=2.7e-3, l0=0.1, segments=((2, 1e-3),), seed=None, two_patch=False, length=1.0, h=0.2, n=(20, 4)):
    """Bar on [0, length] x [0, h]: rollers at x = 0, pulled at x = length."""
    if two_patch:
        pts = [rect_patch(0, length / 2, 0, h, 4, 2, 2), rect_patch(length / 2, length, 0, h, 8, 4, 2)]
        model = MultipatchModel(pts, [InterfaceDecl((0, "xi1"), (1, "xi0"))])
    else:
        model = MultipatchModel([rect_patch(0, length, 0, h, n[0], n[1], 2)])
    cmap = classify_dofs(model)
    left = points_where(model, lambda x, y: np.abs(x) < 1e-12)
    right = points_where(model, lambda x, y: np.abs(x - length) < 1e-12)
    corner = points_where(model, lambda x, y: np.hypot(x, y) < 1e-12)
    left, right, corner = (independent(cmap, p) for p in (left, right, corner))
    sched = LoadSchedule(list(segments), dofs(right, 0), np.concatenate([dofs(left, 0), dofs(corner, 1)]), "x")
    mat = MaterialParams(LAM, MU, g_c, l0)
    return ProblemDefinition("bar", model, mat, sched, seed_cracks=seed or [], cmap=cmap)


class TestLinearSolve:
    def test_scalar(self):
        assert linear_solve(sp.csr_matrix([[2.0]]), [4.0])[0] == pytest.approx(2.0)

    def test_identity(self):
        b = np.arange(5.0)
        np.testing.assert_array_equal(linear_solve(sp.identity(5), b), b)

    def test_singular(self):
        K = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(SingularSystemError, match="zero-energy"):
            linear_solve(K, [1.0, 0.0])


class TestDirichlet:
    def _K(self, n=6):
        A = np.random.default_rng(0).normal(size=(n, n))
        return sp.csr_matrix(A @ A.T + n * np.eye(n))

    def test_prescribe_all(self):
        K = self._K()
        vals = np.linspace(-1, 1, 6)
        Kc, rhs = apply_dirichlet(K, np.ones(6), np.arange(6), vals)
        np.testing.assert_allclose(linear_solve(Kc, rhs), vals, atol=1e-14)

    def test_zero_values(self):
        K = self._K()
        f = np.arange(1.0, 7.0)
        Kc, rhs = apply_dirichlet(K, f, [1, 4], 0.0)
        expect = f.copy()
        expect[[1, 4]] = 0.0
        np.testing.assert_array_equal(rhs, expect)
        Kd = Kc.toarray()
        np.testing.assert_array_equal(Kd, Kd.T)
        assert Kd[1, 1] == 1.0 and np.count_nonzero(Kd[1]) == 1

    def test_matches_partitioned_solve(self):
        K = self._K(8)
        f = np.random.default_rng(1).normal(size=8)
        fixed, vals = np.array([0, 5]), np.array([0.3, -0.7])
        free = np.setdiff1d(np.arange(8), fixed)
        Kd = K.toarray()
        uf = np.linalg.solve(Kd[np.ix_(free, free)], f[free] - Kd[np.ix_(free, fixed)] @ vals)
        u = linear_solve(*apply_dirichlet(K, f, fixed, vals))
        np.testing.assert_allclose(u[free], uf, atol=1e-13)
        np.testing.assert_allclose(u[fixed], vals)


class TestElasticBar:
    @pytest.mark.parametrize("two_patch", [False, True])
    def test_linear_field(self, two_patch):
        prob = bar_problem(g_c=1e12, two_patch=two_patch)
        res = run_simulation(prob, SolverConfig(tol=1e-6))
        X = prob.model.control_points()
        u = res.state.u.reshape(-1, 2)
        strain = res.state.u_applied
        np.testing.assert_allclose(u[:, 0], strain * X[:, 0], atol=1e-12)
        np.testing.assert_allclose(u[:, 1], -NU_PS * strain * X[:, 1], atol=1e-12)
        assert np.max(np.abs(res.state.phi)) < 1e-10

    def test_two_step_curve(self):
        prob = bar_problem(g_c=1e12)
        res = run_simulation(prob, SolverConfig(tol=1e-6))
        assert len(res.history) == 2
        F = np.array([h["reaction_kN"] for h in res.history])
        u = np.array([h["u_applied_mm"] for h in res.history])
        np.testing.assert_allclose(F / u, E_PS * 0.2, rtol=1e-10)
        assert [h["step"] for h in res.history] == [1, 2]

    def test_reaction_balance(self):
        prob = bar_problem(g_c=1e12)
        res = run_simulation(prob, SolverConfig(tol=1e-6))
        disc = Discretization(prob.model, cmap=prob.cmap)
        mat = prob.material
        sched = prob.schedule
        F_drive = reaction_force(disc, res.state, mat, sched.driven)
        left_x = sched.fixed[sched.fixed % 2 == 0]
        F_fixed = reaction_force(disc, res.state, mat, left_x)
        assert F_drive == pytest.approx(-F_fixed, rel=1e-10)

    def test_zero_displacement_zero_reaction(self):
        prob = bar_problem()
        disc = Discretization(prob.model, cmap=prob.cmap)
        st = initial_state(disc)
        assert reaction_force(disc, st, prob.material, prob.schedule.driven) == 0.0

    def test_negative_direction(self):
        prob = bar_problem(g_c=1e12)
        s = prob.schedule
        prob.schedule = LoadSchedule(s.segments, s.driven, s.fixed, "-x")
        res = run_simulation(prob, SolverConfig(tol=1e-6))
        u = res.state.u.reshape(-1, 2)
        assert u[:, 0].min() == pytest.approx(-2e-3)
        assert res.history[-1]["reaction_kN"] == pytest.approx(E_PS * 0.2 * 2e-3, rel=1e-10)


class TestStaggeredStep:
    def _setup(self, **kw):
        prob = bar_problem(**kw)
        disc = Discretization(prob.model, cmap=prob.cmap)
        return prob, disc, initial_state(disc, prob.initial_history(disc))

    def test_elastic_limit(self):
        prob, disc, st = self._setup(g_c=1e12)
        rep = staggered_step(st, disc, prob.material, prob.schedule, SolverConfig(tol=1e-6), 1e-3)
        assert rep.converged and st.step == 1
        X = prob.model.control_points()
        np.testing.assert_allclose(st.u.reshape(-1, 2)[:, 0], 1e-3 * X[:, 0], atol=1e-10)
        assert np.abs(st.phi).max() < 1e-10

    def test_zero_increment_fixed_point(self):
        prob, disc, st = self._setup(g_c=1e12)
        cfg = SolverConfig(tol=1e-6)
        staggered_step(st, disc, prob.material, prob.schedule, cfg, 1e-3)
        before = st.copy()
        rep = staggered_step(st, disc, prob.material, prob.schedule, SolverConfig(tol=1e-6), 0.0)
        assert rep.iterations == 1
        np.testing.assert_allclose(st.u, before.u, atol=1e-15)
        np.testing.assert_allclose(st.phi, before.phi, atol=1e-15)

    def test_nonconvergence_carries_report(self):
        prob, disc, st = self._setup(g_c=1e-4)
        cfg = SolverConfig(tol=1e-14, max_iter=2)
        with pytest.raises(NonConvergenceError) as info:
            staggered_step(st, disc, prob.material, prob.schedule, cfg, 1e-3)
        rep = info.value.report
        assert rep is not None and not rep.converged and len(rep.metrics) == 2

    def test_run_keeps_report(self):
        prob = bar_problem(g_c=1e-4)
        with pytest.raises(NonConvergenceError, match="load step 1") as info:
            run_simulation(prob, SolverConfig(tol=1e-14, max_iter=2))
        assert info.value.report is not None and info.value.history == []

    def test_band_error(self):
        phi = np.full(4, 1.5)
        with pytest.raises(PhaseFieldBandError, match="step 3"):
            _check_phi(phi, 3, 1)
        _check_phi(phi, 3, 1, band=(-0.01, 1.6))
        with pytest.raises(FloatingPointError):
            _check_phi(np.array([0.0, np.nan]), 1, 1)

    def test_dependent_dirichlet_rejected(self):
        prob = bar_problem(two_patch=True)
        s = prob.schedule
        dep = int(prob.cmap.D[0])
        prob.schedule = LoadSchedule(s.segments, np.array([2 * dep]), s.fixed, "x")
        with pytest.raises(ModelError, match="dependent"):
            run_simulation(prob, SolverConfig())


class TestFracture:
    def _run(self, **cfg):
        # homogeneous damage: soft toughness, no seed; the tiny first step gives
        # the convergence metric a nonzero reference norm
        prob = bar_problem(g_c=1e-4, segments=((1, 1e-6), (4, 1e-3), (3, 2e-3)))
        Hs = []
        res = run_simulation(prob, SolverConfig(**cfg), callback=lambda st, s: Hs.append([h.copy() for h in st.H]))
        return res, Hs

    def test_history_monotone_and_deterministic(self):
        res, Hs = self._run(tol=1e-6)
        for a, b in zip(Hs, Hs[1:]):
            for ha, hb in zip(a, b):
                assert np.all(hb >= ha)
        again, _ = self._run(tol=1e-6)
        assert [h["reaction_kN"] for h in res.history] == [h["reaction_kN"] for h in again.history]
        np.testing.assert_array_equal(res.state.phi, again.state.phi)
        assert np.all(res.state.phi >= -0.01) and np.all(res.state.phi <= 1.01)

    @pytest.mark.parametrize("policy,order", [("step", "phi_first"), ("iteration", "u_first")])
    def test_variants_run(self, policy, order):
        res, _ = self._run(tol=1e-5, history_policy=policy, stagger_order=order)
        assert len(res.history) >= 1
        assert all(h["staggered_iters"] >= 1 for h in res.history)

    def test_freeze_phase(self):
        res, _ = self._run(tol=1e-8, freeze_phase=True)
        assert np.all(res.state.phi == 0.0)

    def test_max_steps_and_snapshots(self):
        res, _ = self._run(tol=1e-5, max_steps=4, snapshot_interval=2)
        assert len(res.history) == 4 and [s.step for s in res.snapshots] == [2, 4]


class TestConfig:
    @pytest.mark.parametrize(
        "kw", [dict(tol=0), dict(history_policy="x"), dict(stagger_order="x"), dict(phi_band=(0.1, 1.01))]
    )
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            SolverConfig(**kw)

    def test_schedule(self):
        s = LoadSchedule([(2, 1e-4), (3, 1e-6)], [0], [1])
        assert list(s.increments()) == [1e-4, 1e-4, 1e-6, 1e-6, 1e-6] and s.n_steps == 5
        with pytest.raises(ValueError):
            LoadSchedule([(1, 1.0)], [0], [1], "z")
        with pytest.raises(ValueError):
            LoadSchedule([(0, 1.0)], [0], [1])

