import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pfiga.splines import (
    InvalidRefinementError,
    NurbsPatch,
    SplineDomainError,
    bezier_patch,
    bspline_basis_derivs,
    evaluate_surface,
    find_span,
    gauss_rule,
    insert_knots,
    insertion_matrix,
    nurbs_basis_2d,
    refine_uniform,
    uniform_knots,
)

FIG1 = [0, 0, 0, 0.25, 0.5, 0.75, 0.75, 1, 1, 1]
BEZ2 = [0, 0, 0, 1, 1, 1]


def cox_de_boor(U, p, i, x):
    """Plain recursive definition, used as an oracle."""
    if p == 0:
        if U[i] <= x < U[i + 1]:
            return 1.0
        # closed right end on the last nonzero span
        return 1.0 if x == U[-1] and U[i] < U[i + 1] == U[-1] else 0.0
    a = 0.0 if U[i + p] == U[i] else (x - U[i]) / (U[i + p] - U[i]) * cox_de_boor(U, p - 1, i, x)
    b = 0.0
    if U[i + p + 1] != U[i + 1]:
        b = (U[i + p + 1] - x) / (U[i + p + 1] - U[i + 1]) * cox_de_boor(U, p - 1, i + 1, x)
    return a + b


def random_patch(rng, p=None, q=None):
    p = p or int(rng.integers(1, 4))
    q = q or int(rng.integers(1, 4))
    ex, ey = int(rng.integers(1, 5)), int(rng.integers(1, 5))
    U, V = uniform_knots(p, ex), uniform_knots(q, ey)
    # perturb interior knots, keep them ordered
    for K in (U, V):
        inner = slice(p + 1 if K is U else q + 1, -(p + 1) if K is U else -(q + 1))
        if K[inner].size:
            K[inner] = np.sort(K[inner] + rng.uniform(-0.1, 0.1, K[inner].size) / max(ex, ey))
    n, m = U.size - p - 1, V.size - q - 1
    g = np.stack(np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, m), indexing="ij"), axis=-1)
    P = g + 0.05 * rng.normal(size=g.shape)
    w = rng.uniform(0.5, 2.0, (n, m))
    return NurbsPatch(U, V, p, q, P, w)


class TestFindSpan:
    def test_single_span(self):
        assert find_span(BEZ2, 2, 0.3) == 2

    def test_end_clamp(self):
        assert find_span(BEZ2, 2, 1.0) == 2
        assert find_span(FIG1, 2, 1.0) == 6

    def test_fig1_interior(self):
        k = find_span(FIG1, 2, 0.6)
        assert FIG1[k] == 0.5 and FIG1[k + 1] == 0.75

    @pytest.mark.parametrize("x", [-0.1, 1.2, float("nan")])
    def test_domain_error(self, x):
        with pytest.raises(SplineDomainError):
            find_span(FIG1, 2, x)

    @given(st.floats(0.0, 1.0))
    def test_against_linear_scan(self, x):
        U = np.array(FIG1, dtype=float)
        k = find_span(U, 2, x)
        if x < 1.0:
            scan = max(i for i in range(2, U.size - 3) if U[i] <= x)
            assert k == scan
        assert U[k] < U[k + 1]


class TestUnivariateBasis:
    def test_bernstein_midpoint(self):
        _, d = bspline_basis_derivs(BEZ2, 2, 0.5)
        np.testing.assert_allclose(d[0], [0.25, 0.5, 0.25], atol=1e-15)

    def test_endpoint_interpolation(self):
        _, d = bspline_basis_derivs(BEZ2, 2, 0.0)
        np.testing.assert_array_equal(d[0], [1.0, 0.0, 0.0])

    def test_doubled_knot_is_interpolatory(self):
        _, d = bspline_basis_derivs(FIG1, 2, 0.75)
        assert np.sum(d[0] == 1.0) == 1 and np.sum(d[0] == 0.0) == 2

    @pytest.mark.parametrize("x", [0.0, 0.1, 0.3, 0.6, 0.75, 0.9, 1.0])
    def test_against_cox_de_boor(self, x):
        k, d = bspline_basis_derivs(FIG1, 2, x)
        ref = [cox_de_boor(FIG1, 2, i, x) for i in range(k - 2, k + 1)]
        np.testing.assert_allclose(d[0], ref, atol=1e-14)

    def test_derivatives_beyond_degree_are_zero(self):
        _, d = bspline_basis_derivs([0, 0, 0.5, 1, 1], 1, 0.3, max_deriv=2)
        np.testing.assert_array_equal(d[2], 0.0)

    def test_c0_at_doubled_knot(self):
        U = FIG1
        eps = 1e-9
        kl, dl = bspline_basis_derivs(U, 2, 0.75 - eps, max_deriv=1)
        kr, dr = bspline_basis_derivs(U, 2, 0.75 + eps, max_deriv=1)
        vl, vr = np.zeros(7), np.zeros(7)
        gl, gr = np.zeros(7), np.zeros(7)
        vl[kl - 2: kl + 1], gl[kl - 2: kl + 1] = dl[0], dl[1]
        vr[kr - 2: kr + 1], gr[kr - 2: kr + 1] = dr[0], dr[1]
        np.testing.assert_allclose(vl, vr, atol=1e-7)
        assert np.max(np.abs(gl - gr)) > 1.0

    @settings(max_examples=60, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(1, 4), st.integers(1, 6))
    def test_sums(self, x, p, ne):
        _, d = bspline_basis_derivs(uniform_knots(p, ne), p, x, max_deriv=2)
        assert abs(d[0].sum() - 1.0) < 1e-12
        assert abs(d[1].sum()) < 1e-9
        assert abs(d[2].sum()) < 1e-7


class TestNurbs2D:
    def test_unit_weights_reduce_to_bsplines(self):
        U, V = FIG1, [0, 0, 0, 0.5, 1, 1, 1]
        n, m = 7, 4
        P = np.stack(np.meshgrid(np.linspace(0, 1, n), np.linspace(0, 1, m), indexing="ij"), axis=-1)
        pt = NurbsPatch(U, V, 2, 2, P)
        for xi, eta in [(0.1, 0.2), (0.6, 0.7), (1.0, 1.0)]:
            ev = nurbs_basis_2d(pt, xi, eta)
            _, nx = bspline_basis_derivs(U, 2, xi)
            _, ny = bspline_basis_derivs(V, 2, eta)
            np.testing.assert_allclose(ev.R, np.outer(nx[0], ny[0]).ravel(), atol=1e-15)

    def test_quarter_circle(self):
        r = 2.0
        w = math.sqrt(0.5)
        P = np.array([[[r, 0], [2 * r, 0]], [[r, r], [2 * r, 2 * r]], [[0, r], [0, 2 * r]]], dtype=float)
        W = np.array([[1, 1], [w, w], [1, 1]])
        pt = NurbsPatch([0, 0, 0, 1, 1, 1], [0, 0, 1, 1], 2, 1, P, W)
        for t in np.linspace(0, 1, 101):
            x = evaluate_surface(pt, t, 0.0)
            assert abs(np.hypot(*x) - r) < 1e-12

    def test_corner_and_bilinear_mean(self):
        P = np.array([[[0, 0], [0.2, 1]], [[1, 0.1], [1.3, 1.2]]])
        pt = NurbsPatch([0, 0, 1, 1], [0, 0, 1, 1], 1, 1, P)
        np.testing.assert_array_equal(evaluate_surface(pt, 0, 0), P[0, 0])
        np.testing.assert_allclose(evaluate_surface(pt, 0.5, 0.5), P.reshape(-1, 2).mean(0), atol=1e-15)

    def test_partition_of_unity_random(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            pt = random_patch(rng)
            for xi, eta in rng.uniform(0, 1, (50, 2)):
                ev = nurbs_basis_2d(pt, xi, eta, max_deriv=2)
                assert abs(ev.R.sum() - 1) < 1e-12
                assert np.all(np.abs(ev.dR.sum(0)) < 1e-10)
                assert np.all(np.abs(ev.d2R.sum(0)) < 1e-9)

    def test_derivatives_match_finite_differences(self):
        rng = np.random.default_rng(2)
        h = 1e-6
        for _ in range(8):
            pt = random_patch(rng, 3, 3)
            xi, eta = rng.uniform(0.05, 0.95, 2)
            ev = nurbs_basis_2d(pt, xi, eta, max_deriv=2)
            idx = ev.local_indices(pt)

            def full(a, b, key):
                e = nurbs_basis_2d(pt, a, b, max_deriv=1, span=ev.span)
                return getattr(e, key)

            Rx = (full(xi + h, eta, "R") - full(xi - h, eta, "R")) / (2 * h)
            Ry = (full(xi, eta + h, "R") - full(xi, eta - h, "R")) / (2 * h)
            Rxx = (full(xi + h, eta, "dR")[:, 0] - full(xi - h, eta, "dR")[:, 0]) / (2 * h)
            Rxy = (full(xi, eta + h, "dR")[:, 0] - full(xi, eta - h, "dR")[:, 0]) / (2 * h)
            Ryy = (full(xi, eta + h, "dR")[:, 1] - full(xi, eta - h, "dR")[:, 1]) / (2 * h)
            for num, ana in ((Rx, ev.dR[:, 0]), (Ry, ev.dR[:, 1]), (Rxx, ev.d2R[:, 0]), (Rxy, ev.d2R[:, 1]),
                             (Ryy, ev.d2R[:, 2])):
                assert np.max(np.abs(num - ana)) <= 1e-5 * max(1.0, np.max(np.abs(ana)))
            assert idx.size == 16


class TestKnotInsertion:
    def test_boehm_midpoint(self):
        U2, A = insertion_matrix(BEZ2, 2, [0.5])
        np.testing.assert_allclose(U2, [0, 0, 0, 0.5, 1, 1, 1])
        np.testing.assert_allclose(A, [[1, 0, 0], [0.5, 0.5, 0], [0, 0.5, 0.5], [0, 0, 1]])

    def test_empty_is_identity(self):
        U2, A = insertion_matrix(FIG1, 2, [])
        np.testing.assert_array_equal(U2, FIG1)
        np.testing.assert_array_equal(A, np.eye(7))

    def test_multiplicity_overflow(self):
        with pytest.raises(InvalidRefinementError):
            insertion_matrix(FIG1, 2, [0.75])
        with pytest.raises(InvalidRefinementError):
            insertion_matrix(FIG1, 2, [1.0])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(0.01, 0.99), min_size=1, max_size=6), st.integers(1, 4))
    def test_rows_stochastic(self, knots, p):
        U = uniform_knots(p, 3)
        knots = [k for k in knots if all(abs(k - u) > 1e-6 for u in U)]
        # keep multiplicities <= p
        keep = []
        for k in sorted(knots):
            if sum(abs(k - j) < 1e-12 for j in keep) < p:
                keep.append(k)
        _, A = insertion_matrix(U, p, keep)
        assert np.all(A >= -1e-15)
        np.testing.assert_allclose(A.sum(1), 1.0, atol=1e-14)

    def test_geometry_invariance(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            pt = random_patch(rng)
            new = sorted(rng.uniform(0.05, 0.95, 3))
            fine, A = insert_knots(pt, "xi", new)
            fine, _ = insert_knots(fine, "eta", [0.37])
            assert np.all(fine.weights > 0)
            for xi, eta in rng.uniform(0, 1, (30, 2)):
                assert np.max(np.abs(evaluate_surface(fine, xi, eta) - evaluate_surface(pt, xi, eta))) < 1e-13

    def test_refine_uniform_snaps_repeated_knots(self):
        base = bezier_patch(np.concatenate([np.zeros((2, 2, 2)), np.ones((2, 2, 1))], axis=-1), 3)
        ref = refine_uniform(base, 9, 9, extra_eta=[4 / 9, 4 / 9])
        V = ref.knots_eta
        assert np.sum(V == V[np.argmin(np.abs(V - 4 / 9))]) == 3


class TestGauss:
    def test_closed_forms(self):
        x, w = gauss_rule(1)
        np.testing.assert_allclose((x, w), ([0.0], [2.0]))
        x, w = gauss_rule(2)
        np.testing.assert_allclose(np.sort(x), [-1 / math.sqrt(3), 1 / math.sqrt(3)], atol=1e-15)
        x, w = gauss_rule(3)
        np.testing.assert_allclose(np.sort(x), [-math.sqrt(0.6), 0, math.sqrt(0.6)], atol=1e-15)
        np.testing.assert_allclose(w[np.argsort(x)], [5 / 9, 8 / 9, 5 / 9], atol=1e-15)

    @pytest.mark.parametrize("n", range(1, 11))
    def test_exactness(self, n):
        x, w = gauss_rule(n)
        assert abs(w.sum() - 2) < 1e-14
        for k in range(2 * n):
            exact = 0.0 if k % 2 else 2.0 / (k + 1)
            assert abs(np.dot(w, x ** k) - exact) < 1e-13

    @pytest.mark.parametrize("n", [0, 11])
    def test_range(self, n):
        with pytest.raises(ValueError):
            gauss_rule(n)
