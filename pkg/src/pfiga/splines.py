"""B-spline and NURBS kernels.

Univariate basis evaluation follows the usual triangular-table scheme
(Cox-de Boor with the 0/0 := 0 convention), bivariate rational bases are
built by the quotient rule, and knot insertion is expressed through
subdivision matrices so that refinement can be reused by the interface
coupling code.

Conventions
-----------
* Control nets are stored as ``(n, m, 2)`` arrays, weights as ``(n, m)``;
  the first index runs along ``xi``, the second along ``eta``.
* The ``(p+1)(q+1)`` local functions of a knot span are ordered with the
  eta index running fastest, i.e. ``np.outer(N_xi, N_eta).ravel()``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

KNOT_TOL = 1e-12


class SplineDomainError(ValueError):
    """Parameter outside the closed unit interval."""


class InvalidRefinementError(ValueError):
    """Knot insertion would break the open knot vector."""


# ---------------------------------------------------------------------------
# knot vectors
# ---------------------------------------------------------------------------

def check_knots(knots, degree):
    """Validate an open knot vector on [0, 1] and return it as an array."""
    U = np.asarray(knots, dtype=float)
    if degree < 0:
        raise ValueError("degree must be non-negative")
    if U.ndim != 1 or U.size < 2 * (degree + 1):
        raise ValueError("knot vector too short for degree %d" % degree)
    if np.any(np.diff(U) < 0):
        raise ValueError("knot vector must be non-decreasing")
    if abs(U[0]) > KNOT_TOL or abs(U[-1] - 1.0) > KNOT_TOL:
        raise ValueError("knot vector must span [0, 1]")
    if np.any(np.abs(U[: degree + 1] - U[0]) > KNOT_TOL) or np.any(
        np.abs(U[-degree - 1:] - U[-1]) > KNOT_TOL
    ):
        raise ValueError("knot vector must be open (clamped)")
    if np.sum(np.abs(U - U[0]) <= KNOT_TOL) != degree + 1 or np.sum(
        np.abs(U - U[-1]) <= KNOT_TOL
    ) != degree + 1:
        raise ValueError("end knots must be repeated exactly p+1 times")
    return U


def uniform_knots(degree, n_elements):
    """Open uniform knot vector with ``n_elements`` spans."""
    inner = np.linspace(0.0, 1.0, n_elements + 1)[1:-1]
    return np.concatenate([np.zeros(degree + 1), inner, np.ones(degree + 1)])


def multiplicity(knots, value):
    return int(np.sum(np.abs(np.asarray(knots) - value) <= KNOT_TOL))


def unique_knots(knots):
    """Breakpoints (distinct knot values) in increasing order."""
    U = np.asarray(knots, dtype=float)
    keep = np.concatenate([[True], np.diff(U) > KNOT_TOL])
    return U[keep]


def element_spans(knots, degree):
    """Span indices of the nonzero-length knot intervals."""
    U = np.asarray(knots, dtype=float)
    n = U.size - degree - 1
    return np.array([k for k in range(degree, n) if U[k + 1] - U[k] > KNOT_TOL], dtype=int)


def find_span(knots, degree, xi):
    """Index ``i`` with ``knots[i] <= xi < knots[i+1]``.

    At ``xi == 1`` the last span of nonzero length is returned.
    """
    U = np.asarray(knots, dtype=float)
    xi = float(xi)
    if not (-KNOT_TOL <= xi <= 1.0 + KNOT_TOL):
        raise SplineDomainError("parameter %r outside [0, 1]" % xi)
    n = U.size - degree - 1
    if xi >= U[n] - KNOT_TOL:
        # clamp to the last nonzero span
        k = n - 1
        while k > degree and U[k + 1] - U[k] <= KNOT_TOL:
            k -= 1
        return k
    if xi <= U[degree]:
        return degree
    lo, hi = degree, n
    mid = (lo + hi) // 2
    while xi < U[mid] or xi >= U[mid + 1]:
        if xi < U[mid]:
            hi = mid
        else:
            lo = mid
        mid = (lo + hi) // 2
    return mid


def bspline_basis_derivs(knots, degree, xi, max_deriv=0, span=None):
    """Nonzero basis functions and derivatives at ``xi``.

    Returns
    -------
    span : int
    ders : ndarray, shape (max_deriv + 1, degree + 1)
        ``ders[k, j]`` is the k-th derivative of ``N_{span-p+j}``. Rows for
        ``k > degree`` are zero.
    """
    U = np.asarray(knots, dtype=float)
    p = degree
    if span is None:
        span = find_span(U, p, xi)
    xi = min(max(float(xi), 0.0), 1.0)
    nd = min(max_deriv, p)

    ndu = np.zeros((p + 1, p + 1))
    left = np.zeros(p + 1)
    right = np.zeros(p + 1)
    ndu[0, 0] = 1.0
    for j in range(1, p + 1):
        left[j] = xi - U[span + 1 - j]
        right[j] = U[span + j] - xi
        saved = 0.0
        for r in range(j):
            ndu[j, r] = right[r + 1] + left[j - r]
            temp = ndu[r, j - 1] / ndu[j, r] if ndu[j, r] != 0.0 else 0.0
            ndu[r, j] = saved + right[r + 1] * temp
            saved = left[j - r] * temp
        ndu[j, j] = saved

    ders = np.zeros((max_deriv + 1, p + 1))
    ders[0] = ndu[:, p]
    a = np.zeros((2, p + 1))
    for r in range(p + 1):
        s1, s2 = 0, 1
        a[0, 0] = 1.0
        for k in range(1, nd + 1):
            d = 0.0
            rk = r - k
            pk = p - k
            if r >= k:
                a[s2, 0] = a[s1, 0] / ndu[pk + 1, rk] if ndu[pk + 1, rk] != 0.0 else 0.0
                d = a[s2, 0] * ndu[rk, pk]
            j1 = 1 if rk >= -1 else -rk
            j2 = k - 1 if r - 1 <= pk else p - r
            for j in range(j1, j2 + 1):
                den = ndu[pk + 1, rk + j]
                a[s2, j] = (a[s1, j] - a[s1, j - 1]) / den if den != 0.0 else 0.0
                d += a[s2, j] * ndu[rk + j, pk]
            if r <= pk:
                den = ndu[pk + 1, r]
                a[s2, k] = -a[s1, k - 1] / den if den != 0.0 else 0.0
                d += a[s2, k] * ndu[r, pk]
            ders[k, r] = d
            s1, s2 = s2, s1
    fac = p
    for k in range(1, nd + 1):
        ders[k] *= fac
        fac *= p - k
    return span, ders


def gauss_rule(n):
    """Gauss-Legendre abscissae and weights on [-1, 1] (1 <= n <= 10)."""
    n = int(n)
    if not 1 <= n <= 10:
        raise ValueError("Gauss rule supports 1..10 points, got %d" % n)
    x, w = np.polynomial.legendre.leggauss(n)
    return x, w


# ---------------------------------------------------------------------------
# patches
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NurbsPatch:
    """One tensor-product NURBS patch in the plane."""

    knots_xi: np.ndarray
    knots_eta: np.ndarray
    p: int
    q: int
    control_points: np.ndarray
    weights: np.ndarray = field(default=None)

    def __post_init__(self):
        U = check_knots(self.knots_xi, self.p)
        V = check_knots(self.knots_eta, self.q)
        P = np.asarray(self.control_points, dtype=float)
        n, m = U.size - self.p - 1, V.size - self.q - 1
        if P.shape != (n, m, 2):
            raise ValueError("control net shape %s, expected %s" % (P.shape, (n, m, 2)))
        w = np.ones((n, m)) if self.weights is None else np.asarray(self.weights, dtype=float)
        if w.shape != (n, m):
            raise ValueError("weights shape %s, expected %s" % (w.shape, (n, m)))
        if np.any(w <= 0):
            raise ValueError("weights must be positive")
        for name, val in (("knots_xi", U), ("knots_eta", V), ("control_points", P), ("weights", w)):
            val = val.copy()
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def shape(self):
        return self.weights.shape

    @property
    def n_points(self):
        return self.weights.size

    def homogeneous(self):
        """Weighted control net ``(w x, w y, w)``."""
        return np.concatenate([self.control_points * self.weights[..., None], self.weights[..., None]], axis=-1)

    @classmethod
    def from_homogeneous(cls, knots_xi, knots_eta, p, q, Pw):
        w = Pw[..., 2]
        return cls(knots_xi, knots_eta, p, q, Pw[..., :2] / w[..., None], w)


@dataclass
class BasisEval:
    """Local rational basis values and parametric derivatives at one point."""

    span: tuple
    R: np.ndarray
    dR: np.ndarray = None   # (nloc, 2): d/dxi, d/deta
    d2R: np.ndarray = None  # (nloc, 3): xi-xi, xi-eta, eta-eta

    def local_indices(self, patch):
        """Flat (row-major) patch indices of the local functions."""
        i, j = self.span
        ii = np.arange(i - patch.p, i + 1)
        jj = np.arange(j - patch.q, j + 1)
        return (ii[:, None] * patch.shape[1] + jj[None, :]).ravel()


def rational_from_tensor(Nx, Ny, w):
    """Rational basis and derivatives from univariate derivative tables.

    ``Nx``: (kx, p+1), ``Ny``: (ky, q+1) with kx, ky >= 1 derivative rows;
    ``w``: (p+1, q+1) local weights. Returns R (nloc,), dR (nloc, 2) or
    None, d2R (nloc, 3) or None depending on the rows provided.
    """
    nd = min(Nx.shape[0], Ny.shape[0]) - 1
    A = np.outer(Nx[0], Ny[0]) * w
    W = A.sum()
    R = A / W
    if nd < 1:
        return R.ravel(), None, None
    Ax = np.outer(Nx[1], Ny[0]) * w
    Ay = np.outer(Nx[0], Ny[1]) * w
    Wx, Wy = Ax.sum(), Ay.sum()
    Rx = (Ax - R * Wx) / W
    Ry = (Ay - R * Wy) / W
    dR = np.stack([Rx.ravel(), Ry.ravel()], axis=-1)
    if nd < 2:
        return R.ravel(), dR, None
    Axx = np.outer(Nx[2], Ny[0]) * w
    Axy = np.outer(Nx[1], Ny[1]) * w
    Ayy = np.outer(Nx[0], Ny[2]) * w
    Wxx, Wxy, Wyy = Axx.sum(), Axy.sum(), Ayy.sum()
    Rxx = (Axx - 2.0 * Rx * Wx - R * Wxx) / W
    Rxy = (Axy - Rx * Wy - Ry * Wx - R * Wxy) / W
    Ryy = (Ayy - 2.0 * Ry * Wy - R * Wyy) / W
    d2R = np.stack([Rxx.ravel(), Rxy.ravel(), Ryy.ravel()], axis=-1)
    return R.ravel(), dR, d2R


def nurbs_basis_2d(patch, xi, eta, max_deriv=0, span=None):
    """Evaluate the local rational basis of ``patch`` at ``(xi, eta)``."""
    if span is None:
        span = (find_span(patch.knots_xi, patch.p, xi), find_span(patch.knots_eta, patch.q, eta))
    i, j = span
    _, Nx = bspline_basis_derivs(patch.knots_xi, patch.p, xi, max_deriv, span=i)
    _, Ny = bspline_basis_derivs(patch.knots_eta, patch.q, eta, max_deriv, span=j)
    w = patch.weights[i - patch.p: i + 1, j - patch.q: j + 1]
    R, dR, d2R = rational_from_tensor(Nx, Ny, w)
    return BasisEval((i, j), R, dR, d2R)


def evaluate_surface(patch, xi, eta):
    """Physical point ``S(xi, eta)``."""
    b = nurbs_basis_2d(patch, xi, eta)
    P = patch.control_points.reshape(-1, 2)[b.local_indices(patch)]
    return b.R @ P


# ---------------------------------------------------------------------------
# refinement
# ---------------------------------------------------------------------------

def insertion_matrix(knots, degree, new_knots):
    """Univariate subdivision matrix for inserting ``new_knots``.

    Returns the refined knot vector and ``A`` with shape
    ``(n_fine, n_coarse)`` such that fine coefficients are ``A @ coarse``.
    Each row of ``A`` is non-negative and sums to one.
    """
    U = np.asarray(knots, dtype=float)
    p = degree
    A = sp.identity(U.size - p - 1, format="csr")
    for u in sorted(float(k) for k in new_knots):
        if not KNOT_TOL < u < 1.0 - KNOT_TOL:
            raise InvalidRefinementError("inserted knot %r must lie strictly inside (0, 1)" % u)
        if multiplicity(U, u) + 1 > p:
            raise InvalidRefinementError("knot %r would exceed multiplicity %d" % (u, p))
        n = U.size - p - 1
        k = int(np.searchsorted(U, u, side="right")) - 1
        rows, cols, vals = [], [], []
        for i in range(n + 1):
            if i <= k - p:
                rows.append(i), cols.append(i), vals.append(1.0)
            elif i >= k + 1:
                rows.append(i), cols.append(i - 1), vals.append(1.0)
            else:
                alpha = (u - U[i]) / (U[i + p] - U[i])
                rows += [i, i]
                cols += [i, i - 1]
                vals += [alpha, 1.0 - alpha]
        S = sp.csr_matrix((vals, (rows, cols)), shape=(n + 1, n))
        A = S @ A
        U = np.insert(U, k + 1, u)
    A = A.toarray()
    return U, A


def insert_knots(patch, direction, new_knots):
    """Refine ``patch`` by knot insertion along ``direction`` ('xi' or 'eta').

    Returns the refined patch and the univariate subdivision matrix. The
    surface map is unchanged; insertion acts on homogeneous coordinates.
    """
    if direction not in ("xi", "eta"):
        raise ValueError("direction must be 'xi' or 'eta'")
    new_knots = list(new_knots)
    Pw = patch.homogeneous()
    if direction == "xi":
        U, A = insertion_matrix(patch.knots_xi, patch.p, new_knots)
        Pw = np.einsum("ab,bjc->ajc", A, Pw)
        return NurbsPatch.from_homogeneous(U, patch.knots_eta, patch.p, patch.q, Pw), A
    V, A = insertion_matrix(patch.knots_eta, patch.q, new_knots)
    Pw = np.einsum("ab,ibc->iac", A, Pw)
    return NurbsPatch.from_homogeneous(patch.knots_xi, V, patch.p, patch.q, Pw), A


def elevate_bezier(Pw, direction):
    """Raise the degree of a single-element (Bezier) patch by one.

    Used only to build cubic geometry from exact lower-degree conics.
    ``Pw`` is a homogeneous net ``(n, m, 3)``.
    """
    axis = 0 if direction == "xi" else 1
    Pw = np.moveaxis(np.asarray(Pw, dtype=float), axis, 0)
    p = Pw.shape[0] - 1
    Q = np.zeros((p + 2,) + Pw.shape[1:])
    Q[0], Q[-1] = Pw[0], Pw[-1]
    for i in range(1, p + 1):
        a = i / (p + 1)
        Q[i] = a * Pw[i - 1] + (1 - a) * Pw[i]
    return np.moveaxis(Q, 0, axis)


def bezier_patch(Pw, degree=3):
    """Single-element NURBS patch from a homogeneous Bezier net, elevated to ``degree``."""
    Pw = np.asarray(Pw, dtype=float)
    while Pw.shape[0] - 1 < degree:
        Pw = elevate_bezier(Pw, "xi")
    while Pw.shape[1] - 1 < degree:
        Pw = elevate_bezier(Pw, "eta")
    p, q = Pw.shape[0] - 1, Pw.shape[1] - 1
    U = np.concatenate([np.zeros(p + 1), np.ones(p + 1)])
    V = np.concatenate([np.zeros(q + 1), np.ones(q + 1)])
    return NurbsPatch.from_homogeneous(U, V, p, q, Pw)


def refine_uniform(patch, n_xi, n_eta, extra_xi=(), extra_eta=()):
    """Insert uniformly spaced knots (plus optional extra knots).

    Extra knots within 1e-10 of a uniform knot are snapped onto it, so that
    repeated knots are bitwise equal.
    """
    def plan(U, n, extra):
        grid = np.linspace(0, 1, n + 1)
        new = [k for k in grid[1:-1] if multiplicity(U, k) == 0]
        for e in extra:
            j = int(np.argmin(np.abs(grid - e)))
            new.append(grid[j] if abs(grid[j] - e) <= 1e-10 else float(e))
        return sorted(new)

    kx = plan(patch.knots_xi, n_xi, extra_xi)
    ke = plan(patch.knots_eta, n_eta, extra_eta)
    out, _ = insert_knots(patch, "xi", kx)
    out, _ = insert_knots(out, "eta", ke)
    return out
