"""Pointwise material laws for anisotropic (spectral split) phase-field fracture.

All functions accept batches: strain tensors have shape ``(..., 2, 2)``,
phase-field values broadcast against the leading dimensions. Plane strain,
Voigt order ``(xx, yy, xy)`` with engineering shear.
"""
from __future__ import annotations

from dataclasses import dataclass
from decimal import Decimal

import numpy as np

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True)
class MaterialParams:
    """Lame constants (kN/mm^2), toughness g_c (kN/mm), length scale l0 (mm)."""

    lam: float
    mu: float
    g_c: float
    l0: float
    kappa: float = 0.0
    order: int = 2

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.lam <= -2.0 / 3.0 * self.mu:
            raise ValueError("lambda must exceed -2/3 mu")
        if self.g_c <= 0 or self.l0 <= 0:
            raise ValueError("g_c and l0 must be positive")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.order not in (2, 4):
            raise ValueError("phase-field order must be 2 or 4")

    @classmethod
    def from_young(cls, E, nu, g_c, l0, **kw):
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return cls(lam, mu, g_c, l0, **kw)

    def with_order(self, order):
        return MaterialParams(self.lam, self.mu, self.g_c, self.l0, self.kappa, order)

    def elastic_matrix(self):
        """Undamaged plane-strain isotropic matrix in Voigt form."""
        lam, mu = self.lam, self.mu
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


def macaulay_plus(x):
    return 0.5 * (x + np.abs(x))


def macaulay_minus(x):
    return 0.5 * (x - np.abs(x))


def heaviside_plus(x):
    # H(0) = 1: zero counts as tension
    return (x >= 0).astype(float)


def degradation(phi, kappa=0.0):
    return (1.0 - phi) ** 2 + kappa


def voigt_to_tensor(v):
    v = np.asarray(v, dtype=float)
    t = np.empty(v.shape[:-1] + (2, 2))
    t[..., 0, 0] = v[..., 0]
    t[..., 1, 1] = v[..., 1]
    t[..., 0, 1] = t[..., 1, 0] = 0.5 * v[..., 2]
    return t


def stress_to_voigt(s):
    s = np.asarray(s)
    return np.stack([s[..., 0, 0], s[..., 1, 1], s[..., 0, 1]], axis=-1)


def spectral_decomposition(eps):
    """Closed-form eigenpairs of symmetric 2x2 tensors.

    Returns eigenvalues ``(..., 2)`` (descending) and eigenvectors
    ``(..., 2, 2)`` with ``vecs[..., :, a]`` the a-th unit eigenvector.
    """
    eps = np.asarray(eps, dtype=float)
    a, b, c = eps[..., 0, 0], eps[..., 1, 1], eps[..., 0, 1]
    m = 0.5 * (a + b)
    r = np.hypot(0.5 * (a - b), c)
    vals = np.stack([m + r, m - r], axis=-1)
    theta = 0.5 * np.arctan2(2.0 * c, a - b)
    ct, st = np.cos(theta), np.sin(theta)
    vecs = np.empty(eps.shape)
    vecs[..., 0, 0], vecs[..., 1, 0] = ct, st
    vecs[..., 0, 1], vecs[..., 1, 1] = -st, ct
    return vals, vecs


def _split_parts(eps):
    vals, vecs = spectral_decomposition(eps)
    # M[..., a, :, :] = v_a v_a^T
    M = vecs.swapaxes(-1, -2)[..., :, :, None] * vecs.swapaxes(-1, -2)[..., :, None, :]
    eps_p = np.sum(macaulay_plus(vals)[..., None, None] * M, axis=-3)
    eps_m = np.sum(macaulay_minus(vals)[..., None, None] * M, axis=-3)
    return vals, vecs, M, eps_p, eps_m


def strain_energy_split(eps, mat):
    """Tensile and compressive elastic energy densities (kN/mm^2)."""
    eps = np.asarray(eps, dtype=float)
    vals, _ = spectral_decomposition(eps)
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    psi_p = 0.5 * mat.lam * macaulay_plus(tr) ** 2 + mat.mu * np.sum(macaulay_plus(vals) ** 2, axis=-1)
    psi_m = 0.5 * mat.lam * macaulay_minus(tr) ** 2 + mat.mu * np.sum(macaulay_minus(vals) ** 2, axis=-1)
    return psi_p, psi_m


def elastic_energy(eps, mat):
    eps = np.asarray(eps, dtype=float)
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    return 0.5 * mat.lam * tr ** 2 + mat.mu * np.einsum("...ij,...ij->...", eps, eps)


def stress_parts(eps, mat):
    """Tensile and compressive stresses ``(sigma+, sigma-)``."""
    eps = np.asarray(eps, dtype=float)
    _, _, _, eps_p, eps_m = _split_parts(eps)
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    I = np.eye(2)
    sp = mat.lam * macaulay_plus(tr)[..., None, None] * I + 2.0 * mat.mu * eps_p
    sm = mat.lam * macaulay_minus(tr)[..., None, None] * I + 2.0 * mat.mu * eps_m
    return sp, sm


def stress(eps, phi, mat):
    """Degraded stress ``g(phi) sigma+ + sigma-``."""
    sp, sm = stress_parts(eps, mat)
    g = degradation(np.asarray(phi, dtype=float), mat.kappa)
    return g[..., None, None] * sp + sm


_VOIGT = ((0, 0), (1, 1), (0, 1))


def _voigt_outer(A, B):
    """Voigt matrix of ``A (x) B``: entry ``[I, J] = A_ij B_kl``."""
    a = np.stack([A[..., i, j] for i, j in _VOIGT], axis=-1)
    b = np.stack([B[..., i, j] for i, j in _VOIGT], axis=-1)
    return a[..., :, None] * b[..., None, :]


def _voigt_spin(A, B):
    """Voigt matrix of ``A_ik B_jl + A_il B_jk``."""
    out = np.empty(A.shape[:-2] + (3, 3))
    for I, (i, j) in enumerate(_VOIGT):
        for J, (k, l) in enumerate(_VOIGT):
            out[..., I, J] = A[..., i, k] * B[..., j, l] + A[..., i, l] * B[..., j, k]
    return out


def _projection_voigt(eps):
    """Derivatives of eps+ and eps- w.r.t. eps as Voigt matrices (tensor components)."""
    vals, _, M, _, _ = _split_parts(eps)
    e1, e2 = vals[..., 0], vals[..., 1]
    hp = heaviside_plus(vals)
    hm = 1.0 - hp
    M1, M2 = M[..., 0, :, :], M[..., 1, :, :]
    Q1, Q2 = _voigt_outer(M1, M1), _voigt_outer(M2, M2)
    Pp = hp[..., 0, None, None] * Q1 + hp[..., 1, None, None] * Q2
    Pm = hm[..., 0, None, None] * Q1 + hm[..., 1, None, None] * Q2

    diff = e1 - e2
    degenerate = np.abs(diff) <= DEGENERATE_TOL * np.maximum(1.0, np.abs(e1) + np.abs(e2))
    safe = np.where(degenerate, 1.0, diff)
    # divided differences of the Macaulay brackets; limit is the Heaviside value
    tp = np.where(degenerate, hp[..., 0], (macaulay_plus(e1) - macaulay_plus(e2)) / safe)
    tm = np.where(degenerate, hm[..., 0], (macaulay_minus(e1) - macaulay_minus(e2)) / safe)
    # spin contribution: one half of the divided difference per ordered pair (a, b)
    S = 0.5 * (_voigt_spin(M1, M2) + _voigt_spin(M2, M1))
    return Pp + tp[..., None, None] * S, Pm + tm[..., None, None] * S


def tangent_parts(eps, mat):
    """Tensile and compressive tangents (Voigt 3x3) before degradation."""
    eps = np.asarray(eps, dtype=float)
    tr = eps[..., 0, 0] + eps[..., 1, 1]
    Hp = heaviside_plus(tr)
    Pp, Pm = _projection_voigt(eps)
    J = np.zeros((3, 3))
    J[:2, :2] = 1.0
    Cp = mat.lam * Hp[..., None, None] * J + 2.0 * mat.mu * Pp
    Cm = mat.lam * (1.0 - Hp)[..., None, None] * J + 2.0 * mat.mu * Pm
    return Cp, Cm


def tangent_tensor(eps, phi, mat):
    """Consistent tangent d sigma / d eps in plane-strain Voigt form."""
    Cp, Cm = tangent_parts(eps, mat)
    g = degradation(np.asarray(phi, dtype=float), mat.kappa)
    return g[..., None, None] * Cp + Cm


# ---------------------------------------------------------------------------
# crack density and history
# ---------------------------------------------------------------------------

def crack_density(phi, grad_phi, lap_phi, mat):
    """Crack surface density per unit area (1/mm)."""
    phi = np.asarray(phi, dtype=float)
    g2 = np.sum(np.asarray(grad_phi, dtype=float) ** 2, axis=-1)
    l0 = mat.l0
    if mat.order == 2:
        return phi ** 2 / (2 * l0) + 0.5 * l0 * g2
    if lap_phi is None:
        raise ValueError("fourth-order density needs the Laplacian")
    return phi ** 2 / (2 * l0) + 0.25 * l0 * g2 + l0 ** 3 / 32.0 * np.asarray(lap_phi) ** 2


def analytic_profile(x, mat):
    """Optimal 1-D phase-field profile across a straight crack."""
    s = np.abs(np.asarray(x, dtype=float)) / mat.l0
    if mat.order == 2:
        return np.exp(-s)
    return np.exp(-2 * s) * (1 + 2 * s)


def analytic_profile_derivatives(x, mat):
    """First and second derivatives of :func:`analytic_profile` for x != 0."""
    x = np.asarray(x, dtype=float)
    l0 = mat.l0
    sg = np.sign(x)
    s = np.abs(x) / l0
    if mat.order == 2:
        e = np.exp(-s)
        return -sg * e / l0, e / l0 ** 2
    e = np.exp(-2 * s)
    d1 = -sg * 4 * s * e / l0
    d2 = (8 * s - 4) * e / l0 ** 2
    return d1, d2


def update_history(h, psi_plus):
    """Running maximum of the tensile energy (irreversibility)."""
    psi_plus = np.asarray(psi_plus, dtype=float)
    if np.any(psi_plus < 0):
        raise RuntimeError("negative tensile energy; strain split is broken")
    return np.maximum(h, psi_plus)


def point_segment_distance(points, a, b):
    points = np.asarray(points, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    d = b - a
    L2 = float(d @ d)
    if L2 == 0.0:
        return np.linalg.norm(points - a, axis=-1)
    t = np.clip(((points - a) @ d) / L2, 0.0, 1.0)
    return np.linalg.norm(points - (a + t[..., None] * d), axis=-1)


def seed_history(points, cracks, mat, c=0.9999):
    """Initial history field around pre-existing crack segments.

    ``cracks`` is a sequence of ``(start, end)`` point pairs; the value at a
    point is the largest over all cracks, i.e. uses the nearest crack.
    """
    if not 0.0 < c < 1.0:
        raise ValueError("c must lie in (0, 1)")
    # decimal arithmetic so that c = 0.9999 gives exactly 9999
    cd = Decimal(repr(float(c)))
    B = float(cd / (1 - cd))
    points = np.asarray(points, dtype=float)
    d = np.full(points.shape[:-1], np.inf)
    for a, b in cracks:
        d = np.minimum(d, point_segment_distance(points, a, b))
    l0 = mat.l0
    return np.where(d <= 0.5 * l0, B * mat.g_c / (2 * l0) * (1 - 2 * d / l0), 0.0)
