"""Shape functions on physical patches, element kernels and global assembly.

Geometry-dependent quantities (rational basis values, physical first and
second derivatives, Jacobian weights) never change during a simulation and
are cached per patch as dense arrays of shape ``(n_elements, n_gauss, ...)``.
Element kernels are vectorised over elements; a single element is simply a
batch of one.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import constitutive as cm
from .multipatch import classify_dofs, reduce_system
from .splines import bspline_basis_derivs, element_spans, gauss_rule, nurbs_basis_2d


class MeshError(ValueError):
    """Degenerate or inverted geometry mapping."""


class ConfigurationError(ValueError):
    pass


# ---------------------------------------------------------------------------
# geometry mapping
# ---------------------------------------------------------------------------

def physical_derivatives(dR, d2R, P):
    """Map parametric basis derivatives to physical ones.

    ``dR``: (..., nloc, 2), ``d2R``: (..., nloc, 3) or None, ``P``: (..., nloc, 2).
    Returns ``(dN, d2N, detJ)`` with ``d2N`` columns (xx, xy, yy).
    """
    J = np.einsum("...na,...ni->...ia", dR, P)  # J[i, a] = dx_i / dxi_a
    detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    Jinv = np.empty_like(J)
    Jinv[..., 0, 0] = J[..., 1, 1] / detJ
    Jinv[..., 1, 1] = J[..., 0, 0] / detJ
    Jinv[..., 0, 1] = -J[..., 0, 1] / detJ
    Jinv[..., 1, 0] = -J[..., 1, 0] / detJ
    dN = np.einsum("...na,...ai->...ni", dR, Jinv)
    if d2R is None:
        return dN, None, detJ
    # geometry Hessian x_i,ab for ab in (xixi, xieta, etaeta)
    Hx = np.einsum("...nk,...ni->...ik", d2R, P)
    rhs = d2R - np.einsum("...ni,...ik->...nk", dN, Hx)
    xa, ya = J[..., 0, 0], J[..., 1, 0]
    xb, yb = J[..., 0, 1], J[..., 1, 1]
    M = np.stack(
        [
            np.stack([xa * xa, 2 * xa * ya, ya * ya], axis=-1),
            np.stack([xa * xb, xa * yb + xb * ya, ya * yb], axis=-1),
            np.stack([xb * xb, 2 * xb * yb, yb * yb], axis=-1),
        ],
        axis=-2,
    )
    Minv = np.linalg.inv(M)
    d2N = np.einsum("...kl,...nl->...nk", Minv, rhs)
    return dN, d2N, detJ


@dataclass
class ShapeData:
    N: np.ndarray
    dN: np.ndarray
    d2N: np.ndarray
    detJ: float

    @property
    def B_u(self):
        return strain_matrix(self.dN)

    @property
    def B_phi(self):
        return self.dN.T

    @property
    def D_phi(self):
        return self.d2N[:, 0] + self.d2N[:, 2]


def shape_data(patch, xi, eta, span=None, pid=None):
    """Physical shape data of ``patch`` at one parametric point."""
    b = nurbs_basis_2d(patch, xi, eta, max_deriv=2, span=span)
    P = patch.control_points.reshape(-1, 2)[b.local_indices(patch)]
    dN, d2N, detJ = physical_derivatives(b.dR, b.d2R, P)
    if not detJ > 0:
        raise MeshError("non-positive Jacobian %.3e in patch %s, span %s" % (detJ, pid, b.span))
    return ShapeData(b.R, dN, d2N, float(detJ))


def strain_matrix(dN):
    """B_u with interleaved (ux, uy) columns, shape (..., 3, 2 nloc)."""
    shp = dN.shape[:-2]
    nloc = dN.shape[-2]
    B = np.zeros(shp + (3, 2 * nloc))
    B[..., 0, 0::2] = dN[..., 0]
    B[..., 1, 1::2] = dN[..., 1]
    B[..., 2, 0::2] = dN[..., 1]
    B[..., 2, 1::2] = dN[..., 0]
    return B


# ---------------------------------------------------------------------------
# per-patch quadrature cache
# ---------------------------------------------------------------------------

def _univariate_table(knots, degree, spans, x, w):
    U = np.asarray(knots)
    ne, ng = spans.size, x.size
    tab = np.zeros((ne, ng, 3, degree + 1))
    pts = np.zeros((ne, ng))
    wts = np.zeros((ne, ng))
    for e, k in enumerate(spans):
        a, b = U[k], U[k + 1]
        for g in range(ng):
            t = 0.5 * (a + b) + 0.5 * (b - a) * x[g]
            pts[e, g] = t
            wts[e, g] = 0.5 * (b - a) * w[g]
            _, tab[e, g] = bspline_basis_derivs(U, degree, t, 2, span=k)
    return tab, pts, wts


@dataclass
class PatchQuadrature:
    """Cached shape data at every Gauss point of one patch.

    Arrays are indexed ``[element, gauss_point, local_function, ...]``.
    """

    pid: int
    spans: np.ndarray     # (ne, 2) knot-span indices
    conn: np.ndarray      # (ne, nloc) global control-point indices
    N: np.ndarray         # (ne, ng, nloc)
    dN: np.ndarray        # (ne, ng, nloc, 2)
    d2N: np.ndarray       # (ne, ng, nloc, 3)
    wdet: np.ndarray      # (ne, ng) quadrature weight times det J
    x: np.ndarray         # (ne, ng, 2) physical Gauss points
    param: np.ndarray     # (ne, ng, 2) parametric Gauss points

    @property
    def n_elements(self):
        return self.conn.shape[0]

    @property
    def lap(self):
        return self.d2N[..., 0] + self.d2N[..., 2]


def build_patch_quadrature(patch, pid=0, offset=0, n_gauss=None):
    p, q = patch.p, patch.q
    ngx, ngy = (p + 1, q + 1) if n_gauss is None else n_gauss
    gx, wx = gauss_rule(ngx)
    gy, wy = gauss_rule(ngy)
    sx = element_spans(patch.knots_xi, p)
    sy = element_spans(patch.knots_eta, q)
    Tx, px, wxs = _univariate_table(patch.knots_xi, p, sx, gx, wx)
    Ty, py, wys = _univariate_table(patch.knots_eta, q, sy, gy, wy)
    nex, ney = sx.size, sy.size
    n, m = patch.shape
    ne, ng, nloc = nex * ney, ngx * ngy, (p + 1) * (q + 1)

    ii = sx[:, None] - p + np.arange(p + 1)[None, :]          # (nex, p+1)
    jj = sy[:, None] - q + np.arange(q + 1)[None, :]          # (ney, q+1)
    loc = ii[:, None, :, None] * m + jj[None, :, None, :]     # (nex, ney, p+1, q+1)
    conn = offset + loc.reshape(ne, nloc)
    w = patch.weights.ravel()[loc]                            # (nex, ney, p+1, q+1)
    P = patch.control_points.reshape(-1, 2)[loc.reshape(ne, nloc)]

    def tens(dx, dy):
        A = np.einsum("egi,fhj,efij->efghij", Tx[:, :, dx], Ty[:, :, dy], w)
        return A.reshape(nex, ney, ngx, ngy, nloc).reshape(ne, ng, nloc)

    A = tens(0, 0)
    Ax, Ay = tens(1, 0), tens(0, 1)
    Axx, Axy, Ayy = tens(2, 0), tens(1, 1), tens(0, 2)
    W = A.sum(-1, keepdims=True)
    Wx, Wy = Ax.sum(-1, keepdims=True), Ay.sum(-1, keepdims=True)
    Wxx, Wxy, Wyy = Axx.sum(-1, keepdims=True), Axy.sum(-1, keepdims=True), Ayy.sum(-1, keepdims=True)
    R = A / W
    Rx = (Ax - R * Wx) / W
    Ry = (Ay - R * Wy) / W
    Rxx = (Axx - 2 * Rx * Wx - R * Wxx) / W
    Rxy = (Axy - Rx * Wy - Ry * Wx - R * Wxy) / W
    Ryy = (Ayy - 2 * Ry * Wy - R * Wyy) / W
    dR = np.stack([Rx, Ry], axis=-1)
    d2R = np.stack([Rxx, Rxy, Ryy], axis=-1)
    Pg = np.broadcast_to(P[:, None], (ne, ng, nloc, 2))
    dN, d2N, detJ = physical_derivatives(dR, d2R, Pg)
    if np.any(detJ <= 0):
        e, g = np.argwhere(detJ <= 0)[0]
        raise MeshError(
            "non-positive Jacobian %.3e in patch %d, element %d (spans %d, %d)"
            % (detJ[e, g], pid, e, sx[e // ney], sy[e % ney])
        )
    wq = (wxs[:, None, :, None] * wys[None, :, None, :]).reshape(ne, ng)
    x = np.einsum("egn,eni->egi", R, P)
    par = np.stack(
        [
            np.broadcast_to(px[:, None, :, None], (nex, ney, ngx, ngy)).reshape(ne, ng),
            np.broadcast_to(py[None, :, None, :], (nex, ney, ngx, ngy)).reshape(ne, ng),
        ],
        axis=-1,
    )
    spans = np.stack(np.meshgrid(sx, sy, indexing="ij"), axis=-1).reshape(ne, 2)
    return PatchQuadrature(pid, spans, conn, R, dN, d2N, wq * detJ, x, par)


# ---------------------------------------------------------------------------
# element kernels (vectorised over a batch of elements)
# ---------------------------------------------------------------------------

def gauss_strains(quad, u_local):
    """Voigt strains (ne, ng, 3) from interleaved element displacements (ne, 2 nloc)."""
    B = strain_matrix(quad.dN)
    return np.einsum("egij,ej->egi", B, u_local)


def element_displacement(quad, mat, u_local, phi_local, H=None, body_force=None):
    """Tangent ``K_uu`` and residual ``r_u`` for each element of ``quad``.

    Returns arrays of shape (ne, 2 nloc, 2 nloc) and (ne, 2 nloc). ``H`` is
    not used by the displacement problem and accepted for symmetry.
    """
    B = strain_matrix(quad.dN)
    eps_v = np.einsum("egij,ej->egi", B, u_local)
    eps = cm.voigt_to_tensor(eps_v)
    phi_g = np.einsum("egn,en->eg", quad.N, phi_local)
    C = cm.tangent_tensor(eps, phi_g, mat)
    sig = cm.stress_to_voigt(cm.stress(eps, phi_g, mat))
    ne, ng, nv, nd = B.shape
    WB = B * quad.wdet[:, :, None, None]
    CB = np.matmul(C, B)
    K = np.matmul(WB.reshape(ne, ng * nv, nd).transpose(0, 2, 1), CB.reshape(ne, ng * nv, nd))
    r = np.matmul(WB.reshape(ne, ng * nv, nd).transpose(0, 2, 1), sig.reshape(ne, ng * nv, 1))[..., 0]
    if body_force is not None:
        b = np.broadcast_to(np.asarray(body_force, dtype=float), quad.x.shape)
        fb = np.einsum("eg,egn,egi->eni", quad.wdet, quad.N, b)
        r = r - fb.reshape(r.shape)
    return K, r


def element_phase(quad, mat, phi_local, H):
    """Tangent ``K_phiphi`` and residual ``r_phi`` for each element of ``quad``."""
    gc, l0 = mat.g_c, mat.l0
    N, dN, w = quad.N, quad.dN, quad.wdet
    H = np.asarray(H, dtype=float)
    phi_g = np.einsum("egn,en->eg", N, phi_local)
    grad = np.einsum("egni,en->egi", dN, phi_local)
    grad_coef = gc * l0 if mat.order == 2 else 0.5 * gc * l0
    react = 2.0 * H + gc / l0
    ne, ng, nl = N.shape
    G = dN.transpose(0, 1, 3, 2).reshape(ne, ng * 2, nl)
    wG = (w * grad_coef)[:, :, None].repeat(2, axis=2).reshape(ne, ng * 2, 1)
    K = np.matmul((G * wG).transpose(0, 2, 1), G)
    K += np.matmul((N * (w * react)[:, :, None]).transpose(0, 2, 1), N)
    r = np.einsum("eg,egni,egi->en", w * grad_coef, dN, grad, optimize=True)
    r += np.einsum("eg,egn->en", w * (gc / l0 * phi_g - 2.0 * (1.0 - phi_g) * H), N, optimize=True)
    if mat.order == 4:
        D = quad.lap
        lap = np.einsum("egn,en->eg", D, phi_local)
        c4 = gc * l0 ** 3 / 16.0
        K += np.matmul((D * (w * c4)[:, :, None]).transpose(0, 2, 1), D)
        r += np.einsum("eg,egn->en", w * c4 * lap, D, optimize=True)
    return K, r


# ---------------------------------------------------------------------------
# discretisation and global assembly
# ---------------------------------------------------------------------------

@dataclass
class GlobalSystem:
    K: sp.csr_matrix
    rhs: np.ndarray
    cmap: object


class Discretization:
    """Multipatch model with quadrature caches and coupling maps."""

    def __init__(self, model, order=2, cmap=None):
        self.model = model
        if order == 4 and min(min(pt.p, pt.q) for pt in model.patches) < 2:
            raise ConfigurationError("fourth-order phase field needs basis degree >= 2 (C1 continuity)")
        self.quads = [
            build_patch_quadrature(pt, pid, model.offsets[pid]) for pid, pt in enumerate(model.patches)
        ]
        self.cmap_phi = classify_dofs(model) if cmap is None else cmap
        self.cmap_u = self.cmap_phi.for_components(2)
        self.n_points = model.n_points
        self._patterns = {}

    def history_shape(self):
        return [q.wdet.shape for q in self.quads]

    def zero_history(self):
        return [np.zeros(s) for s in self.history_shape()]

    @staticmethod
    def _u_dofs(conn):
        return (2 * conn[:, :, None] + np.arange(2)).reshape(conn.shape[0], -1)

    def _pattern(self, dof_list, n):
        """CSR structure and slot map for a fixed element connectivity (cached)."""
        if n not in self._patterns:
            rows = np.concatenate([np.repeat(d, d.shape[1], axis=1).ravel() for d in dof_list])
            cols = np.concatenate([np.tile(d, (1, d.shape[1])).ravel() for d in dof_list])
            keys, slot = np.unique(rows.astype(np.int64) * n + cols, return_inverse=True)
            indptr = np.concatenate([[0], np.cumsum(np.bincount(keys // n, minlength=n))])
            self._patterns[n] = (slot, (keys % n).astype(np.int32), indptr, keys.size)
        return self._patterns[n]

    def _scatter(self, Ke_list, re_list, dof_list, n):
        slot, indices, indptr, nnz = self._pattern(dof_list, n)
        data = np.bincount(slot, weights=np.concatenate([K.ravel() for K in Ke_list]), minlength=nnz)
        K = sp.csr_matrix((data, indices, indptr), shape=(n, n))
        r = np.bincount(
            np.concatenate([d.ravel() for d in dof_list]),
            weights=np.concatenate([re.ravel() for re in re_list]),
            minlength=n,
        )
        return K, r

    def assemble_displacement(self, u, phi, mat, body_force=None):
        """Full (unreduced) tangent and residual of the displacement problem."""
        Ks, rs, ds = [], [], []
        for q in self.quads:
            dofs = self._u_dofs(q.conn)
            K, r = element_displacement(q, mat, u[dofs], phi[q.conn], body_force=body_force)
            Ks.append(K)
            rs.append(r)
            ds.append(dofs)
        return self._scatter(Ks, rs, ds, 2 * self.n_points)

    def assemble_phase(self, phi, H, mat):
        Ks, rs, ds = [], [], []
        for q, h in zip(self.quads, H):
            K, r = element_phase(q, mat, phi[q.conn], h)
            Ks.append(K)
            rs.append(r)
            ds.append(q.conn)
        return self._scatter(Ks, rs, ds, self.n_points)

    def internal_force(self, u, phi, mat):
        r = np.zeros(2 * self.n_points)
        for q in self.quads:
            dofs = self._u_dofs(q.conn)
            eps = cm.voigt_to_tensor(gauss_strains(q, u[dofs]))
            phi_g = np.einsum("egn,en->eg", q.N, phi[q.conn])
            sig = cm.stress_to_voigt(cm.stress(eps, phi_g, mat))
            re = np.einsum("eg,egik,egi->ek", q.wdet, strain_matrix(q.dN), sig, optimize=True)
            np.add.at(r, dofs.ravel(), re.ravel())
        return r

    def tensile_energy(self, u, mat):
        """psi+ at every Gauss point, one array per patch."""
        out = []
        for q in self.quads:
            eps = cm.voigt_to_tensor(gauss_strains(q, u[self._u_dofs(q.conn)]))
            out.append(cm.strain_energy_split(eps, mat)[0])
        return out

    def gauss_points(self):
        return [q.x for q in self.quads]

    def gauss_values(self, phi):
        """Scalar field ``phi`` evaluated at every Gauss point, flattened."""
        return np.concatenate([np.einsum("egn,en->eg", q.N, phi[q.conn]).ravel() for q in self.quads])


def assemble_global(disc, u, phi, H, mat, field):
    """Assemble one field and condense it onto the reduced unknowns."""
    if field == "u":
        K, r = disc.assemble_displacement(u, phi, mat)
        cmap = disc.cmap_u
    elif field == "phi":
        K, r = disc.assemble_phase(phi, H, mat)
        cmap = disc.cmap_phi
    else:
        raise ValueError("field must be 'u' or 'phi'")
    Kr, rr = reduce_system(K, r, cmap)
    return GlobalSystem(Kr, rr, cmap)
