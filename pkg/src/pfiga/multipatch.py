"""Multipatch models and master-slave interface condensation.

Slave edge coefficients are written as ``d_s = T_sm d_m``. ``T_sm`` comes
from virtually refining the master edge (knot insertion) until it matches
the slave edge, so the slave trace reproduces the master trace exactly.
Constraints of all interfaces are gathered into one dependency table
``u_D = T_DI u_I`` and the global system is condensed onto ``(u_O, u_I)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .splines import KNOT_TOL, evaluate_surface, insertion_matrix, multiplicity

SIDES = ("xi0", "xi1", "eta0", "eta1")
COINCIDENCE_TOL = 1e-9
_DROP_TOL = 1e-14


class ModelError(ValueError):
    """Inconsistent multipatch model or interface declaration."""


class UnsupportedInterfaceError(ModelError):
    """Interface whose edge spaces are not nested."""


@dataclass(frozen=True)
class InterfaceDecl:
    """Tie ``slave`` side to ``master`` side.

    ``coupled_span`` is the slave-edge parameter interval that is tied,
    ``master_span`` the master-edge interval it lies on. With
    ``orientation='reversed'`` the slave parameter runs against the master.
    """

    master: tuple
    slave: tuple
    orientation: str = "same"
    coupled_span: tuple = (0.0, 1.0)
    master_span: tuple = (0.0, 1.0)

    def __post_init__(self):
        for pid, side in (self.master, self.slave):
            if side not in SIDES:
                raise ModelError("unknown side %r" % (side,))
        if self.orientation not in ("same", "reversed"):
            raise ModelError("orientation must be 'same' or 'reversed'")
        for a, b in (self.coupled_span, self.master_span):
            if not 0.0 <= a < b <= 1.0:
                raise ModelError("spans must satisfy 0 <= a < b <= 1")


@dataclass
class MultipatchModel:
    patches: list
    interfaces: list = field(default_factory=list)

    def __post_init__(self):
        self.offsets = np.concatenate([[0], np.cumsum([pt.n_points for pt in self.patches])]).astype(int)

    @property
    def n_points(self):
        return int(self.offsets[-1])

    def global_index(self, pid, local):
        return self.offsets[pid] + np.asarray(local, dtype=int)

    def control_points(self):
        return np.concatenate([pt.control_points.reshape(-1, 2) for pt in self.patches])


# ---------------------------------------------------------------------------
# edge helpers
# ---------------------------------------------------------------------------

def edge_knots(patch, side):
    if side in ("xi0", "xi1"):
        return patch.knots_eta, patch.q
    return patch.knots_xi, patch.p


def edge_local_indices(patch, side):
    n, m = patch.shape
    if side == "xi0":
        return np.arange(m)
    if side == "xi1":
        return (n - 1) * m + np.arange(m)
    if side == "eta0":
        return np.arange(n) * m
    return np.arange(n) * m + (m - 1)


def edge_point(patch, side, t):
    if side == "xi0":
        return evaluate_surface(patch, 0.0, t)
    if side == "xi1":
        return evaluate_surface(patch, 1.0, t)
    if side == "eta0":
        return evaluate_surface(patch, t, 0.0)
    return evaluate_surface(patch, t, 1.0)


def _restricted_range(knots, p, a, b):
    """Indices of basis functions nonzero on (a, b) and the clamped knot vector on [a, b]."""
    U = np.asarray(knots)
    n = U.size - p - 1
    idx = [i for i in range(n) if U[i] < b - KNOT_TOL and U[i + p + 1] > a + KNOT_TOL]
    inner = U[(U > a + KNOT_TOL) & (U < b - KNOT_TOL)]
    kv = np.concatenate([np.full(p + 1, a), inner, np.full(p + 1, b)])
    if len(idx) != kv.size - p - 1:
        raise UnsupportedInterfaceError(
            "span [%g, %g] does not split the edge basis; end knots need multiplicity >= p" % (a, b)
        )
    return np.array(idx, dtype=int), kv


def _map_knots(kv, src, dst, reverse):
    (c, d), (a, b) = src, dst
    t = (np.asarray(kv) - c) / (d - c)
    out = a + t * (b - a) if not reverse else b - t * (b - a)
    return np.sort(out)


def check_coincidence(model, iface, n_samples=11, tol=COINCIDENCE_TOL):
    """Raise if the declared master and slave edge segments do not coincide."""
    mp, ms = model.patches[iface.master[0]], model.patches[iface.slave[0]]
    (c, d), (a, b) = iface.coupled_span, iface.master_span
    for t in np.linspace(0.0, 1.0, n_samples):
        ts = c + t * (d - c)
        tm = a + t * (b - a) if iface.orientation == "same" else b - t * (b - a)
        xs = edge_point(ms, iface.slave[1], ts)
        xm = edge_point(mp, iface.master[1], tm)
        if np.linalg.norm(xs - xm) > tol:
            raise ModelError(
                "interface %s <- %s not coincident at t=%.3f (gap %.3e mm)"
                % (iface.master, iface.slave, t, np.linalg.norm(xs - xm))
            )


def build_coupling_matrix(model, iface, check=True):
    """Coupling of one interface.

    Returns ``(slave_dofs, master_dofs, T_sm)`` with global control-point
    indices and a dense ``(n_s, n_m)`` matrix.
    """
    mp, ms = model.patches[iface.master[0]], model.patches[iface.slave[0]]
    Um, pm = edge_knots(mp, iface.master[1])
    Us, ps = edge_knots(ms, iface.slave[1])
    if pm != ps:
        raise ModelError("interface degrees differ (%d vs %d)" % (pm, ps))
    p = pm
    if check:
        check_coincidence(model, iface)
    (c, d), (a, b) = iface.coupled_span, iface.master_span
    reverse = iface.orientation == "reversed"

    s_idx, s_kv = _restricted_range(Us, p, c, d)

    # virtual knots at the master span ends, then restrict
    extra = []
    for e in (a, b):
        if KNOT_TOL < e < 1 - KNOT_TOL:
            extra += [e] * (p - multiplicity(Um, e))
    Uv, A1 = insertion_matrix(Um, p, extra)
    m_idx, m_kv = _restricted_range(Uv, p, a, b)
    A1 = A1[m_idx]

    target = _map_knots(s_kv, (c, d), (a, b), reverse)
    inner_t = target[p + 1: -p - 1]
    inner_m = m_kv[p + 1: -p - 1]
    missing = []
    for u in np.unique(np.round(inner_t, 14)):
        need = int(np.sum(np.abs(inner_t - u) <= 1e-10))
        have = int(np.sum(np.abs(inner_m - u) <= 1e-10))
        if have > need:
            raise UnsupportedInterfaceError(
                "slave edge of patch %d is not a refinement of the master edge of patch %d"
                % (iface.slave[0], iface.master[0])
            )
        missing += [u] * (need - have)
    for u in inner_m:
        if np.sum(np.abs(inner_t - u) <= 1e-10) == 0:
            raise UnsupportedInterfaceError(
                "master knot %.6g missing on slave edge (patch %d)" % (u, iface.slave[0])
            )
    # insert on a [0, 1]-normalised copy of the restricted master space
    scale = lambda u: (np.asarray(u) - a) / (b - a)
    _, A2 = insertion_matrix(scale(m_kv), p, scale(missing)) if missing else (None, np.eye(len(m_idx)))
    A = A2 @ A1
    if reverse:
        A = A[::-1]

    w_m = mp.weights.ravel()[edge_local_indices(mp, iface.master[1])]
    w_s = ms.weights.ravel()[edge_local_indices(ms, iface.slave[1])][s_idx]
    Aw = A @ w_m
    ratio = w_s / Aw
    if np.ptp(ratio) > 1e-9 * np.max(np.abs(ratio)):
        raise UnsupportedInterfaceError(
            "slave weights on patch %d are not a refinement of the master weights" % iface.slave[0]
        )
    T = ratio[:, None] * A * w_m[None, :] / w_s[:, None]
    T[np.abs(T) < _DROP_TOL] = 0.0
    used = np.flatnonzero(np.any(T != 0.0, axis=0))
    T = T[:, used]
    m_loc = edge_local_indices(mp, iface.master[1])[used]
    s_loc = edge_local_indices(ms, iface.slave[1])[s_idx]
    return model.global_index(iface.slave[0], s_loc), model.global_index(iface.master[0], m_loc), T


# ---------------------------------------------------------------------------
# dof classification and condensation
# ---------------------------------------------------------------------------

@dataclass
class CouplingMap:
    """Partition of scalar dofs into O/I/D with ``u_D = T_DI u_I``."""

    n: int
    O: np.ndarray
    I: np.ndarray
    D: np.ndarray
    T_DI: sp.csr_matrix

    def __post_init__(self):
        self.n_reduced = self.O.size + self.I.size
        self.reduced_order = np.concatenate([self.O, self.I])
        pos = np.full(self.n, -1, dtype=int)
        pos[self.reduced_order] = np.arange(self.n_reduced)
        self.reduced_position = pos
        self._G = None

    @property
    def counts(self):
        return self.O.size, self.I.size, self.D.size

    def for_components(self, ncomp):
        """Same map for ``ncomp`` interleaved components per control point."""
        if ncomp == 1:
            return self
        ex = lambda idx: (ncomp * idx[:, None] + np.arange(ncomp)[None, :]).ravel()
        T = sp.kron(self.T_DI, sp.identity(ncomp), format="csr")
        return CouplingMap(self.n * ncomp, ex(self.O), ex(self.I), ex(self.D), T)

    @property
    def G(self):
        """Full-from-reduced map: ``u = G u'``."""
        if self._G is None:
            nO = self.O.size
            T = self.T_DI.tocoo()
            rows = np.concatenate([self.O, self.I, self.D[T.row]])
            cols = np.concatenate([np.arange(nO), nO + np.arange(self.I.size), nO + T.col])
            vals = np.concatenate([np.ones(self.n_reduced), T.data])
            self._G = sp.csr_matrix((vals, (rows, cols)), shape=(self.n, self.n_reduced))
        return self._G


def _resolve(row, dep):
    out = {}
    for k, v in row.items():
        if k in dep:
            for kk, vv in dep[k].items():
                out[kk] = out.get(kk, 0.0) + v * vv
        else:
            out[k] = out.get(k, 0.0) + v
    return {k: v for k, v in out.items() if abs(v) > _DROP_TOL}


def _rows_equal(r1, r2, tol=1e-10):
    keys = set(r1) | set(r2)
    return all(abs(r1.get(k, 0.0) - r2.get(k, 0.0)) <= tol for k in keys)


def _add_dependency(dep, s, row):
    if s in row:
        if len(row) == 1 and abs(row[s] - 1.0) <= 1e-10:
            return
        raise ModelError("cyclic master-slave dependency at control point %d" % s)
    for k in list(dep):
        if s in dep[k]:
            dep[k] = _resolve(dep[k], {s: row})
    dep[s] = row


def classify_dofs(model, couplings=None):
    """Collect interface constraints into a :class:`CouplingMap` (scalar field)."""
    if couplings is None:
        couplings = [build_coupling_matrix(model, it) for it in model.interfaces]
    dep = {}
    for s_dofs, m_dofs, T in couplings:
        for r, s in enumerate(s_dofs):
            s = int(s)
            row = {int(m): float(t) for m, t in zip(m_dofs, T[r]) if t != 0.0}
            row = _resolve(row, dep)
            if s in dep:
                if _rows_equal(dep[s], row):
                    continue
                diff = dict(dep[s])
                for k, v in row.items():
                    diff[k] = diff.get(k, 0.0) - v
                diff = {k: v for k, v in diff.items() if abs(v) > 1e-10}
                # two descriptions of one shared corner point: the difference is a
                # relation among other dofs; eliminate one with a unit coefficient
                units = [k for k, v in diff.items() if abs(abs(v) - 1.0) <= 1e-10]
                if not units:
                    raise ModelError("control point %d receives inconsistent interface constraints" % s)
                k = max(units)
                ck = diff.pop(k)
                _add_dependency(dep, k, {kk: -v / ck for kk, v in diff.items()})
                continue
            _add_dependency(dep, s, row)

    n = model.n_points
    D = np.array(sorted(dep), dtype=int)
    I = np.array(sorted({k for r in dep.values() for k in r}), dtype=int)
    mask = np.ones(n, dtype=bool)
    mask[D] = False
    mask[I] = False
    O = np.flatnonzero(mask)
    ipos = {k: j for j, k in enumerate(I)}
    rows, cols, vals = [], [], []
    for r, s in enumerate(D):
        for k, v in sorted(dep[s].items()):
            rows.append(r)
            cols.append(ipos[k])
            vals.append(v)
    T_DI = sp.csr_matrix((vals, (rows, cols)), shape=(D.size, I.size))
    return CouplingMap(n, O, I, D, T_DI)


def reduce_system(K, f, cmap):
    """Condense ``K u = f`` onto the (O, I) unknowns.

    Blocks follow the O/I/D partition; for symmetric ``K`` the result is the
    symmetric reduced matrix ``[[K_OO, K_OI + K_OD T], [., K_II + K_ID T +
    T^T (K_ID^T + K_DD T)]]`` and ``f' = [f_O, f_I + T^T f_D]``.
    """
    K = sp.csr_matrix(K)
    f = None if f is None else np.asarray(f, dtype=float)
    if K.shape != (cmap.n, cmap.n) or (f is not None and f.shape[0] != cmap.n):
        raise ValueError("system dimension does not match the coupling map")
    O, I, D, T = cmap.O, cmap.I, cmap.D, cmap.T_DI
    if D.size == 0:
        Kr = K[cmap.reduced_order][:, cmap.reduced_order]
        fr = None if f is None else f[cmap.reduced_order]
        return Kr.tocsr(), fr
    KO, KI, KD = K[O], K[I], K[D]
    KOO, KOI, KOD = KO[:, O], KO[:, I], KO[:, D]
    KIO, KII, KID = KI[:, O], KI[:, I], KI[:, D]
    KDO, KDI, KDD = KD[:, O], KD[:, I], KD[:, D]
    Tt = T.T.tocsr()
    upper_right = KOI + KOD @ T
    lower_left = KIO + Tt @ KDO
    lower_right = KII + KID @ T + Tt @ (KDI + KDD @ T)
    Kr = sp.bmat([[KOO, upper_right], [lower_left, lower_right]], format="csr")
    if f is None:
        return Kr, None
    fr = np.concatenate([f[O], f[I] + Tt @ f[D]])
    return Kr, fr


def reduce_vector(f, cmap):
    f = np.asarray(f, dtype=float)
    return np.concatenate([f[cmap.O], f[cmap.I] + cmap.T_DI.T @ f[cmap.D]])


def restrict_vector(u, cmap):
    """Reduced coordinates of a full vector that satisfies the constraints."""
    return np.asarray(u)[cmap.reduced_order]


def expand_solution(reduced, cmap):
    """Full vector from reduced unknowns with ``u_D = T_DI u_I``."""
    reduced = np.asarray(reduced, dtype=float)
    if reduced.shape[0] != cmap.n_reduced:
        raise ValueError("reduced vector has wrong length")
    nO = cmap.O.size
    u = np.zeros((cmap.n,) + reduced.shape[1:])
    u[cmap.O] = reduced[:nO]
    u[cmap.I] = reduced[nO:]
    if cmap.D.size:
        u[cmap.D] = cmap.T_DI @ reduced[nO:]
    return u
