"""Benchmark problem definitions.

Each builder returns a :class:`ProblemDefinition` holding the multipatch
model, material, load schedule and the crack geometry used for seeding and
for the refinement-coverage check. Patches are built as exact cubic Bezier
geometry (rectangles, or quarter-ring sectors around circular holes) and
then refined by knot insertion, so coarse and refined patches share one
parametrization and every refined edge is nested in its coarse neighbour.

Interfaces are declared by the builders from their own layout tables: two
straight edges that overlap are tied, the finer (or, on a tie, the later)
patch being the slave.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .constitutive import MaterialParams, seed_history
from .multipatch import (
    InterfaceDecl,
    ModelError,
    MultipatchModel,
    SIDES,
    build_coupling_matrix,
    classify_dofs,
    edge_knots,
    edge_local_indices,
    edge_point,
)
from .solver import LoadSchedule
from .splines import bezier_patch, evaluate_surface, nurbs_basis_2d, refine_uniform, unique_knots

GEOM_TOL = 1e-9
# long tail of small increments after the coarse loading phase
TAIL_STEPS = 2000


@dataclass
class ProblemDefinition:
    """A ready-to-run benchmark.

    Patch ids in ``refined`` are 1-based, as in the layout tables.
    ``corridor`` lists the segments along which cracks are expected to run
    (they must lie in refined patches with a margin of ``2 l0``);
    ``seed_cracks`` are initialised through the history field.
    """

    name: str
    model: MultipatchModel
    material: MaterialParams
    schedule: LoadSchedule
    refined: tuple = ()
    corridor: list = field(default_factory=list)
    notches: list = field(default_factory=list)
    seed_cracks: list = field(default_factory=list)
    seed_c: float = 0.9999
    cmap: object = None
    domain_box: tuple = None

    def initial_history(self, disc):
        if not self.seed_cracks:
            return None
        return [seed_history(x, self.seed_cracks, self.material, self.seed_c) for x in disc.gauss_points()]

    def validate(self):
        return validate_problem(self)


# ---------------------------------------------------------------------------
# geometry
# ---------------------------------------------------------------------------

def _homogeneous(points, weights):
    P = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    return np.concatenate([P * w[..., None], w[..., None]], axis=-1)


def rect_patch(x0, x1, y0, y1, n_xi, n_eta, degree=3, extra_xi=(), extra_eta=()):
    """Axis-aligned rectangle with xi along x and eta along y."""
    P = np.array([[[x0, y0], [x0, y1]], [[x1, y0], [x1, y1]]])
    base = bezier_patch(_homogeneous(P, np.ones((2, 2))), degree)
    return refine_uniform(base, n_xi, n_eta, extra_xi, extra_eta)


def sector_patch(center, radius, half, k, n_rad, n_arc, degree=3):
    """Quarter of the ring between a circle and its enclosing square.

    Sector ``k`` (0 right, 1 top, 2 left, 3 bottom) spans the angles
    ``90k - 45 .. 90k + 45``. ``xi`` runs from the arc (``xi0``) to the
    square side (``xi1``), ``eta`` counter-clockwise.
    """
    c = np.asarray(center, dtype=float)
    a0 = math.radians(90 * k - 45)
    am = math.radians(90 * k)
    a1 = math.radians(90 * k + 45)
    dirs = lambda a: np.array([math.cos(a), math.sin(a)])
    arc = [c + radius * dirs(a0), c + radius * math.sqrt(2.0) * dirs(am), c + radius * dirs(a1)]
    side = [c + half * math.sqrt(2.0) * dirs(a0), c + half * dirs(am), c + half * math.sqrt(2.0) * dirs(a1)]
    w = math.sqrt(0.5)
    P = np.array([arc, side])
    W = np.array([[1.0, w, 1.0], [1.0, 1.0, 1.0]])
    base = bezier_patch(_homogeneous(P, W), degree)
    return refine_uniform(base, n_rad, n_arc)


def hole_cell(center, radius, half, n_rad, n_side, degree=3):
    """Four sectors (right, top, left, bottom) around one circular hole."""
    return [sector_patch(center, radius, half, k, n_rad, n_side, degree) for k in range(4)]


def refinement_factor(coarse_h, l0, h_ratio):
    """Integer subdivision so that the refined element size is at most ``h_ratio * l0``."""
    return max(1, int(math.ceil(coarse_h / (h_ratio * l0) - 1e-9)))


# ---------------------------------------------------------------------------
# interface declaration
# ---------------------------------------------------------------------------

def _edge_segment(patch, side):
    a = edge_point(patch, side, 0.0)
    b = edge_point(patch, side, 1.0)
    mid = edge_point(patch, side, 0.5)
    straight = np.linalg.norm(mid - 0.5 * (a + b)) <= GEOM_TOL * max(1.0, np.linalg.norm(b - a))
    return a, b, straight


def _n_edge_elements(patch, side):
    U, _ = edge_knots(patch, side)
    return unique_knots(U).size - 1


def _param(a, b, x):
    d = b - a
    return float((x - a) @ d / (d @ d))


def declare_interfaces(patches, untied=(), partial=None):
    """Tie every pair of overlapping straight edges.

    ``untied`` holds 0-based pairs ``(i, j)`` that stay free (notches).
    ``partial`` maps a 0-based ``(slave, master)`` pair to the parameter
    interval that is tied; both edges must cover the same segment.
    """
    partial = dict(partial or {})
    skip = {frozenset(p) for p in untied}
    forced = {frozenset(p): p for p in partial}
    segs = [{s: _edge_segment(pt, s) for s in SIDES} for pt in patches]
    out = []
    for i in range(len(patches)):
        for j in range(i + 1, len(patches)):
            if frozenset((i, j)) in skip:
                continue
            for si in SIDES:
                ai, bi, oki = segs[i][si]
                if not oki:
                    continue
                for sj in SIDES:
                    aj, bj, okj = segs[j][sj]
                    if not okj:
                        continue
                    decl = _match_edges(patches, (i, si, ai, bi), (j, sj, aj, bj))
                    if decl is None:
                        continue
                    key = frozenset((i, j))
                    if key in forced:
                        s_id, m_id = forced[key]
                        span = partial[(s_id, m_id)]
                        ms = dict(((i, si), (j, sj)))
                        same = decl.orientation == "same"
                        mspan = span if same else (1.0 - span[1], 1.0 - span[0])
                        decl = InterfaceDecl((m_id, ms[m_id]), (s_id, ms[s_id]), decl.orientation, span, mspan)
                    out.append(decl)
    return out


def _match_edges(patches, e1, e2):
    i, si, ai, bi = e1
    j, sj, aj, bj = e2
    di, dj = bi - ai, bj - aj
    Li, Lj = np.linalg.norm(di), np.linalg.norm(dj)
    tol = GEOM_TOL * max(1.0, Li, Lj)
    cross = lambda u, v: u[0] * v[1] - u[1] * v[0]
    # collinear?
    if abs(cross(di, aj - ai)) > tol * Li or abs(cross(di, bj - ai)) > tol * Li:
        return None
    tj = sorted((_param(ai, bi, aj), _param(ai, bi, bj)))
    lo, hi = max(0.0, tj[0]), min(1.0, tj[1])
    if (hi - lo) * Li <= tol:
        return None
    same = float(di @ dj) > 0
    orient = "same" if same else "reversed"
    i_in_j = lo <= tol / Li and hi >= 1 - tol / Li
    j_in_i = tj[0] >= -tol / Li and tj[1] <= 1 + tol / Li
    if i_in_j and j_in_i:
        ni, nj = _n_edge_elements(patches[i], si), _n_edge_elements(patches[j], sj)
        m, s = ((i, si), (j, sj)) if ni <= nj else ((j, sj), (i, si))
        return InterfaceDecl(m, s, orient)
    if j_in_i:
        # edge j lies inside edge i: j is the slave on a sub-span of i
        return InterfaceDecl((i, si), (j, sj), orient, (0.0, 1.0), (lo, hi))
    if i_in_j:
        ti = sorted((_param(aj, bj, ai), _param(aj, bj, bi)))
        return InterfaceDecl((j, sj), (i, si), orient, (0.0, 1.0), (max(0.0, ti[0]), min(1.0, ti[1])))
    raise ModelError("patches %d and %d overlap partially on both edges; split the layout" % (i + 1, j + 1))


# ---------------------------------------------------------------------------
# boundary selection
# ---------------------------------------------------------------------------

def independent(cmap, points):
    """Drop dependent (slave) control points."""
    points = np.unique(np.asarray(points, dtype=int))
    return points[cmap.reduced_position[points] >= 0]


def edge_points(model, pid, side):
    return model.global_index(pid, edge_local_indices(model.patches[pid], side))


def points_where(model, predicate):
    X = model.control_points()
    return np.flatnonzero(predicate(X[:, 0], X[:, 1]))


def points_at(model, xy, tol=GEOM_TOL):
    X = model.control_points()
    return np.flatnonzero(np.linalg.norm(X - np.asarray(xy, dtype=float), axis=1) <= tol * max(1.0, np.abs(xy).max()))


def dofs(points, comp):
    return 2 * np.asarray(points, dtype=int) + comp


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------

def check_jacobians(model, samples=4):
    """Sign of det J at interior samples of every element."""
    for pid, pt in enumerate(model.patches):
        bx, by = unique_knots(pt.knots_xi), unique_knots(pt.knots_eta)
        # the geometry map is the same at every refinement level; sample the
        # coarse breakpoints only when the patch is heavily refined
        if bx.size > 13:
            bx = np.linspace(0, 1, 13)
        if by.size > 13:
            by = np.linspace(0, 1, 13)
        t = (np.arange(samples) + 0.5) / samples
        for a0, a1 in zip(bx[:-1], bx[1:]):
            for b0, b1 in zip(by[:-1], by[1:]):
                for s in t:
                    for r in t:
                        ev = nurbs_basis_2d(pt, a0 + s * (a1 - a0), b0 + r * (b1 - b0), max_deriv=1)
                        idx = ev.local_indices(pt)
                        P = pt.control_points.reshape(-1, 2)[idx]
                        J = ev.dR.T @ P
                        if np.linalg.det(J) <= 0:
                            raise ModelError("patch %d has a non-positive Jacobian" % (pid + 1))


def _patch_polygon(pt, n=24):
    t = np.linspace(0, 1, n)
    ring = [evaluate_surface(pt, s, 0.0) for s in t]
    ring += [evaluate_surface(pt, 1.0, s) for s in t[1:]]
    ring += [evaluate_surface(pt, s, 1.0) for s in t[::-1][1:]]
    ring += [evaluate_surface(pt, 0.0, s) for s in t[::-1][1:]]
    return np.array(ring)


def _inside(poly, pts):
    """Even-odd point-in-polygon test, vectorised over ``pts``."""
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    xa, ya = poly[:, 0], poly[:, 1]
    xb, yb = np.roll(xa, -1), np.roll(ya, -1)
    for x1, y1, x2, y2 in zip(xa, ya, xb, yb):
        cond = (y1 > y) != (y2 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
        inside ^= cond & (x < xc)
    return inside


def check_refinement_coverage(problem, margin_factor=2.0):
    """Every point within ``2 l0`` of a corridor segment inside the body lies in a refined patch."""
    segs = list(problem.corridor) + list(problem.seed_cracks)
    if not segs:
        return
    l0 = problem.material.l0
    margin = margin_factor * l0
    polys = [_patch_polygon(pt) for pt in problem.model.patches]
    refined = [polys[i - 1] for i in problem.refined]
    for a, b in segs:
        a, b = np.asarray(a, float), np.asarray(b, float)
        L = np.linalg.norm(b - a)
        ns = max(2, int(math.ceil(L / (0.25 * l0))) + 1)
        base = a + np.linspace(0, 1, ns)[:, None] * (b - a)
        ang = np.linspace(0, 2 * np.pi, 16, endpoint=False)
        rings = [base]
        for rad in (0.5 * margin, 0.999 * margin):
            off = rad * np.stack([np.cos(ang), np.sin(ang)], axis=1)
            rings.append((base[:, None, :] + off[None]).reshape(-1, 2))
        pts = np.concatenate(rings)
        in_body = np.zeros(len(pts), dtype=bool)
        for poly in polys:
            in_body |= _inside(poly, pts)
        in_ref = np.zeros(len(pts), dtype=bool)
        for poly in refined:
            in_ref |= _inside(poly, pts)
        bad = in_body & ~in_ref
        if np.any(bad):
            p = pts[np.flatnonzero(bad)[0]]
            raise ModelError(
                "refined patches do not cover the crack corridor with margin 2 l0 (point %.4g, %.4g)" % tuple(p)
            )


def validate_problem(problem):
    """Interface coincidence, Jacobian sign, refinement coverage, dof classes.

    Returns the scalar coupling map.
    """
    model = problem.model
    couplings = [build_coupling_matrix(model, it, check=True) for it in model.interfaces]
    cmap = classify_dofs(model, couplings)
    check_jacobians(model)
    check_refinement_coverage(problem)
    sched = problem.schedule
    for d in np.concatenate([sched.driven, sched.fixed]):
        if cmap.reduced_position[d // 2] < 0:
            raise ModelError("Dirichlet dof %d sits on a dependent control point" % d)
    if sched.driven.size == 0:
        raise ModelError("no driven dofs")
    return cmap


# ---------------------------------------------------------------------------
# builders
# ---------------------------------------------------------------------------

def _grid_patches(boxes, coarse_h, r, refined, degree, extras=None):
    """Rectangles from ``(x0, x1, y0, y1)`` boxes on a coarse grid of size ``coarse_h``."""
    extras = extras or {}
    out = []
    for k, (x0, x1, y0, y1) in enumerate(boxes, start=1):
        nx = max(1, int(round((x1 - x0) / coarse_h)))
        ny = max(1, int(round((y1 - y0) / coarse_h)))
        f = r if k in refined else 1
        ex, ey = extras.get(k, ((), ()))
        out.append(rect_patch(x0, x1, y0, y1, nx * f, ny * f, degree, ex, ey))
    return out


def _lame(E, nu):
    return E * nu / ((1 + nu) * (1 - 2 * nu)), E / (2 * (1 + nu))


def sen_tension(l0=0.0075, order=2, degree=3, h_ratio=0.5, coarse_h=0.05, tie_notch=False, g_c=0.0027):
    """Single-edge-notched unit square under tension.

    Eight patches; the notch ``y = 0.5, 0 <= x <= 0.5`` is the untied
    interface between patches 2 and 3, so the crack runs through the
    interior of the refined patches 6 and 7.
    """
    band = coarse_h * max(1, math.ceil(2.5 * l0 / coarse_h - 1e-9))
    lo, hi = 0.5 - band, 0.5 + band
    boxes = [
        (0.0, 0.5, 0.0, lo), (0.0, 0.5, lo, 0.5), (0.0, 0.5, 0.5, hi), (0.0, 0.5, hi, 1.0),
        (0.5, 1.0, 0.0, lo), (0.5, 0.75, lo, hi), (0.75, 1.0, lo, hi), (0.5, 1.0, hi, 1.0),
    ]
    refined = (2, 3, 6, 7)
    r = refinement_factor(coarse_h, l0, h_ratio)
    patches = _grid_patches(boxes, coarse_h, r, refined, degree)
    untied = () if tie_notch else ((1, 2),)
    model = MultipatchModel(patches, declare_interfaces(patches, untied))
    cmap = classify_dofs(model)
    mat = MaterialParams(121.15, 80.77, g_c, l0, order=order)

    bottom = independent(cmap, np.concatenate([edge_points(model, 0, "eta0"), edge_points(model, 4, "eta0")]))
    top = independent(cmap, np.concatenate([edge_points(model, 3, "eta1"), edge_points(model, 7, "eta1")]))
    n0 = 50 if order == 2 else 40
    sched = LoadSchedule(
        [(n0, 1e-4), (TAIL_STEPS, 1e-6)],
        driven=dofs(top, 1),
        fixed=np.concatenate([dofs(bottom, 0), dofs(bottom, 1), dofs(top, 0)]),
    )
    return ProblemDefinition(
        "sen_tension", model, mat, sched, refined,
        corridor=[((0.5, 0.5), (1.0, 0.5))], notches=[((0.0, 0.5), (0.5, 0.5))],
        cmap=cmap, domain_box=(0.0, 1.0, 0.0, 1.0),
    )


def sen_shear(l0=0.0075, order=2, degree=3, h_ratio=0.5, coarse_h=0.05):
    """Single-edge-notched unit square under shear; 4 x 4 grid of patches.

    Patches are numbered column by column from the bottom; the notch runs
    between rows two and three of the first two columns.
    """
    lines = [0.0, 0.25, 0.5, 0.75, 1.0]
    boxes = [(lines[c], lines[c + 1], lines[rr], lines[rr + 1]) for c in range(4) for rr in range(4)]
    refined = (5, 6, 7, 9, 10, 11, 13)
    r = refinement_factor(coarse_h, l0, h_ratio)
    patches = _grid_patches(boxes, coarse_h, r, refined, degree)
    model = MultipatchModel(patches, declare_interfaces(patches, untied=((1, 2), (5, 6))))
    cmap = classify_dofs(model)
    mat = MaterialParams(121.15, 80.77, 0.0027, l0, order=order)
    bottom = independent(cmap, np.concatenate([edge_points(model, 4 * c, "eta0") for c in range(4)]))
    top = independent(cmap, np.concatenate([edge_points(model, 4 * c + 3, "eta1") for c in range(4)]))
    sched = LoadSchedule(
        [(80, 1e-4), (TAIL_STEPS, 1e-6)],
        driven=dofs(top, 0),
        fixed=np.concatenate([dofs(bottom, 0), dofs(bottom, 1), dofs(top, 1)]),
        direction="x",
    )
    return ProblemDefinition(
        "sen_shear", model, mat, sched, refined,
        corridor=[((0.5, 0.5), (0.7, 0.22)), ((0.7, 0.22), (0.85, 0.0))],
        notches=[((0.0, 0.5), (0.5, 0.5))], cmap=cmap, domain_box=(0.0, 1.0, 0.0, 1.0),
    )


def three_point(l0=0.03, order=2, degree=3, h_ratio=0.5, coarse_h=0.2):
    """Symmetric three-point bending of a notched beam ``[0, 8] x [0, 2]``.

    The notch ``x = 4, 0 <= y <= 0.4`` is realised by tying patches 2 and
    3 only above the notch tip.
    """
    boxes = [(0.0, 3.6, 0.0, 2.0), (3.6, 4.0, 0.0, 2.0), (4.0, 4.4, 0.0, 2.0), (4.4, 8.0, 0.0, 2.0)]
    refined = (2, 3)
    r = refinement_factor(coarse_h, l0, h_ratio)
    tip = 0.4 / 2.0
    # C0 knot at the notch tip on the slave edge
    extras = {3: ((), [tip] * (degree - 1))}
    patches = _grid_patches(boxes, coarse_h, r, refined, degree, extras)
    model = MultipatchModel(patches, declare_interfaces(patches, partial={(2, 1): (tip, 1.0)}))
    cmap = classify_dofs(model)
    mat = MaterialParams(12.0, 8.0, 5e-4, l0, order=order)
    left = independent(cmap, points_at(model, (0.0, 0.0)))
    right = independent(cmap, points_at(model, (8.0, 0.0)))
    load = independent(cmap, points_at(model, (4.0, 2.0)))
    sched = LoadSchedule(
        [(42, 1e-3), (TAIL_STEPS, 1e-5)],
        driven=dofs(load, 1),
        fixed=np.concatenate([dofs(left, 0), dofs(left, 1), dofs(right, 1)]),
        direction="-y",
    )
    return ProblemDefinition(
        "three_point", model, mat, sched, refined,
        corridor=[((4.0, 0.4), (4.0, 2.0))], notches=[((4.0, 0.0), (4.0, 0.4))],
        cmap=cmap, domain_box=(0.0, 8.0, 0.0, 2.0),
    )


def double_notch(l0=0.2, order=2, degree=3, h_ratio=0.5, coarse_h=0.5):
    """Plate ``[0, 10] x [0, 20]`` with two offset edge cracks, seeded in the history field."""
    boxes = [(0.0, 10.0, 0.0, 7.0), (0.0, 10.0, 7.0, 13.0), (0.0, 10.0, 13.0, 20.0)]
    refined = (2,)
    r = refinement_factor(coarse_h, l0, h_ratio)
    patches = _grid_patches(boxes, coarse_h, r, refined, degree)
    model = MultipatchModel(patches, declare_interfaces(patches))
    cmap = classify_dofs(model)
    lam, mu = _lame(210.0, 0.3)
    mat = MaterialParams(lam, mu, 0.0027, l0, order=order)
    bottom = independent(cmap, edge_points(model, 0, "eta0"))
    top = independent(cmap, edge_points(model, 2, "eta1"))
    cracks = [((0.0, 9.0), (2.5, 9.0)), ((10.0, 11.0), (7.5, 11.0))]
    sched = LoadSchedule(
        [(32, 1e-3), (TAIL_STEPS, 1e-6)],
        driven=dofs(top, 1),
        fixed=np.concatenate([dofs(bottom, 0), dofs(bottom, 1), dofs(top, 0)]),
    )
    return ProblemDefinition(
        "double_notch", model, mat, sched, refined,
        corridor=[((2.5, 9.0), (7.5, 11.0))], seed_cracks=cracks,
        cmap=cmap, domain_box=(0.0, 10.0, 0.0, 20.0),
    )


def _cell_layout(rows, holes):
    """Boxes and hole cells from a row table.

    ``rows`` is a list of ``(y0, y1, [x lines])``; a column whose box
    equals a hole cell is replaced by the four sectors of that hole.
    Returns a list of items ``("box", bounds)`` or ``("hole", k, hole)``.
    """
    items = []
    for y0, y1, xs in rows:
        for x0, x1 in zip(xs[:-1], xs[1:]):
            hole = next(
                (h for h in holes if abs(h[0][0] - h[2] - x0) < 1e-9 and abs(h[0][1] - h[2] - y0) < 1e-9), None
            )
            if hole is None:
                items.append(("box", (x0, x1, y0, y1)))
            else:
                items.extend(("hole", k, hole) for k in range(4))
    return items


def _build_items(items, coarse_h, r, refined, degree, extras=None):
    extras = extras or {}
    patches = []
    for k, it in enumerate(items, start=1):
        f = r if k in refined else 1
        if it[0] == "box":
            x0, x1, y0, y1 = it[1]
            nx = max(1, int(round((x1 - x0) / coarse_h)))
            ny = max(1, int(round((y1 - y0) / coarse_h)))
            ex, ey = extras.get(k, ((), ()))
            patches.append(rect_patch(x0, x1, y0, y1, nx * f, ny * f, degree, ex, ey))
        else:
            _, sec, (c, rad, half) = it
            n_side = max(1, int(round(2 * half / coarse_h)))
            n_rad = max(2, int(round((half - rad) / coarse_h)))
            patches.append(sector_patch(c, rad, half, sec, n_rad * f, n_side * f, degree))
    return patches


def _find(items, kind, key):
    for k, it in enumerate(items, start=1):
        if kind == "box" and it[0] == "box" and np.allclose(it[1], key):
            return k
        if kind == "hole" and it[0] == "hole" and it[1] == key[1] and np.allclose(it[2][0], key[0]):
            return k
    raise KeyError(key)


# Notched plate with holes (65 x 120 mm). Fig. 27 gives no printed hole
# positions; these are approximations on a 2.5 mm grid.
PLATE_W, PLATE_H = 65.0, 120.0
PIN_LOW = ((12.5, 20.0), 5.0, 7.5)
PIN_HIGH = ((12.5, 100.0), 5.0, 7.5)
BIG_HOLE = ((35.0, 50.0), 10.0, 15.0)
PLATE_NOTCH = ((0.0, 65.0), (10.0, 65.0))
PLATE_REFINED_IDS = (4, 15, 23, 24, 32, 40)


def _renumber(items, refined_items, target_ids):
    """Order ``items`` so that ``refined_items`` (0-based) land on ``target_ids`` (1-based)."""
    order = [None] * len(items)
    for k, t in zip(refined_items, target_ids):
        order[t - 1] = k
    rest = iter(k for k in range(len(items)) if k not in set(refined_items))
    return [k if k is not None else next(rest) for k in order]


def plate_holes(l0=0.3, order=2, degree=3, h_ratio=0.5, coarse_h=2.5):
    """Notched plate with two loading-pin holes and one large hole (43 patches)."""
    W = PLATE_W
    rows = [
        (0.0, 12.5, [0, 5, 12.5, 20, 35, 50, W]),
        (12.5, 27.5, [0, 5, 20, 35, 50, W]),
        (27.5, 35.0, [0, 20, 50, W]),
        (35.0, 65.0, [0, 20, 50, W]),
        (65.0, 75.0, [0, 20, 50, W]),
        (75.0, 92.5, [0, 20, 50, W]),
        (92.5, 107.5, [0, 5, 20, 35, 50, W]),
        (107.5, 120.0, [0, 5, 12.5, 20, 35, 50, W]),
    ]
    holes = [PIN_LOW, PIN_HIGH, BIG_HOLE]
    raw = _cell_layout(rows, holes)
    if len(raw) != 43:
        raise ModelError("plate layout produced %d patches, expected 43" % len(raw))
    c = BIG_HOLE[0]
    # crack from the notch tip into the upper-left of the big hole, second
    # crack from its right side to the free edge
    hot = [
        _find(raw, "box", (0, 20, 35, 65)) - 1, _find(raw, "hole", (c, 2)) - 1,
        _find(raw, "hole", (c, 1)) - 1, _find(raw, "box", (0, 20, 65, 75)) - 1,
        _find(raw, "hole", (c, 0)) - 1, _find(raw, "box", (50, W, 35, 65)) - 1,
    ]
    items = [raw[k] for k in _renumber(raw, hot, PLATE_REFINED_IDS)]
    refined = PLATE_REFINED_IDS
    below = _find(items, "box", (0, 20, 35, 65))
    above = _find(items, "box", (0, 20, 65, 75))
    r = refinement_factor(coarse_h, l0, h_ratio)
    # notch tip at the middle of the shared edge: C0 knot on the slave (upper) patch
    extras = {above: ([0.5] * (degree - 1), ())}
    patches = _build_items(items, coarse_h, r, refined, degree, extras)
    partial = {(above - 1, below - 1): (0.5, 1.0)}
    model = MultipatchModel(patches, declare_interfaces(patches, partial=partial))
    cmap = classify_dofs(model)
    mat = MaterialParams(1.94, 2.45, 0.00228, l0, order=order)
    pin = lambda h: np.concatenate(
        [edge_points(model, _find(items, "hole", (h[0], k)) - 1, "xi0") for k in range(4)]
    )
    low = independent(cmap, pin(PIN_LOW))
    high = independent(cmap, pin(PIN_HIGH))
    sched = LoadSchedule(
        [(TAIL_STEPS, 1e-3)],
        driven=dofs(high, 1),
        fixed=np.concatenate([dofs(low, 0), dofs(low, 1), dofs(high, 0)]),
    )
    (cx, cy), rad, _ = BIG_HOLE
    corridor = [
        (PLATE_NOTCH[1], (cx - rad * math.sqrt(0.5), cy + rad * math.sqrt(0.5))),
        ((cx + rad, cy), (W, cy - 5.0)),
    ]
    return ProblemDefinition(
        "plate_holes", model, mat, sched, refined, corridor=corridor, notches=[PLATE_NOTCH],
        cmap=cmap, domain_box=(0.0, W, 0.0, PLATE_H),
    )


# Asymmetric notched three-point bending beam with three holes (Fig. 32
# gives a and b; the hole positions are approximations).
BEAM_L, BEAM_H = 20.0, 8.0
BEAM_HOLES = [((8.0, y), 0.25, 0.5) for y in (2.75, 4.75, 6.75)]


def asym_three_point(a=6.0, b=1.0, l0=0.043, order=2, degree=3, h_ratio=0.5, coarse_h=0.25):
    """Asymmetrically notched beam with three holes (39 patches).

    The notch ``x = a, 0 <= y <= b`` splits a refined column; the two
    halves are tied only above the notch tip.
    """
    L = BEAM_L
    if not (5.0 < a < 7.5 and 0.0 < b < 2.25):
        raise ModelError("notch must lie in the refined column 5 < a < 7.5, 0 < b < 2.25")
    rows = [
        (0.0, 2.25, [0, 1, 5, a, 7.5, 10, 19, L]),
        (2.25, 3.25, [0, 5, 7.5, 8.5, 10, L]),
        (3.25, 4.25, [0, 5, 7.5, 8.5, L]),
        (4.25, 5.25, [0, 5, 7.5, 8.5, 10, L]),
        (5.25, 6.25, [0, 7.5, 8.5, L]),
        (6.25, 7.25, [0, 7.5, 8.5, 10, L]),
        (7.25, 8.0, [0, 10, L]),
    ]
    items = _cell_layout(rows, BEAM_HOLES)
    if len(items) != 39:
        raise ModelError("beam layout produced %d patches, expected 39" % len(items))
    mid = BEAM_HOLES[1][0]
    left = _find(items, "box", (5, a, 0, 2.25))
    right = _find(items, "box", (a, 7.5, 0, 2.25))
    refined = tuple(sorted({
        left, right, _find(items, "box", (5, 7.5, 2.25, 3.25)), _find(items, "box", (5, 7.5, 3.25, 4.25)),
        _find(items, "box", (7.5, 8.5, 3.25, 4.25)), _find(items, "hole", (mid, 2)), _find(items, "hole", (mid, 3)),
    }))
    r = refinement_factor(coarse_h, l0, h_ratio)
    tip = b / 2.25
    extras = {left: ((), [tip] * (degree - 1))}
    patches = _build_items(items, coarse_h, r, refined, degree, extras)
    model = MultipatchModel(patches, declare_interfaces(patches, partial={(left - 1, right - 1): (tip, 1.0)}))
    cmap = classify_dofs(model)
    mat = MaterialParams(12.0, 8.0, 1e-3, l0, order=order)
    sup_l = independent(cmap, points_at(model, (1.0, 0.0)))
    sup_r = independent(cmap, points_at(model, (19.0, 0.0)))
    load = independent(cmap, points_at(model, (10.0, BEAM_H)))
    sched = LoadSchedule(
        [(12, 1e-2), (TAIL_STEPS, 1e-5)],
        driven=dofs(load, 1),
        fixed=np.concatenate([dofs(sup_l, 0), dofs(sup_l, 1), dofs(sup_r, 1)]),
        direction="-y",
    )
    (hx, hy), hr, _ = BEAM_HOLES[1]
    ang = math.radians(200)
    corridor = [((a, b), (7.0, 2.5)), ((7.0, 2.5), (hx + hr * math.cos(ang), hy + hr * math.sin(ang)))]
    return ProblemDefinition(
        "asym_three_point", model, mat, sched, refined, corridor=corridor, notches=[((a, 0.0), (a, b))],
        cmap=cmap, domain_box=(0.0, L, 0.0, BEAM_H),
    )


PROBLEMS = {
    "sen_tension": sen_tension,
    "sen_shear": sen_shear,
    "three_point": three_point,
    "double_notch": double_notch,
    "plate_holes": plate_holes,
    "asym_three_point": asym_three_point,
}


def build_problem(name, **kw):
    try:
        builder = PROBLEMS[name]
    except KeyError:
        raise ModelError("unknown problem %r; choose from %s" % (name, ", ".join(PROBLEMS))) from None
    return builder(**kw)
