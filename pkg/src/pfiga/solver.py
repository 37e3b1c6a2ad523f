"""Staggered load stepping for the coupled displacement / phase-field problem."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Discretization, assemble_global
from .multipatch import ModelError, expand_solution, reduce_vector

log = logging.getLogger(__name__)

PHI_BAND = (-0.01, 1.01)
DENOM_GUARD = 1e-12


class SingularSystemError(RuntimeError):
    pass


class NonConvergenceError(RuntimeError):
    def __init__(self, msg, report=None):
        super().__init__(msg)
        self.report = report


class PhaseFieldBandError(RuntimeError):
    pass


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def linear_solve(K, rhs, rtol=1e-10):
    """Sparse direct solve with a residual check."""
    K = sp.csc_matrix(K)
    rhs = np.asarray(rhs, dtype=float)
    if K.shape[0] == 0:
        return np.zeros(0)
    nb = np.linalg.norm(rhs)
    # symmetric ordering without pivoting suits the SPD systems here; fall
    # back to partial pivoting if it fails
    attempts = (dict(permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0, options=dict(SymmetricMode=True)), {})
    err, rel = None, np.inf
    for opts in attempts:
        try:
            lu = spla.splu(K, **opts)
        except RuntimeError as exc:
            err = exc
            continue
        x = lu.solve(rhs)
        if nb == 0.0:
            return x
        res = rhs - K @ x
        if np.linalg.norm(res) > rtol * nb:
            x = x + lu.solve(res)
            res = rhs - K @ x
        rel = np.linalg.norm(res) / nb
        if np.isfinite(rel) and rel <= rtol:
            return x
    if err is not None and rel == np.inf:
        raise SingularSystemError(
            "factorization failed (%s); check for unconstrained rigid-body or zero-energy modes" % err
        ) from err
    raise SingularSystemError(
        "relative residual %.2e after solve; the system is singular or nearly so "
        "(zero-energy mode, e.g. a fully degraded region without support)" % rel
    )


def apply_dirichlet(K, rhs, dofs, values):
    """Symmetric elimination of prescribed reduced-space dofs."""
    K = sp.csr_matrix(K)
    dofs = np.asarray(dofs, dtype=int)
    values = np.broadcast_to(np.asarray(values, dtype=float), dofs.shape)
    rhs = np.array(rhs, dtype=float)
    if dofs.size == 0:
        return K, rhs
    x = np.zeros(K.shape[0])
    x[dofs] = values
    rhs -= K @ x
    free = np.ones(K.shape[0])
    free[dofs] = 0.0
    Dm = sp.diags(free)
    Kc = (Dm @ K @ Dm + sp.diags(1.0 - free)).tocsr()
    rhs[dofs] = values
    return Kc, rhs


# ---------------------------------------------------------------------------
# configuration and state
# ---------------------------------------------------------------------------

@dataclass
class LoadSchedule:
    """Displacement control: ``segments`` of ``(n_steps, du_mm)``.

    ``driven`` and ``fixed`` hold full displacement dof indices
    (``2 * control_point + component``).
    """

    segments: list
    driven: np.ndarray
    fixed: np.ndarray
    direction: str = "y"

    def __post_init__(self):
        if self.direction not in ("x", "y", "-x", "-y"):
            raise ValueError("direction must be one of x, y, -x, -y")
        for n, du in self.segments:
            if n < 1 or du < 0:
                raise ValueError("schedule segments need n >= 1 and du >= 0")
        self.driven = np.asarray(self.driven, dtype=int)
        self.fixed = np.asarray(self.fixed, dtype=int)

    def increments(self):
        for n, du in self.segments:
            for _ in range(int(n)):
                yield float(du)

    @property
    def sign(self):
        """+1 or -1: orientation of the prescribed displacement."""
        return -1.0 if self.direction.startswith("-") else 1.0

    @property
    def n_steps(self):
        return int(sum(n for n, _ in self.segments))


@dataclass
class SolverConfig:
    tol: float = 1e-4
    max_iter: int = 50
    max_steps: int | None = None
    history_policy: str = "iteration"   # or "step"
    stagger_order: str = "phi_first"    # or "u_first"
    early_termination: bool = True
    freeze_phase: bool = False
    snapshot_interval: int = 0
    phi_band: tuple = PHI_BAND

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.history_policy not in ("iteration", "step"):
            raise ValueError("history_policy must be 'iteration' or 'step'")
        if self.stagger_order not in ("phi_first", "u_first"):
            raise ValueError("stagger_order must be 'phi_first' or 'u_first'")
        lo, hi = self.phi_band
        if not lo <= 0.0 < 1.0 <= hi:
            raise ValueError("phi_band must contain [0, 1]")


@dataclass
class SimulationState:
    u: np.ndarray
    phi: np.ndarray
    H: list
    step: int = 0
    u_applied: float = 0.0
    history: list = field(default_factory=list)

    def copy(self):
        return SimulationState(
            self.u.copy(), self.phi.copy(), [h.copy() for h in self.H], self.step, self.u_applied,
            list(self.history),
        )


@dataclass
class StepReport:
    step: int
    iterations: int
    metrics: list
    converged: bool

    @property
    def metric(self):
        return self.metrics[-1] if self.metrics else float("nan")


def initial_state(disc, H0=None):
    n = disc.n_points
    H = disc.zero_history() if H0 is None else [np.array(h, dtype=float) for h in H0]
    return SimulationState(np.zeros(2 * n), np.zeros(n), H)


# ---------------------------------------------------------------------------
# staggered iteration
# ---------------------------------------------------------------------------

def _reduced_positions(cmap, dofs):
    pos = cmap.reduced_position[np.asarray(dofs, dtype=int)]
    if np.any(pos < 0):
        bad = np.asarray(dofs)[pos < 0][0]
        raise ModelError("Dirichlet constraint on dependent dof %d; constrain its master instead" % bad)
    return pos


def _solve_phase(disc, state, mat):
    sysm = assemble_global(disc, state.u, state.phi, state.H, mat, "phi")
    dphi_r = linear_solve(sysm.K, -sysm.rhs)
    return expand_solution(dphi_r, sysm.cmap)


def _solve_displacement(disc, state, mat, schedule, target):
    sysm = assemble_global(disc, state.u, state.phi, state.H, mat, "u")
    cmap = sysm.cmap
    dofs = np.concatenate([schedule.driven, schedule.fixed])
    pos = _reduced_positions(cmap, dofs)
    vals = np.concatenate([np.full(schedule.driven.size, schedule.sign * target), np.zeros(schedule.fixed.size)])
    vals = vals - state.u[dofs]
    K, rhs = apply_dirichlet(sysm.K, -sysm.rhs, pos, vals)
    du_r = linear_solve(K, rhs)
    return expand_solution(du_r, cmap)


def _check_phi(phi, step, it, band=PHI_BAND):
    """Abort on NaN/Inf or on values outside the sanity band."""
    if not np.all(np.isfinite(phi)):
        raise FloatingPointError("NaN/Inf in phase field at step %d, iteration %d" % (step, it))
    lo, hi = phi.min(), phi.max()
    if lo < band[0] or hi > band[1]:
        raise PhaseFieldBandError(
            "phase field left the sanity band [%.2f, %.2f] at step %d, iteration %d: min %.4f max %.4f"
            % (band[0], band[1], step, it, lo, hi)
        )


def staggered_step(state, disc, mat, schedule, config, du):
    """Advance ``state`` by one load increment ``du`` (in place).

    Returns a :class:`StepReport`. Raises :class:`NonConvergenceError` when
    the iteration cap is hit.
    """
    target = state.u_applied + du
    step = state.step + 1
    nu_n = max(np.linalg.norm(state.u), DENOM_GUARD)
    nphi_n = max(np.linalg.norm(state.phi), DENOM_GUARD)
    metrics = []
    for it in range(1, config.max_iter + 1):
        if config.history_policy == "iteration" or it == 1:
            psi = disc.tensile_energy(state.u, mat)
            state.H = [np.maximum(h, p) for h, p in zip(state.H, psi)]
        dphi = np.zeros_like(state.phi)
        du_vec = np.zeros_like(state.u)

        def phase():
            nonlocal dphi
            if not config.freeze_phase:
                dphi = _solve_phase(disc, state, mat)
                state.phi = state.phi + dphi
                if not np.all(np.isfinite(state.phi)):
                    raise FloatingPointError("NaN/Inf in phase field at step %d, iteration %d" % (step, it))
                # the band applies to the field; cubic control values overshoot it
                _check_phi(disc.gauss_values(state.phi), step, it, config.phi_band)

        def disp():
            nonlocal du_vec
            du_vec = _solve_displacement(disc, state, mat, schedule, target)
            state.u = state.u + du_vec
            if not np.all(np.isfinite(state.u)):
                raise FloatingPointError("NaN/Inf in displacement at step %d, iteration %d" % (step, it))

        if config.stagger_order == "phi_first":
            phase()
            disp()
        else:
            disp()
            phase()
        metric = max(np.linalg.norm(dphi) / nphi_n, np.linalg.norm(du_vec) / nu_n)
        metrics.append(float(metric))
        log.debug("step %d iter %d metric %.3e", step, it, metric)
        if metric <= config.tol:
            state.step = step
            state.u_applied = target
            return StepReport(step, it, metrics, True)
    report = StepReport(step, config.max_iter, metrics, False)
    raise NonConvergenceError(
        "staggered iteration did not converge in %d iterations at step %d (last metric %.3e)"
        % (config.max_iter, step, metrics[-1]),
        report,
    )


def reaction_force(disc, state, mat, dofs, sign=1.0):
    """Sum of condensed internal forces over the driven dofs (kN), times ``sign``."""
    r = disc.internal_force(state.u, state.phi, mat)
    rr = reduce_vector(r, disc.cmap_u)
    pos = _reduced_positions(disc.cmap_u, dofs)
    return float(sign * np.sum(rr[pos]))


@dataclass
class SimulationResult:
    history: list
    snapshots: list
    state: SimulationState
    reports: list
    stopped_early: bool = False


def run_simulation(problem, config, disc=None, callback=None):
    """Run the full load schedule of ``problem``.

    ``problem`` provides ``model``, ``material``, ``schedule`` and
    ``initial_history(disc)``.
    """
    mat = problem.material
    if disc is None:
        disc = Discretization(problem.model, order=mat.order)
    state = initial_state(disc, problem.initial_history(disc))
    sched = problem.schedule
    history, snapshots, reports = [], [], []
    peak, low_count, stopped = 0.0, 0, False
    for k, du in enumerate(sched.increments()):
        if config.max_steps is not None and k >= config.max_steps:
            break
        try:
            rep = staggered_step(state, disc, mat, sched, config, du)
        except (NonConvergenceError, SingularSystemError, PhaseFieldBandError, FloatingPointError) as exc:
            new = type(exc)("load step %d: %s" % (k + 1, exc))
            new.report = getattr(exc, "report", None)
            new.history = history
            raise new from exc
        F = reaction_force(disc, state, mat, sched.driven, sched.sign)
        sample = {
            "step": state.step,
            "u_applied_mm": state.u_applied,
            "reaction_kN": F,
            "staggered_iters": rep.iterations,
            "eq64_metric": rep.metric,
        }
        history.append(sample)
        reports.append(rep)
        state.history = history
        if config.snapshot_interval and state.step % config.snapshot_interval == 0:
            snapshots.append(state.copy())
        if callback is not None:
            callback(state, sample)
        peak = max(peak, abs(F))
        if config.early_termination and peak > 0:
            low_count = low_count + 1 if abs(F) < 0.005 * peak else 0
            if low_count >= 5:
                stopped = True
                break
    return SimulationResult(history, snapshots, state, reports, stopped)
