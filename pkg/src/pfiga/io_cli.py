"""Run configuration, result files and the command-line interface.

Configuration is strict JSON; quantities carry their unit in the key name.
Example::

    {"problem": "sen_tension", "order": 4, "p": 3, "l0_mm": 0.02,
     "schedule": [{"steps": 50, "du_mm": 1e-4}, {"steps": 500, "du_mm": 1e-6}]}
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import tempfile
from dataclasses import dataclass, fields

import numpy as np

from . import problems as pb
from .assembly import ConfigurationError, Discretization, MeshError, _univariate_table
from .multipatch import ModelError
from .solver import (
    LoadSchedule,
    NonConvergenceError,
    PhaseFieldBandError,
    SingularSystemError,
    SolverConfig,
    run_simulation,
)
from .splines import element_spans

log = logging.getLogger(__name__)

CSV_COLUMNS = ("step", "u_applied_mm", "reaction_kN", "staggered_iters", "eq64_metric")
EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 2, 3


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    problem: str
    order: int = 2
    p: int = 3
    h_over_l0: float = 0.5
    l0_mm: float | None = None
    schedule: tuple | None = None
    snapshot_interval: int = 0
    output_dir: str = "out"
    history_policy: str = "iteration"
    stagger_order: str = "phi_first"
    early_termination: bool = True
    tol: float = 1e-4
    max_iter: int = 50
    max_steps: int | None = None

    def solver_config(self):
        return SolverConfig(
            tol=self.tol,
            max_iter=self.max_iter,
            max_steps=self.max_steps,
            history_policy=self.history_policy,
            stagger_order=self.stagger_order,
            early_termination=self.early_termination,
            snapshot_interval=self.snapshot_interval,
        )

    def build_problem(self):
        kw = {"order": self.order, "degree": self.p, "h_ratio": self.h_over_l0}
        if self.l0_mm is not None:
            kw["l0"] = self.l0_mm
        prob = pb.build_problem(self.problem, **kw)
        if self.schedule is not None:
            s = prob.schedule
            prob.schedule = LoadSchedule(list(self.schedule), s.driven, s.fixed, s.direction)
        return prob


def _check(cond, msg):
    if not cond:
        raise ConfigError(msg)


def config_from_dict(data):
    """Validate a decoded JSON object and build a :class:`RunConfig`."""
    _check(isinstance(data, dict), "config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    _check(not unknown, "unknown config keys: %s" % ", ".join(unknown))
    _check("problem" in data, "missing required key 'problem'")
    _check(data["problem"] in pb.PROBLEMS, "unknown problem %r; choose from %s" % (data["problem"], ", ".join(pb.PROBLEMS)))
    d = dict(data)
    is_int = lambda v: isinstance(v, int) and not isinstance(v, bool)
    is_num = lambda v: isinstance(v, (int, float)) and not isinstance(v, bool)
    _check(d.get("order", 2) in (2, 4) and is_int(d.get("order", 2)), "order must be 2 or 4")
    _check(is_int(d.get("p", 3)) and d.get("p", 3) >= 1, "p must be a positive integer")
    if d.get("order", 2) == 4 and d.get("p", 3) < 2:
        raise ConfigError(
            "order 4 requires p >= 2: the fourth-order theory needs second derivatives of the "
            "basis functions, i.e. C1-continuous splines"
        )
    _check(is_num(d.get("h_over_l0", 0.5)) and d.get("h_over_l0", 0.5) > 0, "h_over_l0 must be positive")
    if d.get("l0_mm") is not None:
        _check(is_num(d["l0_mm"]) and d["l0_mm"] > 0, "l0_mm must be positive")
    if d.get("schedule") is not None:
        sch = d["schedule"]
        _check(isinstance(sch, list) and sch, "schedule must be a non-empty list")
        segs = []
        for seg in sch:
            _check(isinstance(seg, dict) and set(seg) == {"steps", "du_mm"},
                   "schedule entries need exactly the keys 'steps' and 'du_mm'")
            _check(is_int(seg["steps"]) and seg["steps"] >= 1, "schedule steps must be a positive integer")
            _check(is_num(seg["du_mm"]) and seg["du_mm"] >= 0, "schedule du_mm must be non-negative")
            segs.append((seg["steps"], float(seg["du_mm"])))
        d["schedule"] = tuple(segs)
    _check(is_int(d.get("snapshot_interval", 0)) and d.get("snapshot_interval", 0) >= 0,
           "snapshot_interval must be a non-negative integer")
    _check(isinstance(d.get("output_dir", "out"), str), "output_dir must be a string")
    _check(d.get("history_policy", "iteration") in ("iteration", "step"), "history_policy must be 'iteration' or 'step'")
    _check(d.get("stagger_order", "phi_first") in ("phi_first", "u_first"), "stagger_order must be 'phi_first' or 'u_first'")
    _check(isinstance(d.get("early_termination", True), bool), "early_termination must be a boolean")
    _check(is_num(d.get("tol", 1e-4)) and d.get("tol", 1e-4) > 0, "tol must be positive")
    _check(is_int(d.get("max_iter", 50)) and d.get("max_iter", 50) >= 1, "max_iter must be a positive integer")
    if d.get("max_steps") is not None:
        _check(is_int(d["max_steps"]) and d["max_steps"] >= 1, "max_steps must be a positive integer")
    return RunConfig(**d)


def parse_config(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError("cannot read config %s: %s" % (path, exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("config %s is not valid JSON: %s" % (path, exc)) from exc
    return config_from_dict(data)


# ---------------------------------------------------------------------------
# output files
# ---------------------------------------------------------------------------

def _atomic_write(path, text):
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v):
    # 17 significant digits round-trip every double exactly
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return "%.17g" % float(v)


def write_curve_csv(history, path):
    lines = [",".join(CSV_COLUMNS)]
    for row in history:
        lines.append(",".join(_fmt(row[c]) for c in CSV_COLUMNS))
    _atomic_write(path, "\n".join(lines) + "\n")


def read_curve_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        out.append({c: (int(r[c]) if c in ("step", "staggered_iters") else float(r[c])) for c in CSV_COLUMNS})
    return out


def sample_patch(patch, samples=3):
    """Rational basis on a uniform ``samples x samples`` grid in every element.

    Returns local connectivity ``(ne, nloc)`` and basis values ``(ne, ns, nloc)``.
    """
    s = np.linspace(-1.0, 1.0, samples)
    dummy = np.ones(samples)
    p, q = patch.p, patch.q
    sx, sy = element_spans(patch.knots_xi, p), element_spans(patch.knots_eta, q)
    Tx = _univariate_table(patch.knots_xi, p, sx, s, dummy)[0][:, :, 0]
    Ty = _univariate_table(patch.knots_eta, q, sy, s, dummy)[0][:, :, 0]
    m = patch.shape[1]
    ii = sx[:, None] - p + np.arange(p + 1)[None, :]
    jj = sy[:, None] - q + np.arange(q + 1)[None, :]
    loc = ii[:, None, :, None] * m + jj[None, :, None, :]
    w = patch.weights.ravel()[loc]
    A = np.einsum("egi,fhj,efij->efghij", Tx, Ty, w)
    ne, ns, nloc = sx.size * sy.size, samples * samples, (p + 1) * (q + 1)
    A = A.reshape(ne, ns, nloc)
    R = A / A.sum(-1, keepdims=True)
    return loc.reshape(ne, nloc), R


def field_samples(state, model, samples_per_element=3):
    """Points and ``phi, ux, uy`` sampled on every element of every patch."""
    if samples_per_element < 2:
        raise ValueError("samples_per_element must be >= 2")
    pts, phi, ux, uy = [], [], [], []
    for pid, patch in enumerate(model.patches):
        conn, R = sample_patch(patch, samples_per_element)
        g = model.offsets[pid] + conn
        P = patch.control_points.reshape(-1, 2)[conn]
        pts.append(np.einsum("esn,eni->esi", R, P).reshape(-1, 2))
        phi.append(np.einsum("esn,en->es", R, state.phi[g]).ravel())
        ux.append(np.einsum("esn,en->es", R, state.u[2 * g]).ravel())
        uy.append(np.einsum("esn,en->es", R, state.u[2 * g + 1]).ravel())
    return np.concatenate(pts), np.concatenate(phi), np.concatenate(ux), np.concatenate(uy)


def write_field_snapshot(state, model, path, samples_per_element=3):
    """Legacy ASCII VTK point cloud with ``phi``, ``ux`` and ``uy`` point data."""
    X, phi, ux, uy = field_samples(state, model, samples_per_element)
    n = X.shape[0]
    out = [
        "# vtk DataFile Version 3.0",
        "phase-field snapshot step %d" % state.step,
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        "POINTS %d double" % n,
    ]
    out += ["%s %s 0" % (_fmt(x), _fmt(y)) for x, y in X]
    out.append("CELLS %d %d" % (n, 2 * n))
    out += ["1 %d" % i for i in range(n)]
    out.append("CELL_TYPES %d" % n)
    out += ["1"] * n
    out.append("POINT_DATA %d" % n)
    for name, vals in (("phi", phi), ("ux", ux), ("uy", uy)):
        out += ["SCALARS %s double 1" % name, "LOOKUP_TABLE default"]
        out += [_fmt(v) for v in vals]
    _atomic_write(path, "\n".join(out) + "\n")


def read_vtk_points(path):
    """Points and point-data arrays of a file written by :func:`write_field_snapshot`."""
    with open(path) as fh:
        lines = fh.read().split("\n")
    i = next(k for k, l in enumerate(lines) if l.startswith("POINTS"))
    n = int(lines[i].split()[1])
    X = np.array([[float(v) for v in l.split()] for l in lines[i + 1: i + 1 + n]])
    data = {}
    for k, l in enumerate(lines):
        if l.startswith("SCALARS"):
            data[l.split()[1]] = np.array([float(v) for v in lines[k + 2: k + 2 + n]])
    return X, data


# ---------------------------------------------------------------------------
# CLI
# ---------------------------------------------------------------------------

def _cmd_list(args):
    for name in pb.PROBLEMS:
        print(name)
    return EXIT_OK


def _cmd_validate(args):
    cfg = parse_config(args.config)
    prob = cfg.build_problem()
    cmap = prob.validate()
    Discretization(prob.model, order=cfg.order, cmap=cmap)
    nO, nI, nD = cmap.counts
    print(
        "%s: %d patches, %d interfaces, %d control points (O=%d I=%d D=%d); checks passed"
        % (prob.name, len(prob.model.patches), len(prob.model.interfaces), prob.model.n_points, nO, nI, nD)
    )
    return EXIT_OK


def _cmd_run(args):
    cfg = parse_config(args.config)
    out = args.out or cfg.output_dir
    prob = cfg.build_problem()
    cmap = prob.validate()
    disc = Discretization(prob.model, order=cfg.order, cmap=cmap)
    history = []

    def on_step(state, sample):
        history.append(sample)
        if cfg.snapshot_interval and state.step % cfg.snapshot_interval == 0:
            write_field_snapshot(state, prob.model, os.path.join(out, "snapshot_%05d.vtk" % state.step))

    try:
        res = run_simulation(prob, cfg.solver_config(), disc=disc, callback=on_step)
    except (NonConvergenceError, SingularSystemError, PhaseFieldBandError, FloatingPointError) as exc:
        write_curve_csv(history, os.path.join(out, "curve.csv"))
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_NONCONVERGENCE
    write_curve_csv(res.history, os.path.join(out, "curve.csv"))
    write_field_snapshot(res.state, prob.model, os.path.join(out, "final.vtk"))
    print("%s: %d steps written to %s" % (prob.name, len(res.history), out))
    return EXIT_OK


def cli_main(argv=None):
    parser = argparse.ArgumentParser(prog="pfiga", description="Phase-field fracture on multipatch NURBS meshes")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("list-problems", help="print the built-in problem names")
    p_val = sub.add_parser("validate", help="build the model and run the checks without solving")
    p_val.add_argument("--config", required=True)
    p_run = sub.add_parser("run", help="run a simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", default=None)
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    handler = {"list-problems": _cmd_list, "validate": _cmd_validate, "run": _cmd_run}[args.command]
    try:
        return handler(args)
    except (ConfigError, ModelError, ConfigurationError, MeshError, ValueError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return EXIT_CONFIG


def main():
    sys.exit(cli_main())
