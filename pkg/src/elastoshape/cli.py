"""Command-line driver: ``elastoshape <subcommand> ...``.

Exit codes: 0 success, 1 infeasible shape or failed check, 2 usage or
configuration error.
"""

from __future__ import annotations

import argparse
import configparser
import math
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .elasticity import (MaterialModel, estimate_korn_constant, estimate_poincare_constant,
                         green_residual)
from .errors import ConfigError, ElastoShapeError, InfeasibleError
from .functional import FunctionalWeights, compliance, energy_functional, load_work
from .geometry import Polygon, check_eps_cone
from .io import format_report, read_mesh, read_polyline, write_polyline, write_report, write_vtk
from .mesh import boundary_measure, refine, unit_square_mesh
from .mosco import (DomainSequenceStudy, RobinForm, alpha_sequence_study, koch_study,
                    mconvergence_indicators)
from .shapeopt import (AdmissibleClassConfig, RoofLoads, history_csv, make_roof_shape, optimize,
                       project_admissible, solve_roof)

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# --- configuration -------------------------------------------------------------

def _floats(s: str) -> tuple[float, ...]:
    return tuple(float(v) for v in s.replace(",", " ").split())


def _positive(s: str) -> float:
    v = float(s)
    if not v > 0:
        raise ValueError("must be positive")
    return v


def _nonneg(s: str) -> float:
    v = float(s)
    if not v >= 0:
        raise ValueError("must be nonnegative")
    return v


def _count(s: str) -> int:
    v = int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _choice(*opts) -> Callable[[str], str]:
    def parse(s):
        if s not in opts:
            raise ValueError(f"must be one of {opts}")
        return s
    return parse


def _sign(s: str) -> float:
    v = float(s)
    if v not in (-1.0, 1.0):
        raise ValueError("must be -1 or 1")
    return v


ROOF_SCHEMA = {
    "geometry": {"length": _positive, "end_heights": _floats, "theta": _floats,
                 "container": _floats, "region": _floats, "container_file": str,
                 "region_file": str, "c_v": _positive, "volume_rule": _choice("footprint", "arclength")},
    "class": {"epsilon": _positive, "ell0": _positive, "ell1": _positive, "c_hat": _positive,
              "cone_step": _positive, "cone_directions": _count, "cone_samples": _count},
    "material": {"kind": _choice("scalar", "lame"), "a": _positive, "lam": float, "mu": _positive},
    "loads": {"rho0": _positive, "snow": _nonneg, "gravity_sign": _sign},
    "functional": {"c1": _nonneg, "c2": _nonneg},
    "solver": {"resolution": _positive, "tol": _positive},
    "optimizer": {"budget": _count, "seed": int, "step": _positive, "threads": _count},
    "output": {"directory": str},
}

MOSCO_SCHEMA = {
    "study": {"kind": _choice("koch", "alpha", "constant"), "levels": str, "proxy_level": _count,
              "alpha": _nonneg, "n_max_exponent": _count, "mesh_n": _count, "members": _count,
              "f": _floats, "tol": _nonneg},
    "output": {"directory": str},
}


def load_config(path, schema) -> dict[str, dict]:
    """Parse an INI file against ``schema``; unknown sections or keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read(path)
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    out: dict[str, dict] = {}
    for sec in cp.sections():
        if sec not in schema:
            raise ConfigError(f"{path}: unknown section [{sec}]")
        out[sec] = {}
        for key, raw in cp.items(sec):
            if key not in schema[sec]:
                raise ConfigError(f"{path}: unknown key '{key}' in [{sec}]")
            try:
                out[sec][key] = schema[sec][key](raw)
            except ValueError as exc:
                raise ConfigError(f"{path}: [{sec}] {key} = {raw!r}: {exc}") from exc
    out["_base"] = {"dir": path.parent}
    return out


def _get(cfg, sec, key, default):
    return cfg.get(sec, {}).get(key, default)


def _polygon(cfg, key_box, key_file, default):
    base = cfg["_base"]["dir"]
    fname = _get(cfg, "geometry", key_file, None)
    if fname is not None:
        p = base / fname
        if not p.is_file():
            raise ConfigError(f"referenced file {p} does not exist")
        return Polygon(read_polyline(p))
    box = _get(cfg, "geometry", key_box, default)
    if len(box) != 4:
        raise ConfigError(f"[geometry] {key_box} needs 4 numbers x0 y0 x1 y1")
    return Polygon.box(*box)


@dataclass(frozen=True)
class RoofRun:
    cls: AdmissibleClassConfig
    theta0: np.ndarray
    material: MaterialModel
    loads: RoofLoads
    weights: FunctionalWeights
    resolution: float
    tol: float
    budget: int
    seed: int
    step: float
    threads: int
    outdir: Path


def roof_run(cfg) -> RoofRun:
    """Validate every roof parameter before any computation."""
    try:
        container = _polygon(cfg, "container", "container_file", (0.0, 0.0, 2.0, 2.0))
        region = _polygon(cfg, "region", "region_file", (0.0, 0.2, 2.0, 1.2))
        ends = _get(cfg, "geometry", "end_heights", (0.5, 0.5))
        if len(ends) != 2:
            raise ConfigError("[geometry] end_heights needs two numbers")
        theta = np.array(_get(cfg, "geometry", "theta", (0.5,) * 5))
        kw = {k: v for k, v in cfg.get("class", {}).items()}
        cls = AdmissibleClassConfig(
            container=container, region=region, length=_get(cfg, "geometry", "length", 2.0),
            end_heights=tuple(ends), c_v=_get(cfg, "geometry", "c_v", 0.6),
            epsilon=kw.pop("epsilon", 0.1), ell0=kw.pop("ell0", 1.0), ell1=kw.pop("ell1", 10.0),
            c_hat=kw.pop("c_hat", 6.0), n_knots=len(theta),
            volume_rule=_get(cfg, "geometry", "volume_rule", "footprint"), **kw)
        kind = _get(cfg, "material", "kind", "lame")
        if kind == "lame":
            mat = MaterialModel.lame(_get(cfg, "material", "lam", 1.0), _get(cfg, "material", "mu", 1.0))
        else:
            mat = MaterialModel.scalar(_get(cfg, "material", "a", 1.0))
        mat.eigenvalues(unit_square_mesh(1))
        weights = FunctionalWeights(_get(cfg, "functional", "c1", 0.0), _get(cfg, "functional", "c2", 1.0))
        loads = RoofLoads(_get(cfg, "loads", "rho0", 1.0), _get(cfg, "loads", "snow", 1.0),
                          _get(cfg, "loads", "gravity_sign", -1.0))
    except ConfigError:
        raise
    except ElastoShapeError as exc:
        raise ConfigError(str(exc)) from exc
    budget = _get(cfg, "optimizer", "budget", 60)
    if budget < len(theta) + 1:
        raise ConfigError("[optimizer] budget must be at least the number of heights + 1")
    outdir = Path(_get(cfg, "output", "directory", "out"))
    if not outdir.is_absolute():
        outdir = cfg["_base"]["dir"] / outdir
    return RoofRun(cls, theta, mat, loads, weights, _get(cfg, "solver", "resolution", 0.05),
                   _get(cfg, "solver", "tol", 1e-10), budget,
                   _get(cfg, "optimizer", "seed", 0), _get(cfg, "optimizer", "step", 0.1),
                   _get(cfg, "optimizer", "threads", 1), outdir)


# --- subcommands ----------------------------------------------------------------

def cmd_solve(args) -> int:
    run = roof_run(load_config(args.config, ROOF_SCHEMA))
    theta, rep = project_admissible(run.theta0, run.cls)
    shape = make_roof_shape(theta, run.cls)
    m, system, u = solve_roof(shape, run.loads, run.material, run.resolution, run.tol)
    J = energy_functional(m, run.material, u, run.weights)
    comp = compliance(m, run.material, u)
    work = load_work(system, u)
    run.outdir.mkdir(parents=True, exist_ok=True)
    write_vtk(run.outdir / "solution.vtk", m, u)
    write_polyline(run.outdir / "lower_curve.txt", shape.lower_curve(), "lower roof curve")
    items = {"J": J, "compliance": comp, "work": work,
             "work_identity_residual": abs(comp - work) / max(abs(work), 1e-300),
             "h_z": shape.thickness, "volume": shape.volume, "nodes": m.n_nodes,
             "feasible": rep.feasible, "cone_ok": rep.cone_ok, "reg_ok": rep.reg_ok,
             "bounds_ok": rep.bounds_ok, "note": rep.cone.note}
    write_report(run.outdir / "report.txt", items)
    sys.stdout.write(format_report(items))
    if not rep.feasible:
        sys.stderr.write("shape is not admissible: " + "; ".join(rep.notes) + "\n")
        return EXIT_FAIL
    return EXIT_OK


def cmd_optimize(args) -> int:
    run = roof_run(load_config(args.config, ROOF_SCHEMA))
    res = optimize(run.cls, run.loads, run.material, run.weights, run.theta0, run.budget,
                   run.seed, run.resolution, run.step, run.threads)
    run.outdir.mkdir(parents=True, exist_ok=True)
    (run.outdir / "history.csv").write_text(history_csv(res.history))
    best = res.best
    write_polyline(run.outdir / "best_shape.txt", best.shape.lower_curve(), "best lower roof curve")
    write_vtk(run.outdir / "best.vtk", best.mesh, best.displacement)
    items = {"initial_J": res.initial.J, "best_J": best.J, "best_theta": best.theta,
             "evaluations": len(res.history), "h_z": best.shape.thickness,
             "volume": best.shape.volume}
    write_report(run.outdir / "report.txt", items)
    sys.stdout.write(format_report(items))
    return EXIT_OK


def cmd_check_geometry(args) -> int:
    pts = read_polyline(args.polygon)
    rep = check_eps_cone(Polygon(pts), args.eps, args.step, args.directions, args.samples)
    items = {"epsilon": rep.epsilon, "passed": rep.passed, **{k: v for k, v in rep.sampling.items() if v is not None}}
    if rep.witness is not None:
        x, xi, z = rep.witness
        items.update(witness_point=x, witness_direction=xi,
                     witness_outside=z if z is not None else "none")
    items["note"] = rep.note
    sys.stdout.write(format_report(items))
    return EXIT_OK if rep.passed else EXIT_FAIL


def _mesh_from_args(args):
    if args.mesh is not None:
        return read_mesh(args.mesh)
    return unit_square_mesh(args.square, {"left": "Dir", "right": "Lo", "bottom": "Lo", "top": "Up"})


def cmd_korn(args) -> int:
    m = _mesh_from_args(args)
    ok = True
    prev = math.inf
    for level in range(args.refinements + 1):
        if level:
            m = refine(m)
        cK = estimate_korn_constant(m, args.dirichlet_tag)
        cP = estimate_poincare_constant(m, args.dirichlet_tag)
        sys.stdout.write(format_report({f"level{level}_nodes": m.n_nodes, f"level{level}_c_K": cK,
                                        f"level{level}_C_P": cP}))
        ok &= 0 < cK <= 1 and cK <= prev * (1 + 1e-8)
        prev = cK
    return EXIT_OK if ok else EXIT_FAIL


def _green_fields(p):
    x, y = p[:, 0], p[:, 1]
    u = np.column_stack([np.sin(np.pi * x) * np.cos(y), np.exp(x) * y * y])
    w = np.cos(2.0 * x + y)
    return u, w


def cmd_green_check(args) -> int:
    m = unit_square_mesh(args.n)
    res = []
    for level in range(args.levels):
        if level:
            m = refine(m)
        u, w = _green_fields(m.nodes)
        res.append(green_residual(m, u, w))
        sys.stdout.write(format_report({f"level{level}_residual": res[-1]}))
    const = green_residual(m, np.tile([1.0, -2.0], (m.n_nodes, 1)), 3 * m.nodes[:, 0] - m.nodes[:, 1])
    rates = [math.log2(a / b) for a, b in zip(res, res[1:]) if a > 0 and b > 0]
    sys.stdout.write(format_report({"constant_linear_residual": const,
                                    "min_rate": min(rates) if rates else float("nan")}))
    ok = const <= 1e-12 and (not rates or min(rates) >= 1.0)
    return EXIT_OK if ok else EXIT_FAIL


def cmd_mosco(args) -> int:
    cfg = load_config(args.config, MOSCO_SCHEMA)
    kind = _get(cfg, "study", "kind", "alpha")
    f = _get(cfg, "study", "f", (0.0, -1.0))
    if len(f) != 2:
        raise ConfigError("[study] f needs two numbers")
    alpha = _get(cfg, "study", "alpha", 1.0)
    tol = _get(cfg, "study", "tol", 1e-6)
    try:
        levels = tuple(int(v) for v in _get(cfg, "study", "levels", "1 2 3 4").replace(",", " ").split())
    except ValueError as exc:
        raise ConfigError(f"[study] levels: {exc}") from exc
    proxy = _get(cfg, "study", "proxy_level", 5)
    if kind == "koch" and (not levels or max(levels) >= proxy or proxy > 5):
        raise ConfigError("koch study needs levels below proxy_level <= 5")
    outdir = Path(_get(cfg, "output", "directory", "out"))
    if not outdir.is_absolute():
        outdir = cfg["_base"]["dir"] / outdir
    m = unit_square_mesh(_get(cfg, "study", "mesh_n", 8))
    if kind == "koch":
        study = koch_study(levels, proxy, alpha, f)
    elif kind == "alpha":
        ns = tuple(10 ** k for k in range(_get(cfg, "study", "n_max_exponent", 8) + 1))
        study = alpha_sequence_study(m, alpha, ns, f)
    else:
        mu = boundary_measure(m, "all")
        form = RobinForm(m, alpha, mu)
        study = DomainSequenceStudy(Polygon.box(0, 0, 1, 1), [form] * _get(cfg, "study", "members", 3),
                                    form, np.asarray(f))
    rep = mconvergence_indicators(study, tol)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "mosco.csv").write_text(rep.csv())
    e = rep.e
    if kind == "koch":
        ok = bool(np.all(np.diff(e) < 0))
    else:
        ok = rep.passed
    items = {"kind": kind, "a_limit": rep.a_limit, "decreasing": rep.decreasing,
             "limsup_ok": rep.limsup_ok, "liminf_ok": rep.liminf_ok, "passed": ok,
             "label": rep.label}
    if rep.note:
        items["note"] = rep.note
    write_report(outdir / "report.txt", items)
    sys.stdout.write(format_report(items))
    return EXIT_OK if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="elastoshape", description="Roof shape optimization studies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_, description=help_)
        sp.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
        sp.set_defaults(func=fn)
        return sp

    sp = add("solve", cmd_solve, "solve the elasticity problem on one roof shape")
    sp.add_argument("--config", required=True)
    sp = add("optimize", cmd_optimize, "run the projected Nelder-Mead roof search")
    sp.add_argument("--config", required=True)
    sp = add("check-geometry", cmd_check_geometry, "sampled epsilon-cone check of a polygon")
    sp.add_argument("--polygon", required=True)
    sp.add_argument("--eps", type=float, required=True)
    sp.add_argument("--step", type=float, default=None)
    sp.add_argument("--directions", type=int, default=64)
    sp.add_argument("--samples", type=int, default=200)
    sp = add("korn", cmd_korn, "estimate Korn and Poincare constants")
    g = sp.add_mutually_exclusive_group()
    g.add_argument("--mesh", default=None)
    g.add_argument("--square", type=int, default=8)
    sp.add_argument("--dirichlet-tag", default="Dir")
    sp.add_argument("--refinements", type=int, default=1)
    sp = add("green-check", cmd_green_check, "discrete Green identity residuals")
    sp.add_argument("--n", type=int, default=4)
    sp.add_argument("--levels", type=int, default=4)
    sp = add("mosco", cmd_mosco, "M-convergence indicators of a Robin domain sequence")
    sp.add_argument("--config", required=True)
    return p


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_USAGE
    except InfeasibleError as exc:
        sys.stderr.write(f"infeasible: {exc}\n")
        return EXIT_FAIL
    except ElastoShapeError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_FAIL


def main() -> None:
    sys.exit(run())
