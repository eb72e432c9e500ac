"""Admissible roof shapes and the derivative-free search over them.

A roof is the band between a piecewise linear lower curve ``phi`` over
``[x0, x0 + L]`` and its vertical translate ``phi + h_z``.  The design
vector ``theta`` holds the heights of ``phi`` at the ``m`` interior knots;
the two end heights are fixed by the configuration so the clamped sides
stay on the container wall.
"""

from __future__ import annotations

import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .elasticity import LoadSpec, MaterialModel, assemble, solve
from .errors import (ConfigError, DomainError, ElastoShapeError, InfeasibleError,
                     InitializationError)
from .functional import FunctionalWeights, energy_functional, load_work
from .geometry import ConeCheckReport, Polygon, check_eps_cone, polyline_ball_length, sample_polyline
from .mesh import Mesh, boundary_measure, build_roof_mesh

VOLUME_RULES = ("footprint", "arclength")


@dataclass(frozen=True)
class RelaxedClassData:
    """Extra constants of the relaxed (uniform-domain) class.

    ``kernel`` is a region every admissible domain must contain (may be
    ``None`` for the roof variant, where ``G`` plays that role).
    """

    s: float
    d: float
    c_bar: float
    c_d: float
    kernel: Polygon | None = None

    def __post_init__(self):
        if not (1.0 <= self.s < 2.0):
            raise ConfigError("relaxed class needs N-1 <= s < N")
        if not (0.0 <= self.d <= self.s):
            raise ConfigError("relaxed class needs 0 <= d <= s")
        if not (self.c_bar > 0 and self.c_d > 0):
            raise ConfigError("regularity constants must be positive")


@dataclass(frozen=True)
class AdmissibleClassConfig:
    """Constants of the admissible roof class and sampling parameters."""

    container: Polygon
    region: Polygon
    length: float
    end_heights: tuple[float, float]
    c_v: float
    epsilon: float
    ell0: float
    ell1: float
    c_hat: float
    n_knots: int = 5
    x0: float = 0.0
    volume_rule: str = "footprint"
    relaxed: RelaxedClassData | None = None
    cone_step: float | None = None
    cone_directions: int = 64
    cone_samples: int = 200
    reg_radii: tuple[float, ...] = (0.02, 0.05, 0.1, 0.2, 0.5, 1.0)
    reg_step: float = 0.02

    def __post_init__(self):
        if not self.length > 0:
            raise ConfigError("footprint length must be positive")
        if not self.c_v > 0:
            raise ConfigError("volume c_v must be positive")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if not (0 < self.ell0 < self.ell1):
            raise ConfigError("need 0 < ell0 < ell1")
        if not self.c_hat > 0:
            raise ConfigError("c_hat must be positive")
        if self.n_knots < 2:
            raise ConfigError("need at least two interior knots")
        if self.volume_rule not in VOLUME_RULES:
            raise ConfigError(f"volume_rule must be one of {VOLUME_RULES}")
        if not all(0 < r <= 1 for r in self.reg_radii) or not self.reg_radii:
            raise ConfigError("regularity radii must lie in (0, 1]")
        if not (np.all(self.container.contains(self.region.vertices, boundary=True))
                and self.region.area < self.container.area):
            raise ConfigError("constraint region G must be a proper subset of D")
        lo, hi = self.height_bounds
        if not all(lo <= h <= hi for h in self.end_heights):
            raise ConfigError("end heights must lie inside G")

    @property
    def height_bounds(self) -> tuple[float, float]:
        _, y0, _, y1 = self.region.bbox
        return y0, y1

    @classmethod
    def default_roof(cls, **overrides) -> "AdmissibleClassConfig":
        """Two-unit footprint, D = [0,2]^2, G = [0,2] x [0.2,1.2], c_v = 0.6."""
        args = dict(container=Polygon.box(0, 0, 2, 2), region=Polygon.box(0, 0.2, 2, 1.2),
                    length=2.0, end_heights=(0.5, 0.5), c_v=0.6, epsilon=0.1,
                    ell0=1.0, ell1=10.0, c_hat=6.0, n_knots=5)
        args.update(overrides)
        return cls(**args)


@dataclass(frozen=True)
class RoofShape:
    length: float
    theta: np.ndarray
    knot_x: np.ndarray
    knot_heights: np.ndarray
    thickness: float
    c_v: float

    @property
    def volume(self) -> float:
        """Exact area of the band (footprint times thickness)."""
        return self.thickness * self.length

    def lower_curve(self) -> np.ndarray:
        return np.column_stack([self.knot_x, self.knot_heights])

    def upper_curve(self) -> np.ndarray:
        return np.column_stack([self.knot_x, self.knot_heights + self.thickness])

    def neumann_length(self) -> float:
        return 2.0 * float(np.linalg.norm(np.diff(self.lower_curve(), axis=0), axis=1).sum())

    def polygon(self) -> Polygon:
        return Polygon(np.vstack([self.lower_curve(), self.upper_curve()[::-1]]))


def make_roof_shape(theta, cfg: AdmissibleClassConfig) -> RoofShape:
    """Lower curve from ``theta`` and thickness from the volume rule."""
    theta = np.asarray(theta, dtype=float).ravel()
    if len(theta) != cfg.n_knots:
        raise DomainError(f"expected {cfg.n_knots} heights, got {len(theta)}")
    _, y0, _, y1 = cfg.container.bbox
    if not np.all(np.isfinite(theta)) or np.any(theta < y0) or np.any(theta > y1):
        raise InfeasibleError("lower-curve heights leave the container")
    kx = cfg.x0 + cfg.length * np.arange(cfg.n_knots + 2) / (cfg.n_knots + 1)
    kx[-1] = cfg.x0 + cfg.length
    kh = np.concatenate([[cfg.end_heights[0]], theta, [cfg.end_heights[1]]])
    if cfg.volume_rule == "footprint":
        h = cfg.c_v / cfg.length
    else:
        h = cfg.c_v / float(np.linalg.norm(np.diff(np.column_stack([kx, kh]), axis=0), axis=1).sum())
    theta = theta.copy()
    theta.setflags(write=False)
    kx.setflags(write=False)
    kh.setflags(write=False)
    return RoofShape(cfg.length, theta, kx, kh, h, cfg.c_v)


@dataclass(frozen=True)
class FeasibilityReport:
    cone_ok: bool
    reg_ok: bool
    bounds_ok: bool
    neumann_length: float
    cone: ConeCheckReport | None = None
    notes: tuple[str, ...] = ()

    @property
    def feasible(self) -> bool:
        return self.cone_ok and self.reg_ok and self.bounds_ok


def _all_inside(poly: Polygon, curve: np.ndarray, step: float) -> bool:
    return bool(np.all(poly.contains(sample_polyline(curve, step), boundary=True, tol=1e-12)))


def _regularity_ok(shape: RoofShape, cfg: AdmissibleClassConfig) -> tuple[bool, list[str]]:
    notes = []
    L = shape.neumann_length()
    ok = cfg.ell0 <= L <= cfg.ell1
    if not ok:
        notes.append(f"Neumann length {L:.6g} outside [{cfg.ell0}, {cfg.ell1}]")
    curves = (shape.lower_curve(), shape.upper_curve())
    centers = np.vstack([sample_polyline(c, cfg.reg_step) for c in curves])
    for r in cfg.reg_radii:
        mass = sum(polyline_ball_length(c, centers, r) for c in curves)
        if np.any(mass > cfg.c_hat * r):
            ok = False
            notes.append(f"ball length exceeds c_hat r at r={r}")
            break
        rel = cfg.relaxed
        if rel is not None:
            if np.any(mass > rel.c_d * r ** rel.d):
                ok = False
                notes.append(f"upper {rel.d}-regularity fails at r={r}")
                break
            if np.any(mass < rel.c_bar * r ** rel.s):
                ok = False
                notes.append(f"lower {rel.s}-regularity fails at r={r}")
                break
    return ok, notes


def project_admissible(theta, cfg: AdmissibleClassConfig) -> tuple[np.ndarray, FeasibilityReport]:
    """Clamp ``theta`` to the height range of ``G`` and certify the class conditions.

    Infeasibility is reported through the flags, never raised.
    """
    lo, hi = cfg.height_bounds
    theta = np.clip(np.nan_to_num(np.asarray(theta, dtype=float).ravel(), nan=lo), lo, hi)
    shape = make_roof_shape(theta, cfg)
    notes: list[str] = []
    step = min(cfg.reg_step, cfg.epsilon / 2)
    bounds_ok = _all_inside(cfg.region, shape.lower_curve(), step)
    if not bounds_ok:
        notes.append("lower curve leaves G")
    if not _all_inside(cfg.container, shape.upper_curve(), step):
        bounds_ok = False
        notes.append("upper curve leaves D")
    poly = shape.polygon()
    if cfg.relaxed is not None and cfg.relaxed.kernel is not None:
        if not np.all(poly.contains(cfg.relaxed.kernel.vertices)):
            bounds_ok = False
            notes.append("kernel region not contained")
    reg_ok, reg_notes = _regularity_ok(shape, cfg)
    notes += reg_notes
    cone = check_eps_cone(poly, cfg.epsilon, cfg.cone_step, cfg.cone_directions, cfg.cone_samples)
    if not cone.passed:
        notes.append("sampled epsilon-cone check failed")
    return theta, FeasibilityReport(cone.passed, reg_ok, bounds_ok, shape.neumann_length(),
                                    cone, tuple(notes))


def self_weight_load(shape: RoofShape, rho0: float, sign: float = -1.0) -> np.ndarray:
    """Constant body force ``sign * rho0 * h_z * e_z`` with ``e_z = (0, 1)``."""
    if not rho0 > 0:
        raise DomainError("density must be positive")
    if sign not in (-1.0, 1.0):
        raise DomainError("gravity sign must be +1 or -1")
    return np.array([0.0, sign * rho0 * shape.thickness])


@dataclass(frozen=True)
class SnowLoad:
    """Downward traction of given intensity on one Neumann part."""

    intensity: float
    region: str = "Up"

    @property
    def vector(self) -> np.ndarray:
        return np.array([0.0, -self.intensity])

    def on_mesh(self, m: Mesh, neumann_tag="Neu"):
        """Neumann measure of the mesh and traction values aligned with it."""
        mu = boundary_measure(m, neumann_tag)
        g = np.zeros((len(mu), 2))
        if self.intensity:
            g[np.isin(mu.nodes, m.tagged_nodes(self.region))] = self.vector
        return mu, g


def snow_load(intensity: float, region: str = "Up") -> SnowLoad:
    if not intensity >= 0:
        raise DomainError("snow intensity must be nonnegative")
    if region == "Dir":
        raise DomainError("traction on the clamped part is undefined")
    if region not in ("Up", "Lo"):
        raise DomainError(f"unknown load region {region!r}")
    return SnowLoad(float(intensity), region)


@dataclass(frozen=True)
class RoofLoads:
    rho0: float = 1.0
    snow: float = 1.0
    gravity_sign: float = -1.0
    snow_region: str = "Up"


@dataclass(frozen=True, eq=False)
class ShapeEvaluation:
    theta: np.ndarray
    J: float
    shape: RoofShape | None
    report: FeasibilityReport | None
    mesh: Mesh | None = None
    displacement: np.ndarray | None = None
    work: float = math.nan
    error: str | None = None

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.J)


def solve_roof(shape: RoofShape, loads: RoofLoads, mat: MaterialModel, resolution: float,
               tol: float = 1e-10):
    """Mesh, assemble and solve one roof; returns ``(mesh, system, u)``."""
    m = build_roof_mesh(shape, resolution)
    mu, g = snow_load(loads.snow, loads.snow_region).on_mesh(m)
    f = self_weight_load(shape, loads.rho0, loads.gravity_sign)
    system = assemble(m, mat, LoadSpec(body_force=f, traction=g, neumann=mu), "Dir")
    return m, system, solve(system, tol)


def evaluate_shape(theta, cfg: AdmissibleClassConfig, loads: RoofLoads, mat: MaterialModel,
                   weights: FunctionalWeights, resolution: float) -> ShapeEvaluation:
    """``J`` of the solved roof for ``theta``; infeasible candidates get ``J = inf``."""
    theta_p, report = project_admissible(theta, cfg)
    if not report.feasible:
        return ShapeEvaluation(theta_p, math.inf, make_roof_shape(theta_p, cfg), report,
                               error="; ".join(report.notes))
    shape = make_roof_shape(theta_p, cfg)
    try:
        m, system, u = solve_roof(shape, loads, mat, resolution)
    except ElastoShapeError as exc:
        return ShapeEvaluation(theta_p, math.inf, shape, report, error=str(exc))
    J = energy_functional(m, mat, u, weights)
    return ShapeEvaluation(theta_p, J, shape, report, m, u, load_work(system, u))


def nelder_mead(fun: Callable[[np.ndarray], float], x0, budget: int, step=0.1, seed: int = 0,
                project: Callable[[np.ndarray], np.ndarray] | None = None, xtol: float = 1e-6,
                map_fn: Callable = map):
    """Nelder-Mead with projection of every trial point.

    Reflection 1, expansion 2, contraction 1/2, shrink 1/2.  The initial
    simplex is ``x0 + step * s_i e_i`` with seeded random signs ``s_i``.
    Stops after ``budget`` evaluations or when the simplex diameter drops
    below ``xtol``.  Returns ``(x_best, f_best, evaluations)`` where
    ``evaluations`` lists every ``(x, f)`` in order.
    """
    proj = (lambda x: x) if project is None else project
    x0 = proj(np.asarray(x0, dtype=float).ravel())
    n = len(x0)
    if budget < n + 1:
        raise DomainError("budget must allow the initial simplex (m + 1 evaluations)")
    signs = np.where(np.random.default_rng(seed).random(n) < 0.5, -1.0, 1.0)
    steps = np.broadcast_to(np.asarray(step, dtype=float), (n,))
    evals: list[tuple[np.ndarray, float]] = []

    def many(points):
        points = [proj(p) for p in points]
        vals = list(map_fn(fun, points))
        evals.extend(zip(points, vals))
        return points, vals

    X, F = many([x0] + [x0 + steps[i] * signs[i] * np.eye(n)[i] for i in range(n)])
    if not any(math.isfinite(f) for f in F):
        raise InitializationError("every vertex of the initial simplex is infeasible")
    X, F = np.array(X), np.array(F, dtype=float)

    def one(p):
        if len(evals) >= budget:
            return None, None
        pts, vals = many([p])
        return pts[0], vals[0]

    while len(evals) < budget:
        order = np.argsort(F, kind="stable")
        X, F = X[order], F[order]
        if np.max(np.linalg.norm(X[1:] - X[0], axis=1)) < xtol:
            break
        c = X[:-1].mean(axis=0)
        xr, fr = one(c + (c - X[-1]))
        if xr is None:
            break
        if fr < F[0]:
            xe, fe = one(c + 2.0 * (xr - c))
            if xe is not None and fe < fr:
                X[-1], F[-1] = xe, fe
            else:
                X[-1], F[-1] = xr, fr
            continue
        if fr < F[-2]:
            X[-1], F[-1] = xr, fr
            continue
        if fr < F[-1]:
            xc, fc = one(c + 0.5 * (xr - c))
            if xc is not None and fc <= fr:
                X[-1], F[-1] = xc, fc
                continue
        else:
            xc, fc = one(c + 0.5 * (X[-1] - c))
            if xc is not None and fc < F[-1]:
                X[-1], F[-1] = xc, fc
                continue
        if len(evals) >= budget:
            break
        room = budget - len(evals)
        targets = [X[0] + 0.5 * (X[i] - X[0]) for i in range(1, n + 1)][:room]
        pts, vals = many(targets)
        for i, (p, v) in enumerate(zip(pts, vals), start=1):
            X[i], F[i] = p, v

    k = int(np.argmin([f for _, f in evals]))
    return evals[k][0], evals[k][1], evals


@dataclass(frozen=True)
class OptimizationRecord:
    iteration: int
    theta: np.ndarray
    J: float
    volume: float
    h_z: float
    cone_ok: bool
    reg_ok: bool
    bounds_ok: bool
    accepted: bool
    best_J: float


@dataclass(frozen=True, eq=False)
class OptimizationResult:
    history: list[OptimizationRecord]
    best: ShapeEvaluation
    initial: ShapeEvaluation
    evaluations: list[ShapeEvaluation]

    @property
    def best_theta(self) -> np.ndarray:
        return self.best.theta


def optimize(cfg: AdmissibleClassConfig, loads: RoofLoads, mat: MaterialModel,
             weights: FunctionalWeights, theta0, budget: int = 60, seed: int = 0,
             resolution: float = 0.05, step: float = 0.1, threads: int = 1) -> OptimizationResult:
    """Projected Nelder-Mead search for a roof of minimal ``J``.

    Every evaluation is recorded; ``accepted`` marks evaluations that
    improved the best value so far.
    """
    cache: dict[bytes, ShapeEvaluation] = {}

    def fun(theta):
        ev = evaluate_shape(theta, cfg, loads, mat, weights, resolution)
        cache[theta.tobytes()] = ev
        return ev.J

    def project(theta):
        lo, hi = cfg.height_bounds
        return np.clip(np.nan_to_num(theta, nan=lo), lo, hi)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            _, _, evals = nelder_mead(fun, theta0, budget, step, seed, project, map_fn=pool.map)
    else:
        _, _, evals = nelder_mead(fun, theta0, budget, step, seed, project)

    history = []
    best = math.inf
    best_ev = None
    for it, (x, f) in enumerate(evals):
        ev = cache[x.tobytes()]
        accepted = f < best
        if accepted:
            best, best_ev = f, ev
        rep = ev.report
        history.append(OptimizationRecord(
            it, x.copy(), f, ev.shape.volume, ev.shape.thickness, rep.cone_ok, rep.reg_ok,
            rep.bounds_ok, accepted, best))
    return OptimizationResult(history, best_ev, cache[evals[0][0].tobytes()],
                              [cache[x.tobytes()] for x, _ in evals])


HISTORY_HEADER = "iter,J,volume,h_z,cone_ok,reg_ok,accepted,best_J"


def _g(x: float) -> str:
    return "%.17g" % x


def history_csv(history: Sequence[OptimizationRecord]) -> str:
    buf = io.StringIO()
    buf.write(HISTORY_HEADER + "\n")
    for r in history:
        buf.write(",".join([str(r.iteration), _g(r.J), _g(r.volume), _g(r.h_z),
                            str(int(r.cone_ok)), str(int(r.reg_ok)), str(int(r.accepted)),
                            _g(r.best_J)]) + "\n")
    return buf.getvalue()
