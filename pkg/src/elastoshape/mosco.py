"""Robin energies on domain sequences and numerical M-convergence indicators.

The forms are ``a(u, u) = int e(u) : e(u) + int |u|^2 + alpha sum |u|^2 w``
on a mesh, with the last sum taken over a lumped boundary measure.  Fields
on different meshes are compared after extension by zero to a fixed grid of
cell centres covering the container.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu
from scipy.spatial import cKDTree

from .elasticity import LoadSpec, MaterialModel, dirichlet_dofs, mass_matrix, stiffness_matrix
from .errors import DomainError, SolverError
from .geometry import Polygon, hausdorff_distance, koch_prefractal, points_in_polygon
from .mesh import DiscreteBoundaryMeasure, Mesh, boundary_measure, lattice_mesh_in_region, resolve_tags


@dataclass(frozen=True, eq=False)
class RobinForm:
    """``a(u, u)`` on ``mesh`` with coefficient ``alpha`` on the measure ``measure``.

    ``material`` overrides the identity stress law; ``dirichlet_tag`` clamps
    a boundary part (``None`` for a pure Robin problem).
    """

    mesh: Mesh
    alpha: float
    measure: DiscreteBoundaryMeasure
    dirichlet_tag: str | None = None
    material: MaterialModel | None = None

    def __post_init__(self):
        if not self.alpha >= 0:
            raise DomainError("Robin coefficient must be nonnegative")
        if self.measure.nodes is None:
            raise DomainError("Robin measure must live on mesh nodes")
        if self.dirichlet_tag is not None:
            m = self.mesh
            dn = m.tagged_nodes(self.dirichlet_tag)
            other = m.tagged_nodes([t for t in m.tags_present() if t not in resolve_tags(self.dirichlet_tag)])
            shared = np.intersect1d(self.measure.nodes[self.measure.weights > 0], dn)
            if not np.all(np.isin(shared, other)):
                raise DomainError("Robin part and clamped part overlap beyond interface nodes")

    def boundary_matrix(self) -> sp.csr_matrix:
        w = np.zeros(self.mesh.n_nodes)
        np.add.at(w, self.measure.nodes, self.measure.weights)
        return sp.diags(np.repeat(w, 2)).tocsr()

    def matrix(self) -> sp.csr_matrix:
        m = self.mesh
        S = stiffness_matrix(m, self.material) if self.material is not None else stiffness_matrix(m)
        A = S + mass_matrix(m)
        if self.alpha:
            A = A + self.alpha * self.boundary_matrix()
        return A.tocsr()


def robin_form_apply(form: RobinForm, u) -> float:
    """Value ``a(u, u)`` of the form (no clamping applied)."""
    v = np.asarray(u, dtype=float).ravel()
    if len(v) != 2 * form.mesh.n_nodes:
        raise DomainError("field does not match the form's mesh")
    return max(float(v @ (form.matrix() @ v)), 0.0)


def solve_robin(form: RobinForm, f, tol: float = 1e-10) -> np.ndarray:
    """Minimizer of ``a(u, u) / 2 - int f . u`` (zero on the clamped part)."""
    m = form.mesh
    F = LoadSpec(body_force=f).body_force_load(m).ravel()
    A = form.matrix()
    free = np.arange(2 * m.n_nodes)
    if form.dirichlet_tag is not None:
        free = np.setdiff1d(free, dirichlet_dofs(m, form.dirichlet_tag))
    u = np.zeros(2 * m.n_nodes)
    b = F[free]
    bn = float(np.linalg.norm(b))
    if bn == 0.0:
        return u.reshape(-1, 2)
    K = A[free][:, free].tocsc()
    x = splu(K).solve(b)
    res = float(np.linalg.norm(K @ x - b)) / bn
    if not res <= tol:
        raise SolverError(f"Robin solve residual {res:.3e} exceeds {tol:.1e}", residual=res)
    u[free] = x
    return u.reshape(-1, 2)


def locate_points(m: Mesh, pts, k: int = 16):
    """Containing triangle and barycentric coordinates of each point.

    Returns ``(tri, bary)`` with ``tri = -1`` for points outside the mesh.
    """
    pts = np.asarray(pts, dtype=float).reshape(-1, 2)
    P = m.nodes[m.triangles]
    cent = P.mean(axis=1)
    tree = cKDTree(cent)
    tri = np.full(len(pts), -1, dtype=np.int64)
    bary = np.zeros((len(pts), 3))
    T = np.stack([P[:, 1] - P[:, 0], P[:, 2] - P[:, 0]], axis=2)  # (t, 2, 2)
    Tinv = np.linalg.inv(T)
    todo = np.arange(len(pts))
    for kk in (k, 4 * k):
        if len(todo) == 0:
            break
        kk = min(kk, m.n_triangles)
        _, cand = tree.query(pts[todo], k=kk)
        cand = cand.reshape(len(todo), kk)
        for j in range(kk):
            t = cand[:, j]
            lam = np.einsum("nij,nj->ni", Tinv[t], pts[todo] - P[t, 0])
            b = np.column_stack([1.0 - lam.sum(axis=1), lam])
            hit = np.all(b >= -1e-12, axis=1) & (tri[todo] < 0)
            tri[todo[hit]] = t[hit]
            bary[todo[hit]] = b[hit]
        todo = todo[tri[todo] < 0]
    return tri, bary


def extend_by_zero(m: Mesh, u, pts, location=None) -> np.ndarray:
    """P1 values of ``u`` at ``pts`` inside the mesh and zero outside."""
    u = np.asarray(u, dtype=float).reshape(m.n_nodes, 2)
    tri, bary = locate_points(m, pts) if location is None else location
    out = np.zeros((len(tri), 2))
    inside = tri >= 0
    out[inside] = np.einsum("nk,nkc->nc", bary[inside], u[m.triangles[tri[inside]]])
    return out


def interpolate_to(src: Mesh, u, dst: Mesh) -> np.ndarray:
    """Nodal interpolation of the P1 field ``u`` on ``src`` onto the nodes of ``dst``.

    Nodes of ``dst`` that coincide with nodes of ``src`` take those values
    exactly; nodes outside ``src`` take the value at the nearest ``src`` node.
    """
    u = np.asarray(u, dtype=float).reshape(src.n_nodes, 2)
    dist, near = cKDTree(src.nodes).query(dst.nodes)
    out = u[near].copy()
    rest = np.flatnonzero(dist > 0)
    if len(rest):
        tri, bary = locate_points(src, dst.nodes[rest])
        inside = tri >= 0
        out[rest[inside]] = np.einsum("nk,nkc->nc", bary[inside], u[src.triangles[tri[inside]]])
    return out


@dataclass(frozen=True, eq=False)
class DomainSequenceStudy:
    """Sequence of Robin problems ``forms`` approaching ``limit``.

    ``labels`` name the members (``n`` in the report); ``grid_h`` is the
    spacing of the background grid (default: half the smallest mesh edge).
    ``note`` is copied into the report (e.g. the proxy level of a fractal
    limit).
    """

    container: Polygon
    forms: Sequence[RobinForm]
    limit: RobinForm
    f: object
    labels: Sequence = ()
    grid_h: float | None = None
    note: str = ""

    def __post_init__(self):
        if len(self.forms) == 0:
            raise DomainError("domain sequence is empty")
        if self.labels and len(self.labels) != len(self.forms):
            raise DomainError("one label per sequence member required")

    def background_grid(self):
        h = self.grid_h
        if h is None:
            h = 0.5 * min(float(np.linalg.norm(np.diff(fm.mesh.nodes[fm.mesh.edges()], axis=1),
                                               axis=2).min()) for fm in [*self.forms, self.limit])
        x0, y0, x1, y1 = self.container.bbox
        nx, ny = max(1, math.ceil((x1 - x0) / h)), max(1, math.ceil((y1 - y0) / h))
        xs = x0 + (np.arange(nx) + 0.5) * (x1 - x0) / nx
        ys = y0 + (np.arange(ny) + 0.5) * (y1 - y0) / ny
        X, Y = np.meshgrid(xs, ys)
        return np.column_stack([X.ravel(), Y.ravel()]), (x1 - x0) * (y1 - y0) / (nx * ny)


@dataclass(frozen=True)
class MoscoRow:
    n: object
    e_n: float
    a_n_rec: float
    a_n_sol: float
    hausdorff: float
    char_fn: float


@dataclass(frozen=True)
class MoscoReport:
    rows: tuple[MoscoRow, ...]
    a_limit: float
    tol: float
    decreasing: bool
    limsup_ok: bool
    liminf_ok: bool
    passed: bool
    note: str = ""
    label: str = "M-convergence indicator (canonical sequences only; not a proof)"

    @property
    def e(self) -> np.ndarray:
        return np.array([r.e_n for r in self.rows])

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write("n,e_n,a_n_rec,a_n_sol\n")
        for r in self.rows:
            buf.write(f"{r.n},{r.e_n:.17g},{r.a_n_rec:.17g},{r.a_n_sol:.17g}\n")
        return buf.getvalue()


def _check_contained(study: DomainSequenceStudy):
    for fm in [*study.forms, study.limit]:
        if not np.all(study.container.contains(fm.mesh.nodes, boundary=True, tol=1e-9)):
            raise DomainError("a mesh of the study is not contained in the container")


def mconvergence_indicators(study: DomainSequenceStudy, tol: float = 1e-6) -> MoscoReport:
    """Solve every Robin problem and report the M-convergence indicators.

    ``e_n`` is the background-grid L2 distance of the zero extensions of
    ``u_n`` and ``u``; ``a_n_rec`` is ``a_n`` of the recovery interpolant of
    ``u``; ``a_n_sol`` is ``a_n(u_n, u_n)``.  The report passes when ``e_n``
    is nonincreasing and ends below ``tol``, the last recovery energy is at
    most ``a(u, u) + tol`` and the last solution energy at least
    ``a(u, u) - tol``.
    """
    _check_contained(study)
    grid, cell = study.background_grid()
    lim = study.limit
    u = solve_robin(lim, study.f)
    a_lim = robin_form_apply(lim, u)
    loc_lim = locate_points(lim.mesh, grid)
    U = extend_by_zero(lim.mesh, u, grid, loc_lim)
    in_lim = loc_lim[0] >= 0
    bnd_lim = lim.mesh.nodes[lim.mesh.boundary_nodes()]
    labels = list(study.labels) or list(range(1, len(study.forms) + 1))
    rows = []
    for n, fm in zip(labels, study.forms):
        un = solve_robin(fm, study.f)
        loc = locate_points(fm.mesh, grid)
        diff = extend_by_zero(fm.mesh, un, grid, loc) - U
        e_n = math.sqrt(cell * float(np.sum(diff * diff)))
        rec = interpolate_to(lim.mesh, u, fm.mesh)
        hd = hausdorff_distance(fm.mesh.nodes[fm.mesh.boundary_nodes()], bnd_lim)
        cf = cell * float(np.count_nonzero((loc[0] >= 0) != in_lim))
        rows.append(MoscoRow(n, e_n, robin_form_apply(fm, rec), robin_form_apply(fm, un), hd, cf))
    e = np.array([r.e_n for r in rows])
    decreasing = bool(np.all(np.diff(e) <= 0)) and e[-1] <= tol
    limsup_ok = rows[-1].a_n_rec <= a_lim + tol
    liminf_ok = rows[-1].a_n_sol >= a_lim - tol
    return MoscoReport(tuple(rows), a_lim, tol, decreasing, limsup_ok, liminf_ok,
                       decreasing and limsup_ok and liminf_ok, study.note)


def _trig_poly_1d(k: int) -> Callable:
    fns = [lambda s: np.ones_like(s), lambda s: s, lambda s: s * s, lambda s: s ** 3,
           lambda s: np.cos(math.pi * s), lambda s: np.sin(math.pi * s),
           lambda s: np.cos(2 * math.pi * s), lambda s: np.sin(2 * math.pi * s)]
    return fns[k]


def default_testbank(bbox=(0.0, 0.0, 1.0, 1.0)) -> list[Callable]:
    """32 Lipschitz test functions ``a_i(s) b_j(t)`` on the box (includes 1).

    ``s, t`` are the box coordinates rescaled to ``[0, 1]``; ``a_i`` runs
    over 8 polynomial/trigonometric functions and ``b_j`` over the first 4.
    """
    x0, y0, x1, y1 = bbox
    bank = []
    for i in range(8):
        for j in (0, 1, 4, 5):
            def phi(p, i=i, j=j):
                p = np.asarray(p, dtype=float)
                s = (p[:, 0] - x0) / (x1 - x0)
                t = (p[:, 1] - y0) / (y1 - y0)
                return _trig_poly_1d(i)(s) * _trig_poly_1d(j)(t)
            bank.append(phi)
    return bank


def weak_star_distance(mu1: DiscreteBoundaryMeasure, mu2: DiscreteBoundaryMeasure,
                       testbank: Sequence[Callable] | None = None, bbox=(0.0, 0.0, 1.0, 1.0)) -> float:
    """``max |int phi dmu1 - int phi dmu2|`` over the test bank."""
    bank = default_testbank(bbox) if testbank is None else list(testbank)
    if not bank:
        raise DomainError("test bank is empty")
    return max(abs(float(mu1.integrate(phi(mu1.points))) - float(mu2.integrate(phi(mu2.points))))
               for phi in bank)


# --- Koch study ---------------------------------------------------------------

KOCH_MESH_LEVEL = 5


def koch_domain(level: int, depth_rows: int = 31, mesh_level: int = KOCH_MESH_LEVEL):
    """Trapezoid below the unit base with its top replaced by a Koch prefractal.

    The sides make 60 degree angles with the base so the domain is a union of
    equilateral lattice triangles of side ``3**-mesh_level``.  Returns
    ``(mesh, polygon)``; the Koch curve is tagged ``Up``, the rest ``Dir``.
    """
    if level > mesh_level:
        raise DomainError("prefractal level finer than the lattice")
    h = 3.0 ** -mesh_level
    H = depth_rows * h * math.sqrt(3.0) / 2.0
    a = H / math.sqrt(3.0)
    curve, _ = koch_prefractal(level=level)
    verts = np.vstack([[[1.0 - a, -H], [a, -H]], curve])
    poly = Polygon(verts)
    bbox = (0.0, -H, 1.0, float(curve[:, 1].max()))

    def tagger(mid, normals):
        return np.where(mid[:, 1] > -1e-9, "Up", "Dir")

    m = lattice_mesh_in_region(lambda c: points_in_polygon(c, poly.vertices), bbox, h, tagger)
    return m, poly


def koch_robin_form(level: int, alpha: float = 1.0, mesh_level: int = KOCH_MESH_LEVEL) -> RobinForm:
    """Robin form on the Koch domain with the self-similar measure (total mass 1)."""
    m, _ = koch_domain(level, mesh_level=mesh_level)
    mu = boundary_measure(m, "Up").scaled(0.75 ** level)
    return RobinForm(m, alpha, mu, "Dir")


def koch_study(levels=(1, 2, 3, 4), proxy_level: int = 5, alpha: float = 1.0,
               f=(0.0, -1.0)) -> DomainSequenceStudy:
    forms = [koch_robin_form(n, alpha, proxy_level) for n in levels]
    limit = koch_robin_form(proxy_level, alpha, proxy_level)
    _, poly = koch_domain(proxy_level, mesh_level=proxy_level)
    x0, y0, _, y1 = poly.bbox
    container = Polygon.box(x0, y0, 1.0, y1)
    return DomainSequenceStudy(container, forms, limit, np.asarray(f, dtype=float), tuple(levels),
                               note=f"limit is the level-{proxy_level} prefractal proxy")


def alpha_sequence_study(m: Mesh, alpha: float, ns=tuple(10 ** k for k in range(9)),
                         f=(0.0, -1.0), dirichlet_tag=None, grid_h=None) -> DomainSequenceStudy:
    """Fixed domain with ``alpha_n = alpha + 1/n`` on the whole boundary."""
    mu = boundary_measure(m, "all")
    forms = [RobinForm(m, alpha + 1.0 / n, mu, dirichlet_tag) for n in ns]
    x0, y0 = m.nodes.min(axis=0)
    x1, y1 = m.nodes.max(axis=0)
    return DomainSequenceStudy(Polygon.box(x0, y0, x1, y1), forms,
                               RobinForm(m, alpha, mu, dirichlet_tag),
                               np.asarray(f, dtype=float), tuple(ns), grid_h)
