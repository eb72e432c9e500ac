"""P1 finite elements for the mixed Dirichlet/Neumann elasticity system.

Vector fields are stored as ``(n_nodes, 2)`` arrays; the global degree of
freedom of component ``c`` at node ``i`` is ``2 * i + c``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import DomainError, NumericError, SolverError, WellPosednessError
from .mesh import DiscreteBoundaryMeasure, Mesh, resolve_tags


def contract(A, B):
    """Full contraction ``A : B = sum_ij a_ij b_ij`` (batched over leading axes)."""
    return np.einsum("...ij,...ij->...", np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def p1_gradients(m: Mesh):
    """Triangle areas ``(t,)`` and barycentric gradients ``(t, 3, 2)``."""
    p = m.nodes[m.triangles]
    x, y = p[..., 0], p[..., 1]
    area2 = (x[:, 1] - x[:, 0]) * (y[:, 2] - y[:, 0]) - (x[:, 2] - x[:, 0]) * (y[:, 1] - y[:, 0])
    g = np.empty((len(p), 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        g[:, i, 0] = (y[:, j] - y[:, k]) / area2
        g[:, i, 1] = (x[:, k] - x[:, j]) / area2
    return 0.5 * area2, g


def displacement_gradient(m: Mesh, u) -> np.ndarray:
    """Per-triangle ``grad u`` with ``G[t, c, d] = d u_c / d x_d``."""
    u = np.asarray(u, dtype=float).reshape(m.n_nodes, 2)
    _, g = p1_gradients(m)
    return np.einsum("tkc,tkd->tcd", u[m.triangles], g)


def strain(m: Mesh, u) -> np.ndarray:
    """Per-triangle symmetric gradient ``e(u) = (grad u + grad u^T) / 2``."""
    G = displacement_gradient(m, u)
    return 0.5 * (G + np.swapaxes(G, 1, 2))


def _field_at(field, pts: np.ndarray) -> np.ndarray:
    if callable(field):
        return np.broadcast_to(np.asarray(field(pts), dtype=float), (len(pts),))
    return np.full(len(pts), float(field))


@dataclass(frozen=True)
class MaterialModel:
    """Stress law ``sigma(v)`` in scalar form ``a e(v)`` or Lame form.

    Coefficient fields are constants or callables of an ``(k, 2)`` point array;
    they are sampled at triangle centroids, so the element-wise material is
    constant.  ``alpha`` and ``beta`` are the recorded ellipticity constants
    (``M xi . xi >= alpha |xi|^2`` and ``M^-1 xi . xi >= beta |xi|^2`` on
    symmetric matrices); when omitted they are computed on first use.
    """

    kind: str = "scalar"
    a: float | Callable = 1.0
    lam: float | Callable = 0.0
    mu: float | Callable = 0.5
    alpha: float | None = None
    beta: float | None = None

    def __post_init__(self):
        if self.kind not in ("scalar", "lame"):
            raise DomainError(f"unknown material kind {self.kind!r}")

    @classmethod
    def scalar(cls, a=1.0, alpha=None, beta=None) -> "MaterialModel":
        return cls("scalar", a=a, alpha=alpha, beta=beta)

    @classmethod
    def lame(cls, lam, mu, alpha=None, beta=None) -> "MaterialModel":
        return cls("lame", lam=lam, mu=mu, alpha=alpha, beta=beta)

    def eigenvalues(self, m: Mesh) -> np.ndarray:
        """Per-element eigenvalues ``(t, 2)`` (min, max) of the map e -> sigma."""
        cent = m.nodes[m.triangles].mean(axis=1)
        if self.kind == "scalar":
            a = _field_at(self.a, cent)
            return np.column_stack([a, a])
        lam = _field_at(self.lam, cent)
        mu = _field_at(self.mu, cent)
        if np.any(mu <= 0) or np.any(lam <= -mu):
            raise DomainError("Lame coefficients need mu > 0 and lam > -2 mu / N")
        ev = np.column_stack([2 * mu, 2 * mu + 2 * lam])
        return np.column_stack([ev.min(axis=1), ev.max(axis=1)])

    def ellipticity(self, m: Mesh) -> tuple[float, float]:
        """Check the recorded constants against the fields; return ``(alpha, beta)``."""
        ev = self.eigenvalues(m)
        lo, hi = float(ev[:, 0].min()), float(ev[:, 1].max())
        if not lo > 0:
            raise DomainError("material is not elliptic (nonpositive coefficient)")
        alpha = lo if self.alpha is None else self.alpha
        beta = 1.0 / hi if self.beta is None else self.beta
        if alpha <= 0 or beta <= 0 or alpha > lo * (1 + 1e-12) or beta > (1.0 / hi) * (1 + 1e-12):
            raise DomainError(f"recorded ellipticity ({alpha}, {beta}) inconsistent with the fields")
        return alpha, beta

    def voigt(self, m: Mesh) -> np.ndarray:
        """Element matrices ``(t, 3, 3)`` acting on (e_xx, e_yy, 2 e_xy)."""
        cent = m.nodes[m.triangles].mean(axis=1)
        C = np.zeros((len(cent), 3, 3))
        if self.kind == "scalar":
            a = _field_at(self.a, cent)
            C[:, 0, 0] = a
            C[:, 1, 1] = a
            C[:, 2, 2] = 0.5 * a
        else:
            lam = _field_at(self.lam, cent)
            mu = _field_at(self.mu, cent)
            C[:, 0, 0] = C[:, 1, 1] = lam + 2 * mu
            C[:, 0, 1] = C[:, 1, 0] = lam
            C[:, 2, 2] = mu
        return C

    def stress(self, m: Mesh, u) -> np.ndarray:
        e = strain(m, u)
        cent = m.nodes[m.triangles].mean(axis=1)
        if self.kind == "scalar":
            return _field_at(self.a, cent)[:, None, None] * e
        lam = _field_at(self.lam, cent)
        mu = _field_at(self.mu, cent)
        tr = e[:, 0, 0] + e[:, 1, 1]
        return lam[:, None, None] * tr[:, None, None] * np.eye(2) + 2 * mu[:, None, None] * e


IDENTITY_MATERIAL = MaterialModel.scalar(1.0)


def _element_dofs(m: Mesh) -> np.ndarray:
    t = m.triangles
    return np.stack([2 * t, 2 * t + 1], axis=2).reshape(-1, 6)


def _assemble_elements(m: Mesh, Ke: np.ndarray) -> sp.csr_matrix:
    Ke = 0.5 * (Ke + np.swapaxes(Ke, 1, 2))
    dofs = _element_dofs(m) if Ke.shape[1] == 6 else m.triangles
    k = Ke.shape[1]
    rows = np.repeat(dofs, k, axis=1).ravel()
    cols = np.tile(dofs, (1, k)).ravel()
    n = k // 3 * m.n_nodes
    K = sp.coo_matrix((Ke.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return ((K + K.T) * 0.5).tocsr()


def stiffness_matrix(m: Mesh, mat: MaterialModel = IDENTITY_MATERIAL) -> sp.csr_matrix:
    """Global matrix of ``int sigma(phi_i) : e(phi_j)`` (no boundary conditions)."""
    area, g = p1_gradients(m)
    B = np.zeros((m.n_triangles, 3, 6))
    B[:, 0, 0::2] = g[:, :, 0]
    B[:, 1, 1::2] = g[:, :, 1]
    B[:, 2, 0::2] = g[:, :, 1]
    B[:, 2, 1::2] = g[:, :, 0]
    C = mat.voigt(m)
    Ke = area[:, None, None] * np.einsum("tki,tkl,tlj->tij", B, C, B)
    return _assemble_elements(m, Ke)


def strain_form_matrix(m: Mesh) -> sp.csr_matrix:
    """Matrix of ``int e(u) : e(v)``."""
    return stiffness_matrix(m, IDENTITY_MATERIAL)


def scalar_laplacian(m: Mesh) -> sp.csr_matrix:
    area, g = p1_gradients(m)
    return _assemble_elements(m, area[:, None, None] * np.einsum("tid,tjd->tij", g, g))


def scalar_mass(m: Mesh) -> sp.csr_matrix:
    area = m.triangle_areas()
    Me = area[:, None, None] * (np.ones((3, 3)) + np.eye(3)) / 12.0
    return _assemble_elements(m, Me)


def _vectorize(S: sp.csr_matrix) -> sp.csr_matrix:
    return sp.kron(S, sp.identity(2), format="csr")


def gradient_form_matrix(m: Mesh) -> sp.csr_matrix:
    """Matrix of ``int grad u : grad v`` for vector fields."""
    return _vectorize(scalar_laplacian(m))


def mass_matrix(m: Mesh) -> sp.csr_matrix:
    """Consistent P1 matrix of ``int u . v`` for vector fields."""
    return _vectorize(scalar_mass(m))


@dataclass(frozen=True)
class LoadSpec:
    """Volume force ``f`` and Neumann traction ``g``.

    ``body_force`` is a constant 2-vector, a nodal ``(n_nodes, 2)`` array or a
    callable ``f(points) -> (k, 2)``.  ``traction`` is a constant 2-vector, an
    ``(k, 2)`` array aligned with ``neumann.points`` or a callable of those
    points.
    """

    body_force: object = None
    traction: object = None
    neumann: DiscreteBoundaryMeasure | None = None

    def __post_init__(self):
        if self.traction is not None and self.neumann is None:
            raise DomainError("traction given without a Neumann measure")

    def traction_values(self) -> np.ndarray:
        if self.neumann is None:
            return np.zeros((0, 2))
        k = len(self.neumann)
        if self.traction is None:
            return np.zeros((k, 2))
        if callable(self.traction):
            g = np.asarray(self.traction(self.neumann.points), dtype=float)
        else:
            g = np.asarray(self.traction, dtype=float)
        g = np.broadcast_to(g, (k, 2)) if g.shape == (2,) else g
        if g.shape != (k, 2):
            raise DomainError("traction must be defined exactly on the Neumann support")
        return g

    def body_force_load(self, m: Mesh) -> np.ndarray:
        """``int f . phi_i`` as an ``(n_nodes, 2)`` array."""
        out = np.zeros((m.n_nodes, 2))
        f = self.body_force
        if f is None:
            return out
        if callable(f):
            # edge-midpoint rule, exact for quadratic integrands
            p = m.nodes[m.triangles]
            area = m.triangle_areas()
            for q, (i, j) in enumerate(((0, 1), (1, 2), (2, 0))):
                fq = np.asarray(f(0.5 * (p[:, i] + p[:, j])), dtype=float).reshape(-1, 2)
                contrib = (area / 6.0)[:, None] * fq
                np.add.at(out, m.triangles[:, i], contrib)
                np.add.at(out, m.triangles[:, j], contrib)
            return out
        f = np.asarray(f, dtype=float)
        if f.shape == (2,):
            area = m.triangle_areas()
            for k in range(3):
                np.add.at(out, m.triangles[:, k], (area / 3.0)[:, None] * f)
            return out
        if f.shape == (m.n_nodes, 2):
            return (mass_matrix(m) @ f.ravel()).reshape(-1, 2)
        raise DomainError("unsupported body force specification")

    def l2_norm_f(self, m: Mesh) -> float:
        f = self.body_force
        if f is None:
            return 0.0
        area = m.triangle_areas()
        if callable(f):
            p = m.nodes[m.triangles]
            tot = 0.0
            for i, j in ((0, 1), (1, 2), (2, 0)):
                fq = np.asarray(f(0.5 * (p[:, i] + p[:, j])), dtype=float).reshape(-1, 2)
                tot += float(np.sum(area / 3.0 * np.sum(fq * fq, axis=1)))
            return math.sqrt(tot)
        f = np.asarray(f, dtype=float)
        if f.shape == (2,):
            return float(np.linalg.norm(f)) * math.sqrt(float(area.sum()))
        v = f.ravel()
        return math.sqrt(float(v @ (mass_matrix(m) @ v)))

    def norm_g(self) -> float:
        if self.neumann is None:
            return 0.0
        g = self.traction_values()
        return math.sqrt(float(np.sum(self.neumann.weights * np.sum(g * g, axis=1))))


@dataclass(frozen=True, eq=False)
class AssembledSystem:
    """Stiffness and load with Dirichlet degrees of freedom eliminated."""

    mesh: Mesh
    stiffness_full: sp.csr_matrix
    load_full: np.ndarray
    dirichlet_dofs: np.ndarray
    free_dofs: np.ndarray
    stiffness: sp.csr_matrix
    load: np.ndarray
    lifting: np.ndarray

    @property
    def n_dofs(self) -> int:
        return len(self.load_full)

    def expand(self, x_free: np.ndarray) -> np.ndarray:
        """Full nodal field from free values plus the Dirichlet lifting."""
        u = self.lifting.copy()
        u[self.free_dofs] = x_free
        return u.reshape(-1, 2)


def dirichlet_dofs(m: Mesh, tag) -> np.ndarray:
    nodes = m.tagged_nodes(tag)
    return np.sort(np.concatenate([2 * nodes, 2 * nodes + 1]))


def assemble(m: Mesh, mat: MaterialModel, load: LoadSpec, dirichlet_tag="Dir",
             dirichlet_values=None) -> AssembledSystem:
    """Assemble the weak form and eliminate the clamped degrees of freedom.

    ``dirichlet_values`` (callable of points or ``(n_nodes, 2)`` array) gives
    inhomogeneous boundary values through a lifting; the default is zero.
    """
    tags = resolve_tags(dirichlet_tag)
    clamped_len = float(m.edge_lengths(tags).sum()) if m.tag_mask(tags).any() else 0.0
    if not clamped_len > 0:
        raise WellPosednessError("Dirichlet part has zero measure: rigid motions are in the kernel")
    mat.ellipticity(m)
    K = stiffness_matrix(m, mat)
    F = load.body_force_load(m)
    if load.neumann is not None and len(load.neumann):
        g = load.traction_values()
        np.add.at(F, load.neumann.nodes, load.neumann.weights[:, None] * g)
    F = F.ravel()
    ddofs = dirichlet_dofs(m, tags)
    free = np.setdiff1d(np.arange(2 * m.n_nodes), ddofs)
    lift = np.zeros(2 * m.n_nodes)
    if dirichlet_values is not None:
        if callable(dirichlet_values):
            vals = np.asarray(dirichlet_values(m.nodes), dtype=float).reshape(-1, 2).ravel()
        else:
            vals = np.asarray(dirichlet_values, dtype=float).ravel()
        lift[ddofs] = vals[ddofs]
    Kff = K[free][:, free].tocsr()
    b = F[free]
    if dirichlet_values is not None:
        b = b - K[free][:, ddofs] @ lift[ddofs]
    return AssembledSystem(m, K, F, ddofs, free, Kff, b, lift)


def conjugate_gradient(A, b, tol: float = 1e-10, maxiter: int | None = None, x0=None):
    """Jacobi-preconditioned CG; returns ``(x, iterations, relative_residual)``."""
    n = len(b)
    maxiter = 10 * n if maxiter is None else maxiter
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        res = float(np.linalg.norm(r)) / bnorm
        if res <= tol:
            return x, it, res
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(f"CG did not converge in {maxiter} iterations (residual {res:.3e})",
                      residual=res, iterations=maxiter)


def solve(system: AssembledSystem, tol: float = 1e-10, method: str = "auto") -> np.ndarray:
    """Solve the reduced system; returns the nodal displacement ``(n_nodes, 2)``.

    ``method`` is ``"direct"`` (sparse LU), ``"cg"`` or ``"auto"`` (direct up
    to 200k unknowns).
    """
    K, b = system.stiffness, system.load
    if method == "auto":
        method = "direct" if len(b) <= 200_000 else "cg"
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return system.expand(np.zeros(len(b)))
    if method == "direct":
        x = splu(K.tocsc()).solve(b)
        res = float(np.linalg.norm(K @ x - b)) / bnorm
        if not res <= tol:
            raise SolverError(f"direct solve residual {res:.3e} exceeds {tol:.1e}", residual=res)
    elif method == "cg":
        x, _, _ = conjugate_gradient(K, b, tol)
    else:
        raise DomainError(f"unknown solver method {method!r}")
    return system.expand(x)


@dataclass(frozen=True)
class AprioriReport:
    norm_u: float
    norm_f: float
    norm_g: float
    ratio: float
    bound: float
    passed: bool


def sobolev_norm(m: Mesh, u) -> float:
    """Discrete ``W^{1,2}`` norm of a nodal vector field."""
    v = np.asarray(u, dtype=float).ravel()
    W = mass_matrix(m) + gradient_form_matrix(m)
    return math.sqrt(max(float(v @ (W @ v)), 0.0))


def apriori_check(u, system: AssembledSystem, load: LoadSpec, C: float) -> AprioriReport:
    """Ratio ``|u|_W / (|f|_L2 + |g|)`` against the bound ``C``.

    The traction norm is the lumped boundary ``L^2`` norm.
    """
    m = system.mesh
    nu = sobolev_norm(m, u)
    nf = load.l2_norm_f(m)
    ng = load.norm_g()
    data = nf + ng
    ratio = 0.0 if data == 0 and nu == 0 else (math.inf if data == 0 else nu / data)
    return AprioriReport(nu, nf, ng, ratio, float(C), ratio <= C)


def smallest_generalized_eigenvalue(A, B, tol: float = 1e-8, maxiter: int = 500,
                                    block: int = 6, seed: int = 0):
    """Smallest ``lam`` of ``A x = lam B x`` by block inverse iteration.

    Each sweep applies ``A^{-1} B`` to the block and performs a Rayleigh-Ritz
    projection; iteration stops when the leading Ritz value changes by less
    than ``tol`` relative.  Returns ``(lam, x)``.
    """
    n = A.shape[0]
    k = max(1, min(block, n))
    lu = splu(sp.csc_matrix(A))
    X = np.random.default_rng(seed).standard_normal((n, k))
    prev = None
    for it in range(1, maxiter + 1):
        Y = lu.solve(B @ X)
        Ar = Y.T @ (A @ Y)
        Br = Y.T @ (B @ Y)
        Ar = 0.5 * (Ar + Ar.T)
        Br = 0.5 * (Br + Br.T)
        try:
            w, V = la.eigh(Ar, Br)
        except la.LinAlgError as exc:
            raise NumericError(f"Rayleigh-Ritz step failed: {exc}") from exc
        X = Y @ V
        lam = float(w[0])
        if not math.isfinite(lam):
            raise NumericError("non-finite eigenvalue estimate")
        if prev is not None and abs(lam - prev) <= tol * abs(lam):
            return lam, X[:, 0]
        prev = lam
    raise NumericError(f"inverse iteration stagnated after {maxiter} sweeps")


def _constrained(m: Mesh, dirichlet_tag) -> np.ndarray:
    tags = resolve_tags(dirichlet_tag)
    if not m.tag_mask(tags).any():
        raise WellPosednessError("Dirichlet part is empty")
    return np.setdiff1d(np.arange(2 * m.n_nodes), dirichlet_dofs(m, tags))


def estimate_korn_constant(m: Mesh, dirichlet_tag="Dir", tol: float = 1e-8) -> float:
    """Best ``c_K`` with ``c_K |u|_W <= |e(u)|_L2`` on fields vanishing on the clamped part."""
    free = _constrained(m, dirichlet_tag)
    S = strain_form_matrix(m)[free][:, free]
    W = (mass_matrix(m) + gradient_form_matrix(m))[free][:, free]
    lam, _ = smallest_generalized_eigenvalue(S.tocsc(), W.tocsr(), tol)
    return math.sqrt(max(lam, 0.0))


def estimate_poincare_constant(m: Mesh, dirichlet_tag="Dir", tol: float = 1e-8) -> float:
    """Best ``C_P`` with ``int |u|^2 <= C_P int |grad u|^2`` on constrained fields."""
    free = _constrained(m, dirichlet_tag)
    G = gradient_form_matrix(m)[free][:, free]
    M = mass_matrix(m)[free][:, free]
    lam, _ = smallest_generalized_eigenvalue(G.tocsc(), M.tocsr(), tol)
    if not lam > 0:
        raise NumericError("nonpositive Poincare eigenvalue")
    return 1.0 / lam


def green_residual(m: Mesh, u, w) -> float:
    """``|int u . grad w + int (div u) w - boundary sum of (u . n) w|``.

    Volume terms are exact for P1 data; the boundary term is the lumped
    (trapezoidal) rule on every boundary edge with its outward normal.
    """
    u = np.asarray(u, dtype=float).reshape(m.n_nodes, 2)
    w = np.asarray(w, dtype=float).reshape(m.n_nodes)
    area, g = p1_gradients(m)
    t = m.triangles
    grad_w = np.einsum("tk,tkd->td", w[t], g)
    div_u = np.einsum("tkd,tkd->t", u[t], g)
    vol = float(np.sum(area * np.einsum("td,td->t", u[t].mean(axis=1), grad_w)))
    vol += float(np.sum(area * div_u * w[t].mean(axis=1)))
    e = m.boundary_edges
    d = m.nodes[e[:, 1]] - m.nodes[e[:, 0]]
    nrm = np.column_stack([d[:, 1], -d[:, 0]])  # outward normal times edge length
    flux = 0.5 * (np.einsum("ed,ed->e", u[e[:, 0]], nrm) * w[e[:, 0]]
                  + np.einsum("ed,ed->e", u[e[:, 1]], nrm) * w[e[:, 1]])
    return abs(vol - float(flux.sum()))
