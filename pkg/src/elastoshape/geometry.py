"""Set metrics and sampled certificates of boundary regularity.

Every check here is a sampled approximation.  Sampling densities are explicit
keyword arguments; a passing report is a certificate at that resolution only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components, dijkstra
from scipy.spatial import cKDTree

from .errors import DomainError, GeometryError, SizeError
from .mesh import DiscreteBoundaryMeasure, Mesh

KOCH_DIMENSION = math.log(4.0) / math.log(3.0)


def signed_area(vertices) -> float:
    v = np.asarray(vertices, dtype=float)
    x, y = v[:, 0], v[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def _even_odd(px, py, x1, y1, x2, y2, safe):
    straddle = (y1 > py) != (y2 > py)
    xint = x1 + (py - y1) * (x2 - x1) / safe
    return np.logical_xor.reduce(straddle & (px < xint), axis=1)


def points_in_polygon(points, vertices, chunk: int = 65536) -> np.ndarray:
    """Even-odd test; points exactly on an edge may fall either way.

    Edges are bucketed into horizontal bands so each point is tested only
    against the edges that can straddle its ordinate.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    v = np.asarray(vertices, dtype=float)
    x1, y1 = v[:, 0], v[:, 1]
    x2, y2 = np.roll(x1, -1), np.roll(y1, -1)
    dy = y2 - y1
    safe = np.where(dy == 0, 1.0, dy)
    out = np.zeros(len(pts), dtype=bool)
    ymin, ymax = float(y1.min()), float(y1.max())
    nb = 1 if len(v) <= 32 else int(4 * math.sqrt(len(v)))
    valid = (pts[:, 1] >= ymin) & (pts[:, 1] <= ymax)
    span = ymax - ymin
    band = np.zeros(len(pts), dtype=np.int64)
    if nb > 1:
        band[valid] = np.minimum(((pts[valid, 1] - ymin) / span * nb).astype(np.int64), nb - 1)
    elo, ehi = np.minimum(y1, y2), np.maximum(y1, y2)
    for k in np.unique(band[valid]):
        bot = ymin + span * k / nb
        top = ymin + span * (k + 1) / nb
        e = np.flatnonzero((elo <= top) & (ehi >= bot)) if nb > 1 else np.arange(len(v))
        sel = np.flatnonzero(valid & (band == k))
        for s in range(0, len(sel), chunk):
            idx = sel[s:s + chunk]
            out[idx] = _even_odd(pts[idx, 0:1], pts[idx, 1:2], x1[e], y1[e], x2[e], y2[e], safe[e])
    return out


def point_segment_distance(points, a, b) -> np.ndarray:
    """Distance matrix ``(len(points), len(a))`` to the segments ``a[k] b[k]``."""
    p = np.asarray(points, dtype=float)[:, None, :]
    a = np.asarray(a, dtype=float)[None]
    d = np.asarray(b, dtype=float)[None] - a
    dd = np.einsum("ijk,ijk->ij", d, d)
    dd = np.where(dd == 0, 1.0, dd)
    t = np.clip(np.einsum("ijk,ijk->ij", p - a, d) / dd, 0.0, 1.0)
    return np.linalg.norm(p - a - t[..., None] * d, axis=2)


@dataclass(frozen=True, eq=False)
class Polygon:
    """Closed polygon stored counterclockwise, without a repeated last vertex.

    Clockwise input is reversed.  Simplicity is not enforced on construction
    (pinched regions such as two tangent disks are legitimate cone-check
    inputs); call :meth:`is_simple` when it matters.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float).reshape(-1, 2)
        if len(v) > 1 and np.array_equal(v[0], v[-1]):
            v = v[:-1]
        if len(v) < 3:
            raise GeometryError("polygon needs at least three vertices")
        if not np.all(np.isfinite(v)):
            raise GeometryError("polygon vertices must be finite")
        a = signed_area(v)
        scale = max(float(np.ptp(v[:, 0])), float(np.ptp(v[:, 1])), 1e-300)
        if abs(a) <= 1e-14 * scale * scale:
            raise GeometryError("degenerate polygon (zero area)")
        if a < 0:
            v = v[::-1]
        v = np.ascontiguousarray(v)
        v.setflags(write=False)
        object.__setattr__(self, "vertices", v)

    @classmethod
    def box(cls, x0, y0, x1, y1) -> "Polygon":
        return cls([(x0, y0), (x1, y0), (x1, y1), (x0, y1)])

    @property
    def area(self) -> float:
        return signed_area(self.vertices)

    @property
    def perimeter(self) -> float:
        return float(self.edge_lengths().sum())

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        return self.vertices, np.roll(self.vertices, -1, axis=0)

    def edge_lengths(self) -> np.ndarray:
        a, b = self.edges()
        return np.linalg.norm(b - a, axis=1)

    def contains(self, points, boundary: bool = False, tol: float = 1e-12) -> np.ndarray:
        """Interior test; with ``boundary=True`` points within ``tol`` of an edge count."""
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        inside = points_in_polygon(pts, self.vertices)
        if boundary:
            a, b = self.edges()
            near = point_segment_distance(pts, a, b).min(axis=1) <= tol * max(1.0, self.perimeter)
            inside |= near
        return inside

    def boundary_distance(self, points) -> np.ndarray:
        a, b = self.edges()
        return point_segment_distance(np.asarray(points, dtype=float).reshape(-1, 2), a, b).min(axis=1)

    def is_simple(self) -> bool:
        a, b = self.edges()
        n = len(a)
        for i in range(n):
            for j in range(i + 1, n):
                if j == i + 1 or (i == 0 and j == n - 1):
                    continue
                if _segments_intersect(a[i], b[i], a[j], b[j]):
                    return False
        return True

    def boundary_samples(self, step: float):
        """Points along the boundary at spacing ``<= step``; vertices included.

        Returns ``(points, edge_index, is_vertex)``.
        """
        a, b = self.edges()
        pts, eidx, isv = [], [], []
        for k, (p, q) in enumerate(zip(a, b)):
            n = max(1, math.ceil(float(np.linalg.norm(q - p)) / step - 1e-9))
            t = np.arange(n) / n
            pts.append(p + t[:, None] * (q - p))
            eidx.append(np.full(n, k))
            flag = np.zeros(n, dtype=bool)
            flag[0] = True
            isv.append(flag)
        return np.concatenate(pts), np.concatenate(eidx), np.concatenate(isv)


def _segments_intersect(p1, p2, q1, q2) -> bool:
    def orient(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    d1, d2 = orient(q1, q2, p1), orient(q1, q2, p2)
    d3, d4 = orient(p1, p2, q1), orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 * d2 < 0 and d3 * d4 < 0:
        return True

    def on_seg(a, b, c):
        return (min(a[0], b[0]) <= c[0] <= max(a[0], b[0])
                and min(a[1], b[1]) <= c[1] <= max(a[1], b[1]))

    for a, b, c, d in ((q1, q2, p1, d1), (q1, q2, p2, d2), (p1, p2, q1, d3), (p1, p2, q2, d4)):
        if d == 0 and on_seg(a, b, c):
            return True
    return False


def _as_cloud(a) -> np.ndarray:
    pts = np.asarray(a, dtype=float).reshape(-1, 2)
    if len(pts) == 0:
        raise DomainError("point cloud must be nonempty")
    return pts


def hausdorff_distance(a, b) -> float:
    """Hausdorff distance between two finite point sets."""
    pa, pb = _as_cloud(a), _as_cloud(b)
    dab = cKDTree(pb).query(pa)[0].max()
    dba = cKDTree(pa).query(pb)[0].max()
    return float(max(dab, dba))


def sample_polyline(points, step: float, closed: bool = False) -> np.ndarray:
    """Dense samples along a polyline (vertices included)."""
    p = np.asarray(points, dtype=float)
    if closed:
        p = np.vstack([p, p[:1]])
    out = []
    for s, e in zip(p[:-1], p[1:]):
        n = max(1, math.ceil(float(np.linalg.norm(e - s)) / step))
        t = np.arange(n) / n
        out.append(s + t[:, None] * (e - s))
    out.append(p[-1:])
    return np.concatenate(out)


def char_fn_distance(p: Polygon, q: Polygon, container: Polygon, resolution: int = 800) -> float:
    """Area of the symmetric difference, by midpoint sampling on a grid over ``container``.

    ``resolution`` is the number of grid cells along the longer side of the
    container's bounding box.
    """
    for poly, name in ((p, "p"), (q, "q")):
        if not np.all(container.contains(poly.vertices, boundary=True, tol=1e-9)):
            raise DomainError(f"polygon {name} is not contained in the container")
    x0, y0, x1, y1 = container.bbox
    h = max(x1 - x0, y1 - y0) / resolution
    nx = max(1, math.ceil((x1 - x0) / h))
    ny = max(1, math.ceil((y1 - y0) / h))
    hx, hy = (x1 - x0) / nx, (y1 - y0) / ny
    xs = x0 + hx * (np.arange(nx) + 0.5)
    ys = y0 + hy * (np.arange(ny) + 0.5)
    X, Y = np.meshgrid(xs, ys)
    pts = np.column_stack([X.ravel(), Y.ravel()])
    in_c = container.contains(pts)
    diff = (p.contains(pts) != q.contains(pts)) & in_c
    return float(diff.sum() * hx * hy)


@dataclass(frozen=True)
class ConeCheckReport:
    epsilon: float
    passed: bool
    witness: tuple | None = None
    sampling: dict = field(default_factory=dict)
    note: str = "sampled check: a pass certifies the property at the stated resolution only"

    def __post_init__(self):
        if self.passed != (self.witness is None):
            raise ValueError("witness must be present exactly when the check fails")


def _cone_pattern(epsilon: float, n_samples: int) -> np.ndarray:
    """Sample points of C(0, e_x, eps) in local coordinates, shape ``(k, 2)``."""
    half = math.acos(max(-1.0, min(1.0, math.cos(epsilon))))
    n_r = max(1, round(math.sqrt(n_samples / 2.0)))
    n_a = max(1, math.ceil(n_samples / n_r))
    radii = epsilon * (np.arange(1, n_r + 1) / n_r) * (1.0 - 1e-9)
    angles = np.linspace(-half, half, n_a) if n_a > 1 else np.zeros(1)
    R, A = np.meshgrid(radii, angles)
    return np.column_stack([(R * np.cos(A)).ravel(), (R * np.sin(A)).ravel()])


def check_eps_cone(p: Polygon, epsilon: float, boundary_step: float | None = None,
                   n_directions: int = 64, n_cone_samples: int = 200) -> ConeCheckReport:
    """Sampled epsilon-cone certificate.

    For every boundary sample ``x`` a direction ``xi`` is sought on a grid of
    ``n_directions`` angles such that for every boundary sample ``y`` with
    ``|y - x| < epsilon`` all sampled points of ``C(y, xi, epsilon)`` lie
    inside ``p``.  Directions are tried nearest-first to the inward normal at
    ``x``.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    if not isinstance(p, Polygon):
        p = Polygon(p)
    step = epsilon / 20.0 if boundary_step is None else float(boundary_step)
    sampling = {"boundary_step": step, "n_directions": n_directions,
                "n_cone_samples": n_cone_samples}

    pts, eidx, isv = p.boundary_samples(step)
    a, b = p.edges()
    d = b - a
    inward = np.column_stack([-d[:, 1], d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
    normal = inward[eidx].copy()
    prev = np.roll(np.arange(len(a)), 1)[eidx]
    normal[isv] += inward[prev[isv]]
    nn = np.linalg.norm(normal, axis=1)
    normal[nn > 0] /= nn[nn > 0, None]
    normal[nn == 0] = inward[eidx[nn == 0]]

    theta = 2.0 * math.pi * np.arange(n_directions) / n_directions
    dirs = np.column_stack([np.cos(theta), np.sin(theta)])
    ang = np.arctan2(normal[:, 1], normal[:, 0])
    gap = np.abs((theta[None, :] - ang[:, None] + math.pi) % (2 * math.pi) - math.pi)
    order = np.argsort(gap, axis=1, kind="stable")

    pattern = _cone_pattern(epsilon, n_cone_samples)
    rot = np.stack([pattern @ np.array([[c, s], [-s, c]]) for c, s in dirs])

    tree = cKDTree(pts)
    nbrs = [np.array([j for j in tree.query_ball_point(x, epsilon)
                      if np.linalg.norm(pts[j] - x) < epsilon], dtype=np.int64) for x in pts]
    ok = np.full((len(pts), n_directions), -1, dtype=np.int8)

    def evaluate(ys, ds):
        z = pts[ys][:, None, :] + rot[ds]
        inside = points_in_polygon(z.reshape(-1, 2), p.vertices).reshape(len(ys), -1)
        ok[ys, ds] = inside.all(axis=1)

    pending = np.arange(len(pts))
    for rank in range(n_directions):
        if len(pending) == 0:
            break
        dsel = order[pending, rank]
        ys = np.concatenate([nbrs[x] for x in pending])
        ds = np.concatenate([np.full(len(nbrs[x]), dsel[k]) for k, x in enumerate(pending)])
        need = ok[ys, ds] < 0
        if need.any():
            pairs = np.unique(np.column_stack([ys[need], ds[need]]), axis=0)
            evaluate(pairs[:, 0], pairs[:, 1])
        still = [x for k, x in enumerate(pending) if not np.all(ok[nbrs[x], dsel[k]] == 1)]
        pending = np.array(still, dtype=np.int64)

    if len(pending) == 0:
        return ConeCheckReport(epsilon, True, None, sampling)
    x = int(pending[0])
    dbest = int(order[x, 0])
    witness_point = None
    for y in nbrs[x]:
        z = pts[y] + rot[dbest]
        bad = ~points_in_polygon(z, p.vertices)
        if bad.any():
            witness_point = tuple(z[np.argmax(bad)])
            break
    return ConeCheckReport(epsilon, False, (tuple(pts[x]), tuple(dirs[dbest]), witness_point), sampling)


@dataclass(frozen=True)
class UniformityReport:
    epsilon: float
    passed: bool
    eps_star: float
    worst_pair: tuple[int, int] | None
    worst_condition: str | None
    pairs_checked: int
    note: str = "sampled check over mesh vertex pairs and candidate edge-graph paths"


def check_uniform_domain(mesh: Mesh, epsilon: float, pair_samples: int = 200, seed: int = 0,
                         path_exponents=(0.0, 0.5, 1.0, 1.5, 2.0)) -> UniformityReport:
    """Sampled (epsilon, infinity)-domain check on the mesh edge graph.

    Pairs of interior vertices are joined by shortest paths of the interior edge
    graph, weighted by ``length / dist(edge, boundary) ** p`` for each exponent
    ``p`` (``p = 0`` is plain length, ``p = 1`` the discrete quasi-hyperbolic
    metric).  For each pair the best candidate path defines the pair's
    admissible epsilon

        min(|x - y| / l(path), min_z dist(z, boundary) |x - y| / (|x - z| |y - z|)),

    and ``eps_star`` is the minimum over pairs.  The check passes iff
    ``epsilon <= eps_star``.
    """
    if not epsilon > 0:
        raise DomainError("epsilon must be positive")
    edges = mesh.edges()
    n = mesh.n_nodes
    ones = np.ones(len(edges))
    g = coo_matrix((ones, (edges[:, 0], edges[:, 1])), shape=(n, n)).tocsr()
    if connected_components(g, directed=False)[0] != 1:
        raise DomainError("mesh is disconnected")

    X = mesh.nodes
    be = mesh.boundary_edges
    dist = np.empty(n)
    for s in range(0, n, 2048):
        dist[s:s + 2048] = point_segment_distance(X[s:s + 2048], X[be[:, 0]], X[be[:, 1]]).min(axis=1)
    interior = np.setdiff1d(np.arange(n), mesh.boundary_nodes())
    if len(interior) < 2:
        raise DomainError("mesh has fewer than two interior vertices")
    ie = edges[np.isin(edges[:, 0], interior) & np.isin(edges[:, 1], interior)]
    elen = np.linalg.norm(X[ie[:, 1]] - X[ie[:, 0]], axis=1)
    edist = np.minimum(dist[ie[:, 0]], dist[ie[:, 1]])

    m = len(interior)
    total = m * (m - 1) // 2
    if total <= pair_samples:
        iu, ju = np.triu_indices(m, 1)
        pairs = np.column_stack([interior[iu], interior[ju]])
    else:
        rng = np.random.default_rng(seed)
        seen: set[tuple[int, int]] = set()
        while len(seen) < pair_samples:
            i, j = rng.choice(m, size=2, replace=False)
            seen.add((int(min(i, j)), int(max(i, j))))
        pairs = np.array([(interior[i], interior[j]) for i, j in sorted(seen)])
    sources = np.unique(pairs[:, 0])
    src_pos = {int(s): k for k, s in enumerate(sources)}

    best = np.zeros(len(pairs))
    best_cond = [""] * len(pairs)
    for pexp in path_exponents:
        w = elen / edist ** pexp
        graph = coo_matrix((np.concatenate([w, w]),
                            (np.concatenate([ie[:, 0], ie[:, 1]]), np.concatenate([ie[:, 1], ie[:, 0]]))),
                           shape=(n, n)).tocsr()
        _, pred = dijkstra(graph, directed=False, indices=sources, return_predecessors=True)
        for k, (x, y) in enumerate(pairs):
            row = pred[src_pos[int(x)]]
            path = [int(y)]
            while path[-1] != x:
                nxt = row[path[-1]]
                if nxt < 0:
                    path = None
                    break
                path.append(int(nxt))
            if path is None:
                continue
            P = X[np.array(path[::-1])]
            dxy = float(np.linalg.norm(X[y] - X[x]))
            length = float(np.linalg.norm(np.diff(P, axis=0), axis=1).sum())
            e1 = dxy / length
            prod = np.linalg.norm(P - X[x], axis=1) * np.linalg.norm(P - X[y], axis=1)
            dz = dist[np.array(path[::-1])]
            with np.errstate(divide="ignore"):
                e2 = float(np.min(np.where(prod > 0, dz * dxy / np.where(prod > 0, prod, 1.0), np.inf)))
            val = min(e1, e2)
            if val > best[k]:
                best[k] = val
                best_cond[k] = "length" if e1 <= e2 else "cigar"
    worst = int(np.argmin(best))
    eps_star = float(best[worst])
    passed = epsilon <= eps_star
    cond = best_cond[worst] or "disconnected-interior"
    return UniformityReport(float(epsilon), passed, eps_star,
                            (int(pairs[worst, 0]), int(pairs[worst, 1])), cond, len(pairs))


@dataclass(frozen=True)
class RegularityReport:
    exponent: float
    constant: float
    passed: bool
    worst_witness: tuple  # (point, radius, ratio)
    kind: str = "upper"


def _ball_masses(mu: DiscreteBoundaryMeasure, radii: np.ndarray, closed: bool) -> np.ndarray:
    """``M[i, k]`` = mass of the ball of radius ``radii[k]`` about support point ``i``."""
    pts, w = mu.points, mu.weights
    out = np.empty((len(pts), len(radii)))
    for s in range(0, len(pts), 512):
        D = np.linalg.norm(pts[s:s + 512, None, :] - pts[None, :, :], axis=2)
        for k, r in enumerate(radii):
            inside = D <= r if closed else D < r
            out[s:s + 512, k] = inside @ w
    return out


def _check_regularity(mu, exponent, constant, radii, closed, kind, dim):
    if not constant > 0:
        raise DomainError("regularity constant must be positive")
    if not (dim - 2 < exponent <= dim) and kind == "upper":
        raise DomainError(f"upper-regularity exponent must lie in ({dim - 2}, {dim}]")
    if not (0 < exponent <= dim) and kind == "lower":
        raise DomainError(f"lower-regularity exponent must lie in (0, {dim}]")
    radii = np.asarray(radii, dtype=float).reshape(-1)
    if len(radii) == 0 or np.any(radii <= 0) or np.any(radii > 1):
        raise DomainError("radii must be a nonempty list in (0, 1]")
    sup = mu.support()
    if len(sup) == 0:
        raise DomainError("measure has empty support")
    M = _ball_masses(sup, radii, closed)
    ratio = M / radii[None, :] ** exponent
    if kind == "upper":
        i, k = np.unravel_index(np.argmax(ratio), ratio.shape)
        passed = bool(ratio[i, k] <= constant)
    else:
        i, k = np.unravel_index(np.argmin(ratio), ratio.shape)
        passed = bool(ratio[i, k] >= constant)
    witness = (tuple(sup.points[i]), float(radii[k]), float(ratio[i, k]))
    return RegularityReport(float(exponent), float(constant), passed, witness, kind)


def check_upper_regularity(mu: DiscreteBoundaryMeasure, d: float, c_d: float, radii,
                           dim: int = 2) -> RegularityReport:
    """Check ``mu(B(x, r)) <= c_d r**d`` over support points and open balls."""
    return _check_regularity(mu, d, c_d, radii, False, "upper", dim)


def check_lower_regularity(mu: DiscreteBoundaryMeasure, s: float, c_bar: float, radii,
                           dim: int = 2) -> RegularityReport:
    """Check ``mu(closed B(x, r)) >= c_bar r**s`` over support points."""
    return _check_regularity(mu, s, c_bar, radii, True, "lower", dim)


MAX_KOCH_LEVEL = 8


def koch_prefractal(base=((0.0, 0.0), (1.0, 0.0)), level: int = 0):
    """Koch curve after ``level`` generator steps, with its self-similar measure.

    The bump of each generator step points to the left of the segment
    direction.  Every one of the ``4**level`` segments carries mass
    ``4**-level``, lumped half to each endpoint, so the total mass is 1.
    """
    if level < 0:
        raise DomainError("level must be nonnegative")
    if level > MAX_KOCH_LEVEL:
        raise SizeError(f"level {level} exceeds the guard {MAX_KOCH_LEVEL}")
    pts = np.asarray(base, dtype=float).reshape(2, 2)
    c, s = 0.5, math.sqrt(3.0) / 2.0
    for _ in range(level):
        p, q = pts[:-1], pts[1:]
        d = (q - p) / 3.0
        a = p + d
        b = p + 2.0 * d
        peak = a + np.column_stack([c * d[:, 0] - s * d[:, 1], s * d[:, 0] + c * d[:, 1]])
        new = np.empty((4 * len(p) + 1, 2))
        new[0:-1:4] = p
        new[1::4] = a
        new[2::4] = peak
        new[3::4] = b
        new[-1] = pts[-1]
        pts = new
    nseg = len(pts) - 1
    w = np.zeros(len(pts))
    w[:-1] += 0.5 / nseg
    w[1:] += 0.5 / nseg
    return pts, DiscreteBoundaryMeasure(pts, w)


def polyline_measure(points, closed: bool = False) -> DiscreteBoundaryMeasure:
    """Lumped arc-length measure of a polyline."""
    p = np.asarray(points, dtype=float)
    q = np.vstack([p, p[:1]]) if closed else p
    seg = np.linalg.norm(np.diff(q, axis=0), axis=1)
    w = np.zeros(len(q))
    w[:-1] += 0.5 * seg
    w[1:] += 0.5 * seg
    if closed:
        w[0] += w[-1]
        w = w[:-1]
    return DiscreteBoundaryMeasure(p, w)


def polyline_ball_length(points, centers, r: float) -> np.ndarray:
    """Exact length of a polyline inside the open disk of radius ``r`` about each center."""
    p = np.asarray(points, dtype=float)
    a, d = p[:-1], np.diff(p, axis=0)
    L = np.linalg.norm(d, axis=1)
    out = np.zeros(len(centers))
    for k, c in enumerate(np.asarray(centers, dtype=float)):
        f = a - c
        A = np.einsum("ij,ij->i", d, d)
        B = 2.0 * np.einsum("ij,ij->i", f, d)
        C = np.einsum("ij,ij->i", f, f) - r * r
        disc = B * B - 4.0 * A * C
        sq = np.sqrt(np.clip(disc, 0.0, None))
        t0 = np.clip((-B - sq) / (2.0 * A), 0.0, 1.0)
        t1 = np.clip((-B + sq) / (2.0 * A), 0.0, 1.0)
        out[k] = float(np.sum(np.where(disc > 0, (t1 - t0) * L, 0.0)))
    return out
