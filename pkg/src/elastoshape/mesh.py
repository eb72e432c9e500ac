"""Triangulations of roof cross-sections with tagged boundary parts.

Boundary edges carry one of the tags ``Dir`` (clamped), ``Lo`` (lower roof
surface) or ``Up`` (upper roof surface).  ``Lo`` and ``Up`` together form the
Neumann part.  Edges are stored with the orientation of their triangle, so the
boundary is traversed counterclockwise and the outward normal of an edge
``(i, j)`` is the edge direction rotated by -90 degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .errors import DomainError, GeometryError

TAGS = ("Dir", "Lo", "Up")
NEUMANN_TAGS = ("Lo", "Up")


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


def resolve_tags(tag) -> tuple[str, ...]:
    """Expand a tag selector (``"Up"``, ``"Neu"``, ``"all"`` or an iterable)."""
    if isinstance(tag, str):
        if tag == "Neu":
            return NEUMANN_TAGS
        if tag == "all":
            return TAGS
        if tag not in TAGS:
            raise DomainError(f"unknown boundary tag {tag!r}")
        return (tag,)
    out: list[str] = []
    for t in tag:
        for s in resolve_tags(t):
            if s not in out:
                out.append(s)
    return tuple(out)


@dataclass(frozen=True, eq=False)
class DiscreteBoundaryMeasure:
    """Nonnegative point masses on boundary nodes (a lumped boundary measure).

    ``nodes`` holds mesh node indices when the measure lives on a mesh and is
    ``None`` for free-standing curves such as Koch prefractals.
    """

    points: np.ndarray
    weights: np.ndarray
    nodes: np.ndarray | None = None
    tags: tuple[str, ...] = ()

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if len(pts) != len(w):
            raise DomainError("points and weights differ in length")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise DomainError("measure weights must be finite and nonnegative")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))
        if self.nodes is not None:
            nodes = np.asarray(self.nodes, dtype=np.int64).reshape(-1)
            if len(nodes) != len(w):
                raise DomainError("nodes and weights differ in length")
            object.__setattr__(self, "nodes", _readonly(nodes))
        object.__setattr__(self, "tags", tuple(self.tags))

    def __len__(self):
        return len(self.weights)

    @property
    def total(self) -> float:
        return float(self.weights.sum())

    def integrate(self, values) -> float | np.ndarray:
        """Weighted nodal sum of ``values`` (shape ``(k,)`` or ``(k, c)``)."""
        values = np.asarray(values, dtype=float)
        return np.tensordot(self.weights, values, axes=(0, 0))

    def scaled(self, factor: float) -> "DiscreteBoundaryMeasure":
        return DiscreteBoundaryMeasure(self.points, self.weights * factor, self.nodes, self.tags)

    def support(self) -> "DiscreteBoundaryMeasure":
        """Restriction to the nodes carrying positive mass."""
        keep = self.weights > 0
        nodes = None if self.nodes is None else self.nodes[keep]
        return DiscreteBoundaryMeasure(self.points[keep], self.weights[keep], nodes, self.tags)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 triangulation with tagged, counterclockwise boundary edges."""

    nodes: np.ndarray
    triangles: np.ndarray
    boundary_edges: np.ndarray
    edge_tags: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float).reshape(-1, 2)
        tris = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        bedges = np.asarray(self.boundary_edges, dtype=np.int64).reshape(-1, 2)
        tags = np.asarray(self.edge_tags, dtype="<U3").reshape(-1)
        if len(tags) != len(bedges):
            raise GeometryError("one tag per boundary edge required")
        object.__setattr__(self, "nodes", _readonly(nodes))
        object.__setattr__(self, "triangles", _readonly(tris))
        object.__setattr__(self, "boundary_edges", _readonly(bedges))
        object.__setattr__(self, "edge_tags", _readonly(tags))

    @classmethod
    def from_triangles(cls, nodes, triangles, tagger: str | Callable = "Dir") -> "Mesh":
        """Build a mesh, detecting boundary edges topologically.

        ``tagger`` is either a single tag for every boundary edge or a callable
        ``tagger(midpoints, normals) -> sequence of tags``.
        """
        nodes = np.asarray(nodes, dtype=float)
        tris = np.asarray(triangles, dtype=np.int64)
        directed = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
        n = len(nodes)
        fwd = directed[:, 0] * n + directed[:, 1]
        rev = directed[:, 1] * n + directed[:, 0]
        is_bnd = ~np.isin(fwd, rev)
        bedges = directed[is_bnd]
        # deterministic order: sort by the undirected key
        order = np.argsort(np.minimum(bedges[:, 0], bedges[:, 1]) * n + np.maximum(bedges[:, 0], bedges[:, 1]),
                           kind="stable")
        bedges = bedges[order]
        if isinstance(tagger, str):
            tags = [tagger] * len(bedges)
        else:
            p, q = nodes[bedges[:, 0]], nodes[bedges[:, 1]]
            d = q - p
            normals = np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]
            tags = list(tagger(0.5 * (p + q), normals))
        return cls(nodes, tris, bedges, tags)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def triangle_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def tag_mask(self, tag) -> np.ndarray:
        return np.isin(self.edge_tags, resolve_tags(tag))

    def tags_present(self) -> set[str]:
        return set(self.edge_tags.tolist())

    def tagged_nodes(self, tag) -> np.ndarray:
        return np.unique(self.boundary_edges[self.tag_mask(tag)])

    def boundary_nodes(self) -> np.ndarray:
        return np.unique(self.boundary_edges)

    def edge_lengths(self, tag="all") -> np.ndarray:
        e = self.boundary_edges[self.tag_mask(tag)]
        return np.linalg.norm(self.nodes[e[:, 1]] - self.nodes[e[:, 0]], axis=1)

    def edge_normals(self, tag="all") -> np.ndarray:
        """Outward unit normals of the selected boundary edges."""
        e = self.boundary_edges[self.tag_mask(tag)]
        d = self.nodes[e[:, 1]] - self.nodes[e[:, 0]]
        return np.column_stack([d[:, 1], -d[:, 0]]) / np.linalg.norm(d, axis=1)[:, None]

    def edges(self) -> np.ndarray:
        """All undirected edges, each once, as sorted index pairs."""
        t = self.triangles
        e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        e.sort(axis=1)
        return np.unique(e, axis=0)

    def scaled(self, factor: float) -> "Mesh":
        return Mesh(self.nodes * factor, self.triangles, self.boundary_edges, self.edge_tags)

    def validate(self) -> None:
        """Raise :class:`GeometryError` unless every mesh invariant holds."""
        n = self.n_nodes
        if self.n_triangles == 0:
            raise GeometryError("mesh has no triangles")
        if self.triangles.min() < 0 or self.triangles.max() >= n:
            raise GeometryError("triangle refers to a missing node")
        if np.any(self.triangle_areas() <= 0):
            raise GeometryError("triangle with nonpositive area (orientation)")
        t = self.triangles
        directed = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
        keys = directed[:, 0] * n + directed[:, 1]
        if len(np.unique(keys)) != len(keys):
            raise GeometryError("directed edge used twice: mesh is not conforming")
        rev = directed[:, 1] * n + directed[:, 0]
        bnd = np.sort(keys[~np.isin(keys, rev)])
        given = np.sort(self.boundary_edges[:, 0] * n + self.boundary_edges[:, 1])
        if not np.array_equal(bnd, given):
            raise GeometryError("boundary edges do not match the triangulation boundary")
        bad = set(self.edge_tags.tolist()) - set(TAGS)
        if bad:
            raise GeometryError(f"unknown boundary tags {sorted(bad)}")
        deg = np.bincount(self.boundary_edges.ravel(), minlength=n)
        outdeg = np.bincount(self.boundary_edges[:, 0], minlength=n)
        if np.any(deg % 2) or np.any(2 * outdeg != deg):
            raise GeometryError("boundary edges do not form closed loops")


def structured_mesh(X: np.ndarray, Y: np.ndarray, side_tags: dict[str, str]) -> Mesh:
    """Quadrilateral-split triangulation of a logically rectangular node grid.

    ``X`` and ``Y`` have shape ``(ny + 1, nx + 1)``; row ``j`` runs left to right.
    ``side_tags`` maps ``left``, ``right``, ``bottom``, ``top`` to boundary tags.
    """
    ny, nx = X.shape[0] - 1, X.shape[1] - 1
    if nx < 1 or ny < 1:
        raise GeometryError("structured mesh needs at least one cell per direction")
    nodes = np.column_stack([X.ravel(), Y.ravel()])
    idx = np.arange((nx + 1) * (ny + 1)).reshape(ny + 1, nx + 1)
    n0 = idx[:-1, :-1].ravel()
    n1 = idx[:-1, 1:].ravel()
    n2 = idx[1:, 1:].ravel()
    n3 = idx[1:, :-1].ravel()
    tris = np.empty((2 * nx * ny, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([n0, n1, n2])
    tris[1::2] = np.column_stack([n0, n2, n3])

    bottom = np.column_stack([idx[0, :-1], idx[0, 1:]])
    right = np.column_stack([idx[:-1, -1], idx[1:, -1]])
    top = np.column_stack([idx[-1, 1:], idx[-1, :-1]])[::-1]
    left = np.column_stack([idx[1:, 0], idx[:-1, 0]])[::-1]
    bedges = np.concatenate([bottom, right, top, left])
    tags = ([side_tags["bottom"]] * nx + [side_tags["right"]] * ny
            + [side_tags["top"]] * nx + [side_tags["left"]] * ny)
    return Mesh(nodes, tris, bedges, tags)


DEFAULT_SIDE_TAGS = {"left": "Dir", "right": "Dir", "bottom": "Lo", "top": "Up"}


def rectangle_mesh(lx: float, ly: float, nx: int, ny: int, side_tags=None,
                   origin=(0.0, 0.0)) -> Mesh:
    """Uniform mesh of ``[x0, x0 + lx] x [y0, y0 + ly]`` with ``2 nx ny`` triangles."""
    if lx <= 0 or ly <= 0:
        raise GeometryError("rectangle sides must be positive")
    tags = dict(DEFAULT_SIDE_TAGS)
    tags.update(side_tags or {})
    xs = origin[0] + lx * (np.arange(nx + 1) / nx)
    ys = origin[1] + ly * (np.arange(ny + 1) / ny)
    X, Y = np.meshgrid(xs, ys)
    return structured_mesh(X, Y, tags)


def unit_square_mesh(n: int, side_tags=None) -> Mesh:
    return rectangle_mesh(1.0, 1.0, n, n, side_tags)


def build_roof_mesh(shape, resolution: float) -> Mesh:
    """Mapped mesh of the band between the lower roof curve and its offset.

    ``shape`` must provide ``knot_x`` and ``knot_heights`` (the piecewise
    linear lower curve, endpoints included) and ``thickness``.  Knots are
    always mesh nodes, so the discrete lower boundary equals the curve.
    Column ``i`` of the node grid is the vertical segment from
    ``phi(x_i)`` to ``phi(x_i) + thickness``; the top row is computed as
    ``phi + thickness`` so the upper curve is an exact translate.
    """
    if not resolution > 0:
        raise DomainError("resolution must be positive")
    h = float(shape.thickness)
    if not (h > 0 and math.isfinite(h)):
        raise GeometryError("roof thickness must be positive")
    kx = np.asarray(shape.knot_x, dtype=float)
    kh = np.asarray(shape.knot_heights, dtype=float)
    if len(kx) < 2 or np.any(np.diff(kx) <= 0) or not np.all(np.isfinite(kh)):
        raise GeometryError("lower curve must be a graph over increasing knots")
    per_seg = max(1, math.ceil(float(np.max(np.diff(kx))) / resolution - 1e-9))
    nseg = len(kx) - 1
    xs = np.concatenate([
        kx[s] + (kx[s + 1] - kx[s]) * (np.arange(per_seg) / per_seg) for s in range(nseg)
    ] + [kx[-1:]])
    phi = np.interp(xs, kx, kh)
    phi[::per_seg] = kh
    ny = max(1, math.ceil(h / resolution - 1e-9))
    t = np.arange(ny + 1) / ny
    X = np.broadcast_to(xs, (ny + 1, len(xs))).copy()
    Y = phi[None, :] + t[:, None] * h
    Y[-1] = phi + h
    return structured_mesh(X, Y, DEFAULT_SIDE_TAGS)


def refine(m: Mesh) -> Mesh:
    """Uniform red refinement: every triangle splits into four."""
    n = m.n_nodes
    t = m.triangles
    e = np.concatenate([t[:, [0, 1]], t[:, [1, 2]], t[:, [2, 0]]])
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    keys, inv = np.unique(lo * n + hi, return_inverse=True)
    ea, eb = keys // n, keys % n
    mids = 0.5 * (m.nodes[ea] + m.nodes[eb])
    nodes = np.concatenate([m.nodes, mids])
    nt = len(t)
    mab = n + inv[:nt]
    mbc = n + inv[nt:2 * nt]
    mca = n + inv[2 * nt:]
    a, b, c = t[:, 0], t[:, 1], t[:, 2]
    children = np.stack([
        np.column_stack([a, mab, mca]),
        np.column_stack([mab, b, mbc]),
        np.column_stack([mca, mbc, c]),
        np.column_stack([mab, mbc, mca]),
    ], axis=1).reshape(-1, 3)
    be = m.boundary_edges
    bkey = np.minimum(be[:, 0], be[:, 1]) * n + np.maximum(be[:, 0], be[:, 1])
    bm = n + np.searchsorted(keys, bkey)
    bedges = np.stack([np.column_stack([be[:, 0], bm]), np.column_stack([bm, be[:, 1]])],
                      axis=1).reshape(-1, 2)
    tags = np.repeat(m.edge_tags, 2)
    return Mesh(nodes, children, bedges, tags)


def boundary_measure(m: Mesh, tag="all") -> DiscreteBoundaryMeasure:
    """Lumped arc length: each tagged edge gives half its length to each end."""
    tags = resolve_tags(tag)
    present = m.tags_present()
    missing = [t for t in tags if t not in present]
    if tag not in ("all", "Neu") and missing:
        raise DomainError(f"tag(s) {missing} not present in mesh")
    if not any(t in present for t in tags):
        raise DomainError(f"no boundary edge carries tag {tag!r}")
    mask = m.tag_mask(tags)
    e = m.boundary_edges[mask]
    lengths = np.linalg.norm(m.nodes[e[:, 1]] - m.nodes[e[:, 0]], axis=1)
    w = np.zeros(m.n_nodes)
    np.add.at(w, e[:, 0], 0.5 * lengths)
    np.add.at(w, e[:, 1], 0.5 * lengths)
    idx = np.unique(e)
    return DiscreteBoundaryMeasure(m.nodes[idx], w[idx], idx, tags)


def area(m: Mesh) -> float:
    return float(m.triangle_areas().sum())


def nodal_normals(m: Mesh, measure: DiscreteBoundaryMeasure, unit: bool = True) -> np.ndarray:
    """Length-weighted average outward normal at each node of ``measure``.

    Normals of tagged edges only are averaged, so on a straight tagged part the
    result equals the edge normal even at interface nodes.  With
    ``unit=False`` the average is not renormalized; then ``sigma @ n`` times
    the lumped weight equals the exact edge integral of ``sigma n`` for a
    constant ``sigma``, corners included.
    """
    mask = m.tag_mask(measure.tags)
    e = m.boundary_edges[mask]
    d = m.nodes[e[:, 1]] - m.nodes[e[:, 0]]
    rot = np.column_stack([d[:, 1], -d[:, 0]])  # length-weighted normals
    acc = np.zeros((m.n_nodes, 2))
    np.add.at(acc, e[:, 0], rot)
    np.add.at(acc, e[:, 1], rot)
    out = acc[measure.nodes]
    if unit:
        norm = np.linalg.norm(out, axis=1)
    else:
        lengths = np.zeros(m.n_nodes)
        ln = np.linalg.norm(d, axis=1)
        np.add.at(lengths, e[:, 0], ln)
        np.add.at(lengths, e[:, 1], ln)
        norm = lengths[measure.nodes]
    norm[norm == 0] = 1.0
    return out / norm[:, None]


def _compact(nodes: np.ndarray, tris: np.ndarray):
    used = np.unique(tris)
    remap = -np.ones(len(nodes), dtype=np.int64)
    remap[used] = np.arange(len(used))
    return nodes[used], remap[tris]


def grid_mesh_in_region(inside: Callable[[np.ndarray], np.ndarray], bbox, h: float,
                        tagger: str | Callable = "Dir") -> Mesh:
    """Right-triangle grid over ``bbox`` keeping triangles whose centroid is inside."""
    x0, y0, x1, y1 = bbox
    nx = max(1, round((x1 - x0) / h))
    ny = max(1, round((y1 - y0) / h))
    full = rectangle_mesh(x1 - x0, y1 - y0, nx, ny, origin=(x0, y0))
    cent = full.nodes[full.triangles].mean(axis=1)
    keep = np.asarray(inside(cent), dtype=bool)
    if not keep.any():
        raise GeometryError("region contains no grid triangle")
    nodes, tris = _compact(full.nodes, full.triangles[keep])
    return Mesh.from_triangles(nodes, tris, tagger)


def lattice_mesh_in_region(inside: Callable[[np.ndarray], np.ndarray], bbox, h: float,
                           tagger: str | Callable = "Dir") -> Mesh:
    """Equilateral-lattice mesh (spacing ``h``, one lattice node at the origin).

    Polygons whose edges follow lattice directions (Koch prefractals built on a
    horizontal base starting at a lattice node) are represented exactly.
    """
    x0, y0, x1, y1 = bbox
    s = math.sqrt(3.0) / 2.0
    j0 = math.floor(y0 / (s * h)) - 1
    j1 = math.ceil(y1 / (s * h)) + 1
    js = np.arange(j0, j1 + 1)
    i0 = math.floor(x0 / h - j1 / 2.0) - 2
    i1 = math.ceil(x1 / h - j0 / 2.0) + 2
    iis = np.arange(i0, i1 + 1)
    J, I = np.meshgrid(js, iis, indexing="ij")
    nodes = np.column_stack([((I + 0.5 * J) * h).ravel(), (J * s * h).ravel()])
    ni = len(iis)
    idx = np.arange(len(nodes)).reshape(len(js), ni)
    a = idx[:-1, :-1].ravel()
    b = idx[:-1, 1:].ravel()
    c = idx[1:, :-1].ravel()
    d = idx[1:, 1:].ravel()
    # row j+1 is shifted by h/2 to the right: (a, b, c) points up, (b, d, c) down
    tris = np.concatenate([np.column_stack([a, b, c]), np.column_stack([b, d, c])])
    cent = nodes[tris].mean(axis=1)
    keep = np.asarray(inside(cent), dtype=bool)
    if not keep.any():
        raise GeometryError("region contains no lattice triangle")
    nodes, tris = _compact(nodes, tris[keep])
    return Mesh.from_triangles(nodes, tris, tagger)


def tag_by_position(rules: Iterable[tuple[Callable, str]], default: str):
    """Tagger built from ``(predicate(midpoints, normals) -> bool array, tag)`` rules."""
    rules = list(rules)

    def tagger(mid, normals):
        out = np.full(len(mid), default, dtype="<U3")
        for pred, tag in rules:
            out[np.asarray(pred(mid, normals), dtype=bool)] = tag
        return out

    return tagger
