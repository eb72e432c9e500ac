"""Plain-text file formats used by the command-line driver."""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ConfigError
from .mesh import Mesh


def _fmt(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return "%.17g" % float(x)
    if isinstance(x, (list, tuple, np.ndarray)):
        return " ".join(_fmt(v) for v in np.asarray(x).ravel().tolist())
    return str(x)


def _data_lines(text: str):
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            yield line


def read_polyline(path) -> np.ndarray:
    """Vertex list with one ``x y`` pair per line; ``#`` starts a comment."""
    pts = []
    for line in _data_lines(Path(path).read_text()):
        parts = line.split()
        if len(parts) != 2:
            raise ConfigError(f"{path}: expected 'x y', got {line!r}")
        pts.append([float(parts[0]), float(parts[1])])
    if not pts:
        raise ConfigError(f"{path}: no vertices")
    return np.array(pts)


def write_polyline(path, points, comment: str | None = None) -> None:
    lines = [] if comment is None else [f"# {comment}"]
    lines += [f"{_fmt(float(x))} {_fmt(float(y))}" for x, y in np.asarray(points, dtype=float)]
    Path(path).write_text("\n".join(lines) + "\n")


def write_mesh(path, m: Mesh) -> None:
    out = [f"NODES {m.n_nodes}"]
    out += [f"{_fmt(float(x))} {_fmt(float(y))}" for x, y in m.nodes]
    out.append(f"TRIANGLES {m.n_triangles}")
    out += [f"{a} {b} {c}" for a, b, c in m.triangles]
    out.append(f"BEDGES {len(m.boundary_edges)}")
    out += [f"{i} {j} {t}" for (i, j), t in zip(m.boundary_edges, m.edge_tags)]
    Path(path).write_text("\n".join(out) + "\n")


def read_mesh(path) -> Mesh:
    lines = list(_data_lines(Path(path).read_text()))
    pos = 0
    blocks = {}
    for key in ("NODES", "TRIANGLES", "BEDGES"):
        if pos >= len(lines):
            raise ConfigError(f"{path}: missing {key} section")
        head = lines[pos].split()
        if len(head) != 2 or head[0] != key:
            raise ConfigError(f"{path}: expected '{key} <count>', got {lines[pos]!r}")
        n = int(head[1])
        blocks[key] = [ln.split() for ln in lines[pos + 1:pos + 1 + n]]
        if len(blocks[key]) != n:
            raise ConfigError(f"{path}: truncated {key} section")
        pos += 1 + n
    try:
        nodes = np.array(blocks["NODES"], dtype=float).reshape(-1, 2)
        tris = np.array(blocks["TRIANGLES"], dtype=np.int64).reshape(-1, 3)
        bed = np.array([b[:2] for b in blocks["BEDGES"]], dtype=np.int64).reshape(-1, 2)
    except ValueError as exc:
        raise ConfigError(f"{path}: malformed entry ({exc})") from exc
    tags = [b[2] if len(b) > 2 else "" for b in blocks["BEDGES"]]
    m = Mesh(nodes, tris, bed, tags)
    m.validate()
    return m


def write_vtk(path, m: Mesh, displacement=None, title: str = "elastoshape mesh") -> None:
    """Legacy ASCII VTK unstructured grid with optional point vectors."""
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {m.n_nodes} double"]
    out += [f"{_fmt(float(x))} {_fmt(float(y))} 0" for x, y in m.nodes]
    out.append(f"CELLS {m.n_triangles} {4 * m.n_triangles}")
    out += [f"3 {a} {b} {c}" for a, b, c in m.triangles]
    out.append(f"CELL_TYPES {m.n_triangles}")
    out += ["5"] * m.n_triangles
    if displacement is not None:
        u = np.asarray(displacement, dtype=float).reshape(m.n_nodes, 2)
        out += [f"POINT_DATA {m.n_nodes}", "VECTORS displacement double"]
        out += [f"{_fmt(float(a))} {_fmt(float(b))} 0" for a, b in u]
    Path(path).write_text("\n".join(out) + "\n")


def format_report(items: Mapping) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items.items())


def write_report(path, items: Mapping) -> None:
    Path(path).write_text(format_report(items))
