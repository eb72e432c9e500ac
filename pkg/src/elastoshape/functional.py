"""Target functional ``J = c1 int |v|^2 + c2 int A e(v) : e(v)`` and compliance."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .elasticity import MaterialModel, mass_matrix, stiffness_matrix
from .errors import DomainError
from .mesh import Mesh


@dataclass(frozen=True)
class FunctionalWeights:
    c1: float = 0.0
    c2: float = 1.0

    def __post_init__(self):
        if self.c1 < 0 or self.c2 < 0:
            raise DomainError("functional weights must be nonnegative")
        if self.c1 == 0 and self.c2 == 0:
            raise DomainError("c1 and c2 cannot both vanish")


COMPLIANCE = FunctionalWeights(0.0, 1.0)


def _quadratic(A, v) -> float:
    return max(float(v @ (A @ v)), 0.0)


def energy_functional(m: Mesh, mat: MaterialModel, v, w: FunctionalWeights = COMPLIANCE) -> float:
    """Evaluate ``J(v)`` for a nodal displacement ``v`` of shape ``(n_nodes, 2)``."""
    v = np.asarray(v, dtype=float)
    if v.size != 2 * m.n_nodes:
        raise DomainError("displacement does not match the mesh")
    v = v.ravel()
    J = 0.0
    if w.c1:
        J += w.c1 * _quadratic(mass_matrix(m), v)
    if w.c2:
        J += w.c2 * _quadratic(stiffness_matrix(m, mat), v)
    return J


def compliance(m: Mesh, mat: MaterialModel, u) -> float:
    """Stored elastic energy ``int sigma(u) : e(u)``."""
    return energy_functional(m, mat, u, COMPLIANCE)


def load_work(system, u) -> float:
    """``int f . u + sum g . u w`` from the assembled load vector."""
    return float(system.load_full @ np.asarray(u, dtype=float).ravel())
