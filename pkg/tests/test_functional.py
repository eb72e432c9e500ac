import numpy as np
import pytest

from elastoshape.elasticity import LoadSpec, MaterialModel, assemble, solve
from elastoshape.errors import DomainError
from elastoshape.functional import COMPLIANCE, FunctionalWeights, compliance, energy_functional, load_work
from elastoshape.mesh import boundary_measure, unit_square_mesh

LEFT_DIR = {"left": "Dir", "right": "Lo", "bottom": "Lo", "top": "Up"}


def solved(a=1.0, n=8):
    m = unit_square_mesh(n, LEFT_DIR)
    mat = MaterialModel.scalar(a)
    load = LoadSpec(body_force=(0.0, -1.0), traction=(0.0, -2.0), neumann=boundary_measure(m, "Up"))
    sys = assemble(m, mat, load, "Dir")
    return m, mat, sys, solve(sys, 1e-12)


def test_weights_validation():
    with pytest.raises(DomainError):
        FunctionalWeights(-1.0, 1.0)
    with pytest.raises(DomainError):
        FunctionalWeights(0.0, 0.0)
    assert COMPLIANCE == FunctionalWeights(0.0, 1.0)


def test_zero_field():
    m = unit_square_mesh(4)
    assert energy_functional(m, MaterialModel.lame(1, 1), np.zeros((m.n_nodes, 2)), FunctionalWeights(1, 1)) == 0.0
    assert compliance(m, MaterialModel.lame(1, 1), np.zeros((m.n_nodes, 2))) == 0.0


def test_mass_term_of_constant_field():
    m = unit_square_mesh(5)
    v = np.tile([1.0, 0.0], (m.n_nodes, 1))
    assert energy_functional(m, MaterialModel.scalar(1), v, FunctionalWeights(1, 0)) == pytest.approx(1.0, abs=1e-13)


def test_compliance_equals_work():
    m, mat, sys, u = solved()
    assert energy_functional(m, mat, u, COMPLIANCE) == pytest.approx(load_work(sys, u), rel=1e-8)


@pytest.mark.parametrize("t", [-1.5, 0.3, 2.0])
def test_quadratic_scaling(t):
    m, mat, _, u = solved()
    w = FunctionalWeights(0.7, 1.3)
    assert energy_functional(m, mat, t * u, w) == pytest.approx(t * t * energy_functional(m, mat, u, w), rel=1e-12)


def test_nonnegative_and_definite_with_mass():
    m = unit_square_mesh(4)
    rng = np.random.default_rng(1)
    for _ in range(20):
        v = rng.standard_normal((m.n_nodes, 2))
        assert energy_functional(m, MaterialModel.lame(0.5, 1.0), v, FunctionalWeights(1e-3, 1.0)) > 0


def test_stiffer_material_lowers_compliance():
    m, mat, _, u = solved(1.0)
    m2, mat2, _, u2 = solved(2.0)
    assert compliance(m2, mat2, u2) < compliance(m, mat, u)
    assert compliance(m2, mat2, u2) == pytest.approx(0.5 * compliance(m, mat, u), rel=1e-8)
