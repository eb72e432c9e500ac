import math

import numpy as np
import pytest

from elastoshape.elasticity import MaterialModel
from elastoshape.errors import ConfigError, DomainError, InfeasibleError, InitializationError
from elastoshape.functional import COMPLIANCE, compliance
from elastoshape.geometry import Polygon
from elastoshape.mesh import area, build_roof_mesh
from elastoshape.shapeopt import (HISTORY_HEADER, AdmissibleClassConfig, RelaxedClassData, RoofLoads,
                                  evaluate_shape, history_csv, make_roof_shape, nelder_mead,
                                  optimize, project_admissible, self_weight_load, snow_load,
                                  solve_roof)

CFG = AdmissibleClassConfig.default_roof()
MAT = MaterialModel.lame(1.0, 1.0)
FLAT = np.full(5, 0.5)
PEAK = np.array([0.6, 0.75, 0.9, 0.75, 0.6])
ZIGZAG = np.array([0.2, 1.2, 0.2, 1.2, 0.2])


# --- shapes ----------------------------------------------------------------------

def test_thickness_rule():
    cfg = AdmissibleClassConfig.default_roof(c_v=1.0)
    s = make_roof_shape(FLAT, cfg)
    assert s.thickness == 0.5
    assert s.volume == 1.0


def test_flat_theta_is_rectangle():
    s = make_roof_shape(FLAT, CFG)
    assert np.all(s.lower_curve()[:, 1] == 0.5)
    assert s.polygon().area == pytest.approx(0.6, abs=1e-14)


def test_upper_is_translate():
    s = make_roof_shape(PEAK, CFG)
    assert np.array_equal(s.upper_curve(), s.lower_curve() + [0.0, s.thickness])


@pytest.mark.parametrize("theta", [FLAT, PEAK, np.array([0.4, 0.3, 0.6, 0.8, 0.5])])
def test_mesh_area_matches_volume(theta):
    s = make_roof_shape(theta, CFG)
    assert area(build_roof_mesh(s, 0.05)) == pytest.approx(CFG.c_v, abs=1e-10)


def test_arclength_rule_option():
    cfg = AdmissibleClassConfig.default_roof(volume_rule="arclength")
    s = make_roof_shape(PEAK, cfg)
    arc = np.sum(np.linalg.norm(np.diff(s.lower_curve(), axis=0), axis=1))
    assert s.thickness == pytest.approx(0.6 / arc)


def test_theta_outside_container():
    with pytest.raises(InfeasibleError):
        make_roof_shape(np.array([0.5, 2.5, 0.5, 0.5, 0.5]), CFG)


def test_config_validation():
    with pytest.raises(ConfigError):
        AdmissibleClassConfig.default_roof(ell0=5.0, ell1=1.0)
    with pytest.raises(ConfigError):
        AdmissibleClassConfig.default_roof(epsilon=0.0)
    with pytest.raises(ConfigError):
        AdmissibleClassConfig.default_roof(region=Polygon.box(0, 0, 2, 2))
    with pytest.raises(ConfigError):
        RelaxedClassData(s=2.0, d=1.0, c_bar=1, c_d=1)
    with pytest.raises(ConfigError):
        RelaxedClassData(s=1.2, d=1.5, c_bar=1, c_d=1)
    assert RelaxedClassData(s=1.0, d=1.0, c_bar=0.5, c_d=5).s == 1.0


# --- projection ------------------------------------------------------------------

def test_projection_identity_on_feasible():
    theta, rep = project_admissible(PEAK, CFG)
    assert np.array_equal(theta, PEAK)
    assert rep.cone_ok and rep.reg_ok and rep.bounds_ok and rep.feasible


def test_projection_clamps_to_ceiling():
    theta, _ = project_admissible(np.array([0.5, 1.7, 0.5, 0.5, 0.5]), CFG)
    assert theta[1] == 1.2
    assert np.array_equal(theta[[0, 2, 3, 4]], [0.5] * 4)


def test_oscillatory_violates_length_bound():
    _, rep = project_admissible(ZIGZAG, CFG)
    assert rep.neumann_length > CFG.ell1
    assert not rep.reg_ok
    assert not rep.feasible


def test_relaxed_class_regularity():
    ok = AdmissibleClassConfig.default_roof(relaxed=RelaxedClassData(1.0, 1.0, 0.5, 6.0))
    assert project_admissible(PEAK, ok)[1].reg_ok
    tight = AdmissibleClassConfig.default_roof(relaxed=RelaxedClassData(1.0, 1.0, 0.5, 0.5))
    assert not project_admissible(PEAK, tight)[1].reg_ok


# --- loads ------------------------------------------------------------------------

def test_self_weight():
    cfg = AdmissibleClassConfig.default_roof(c_v=1.0)
    s = make_roof_shape(FLAT, cfg)
    assert np.array_equal(self_weight_load(s, 2.0), [0.0, -1.0])
    assert np.array_equal(self_weight_load(s, 2.0, sign=1.0), [0.0, 1.0])
    s2 = make_roof_shape(FLAT, AdmissibleClassConfig.default_roof(c_v=2.0))
    assert np.array_equal(self_weight_load(s2, 2.0), 2 * self_weight_load(s, 2.0))
    assert np.array_equal(self_weight_load(make_roof_shape(PEAK, cfg), 2.0), self_weight_load(s, 2.0))
    with pytest.raises(DomainError):
        self_weight_load(s, 0.0)


def test_snow_totals():
    s = make_roof_shape(PEAK, CFG)
    m = build_roof_mesh(s, 0.05)
    mu, g = snow_load(0.0).on_mesh(m)
    assert not g.any()
    mu, g = snow_load(1.5).on_mesh(m)
    up = np.isin(mu.nodes, m.tagged_nodes("Up"))
    ell = np.sum(np.linalg.norm(np.diff(s.upper_curve(), axis=0), axis=1))
    # lumped weights of Up nodes; corner nodes shared with Dir carry only their Up half
    total = np.sum(mu.weights[up] * np.abs(g[up, 1]))
    assert total == pytest.approx(1.5 * ell, rel=0.05)
    assert np.all(g[~up] == 0)


def test_snow_region_errors():
    with pytest.raises(DomainError):
        snow_load(1.0, "Dir")
    with pytest.raises(DomainError):
        snow_load(-1.0)


def test_snow_monotone_compliance():
    s = make_roof_shape(PEAK, CFG)
    vals = []
    for q in (0.5, 1.0, 2.0):
        m, _, u = solve_roof(s, RoofLoads(rho0=1.0, snow=q), MAT, 0.05)
        vals.append(compliance(m, MAT, u))
    assert vals[0] < vals[1] < vals[2]


# --- evaluation --------------------------------------------------------------------

def test_evaluate_zero_loads():
    ev = evaluate_shape(PEAK, CFG, RoofLoads(rho0=1e-300, snow=0.0), MAT, COMPLIANCE, 0.1)
    assert ev.J >= 0 and ev.J < 1e-300


def test_evaluate_infeasible_sentinel():
    ev = evaluate_shape(ZIGZAG, CFG, RoofLoads(), MAT, COMPLIANCE, 0.1)
    assert ev.J == math.inf and not ev.feasible and ev.error


def test_evaluate_refinement_cauchy():
    J = [evaluate_shape(PEAK, CFG, RoofLoads(), MAT, COMPLIANCE, r).J for r in (0.025, 0.0125, 0.00625)]
    assert all(j > 0 for j in J)
    assert abs(J[1] - J[0]) <= 0.02 * J[1]
    assert abs(J[2] - J[1]) <= 0.02 * J[2]


def test_evaluate_work_identity():
    ev = evaluate_shape(PEAK, CFG, RoofLoads(), MAT, COMPLIANCE, 0.1)
    assert ev.J == pytest.approx(ev.work, rel=1e-8)


# --- optimizer ---------------------------------------------------------------------

def test_nelder_mead_quadratic():
    target = np.array([0.3, -0.7, 1.1, 0.25, -0.4])
    x, f, evals = nelder_mead(lambda t: float(np.sum((t - target) ** 2)), np.zeros(5), 5000, 0.5, seed=3,
                              xtol=1e-10)
    assert np.abs(x - target).max() <= 1e-4
    assert len(evals) <= 5000


def test_nelder_mead_projection_respected():
    x, f, evals = nelder_mead(lambda t: float(np.sum((t - 2.0) ** 2)), np.zeros(3), 400, 0.3,
                              project=lambda t: np.clip(t, -1, 1))
    assert all(np.all(np.abs(p) <= 1) for p, _ in evals)
    np.testing.assert_allclose(x, 1.0, atol=1e-4)


def test_nelder_mead_budget_simplex_only():
    rng = np.random.default_rng(0)
    vals = {}

    def fun(t):
        v = float(rng.random())
        vals[t.tobytes()] = v
        return v
    x, f, evals = nelder_mead(fun, np.zeros(4), 5, 0.1)
    assert len(evals) == 5
    assert f == min(vals.values()) and vals[x.tobytes()] == f


def test_nelder_mead_all_infeasible():
    with pytest.raises(InitializationError):
        nelder_mead(lambda t: math.inf, np.zeros(3), 20)


def test_nelder_mead_budget_too_small():
    with pytest.raises(DomainError):
        nelder_mead(lambda t: 0.0, np.zeros(3), 3)


@pytest.fixture(scope="module")
def short_run():
    return optimize(CFG, RoofLoads(), MAT, COMPLIANCE, FLAT, budget=14, seed=1, resolution=0.1)


def test_optimize_history_invariants(short_run):
    hist = short_run.history
    assert len(hist) == 14
    best = [r.best_J for r in hist]
    assert all(b2 <= b1 for b1, b2 in zip(best, best[1:]))
    acc = [r for r in hist if r.accepted]
    assert all(b.J < a.J for a, b in zip(acc, acc[1:]))
    for r in acc:
        assert abs(r.volume - CFG.c_v) <= 1e-10
        assert r.cone_ok and r.reg_ok and r.bounds_ok
    assert short_run.best.J == best[-1] <= short_run.initial.J


def test_optimize_deterministic(short_run):
    again = optimize(CFG, RoofLoads(), MAT, COMPLIANCE, FLAT, budget=14, seed=1, resolution=0.1)
    assert history_csv(again.history) == history_csv(short_run.history)


def test_optimize_threads_match(short_run):
    par = optimize(CFG, RoofLoads(), MAT, COMPLIANCE, FLAT, budget=14, seed=1, resolution=0.1, threads=2)
    assert history_csv(par.history) == history_csv(short_run.history)


def test_optimize_budget_m_plus_one():
    res = optimize(CFG, RoofLoads(), MAT, COMPLIANCE, FLAT, budget=6, seed=0, resolution=0.1)
    assert len(res.history) == 6
    assert res.best.J == min(r.J for r in res.history)


def test_history_csv_format(short_run):
    text = history_csv(short_run.history)
    lines = text.strip().splitlines()
    assert lines[0] == HISTORY_HEADER
    assert len(lines) == 15
    first = lines[1].split(",")
    assert first[0] == "0" and float(first[1]) == short_run.history[0].J
    assert first[4] in ("0", "1")
