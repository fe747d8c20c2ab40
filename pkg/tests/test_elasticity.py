import numpy as np
import pytest
from hypothesis import given, strategies as st

from xgdg import (ComplianceTensor, ConfigError, DegreeTuple, InvalidCoefficient, PenaltyParams, sine_elastic_case,
                  solve_elastic, solve_hybrid)
from xgdg.assembly import element_boundary
from xgdg.basis import tri_quadrature
from xgdg.elasticity import (RigidMotionSpace, build_local_problems, hybrid_equivalent_params, hybrid_local_eta,
                             residuals)
from xgdg.forms import Traces, traction_matrix
from xgdg.mesh import DIRICHLET, INTERIOR, NEUMANN
from xgdg.spaces import VOIGT_METRIC, EdgeSpace, Kind
from xgdg.study import compute_errors

FIELDS = ("sigma", "sigma_check", "u", "u_check")


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def _full(s):
    return np.array([[s[0], s[1]], [s[1], s[2]]])


@given(st.floats(0.1, 10), st.floats(0.01, 0.49), st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_compliance_roundtrip_and_formula(E, nu, s):
    A = ComplianceTensor(E, nu)
    s = np.asarray(s)
    S = _full(s)
    expected = (1 + nu) / E * S - nu / E * np.trace(S) * np.eye(2)
    assert np.allclose(_full(A.apply(s)), expected)
    assert np.allclose(A.inverse_apply(A.apply(s)), s)
    t = np.array([0.3, -1.1, 2.0])
    assert np.isclose(s @ A.voigt_form() @ t, np.sum(_full(A.apply(s)) * _full(t)))
    assert np.all(A.eigenvalues() > 0)


def test_compliance_validation():
    with pytest.raises(InvalidCoefficient):
        ComplianceTensor(E=-1.0)
    with pytest.raises(InvalidCoefficient):
        ComplianceTensor(nu=0.5)


def test_sine_case_is_consistent():
    case = sine_elastic_case()
    X = np.array([[0.3, 0.6], [0.71, 0.12]])
    h = 1e-5
    # div sigma by central differences
    div = np.zeros((2, 2))
    for j in range(2):
        d = np.zeros(2)
        d[j] = h
        dS = (case.sigma_exact(X + d) - case.sigma_exact(X - d)) / (2 * h)
        div[:, 0] += dS[:, [0, 1][j]]
        div[:, 1] += dS[:, [1, 2][j]]
    assert np.abs(div - case.f(X)).max() < 1e-7


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("gamma", [0.0, 1.0, (0.4, -0.9)])
def test_condensed_matches_monolithic(meshes, k, gamma):
    m = meshes(3)
    alpha = DegreeTuple.superconvergent(k)
    a = solve_elastic(m, alpha, PenaltyParams(gamma=gamma), sine_elastic_case())
    b = solve_elastic(m, alpha, PenaltyParams(gamma=gamma), sine_elastic_case(), monolithic=True)
    for name in FIELDS:
        assert _rel(getattr(a, name), getattr(b, name)) <= 1e-9, name


def test_residuals(elastic_solution):
    r = residuals(elastic_solution(3, 1))
    assert max(r.values()) <= 1e-10


def _neumann_case():
    case = sine_elastic_case()
    case.neumann = lambda x: x[0] > 1 - 1e-12
    return case


@pytest.mark.parametrize("k", [0, 1, 2])
@pytest.mark.parametrize("level", [2, 3])
@pytest.mark.parametrize("neumann", [False, True])
def test_hybrid_matches_monolithic_at_equivalent_penalties(meshes, k, level, neumann):
    m = meshes(level)
    case = _neumann_case() if neumann else sine_elastic_case()
    alpha = DegreeTuple.superconvergent(k)
    hyb = solve_hybrid(m, alpha, PenaltyParams(gamma=0.0), case)
    mono = solve_elastic(m, alpha, hyb.params, case, monolithic=True)
    for name in FIELDS:
        assert _rel(getattr(hyb, name), getattr(mono, name)) <= 1e-9, name
    assert hyb.n_unknowns < mono.n_unknowns


@given(st.floats(0.2, 5.0), st.integers(0, 2**31))
def test_hybrid_equivalence_for_random_stabilization(scale, seed):
    from xgdg.mesh import build_unit_square
    m = build_unit_square(2)
    rng = np.random.default_rng(seed)
    eta_l = scale * (0.5 + rng.random(m.n_edges)) / m.lengths
    case = sine_elastic_case()
    hyb = solve_hybrid(m, "2,1,1,2", PenaltyParams(gamma=0.0), case, eta_local=eta_l)
    mono = solve_elastic(m, "2,1,1,2", hybrid_equivalent_params(m, eta_l), case)
    for name in FIELDS:
        assert _rel(getattr(hyb, name), getattr(mono, name)) <= 1e-9, name


def test_equivalent_params_map(meshes):
    m = meshes(3).with_tags(lambda x: x[1] < 1e-12)
    eta_l = 1.0 / m.lengths
    p = hybrid_equivalent_params(m, eta_l)
    inner, dirichlet, neumann = (m.tags == t for t in (INTERIOR, DIRICHLET, NEUMANN))
    assert np.allclose((p.eta(m) * p.tau(m))[inner], 0.125)
    assert np.allclose(p.tau(m)[dirichlet], 0.5 * m.lengths[dirichlet])
    assert np.allclose(p.eta(m)[neumann], eta_l[neumann])
    # the default CLI choice keeps tau of the requested rule on interior edges
    q = PenaltyParams(gamma=0.0)
    assert np.allclose(hybrid_equivalent_params(m, hybrid_local_eta(m, q)).tau(m)[inner], q.tau(m)[inner])


@pytest.mark.parametrize("k", [0, 2])
def test_hybrid_traction_is_edge_flux_and_balances_load(meshes, k):
    m = meshes(3)
    case = sine_elastic_case()
    alpha = DegreeTuple.superconvergent(k)
    sol = solve_hybrid(m, alpha, PenaltyParams(gamma=0.0), case)
    lam_space = EdgeSpace(m, Kind.VECTOR2, alpha.flux)
    s = np.array([0.13, 0.5, 0.77])
    T = Traces(sol.spaces.stress, s)
    flux = T.average().apply(sol.sigma) + 2.0 * sol.spaces.stress_check.evaluate(sol.sigma_check, s)
    t = np.einsum("eas,eqs->eqa", traction_matrix(m.normals), flux)
    assert np.abs(lam_space.evaluate(sol.sigma_hat, s) - t).max() <= 1e-11
    bd = element_boundary(m, 12)
    L = lam_space.evaluate(sol.sigma_hat, bd.s)[bd.edges] * bd.sign[..., None, None]
    rm = RigidMotionSpace(m, k)
    lhs = np.einsum("ejq,ejqa,ejqza->ez", bd.weights, L, rm.values(bd.points))
    q = tri_quadrature(14)
    X = m.to_physical(q.points)
    rhs = np.einsum("q,eqa,eqza->ez", q.weights, case.f(X), rm.values(X)) * m.dets[:, None]
    assert np.abs(lhs - rhs).max() <= 1e-10


def test_rigid_motion_space_dimensions(meshes):
    m = meshes(2)
    assert RigidMotionSpace(m, 0).nb == 2
    assert RigidMotionSpace(m, 2).nb == 3
    assert np.all(RigidMotionSpace(m, 0).strain(np.ones(2 * m.n_elements)) == 0)


def test_hybrid_requires_zero_gamma(meshes):
    with pytest.raises(ConfigError):
        build_local_problems(meshes(2), "2,1,1,2", PenaltyParams(gamma=1.0), sine_elastic_case())


def test_stress_is_symmetric_by_construction(elastic_solution):
    sol = elastic_solution(2, 1)
    assert sol.spaces.stress.ncomp == 3
    assert np.all(np.isfinite(sol.sigma))


@pytest.mark.parametrize("k", [1, 2])
def test_elastic_rates(meshes, k):
    alpha = DegreeTuple.superconvergent(k)
    e = [compute_errors(solve_elastic(meshes(L), alpha, PenaltyParams(gamma=1.0), sine_elastic_case()),
                        include_flux=False) for L in (3, 4, 5)]
    r = np.log2(e[-2]["u_err"] / e[-1]["u_err"])
    assert r == pytest.approx(k + 1, abs=0.2)
    if k == 2:
        assert np.log2(e[-2]["superclose"] / e[-1]["superclose"]) > 4.5


def test_voigt_metric():
    assert np.array_equal(VOIGT_METRIC, [1.0, 2.0, 1.0])
