import numpy as np
import pytest
from hypothesis import given, strategies as st

from xgdg.assembly import strain_basis, tabulate_volume
from xgdg.basis import dim_p
from xgdg.mesh import build_unit_square
from xgdg.spaces import (BrokenSpace, DegreeTuple, EdgeSpace, Kind, rigid_motion_basis,
                         rigid_motion_projection, rigid_motion_to_broken, strain_of_rigid_motion)

MESH = build_unit_square(3)
KINDS = [Kind.SCALAR, Kind.VECTOR2, Kind.SYMTENSOR2]


def _random(space, seed):
    return np.random.default_rng(seed).standard_normal(space.ndof)


def test_degree_tuple():
    assert DegreeTuple.parse("2,1,1,2") == DegreeTuple.superconvergent(1)
    assert DegreeTuple.superconvergent(1).is_superconvergent()
    assert not DegreeTuple(1, 1, 1, 1).is_superconvergent()
    assert str(DegreeTuple(3, 2, 2, 3)) == "3,2,2,3"
    with pytest.raises(ValueError):
        DegreeTuple.parse("1,2,3")
    with pytest.raises(ValueError):
        DegreeTuple.parse((1, -1, 0, 1))


@pytest.mark.parametrize("kind", KINDS)
def test_dimensions(kind):
    s = BrokenSpace(MESH, kind, 2)
    assert s.local_dim == kind.ncomp * 6
    assert s.ndof == MESH.n_elements * s.local_dim
    e = EdgeSpace(MESH, kind, 2)
    assert e.ndof == MESH.n_edges * kind.ncomp * 3


def test_projection_reproduces_polynomials():
    s = BrokenSpace(MESH, Kind.SCALAR, 3)
    f = lambda X: 1 + X[..., 0] ** 3 - 2 * X[..., 0] * X[..., 1] ** 2
    c = s.l2_project(f)
    q = np.array([[0.2, 0.3], [0.6, 0.1]])
    assert np.abs(s.evaluate(c, q)[..., 0] - f(MESH.to_physical(q))).max() < 1e-12


# criterion-10 style properties, on random broken fields

@given(st.sampled_from(KINDS), st.integers(0, 4), st.integers(0, 2**31))
def test_projection_idempotent(kind, k, seed):
    s = BrokenSpace(MESH, kind, k + 2)
    v = _random(s, seed)
    once = s.truncate(v, k)
    assert np.abs(s.truncate(once, k) - once).max() <= 1e-12


@given(st.sampled_from(KINDS), st.integers(1, 4), st.integers(0, 2**31))
def test_p0_after_pk_is_p0(kind, k, seed):
    s = BrokenSpace(MESH, kind, k + 2)
    v = _random(s, seed)
    assert np.abs(s.truncate(s.truncate(v, k), 0) - s.truncate(v, 0)).max() <= 1e-12


def test_truncation_is_l2_projection():
    # compare against an explicit Galerkin projection by quadrature
    s = BrokenSpace(MESH, Kind.VECTOR2, 4)
    v = _random(s, 1)
    low = BrokenSpace(MESH, Kind.VECTOR2, 2)
    direct = low.l2_project(lambda X: _eval_physical(s, v, X), exactness=8)
    assert np.abs(s.restrict(v, 2) - direct).max() < 1e-12


def _eval_physical(space, coeffs, X):
    ref = space.mesh.to_reference(X, np.arange(space.mesh.n_elements))
    return np.einsum("eci,eqi->eqc", space.reshape(coeffs), space.basis.values(ref))


@given(st.integers(1, 4), st.integers(0, 2**31))
def test_rigid_projection_after_pk(k, seed):
    s = BrokenSpace(MESH, Kind.VECTOR2, k + 2)
    v = _random(s, seed)
    a = rigid_motion_projection(s, v)
    b = rigid_motion_projection(s, s.truncate(v, k))
    assert np.abs(a - b).max() <= 1e-12 * max(1.0, np.abs(a).max())


@given(st.integers(1, 4), st.integers(0, 2**31))
def test_rigid_projection_idempotent_and_strain_free(k, seed):
    s = BrokenSpace(MESH, Kind.VECTOR2, k)
    v = _random(s, seed)
    rm = rigid_motion_projection(s, v)
    w = rigid_motion_to_broken(s, rm)
    assert np.abs(rigid_motion_projection(s, w) - rm).max() <= 1e-12 * max(1.0, np.abs(rm).max())
    # rigid motions are affine, so their strain is checked in the P1 representation
    s1 = BrokenSpace(MESH, Kind.VECTOR2, 1)
    w1 = rigid_motion_to_broken(s1, rm)
    tab = tabulate_volume(s1, 2)
    eps = np.einsum("eqsj,ej->eqs", strain_basis(s1, tab), w1.reshape(MESH.n_elements, -1))
    assert np.abs(eps).max() <= 1e-12 * max(1.0, np.abs(rm).max())
    assert np.abs(strain_of_rigid_motion(rm)).max() == 0.0


def test_rigid_motion_basis_values():
    Z = rigid_motion_basis(np.array([[0.25, 0.5]]))
    assert np.allclose(Z[0], [[1, 0], [0, 1], [0.5, -0.25]])


def test_restrict_prolong_roundtrip(rng):
    s = BrokenSpace(MESH, Kind.SYMTENSOR2, 2)
    v = rng.standard_normal(s.ndof)
    up = s.prolong(v, 4)
    assert np.array_equal(BrokenSpace(MESH, Kind.SYMTENSOR2, 4).restrict(up, 2), v)


@pytest.mark.parametrize("k", [0, 2])
def test_edge_projection(k):
    e = EdgeSpace(MESH, Kind.VECTOR2, k)
    g = lambda X: np.stack([X[..., 0] ** k, 1 + X[..., 1] ** k], -1)
    c = e.l2_project_edge(g)
    s = np.array([0.1, 0.7])
    assert np.abs(e.evaluate(c, s) - g(MESH.edge_points(s))).max() < 1e-12
    assert e.nb == k + 1 and dim_p(k) >= e.nb
