from fractions import Fraction
from math import factorial

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from xgdg.basis import (EdgeBasis, TriBasis, UnsupportedOrder, dim_p, edge_quadrature,
                        monomial_exponents, tri_monomial_integral, tri_quadrature)


def test_dim_p():
    assert [dim_p(k) for k in range(5)] == [1, 3, 6, 10, 15]
    assert len(monomial_exponents(3)) == 10


@pytest.mark.parametrize("a,b", [(0, 0), (1, 0), (2, 3), (4, 1)])
def test_monomial_integral_against_closed_form(a, b):
    # Dirichlet integral over the reference triangle
    assert tri_monomial_integral(a, b) == Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


def test_monomial_integral_against_adaptive_quadrature():
    val, _ = integrate.dblquad(lambda y, x: x**3 * y**2, 0, 1, 0, lambda x: 1 - x, epsabs=1e-13)
    assert abs(val - float(tri_monomial_integral(3, 2))) < 1e-12


@pytest.mark.parametrize("d", range(21))
def test_triangle_rule_exactness(d):
    q = tri_quadrature(d)
    assert np.all(q.weights > 0)
    assert np.all(q.points >= -1e-14) and np.all(q.points.sum(axis=1) <= 1 + 1e-14)
    for a in range(d + 1):
        for b in range(d + 1 - a):
            val = q.weights @ (q.points[:, 0] ** a * q.points[:, 1] ** b)
            assert abs(val - float(tri_monomial_integral(a, b))) < 1e-14


@pytest.mark.parametrize("d", range(26))
def test_edge_rule_exactness(d):
    q = edge_quadrature(d)
    s = q.points[:, 0]
    for a in range(d + 1):
        assert abs(q.weights @ s**a - 1.0 / (a + 1)) < 1e-14


def test_unsupported_orders():
    with pytest.raises(UnsupportedOrder):
        tri_quadrature(21)
    with pytest.raises(UnsupportedOrder):
        edge_quadrature(26)
    with pytest.raises(UnsupportedOrder):
        TriBasis(11)


@pytest.mark.parametrize("k", range(7))
def test_triangle_basis_orthonormal(k):
    B = TriBasis(k)
    assert np.abs(B.mass_matrix() - np.eye(B.dim)).max() < 1e-12


@pytest.mark.parametrize("k", range(5))
def test_basis_is_hierarchical(k):
    # first dim P_m functions are polynomials of degree <= m
    B = TriBasis(k)
    C = B.coefficients
    exps = monomial_exponents(k)
    for m in range(k + 1):
        rows = C[:dim_p(m)]
        high = [i for i, (a, b) in enumerate(exps) if a + b > m]
        assert np.abs(rows[:, high]).max(initial=0.0) == 0.0


@given(st.integers(1, 6), st.floats(0.05, 0.9), st.floats(0.05, 0.9))
def test_gradients_match_finite_differences(k, x, y):
    if x + y > 0.95:
        x, y = x / 2, y / 2
    B = TriBasis(k)
    p = np.array([[x, y]])
    h = 1e-6
    fd = np.stack([(B.values(p + [[h, 0]]) - B.values(p - [[h, 0]])) / (2 * h),
                   (B.values(p + [[0, h]]) - B.values(p - [[0, h]])) / (2 * h)], -1)
    assert np.abs(fd - B.grads(p)).max() < 1e-5 * max(1.0, np.abs(B.grads(p)).max())


@pytest.mark.parametrize("k", range(6))
def test_edge_basis_orthonormal(k):
    q = edge_quadrature(2 * k)
    V = EdgeBasis(k).values(q.points[:, 0])
    assert np.abs(V.T @ (q.weights[:, None] * V) - np.eye(k + 1)).max() < 1e-13
