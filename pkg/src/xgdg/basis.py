"""Reference-element polynomial bases and quadrature rules.

The reference triangle is ``{(0,0), (1,0), (0,1)}`` and the reference edge is
``[0, 1]``.  Triangle bases are monomials orthonormalized (in graded order)
against the exact reference mass matrix, so the first ``dim P_m`` functions
always span ``P_m``.  Elementwise ``L^2`` projections onto lower degrees are
therefore coefficient truncations.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from math import factorial

import numpy as np
from numpy.polynomial import legendre
from scipy.special import roots_jacobi

MAX_TRI_EXACTNESS = 20
MAX_EDGE_EXACTNESS = 25
MAX_BASIS_DEGREE = 10


class UnsupportedOrder(ValueError):
    pass


def dim_p(k: int) -> int:
    """Dimension of the 2D polynomial space of total degree ``k``."""
    return (k + 1) * (k + 2) // 2 if k >= 0 else 0


def monomial_exponents(k: int) -> list[tuple[int, int]]:
    """Graded exponent list ``[(a, b), ...]`` for ``x^a y^b`` with ``a + b <= k``."""
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


def tri_monomial_integral(a: int, b: int) -> Fraction:
    """Exact integral of ``x^a y^b`` over the reference triangle."""
    return Fraction(factorial(a) * factorial(b), factorial(a + b + 2))


# --------------------------------------------------------------------------
# quadrature
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # (nq, dim)
    weights: np.ndarray  # (nq,)
    exactness: int

    def __len__(self) -> int:
        return len(self.weights)


@lru_cache(maxsize=None)
def tri_quadrature(exactness: int) -> QuadratureRule:
    """Positive-weight rule on the reference triangle exact to total degree ``exactness``."""
    d = int(exactness)
    if d < 0 or d > MAX_TRI_EXACTNESS:
        raise UnsupportedOrder(f"triangle quadrature of degree {d} is not available (0..{MAX_TRI_EXACTNESS})")
    if d <= 1:
        pts = np.array([[1.0 / 3.0, 1.0 / 3.0]])
        wts = np.array([0.5])
    elif d == 2:
        pts = np.array([[1 / 6, 1 / 6], [2 / 3, 1 / 6], [1 / 6, 2 / 3]])
        wts = np.full(3, 1.0 / 6.0)
    else:
        # collapsed (Duffy) product rule: x = s, y = t (1 - s)
        n = (d + 2) // 2
        sj, wj = roots_jacobi(n, 1.0, 0.0)
        s = 0.5 * (1.0 + sj)
        ws = 0.25 * wj
        tg, wg = legendre.leggauss(n)
        t = 0.5 * (1.0 + tg)
        wt = 0.5 * wg
        S, T = np.meshgrid(s, t, indexing="ij")
        pts = np.column_stack([S.ravel(), (T * (1.0 - S)).ravel()])
        wts = np.outer(ws, wt).ravel()
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, d)


@lru_cache(maxsize=None)
def edge_quadrature(exactness: int) -> QuadratureRule:
    """Gauss-Legendre rule on ``[0, 1]`` with ``ceil((d+1)/2)`` points."""
    d = int(exactness)
    if d < 0 or d > MAX_EDGE_EXACTNESS:
        raise UnsupportedOrder(f"edge quadrature of degree {d} is not available (0..{MAX_EDGE_EXACTNESS})")
    n = (d + 2) // 2
    x, w = legendre.leggauss(n)
    pts = (0.5 * (1.0 + x))[:, None]
    wts = 0.5 * w
    pts.setflags(write=False)
    wts.setflags(write=False)
    return QuadratureRule(pts, wts, d)


# --------------------------------------------------------------------------
# triangle basis
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _orthonormal_coefficients(k: int) -> np.ndarray:
    """Rows are monomial coefficients of the orthonormal functions (graded order).

    Uses an exact rational LDL^T of the monomial mass matrix; only the final
    ``D^{-1/2}`` scaling is done in floating point.
    """
    exps = monomial_exponents(k)
    n = len(exps)
    M = [[tri_monomial_integral(a1 + a2, b1 + b2) for (a2, b2) in exps] for (a1, b1) in exps]
    L = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    D = [Fraction(0)] * n
    for j in range(n):
        D[j] = M[j][j] - sum(L[j][m] ** 2 * D[m] for m in range(j))
        for i in range(j + 1, n):
            L[i][j] = (M[i][j] - sum(L[i][m] * L[j][m] * D[m] for m in range(j))) / D[j]
    # invert the unit lower triangular factor exactly
    Linv = [[Fraction(0)] * n for _ in range(n)]
    for i in range(n):
        Linv[i][i] = Fraction(1)
        for j in range(i):
            Linv[i][j] = -sum(L[i][m] * Linv[m][j] for m in range(j, i))
    C = np.array([[float(Linv[i][j]) for j in range(n)] for i in range(n)])
    scale = np.array([1.0 / np.sqrt(float(d)) for d in D])
    return scale[:, None] * C


def _monomials(points: np.ndarray, k: int) -> np.ndarray:
    x = points[..., 0]
    y = points[..., 1]
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(k):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    return np.stack([xp[a] * yp[b] for (a, b) in monomial_exponents(k)], axis=-1)


def _monomial_grads(points: np.ndarray, k: int) -> np.ndarray:
    x = points[..., 0]
    y = points[..., 1]
    xp = [np.ones_like(x)]
    yp = [np.ones_like(y)]
    for _ in range(k):
        xp.append(xp[-1] * x)
        yp.append(yp[-1] * y)
    zero = np.zeros_like(x)
    gx, gy = [], []
    for (a, b) in monomial_exponents(k):
        gx.append(a * xp[a - 1] * yp[b] if a > 0 else zero)
        gy.append(b * xp[a] * yp[b - 1] if b > 0 else zero)
    return np.stack([np.stack(gx, -1), np.stack(gy, -1)], axis=-1)


@dataclass(frozen=True)
class TriBasis:
    """Orthonormal basis of ``P_k`` on the reference triangle."""

    degree: int

    def __post_init__(self):
        if self.degree < 0 or self.degree > MAX_BASIS_DEGREE:
            raise UnsupportedOrder(f"basis degree {self.degree} outside 0..{MAX_BASIS_DEGREE}")

    @property
    def dim(self) -> int:
        return dim_p(self.degree)

    @property
    def coefficients(self) -> np.ndarray:
        return _orthonormal_coefficients(self.degree)

    def values(self, points: np.ndarray) -> np.ndarray:
        """Basis values, shape ``points.shape[:-1] + (dim,)``."""
        return _monomials(np.asarray(points, float), self.degree) @ self.coefficients.T

    def grads(self, points: np.ndarray) -> np.ndarray:
        """Reference gradients, shape ``points.shape[:-1] + (dim, 2)``."""
        g = _monomial_grads(np.asarray(points, float), self.degree)
        return np.einsum("ij,...jd->...id", self.coefficients, g)

    def mass_matrix(self) -> np.ndarray:
        """Reference mass matrix by an exact-degree rule (the identity up to round-off).

        Forming ``C M C^T`` from the monomial mass matrix in floating point loses
        digits to cancellation from degree 4 on, so quadrature is used instead.
        """
        q = tri_quadrature(min(2 * self.degree, MAX_TRI_EXACTNESS))
        V = self.values(q.points)
        return V.T @ (q.weights[:, None] * V)


def monomial_mass_matrix(k: int) -> np.ndarray:
    exps = monomial_exponents(k)
    return np.array([[float(tri_monomial_integral(a1 + a2, b1 + b2)) for (a2, b2) in exps]
                     for (a1, b1) in exps])


# --------------------------------------------------------------------------
# edge basis
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class EdgeBasis:
    """Orthonormal shifted Legendre basis ``sqrt(2j+1) P_j(2s-1)`` on ``[0, 1]``."""

    degree: int

    @property
    def dim(self) -> int:
        return self.degree + 1

    def values(self, s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, float)
        t = 2.0 * s - 1.0
        out = legendre.legvander(t, self.degree)
        return out * np.sqrt(2.0 * np.arange(self.degree + 1) + 1.0)
