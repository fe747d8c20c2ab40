"""Broken element spaces, edge spaces, and elementwise projections.

Coefficients of a broken field are stored as ``(n_elements, ncomp, dim P_k)``
and flattened in that order; edge fields as ``(n_edges, ncomp, k + 1)``.
Symmetric tensors use the three components ``(s11, s12, s22)``.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np

from .basis import EdgeBasis, TriBasis, dim_p, edge_quadrature, tri_quadrature
from .mesh import Mesh


class Kind(enum.Enum):
    SCALAR = 1
    VECTOR2 = 2
    SYMTENSOR2 = 3

    @property
    def ncomp(self) -> int:
        return self.value


# Frobenius weights for (s11, s12, s22) storage
VOIGT_METRIC = np.array([1.0, 2.0, 1.0])


class DegreeTuple(NamedTuple):
    """Polynomial degrees for (flux/stress, its edge correction, displacement, its edge correction)."""

    flux: int
    flux_check: int
    disp: int
    disp_check: int

    @classmethod
    def parse(cls, value) -> "DegreeTuple":
        if isinstance(value, str):
            value = [int(v) for v in value.replace(" ", "").split(",")]
        vals = tuple(int(v) for v in value)
        if len(vals) != 4 or min(vals) < 0:
            raise ValueError(f"degree tuple needs four nonnegative integers, got {value!r}")
        return cls(*vals)

    @classmethod
    def superconvergent(cls, k: int) -> "DegreeTuple":
        return cls(k + 1, k, k, k + 1)

    @property
    def k(self) -> int:
        return self.disp

    def is_superconvergent(self) -> bool:
        k = self.disp
        return self == DegreeTuple.superconvergent(k)

    def __str__(self) -> str:
        return ",".join(str(v) for v in self)


@dataclass(frozen=True, eq=False)
class BrokenSpace:
    mesh: Mesh
    kind: Kind
    degree: int

    @cached_property
    def basis(self) -> TriBasis:
        return TriBasis(self.degree)

    @property
    def nb(self) -> int:
        return dim_p(self.degree)

    @property
    def ncomp(self) -> int:
        return self.kind.ncomp

    @property
    def local_dim(self) -> int:
        return self.nb * self.ncomp

    @property
    def ndof(self) -> int:
        return self.mesh.n_elements * self.local_dim

    def offsets(self) -> np.ndarray:
        return np.arange(self.mesh.n_elements + 1) * self.local_dim

    def element_dofs(self, elements=None) -> np.ndarray:
        e = np.arange(self.mesh.n_elements) if elements is None else np.asarray(elements)
        return e[:, None] * self.local_dim + np.arange(self.local_dim)[None, :]

    def reshape(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs).reshape(self.mesh.n_elements, self.ncomp, self.nb)

    # -- evaluation ---------------------------------------------------------
    def evaluate(self, coeffs: np.ndarray, ref_points: np.ndarray) -> np.ndarray:
        """Values at reference points on every element, ``(nel, nq, ncomp)``."""
        V = self.basis.values(ref_points)
        return np.einsum("eci,qi->eqc", self.reshape(coeffs), V)

    def evaluate_at(self, coeffs: np.ndarray, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Values at physical ``points`` ``(n, m, 2)`` inside ``elements`` ``(n,)``."""
        ref = self.mesh.to_reference(points, elements)
        V = self.basis.values(ref)
        C = self.reshape(coeffs)[elements]
        return np.einsum("eci,emi->emc", C, V)

    def physical_grads(self, ref_points: np.ndarray) -> np.ndarray:
        """Basis gradients ``(nel, nq, nb, 2)``."""
        G = self.basis.grads(ref_points)
        return np.einsum("eji,qbj->eqbi", self.mesh.inverse_jacobians, G)

    def l2_project(self, f: Callable, exactness: int | None = None) -> np.ndarray:
        """Elementwise L^2 projection of a pointwise callable ``f(x) -> (..., ncomp)``."""
        if exactness is None:
            exactness = min(2 * self.degree + 8, 20)
        q = tri_quadrature(exactness)
        X = self.mesh.to_physical(q.points)
        F = np.asarray(f(X), float)
        if self.ncomp == 1 and F.shape == X.shape[:-1]:
            F = F[..., None]
        V = self.basis.values(q.points)
        # orthonormal reference basis: physical mass is det(J) * I
        C = np.einsum("eqc,q,qi->eci", F, q.weights, V)
        return C.ravel()

    def l2_norm(self, coeffs: np.ndarray, metric: np.ndarray | None = None) -> float:
        C = self.reshape(coeffs)
        w = np.ones(self.ncomp) if metric is None else metric
        return float(np.sqrt(np.einsum("e,eci,c->", self.mesh.dets, C**2, w)))

    def truncate(self, coeffs: np.ndarray, degree: int) -> np.ndarray:
        """Coefficients of the L^2 projection onto ``P_degree`` (same storage)."""
        C = self.reshape(coeffs).copy()
        C[:, :, dim_p(degree):] = 0.0
        return C.ravel()

    def restrict(self, coeffs: np.ndarray, degree: int) -> np.ndarray:
        """Coefficients of the projection onto ``P_degree`` expressed in that smaller space."""
        return np.ascontiguousarray(self.reshape(coeffs)[:, :, :dim_p(degree)]).ravel()

    def prolong(self, coeffs: np.ndarray, degree: int) -> np.ndarray:
        """Embed coefficients of this space into the broken space of higher ``degree``."""
        C = self.reshape(coeffs)
        out = np.zeros(C.shape[:2] + (dim_p(degree),))
        out[:, :, :self.nb] = C
        return out.ravel()


@dataclass(frozen=True, eq=False)
class EdgeSpace:
    mesh: Mesh
    kind: Kind
    degree: int

    @cached_property
    def basis(self) -> EdgeBasis:
        return EdgeBasis(self.degree)

    @property
    def nb(self) -> int:
        return self.degree + 1

    @property
    def ncomp(self) -> int:
        return self.kind.ncomp

    @property
    def local_dim(self) -> int:
        return self.nb * self.ncomp

    @property
    def ndof(self) -> int:
        return self.mesh.n_edges * self.local_dim

    def offsets(self) -> np.ndarray:
        return np.arange(self.mesh.n_edges + 1) * self.local_dim

    def edge_dofs(self) -> np.ndarray:
        return np.arange(self.ndof).reshape(self.mesh.n_edges, self.local_dim)

    def reshape(self, coeffs: np.ndarray) -> np.ndarray:
        return np.asarray(coeffs).reshape(self.mesh.n_edges, self.ncomp, self.nb)

    def evaluate(self, coeffs: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Values ``(n_edges, ns, ncomp)`` at edge parameters ``s``."""
        return np.einsum("eci,qi->eqc", self.reshape(coeffs), self.basis.values(s))

    def l2_project_edge(self, g: Callable, exactness: int | None = None) -> np.ndarray:
        """Edgewise L^2 projection of a callable of physical points."""
        if exactness is None:
            exactness = min(2 * self.degree + 8, 25)
        q = edge_quadrature(exactness)
        s = q.points[:, 0]
        X = self.mesh.edge_points(s)
        G = np.asarray(g(X), float)
        if self.ncomp == 1 and G.shape == X.shape[:-1]:
            G = G[..., None]
        return self.project_values(G, q.weights, s)

    def project_values(self, values: np.ndarray, weights: np.ndarray, s: np.ndarray) -> np.ndarray:
        """Project sampled values ``(n_edges, nq, ncomp)`` given the rule on ``[0,1]``."""
        P = self.basis.values(s)
        return np.einsum("eqc,q,qi->eci", values, weights, P).ravel()


# --------------------------------------------------------------------------
# rigid motions
# --------------------------------------------------------------------------

def rigid_motion_basis(points: np.ndarray) -> np.ndarray:
    """``(1,0), (0,1), (y,-x)`` at physical points, shape ``points.shape[:-1] + (3, 2)``."""
    x = points[..., 0]
    y = points[..., 1]
    one = np.ones_like(x)
    zero = np.zeros_like(x)
    return np.stack([
        np.stack([one, zero], -1),
        np.stack([zero, one], -1),
        np.stack([y, -x], -1),
    ], axis=-2)


def _rm_normal_equations(mesh: Mesh, elements: np.ndarray, exactness: int):
    q = tri_quadrature(exactness)
    X = mesh.to_physical(q.points, elements)
    Z = rigid_motion_basis(X)                              # (n, nq, 3, 2)
    w = q.weights[None, :] * mesh.dets[elements][:, None]
    G = np.einsum("eq,eqad,eqbd->eab", w, Z, Z)
    return q, X, Z, w, G


def project_rigid_motions(mesh: Mesh, element: int, v: Callable, exactness: int = 12) -> np.ndarray:
    """L^2 projection of ``v`` onto rigid motions of one element.

    Returns the three coefficients with respect to ``(1,0), (0,1), (y,-x)``.
    """
    el = np.array([element])
    q, X, Z, w, G = _rm_normal_equations(mesh, el, exactness)
    V = np.asarray(v(X), float)
    rhs = np.einsum("eq,eqad,eqd->ea", w, Z, V)
    return np.linalg.solve(G, rhs[..., None])[0, :, 0]


def rigid_motion_projection(space: BrokenSpace, coeffs: np.ndarray) -> np.ndarray:
    """Rigid-motion coefficients ``(nel, 3)`` of a broken vector field."""
    if space.kind is not Kind.VECTOR2:
        raise ValueError("rigid-motion projection needs a vector field")
    el = np.arange(space.mesh.n_elements)
    q, X, Z, w, G = _rm_normal_equations(space.mesh, el, 2 * space.degree + 2)
    V = space.evaluate(coeffs, q.points)
    rhs = np.einsum("eq,eqad,eqd->ea", w, Z, V)
    return np.linalg.solve(G, rhs[..., None])[..., 0]


def rigid_motion_to_broken(space: BrokenSpace, rm: np.ndarray) -> np.ndarray:
    """Coefficients in ``space`` (degree >= 1) of the rigid motions ``rm`` ``(nel, 3)``."""
    def field(X):
        Z = rigid_motion_basis(X)
        return np.einsum("ea,eqad->eqd", rm, Z)
    return space.l2_project(field, exactness=2 * space.degree + 2)


def strain_of_rigid_motion(rm: np.ndarray) -> np.ndarray:
    """Symmetric gradient ``(e11, e12, e22)`` of ``a(1,0) + b(0,1) + c(y,-x)``: always zero."""
    rm = np.atleast_2d(rm)
    a, b, c = rm[:, 0], rm[:, 1], rm[:, 2]
    # grad of (a + c y, b - c x) = [[0, c], [-c, 0]]
    grad = np.stack([np.zeros_like(a), c, -c, np.zeros_like(a)], -1).reshape(-1, 2, 2)
    eps = 0.5 * (grad + grad.transpose(0, 2, 1))
    return np.stack([eps[:, 0, 0], eps[:, 0, 1], eps[:, 1, 1]], -1)
