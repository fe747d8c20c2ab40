"""Averages, jumps, penalty parameters, and the DG integration-by-parts identities.

Jump conventions on an edge with stored normal ``n`` (outward from the "+"
element):

* scalar ``v``:  ``[v] = v+ n - v- n`` (vector); Dirichlet ``v n``; Neumann 0
* vector ``q``:  ``[q] = q+.n - q-.n``; Dirichlet 0; Neumann ``q.n``
* vector ``v`` (elasticity): ``[v] = J(v+) - J(v-)`` with
  ``J(w) = w n^T + n w^T - (w.n) I``; Dirichlet ``J(v)``; Neumann 0
* symmetric ``t``: ``[t] = t+ n - t- n``; Dirichlet 0; Neumann ``t n``

Averages are the arithmetic mean inside and the one-sided trace on the boundary.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import (EdgeSides, TraceOp, div_basis, edge_rule, edge_weights, strain_basis,
                       tabulate_volume)
from .mesh import DIRICHLET, INTERIOR, NEUMANN, Mesh
from .spaces import VOIGT_METRIC, BrokenSpace, Kind


@dataclass(frozen=True)
class PenaltyParams:
    """Edge penalty rule ``tau = rho1 h_e``, ``eta = 1 / (rho2 h_e)`` and the switch vector ``gamma``.

    ``rho2`` defaults to ``rho1`` (the scalar rule ``eta = (rho h_e)^-1``).
    A scalar ``gamma`` means the constant vector ``(gamma, gamma)``.  Explicit
    per-edge arrays ``eta_edges`` / ``tau_edges`` override the rule.
    ``h_rule="mesh"`` replaces ``h_e`` by the largest edge length of the mesh.
    """

    rho1: float = 1.0
    rho2: float | None = None
    gamma: float | tuple = 0.0
    eta_edges: np.ndarray | None = None
    tau_edges: np.ndarray | None = None
    h_rule: str = "edge"

    def __post_init__(self):
        if not self.rho1 > 0 or (self.rho2 is not None and not self.rho2 > 0):
            raise ValueError("penalty scalings must be positive")
        if self.h_rule not in ("edge", "mesh"):
            raise ValueError("h_rule must be 'edge' or 'mesh'")

    def edge_sizes(self, mesh: Mesh) -> np.ndarray:
        if self.h_rule == "mesh":
            return np.full(mesh.n_edges, mesh.lengths.max())
        return mesh.lengths

    @property
    def gamma_vector(self) -> np.ndarray:
        g = np.atleast_1d(np.asarray(self.gamma, float))
        if g.size == 1:
            g = np.repeat(g, 2)
        if g.shape != (2,):
            raise ValueError("gamma must be a number or a 2-vector")
        return g

    def tau(self, mesh: Mesh) -> np.ndarray:
        if self.tau_edges is not None:
            return np.asarray(self.tau_edges, float)
        return self.rho1 * self.edge_sizes(mesh)

    def eta(self, mesh: Mesh) -> np.ndarray:
        if self.eta_edges is not None:
            return np.asarray(self.eta_edges, float)
        r2 = self.rho1 if self.rho2 is None else self.rho2
        return 1.0 / (r2 * self.edge_sizes(mesh))


# --------------------------------------------------------------------------
# per-edge coefficient matrices (nE, m, ncomp) for each side
# --------------------------------------------------------------------------

def _side_weights(mesh: Mesh):
    inner = mesh.tags == INTERIOR
    wp = np.where(inner, 0.5, 1.0)
    wm = np.where(inner, 0.5, 0.0)
    return wp, wm


def _masks(mesh: Mesh):
    return mesh.tags == INTERIOR, mesh.tags == DIRICHLET, mesh.tags == NEUMANN


def average_coefficients(mesh: Mesh, ncomp: int):
    wp, wm = _side_weights(mesh)
    I = np.eye(ncomp)
    return wp[:, None, None] * I, wm[:, None, None] * I


def scalar_jump_coefficients(mesh: Mesh):
    """``[v]`` for scalar ``v``: shape ``(nE, 2, 1)``."""
    inner, dirichlet, _ = _masks(mesh)
    n = mesh.normals[:, :, None]
    cp = np.where((inner | dirichlet)[:, None, None], n, 0.0)
    cm = np.where(inner[:, None, None], -n, 0.0)
    return cp, cm


def normal_jump_coefficients(mesh: Mesh):
    """``[q]`` for vector ``q``: shape ``(nE, 1, 2)``."""
    inner, _, neumann = _masks(mesh)
    n = mesh.normals[:, None, :]
    cp = np.where((inner | neumann)[:, None, None], n, 0.0)
    cm = np.where(inner[:, None, None], -n, 0.0)
    return cp, cm


def symmetric_jump_matrix(n: np.ndarray) -> np.ndarray:
    """Voigt rows of ``J(w) = w n^T + n w^T - (w.n) I`` as a map of ``w``: ``(..., 3, 2)``."""
    n1, n2 = n[..., 0], n[..., 1]
    return np.stack([
        np.stack([n1, -n2], -1),
        np.stack([n2, n1], -1),
        np.stack([-n1, n2], -1),
    ], axis=-2)


def traction_matrix(n: np.ndarray) -> np.ndarray:
    """Map from Voigt ``(s11, s12, s22)`` to ``s n``: ``(..., 2, 3)``."""
    n1, n2 = n[..., 0], n[..., 1]
    z = np.zeros_like(n1)
    return np.stack([
        np.stack([n1, n2, z], -1),
        np.stack([z, n1, n2], -1),
    ], axis=-2)


def vector_jump_coefficients(mesh: Mesh):
    """``[v]`` for vector ``v`` (symmetric tensor jump): ``(nE, 3, 2)``."""
    inner, dirichlet, _ = _masks(mesh)
    J = symmetric_jump_matrix(mesh.normals)
    cp = np.where((inner | dirichlet)[:, None, None], J, 0.0)
    cm = np.where(inner[:, None, None], -J, 0.0)
    return cp, cm


def tensor_jump_coefficients(mesh: Mesh):
    """``[t]`` for symmetric ``t``: ``(nE, 2, 3)``."""
    inner, _, neumann = _masks(mesh)
    T = traction_matrix(mesh.normals)
    cp = np.where((inner | neumann)[:, None, None], T, 0.0)
    cm = np.where(inner[:, None, None], -T, 0.0)
    return cp, cm


def gamma_tensor_matrix(gamma: np.ndarray) -> np.ndarray:
    """Voigt symmetric part of ``a gamma^T`` as a map of ``a``: ``(3, 2)``.

    Pairing a non-symmetric ``a gamma^T`` with a symmetric tensor only sees its
    symmetric part, so this is exact under the Frobenius product.
    """
    g1, g2 = gamma
    return np.array([[g1, 0.0], [0.5 * g2, 0.5 * g1], [0.0, g2]])


# --------------------------------------------------------------------------
# trace operators for a broken space
# --------------------------------------------------------------------------

class Traces:
    """Average and jump trace operators of one broken space at an edge rule."""

    def __init__(self, space: BrokenSpace, s: np.ndarray):
        self.space = space
        self.sides = EdgeSides(space, s)

    @property
    def mesh(self) -> Mesh:
        return self.space.mesh

    def one_sided(self) -> TraceOp:
        """Trace from the "+" element only."""
        I = np.broadcast_to(np.eye(self.space.ncomp), (self.mesh.n_edges, self.space.ncomp, self.space.ncomp))
        return self.sides.lift(I, np.zeros_like(I))

    def minus_side(self) -> TraceOp:
        I = np.broadcast_to(np.eye(self.space.ncomp), (self.mesh.n_edges, self.space.ncomp, self.space.ncomp))
        return self.sides.lift(np.zeros_like(I), I)

    def average(self) -> TraceOp:
        return self.sides.lift(*average_coefficients(self.mesh, self.space.ncomp))

    def jump(self) -> TraceOp:
        kind = self.space.kind
        if kind is Kind.SCALAR:
            return self.sides.lift(*scalar_jump_coefficients(self.mesh))
        if kind is Kind.SYMTENSOR2:
            return self.sides.lift(*tensor_jump_coefficients(self.mesh))
        raise ValueError("vector fields have two jumps; use normal_jump() or symmetric_jump()")

    def normal_jump(self) -> TraceOp:
        return self.sides.lift(*normal_jump_coefficients(self.mesh))

    def symmetric_jump(self) -> TraceOp:
        return self.sides.lift(*vector_jump_coefficients(self.mesh))


def _field_traces(space, coeffs, s, which):
    T = Traces(space, s)
    return {name: getattr(T, meth)().apply(coeffs) for name, meth in which}


def scalar_traces(mesh: Mesh, v_space: BrokenSpace, v: np.ndarray, q_space: BrokenSpace,
                  q: np.ndarray, s: np.ndarray):
    """``({v}, [v], {q}, [q])`` at edge parameters ``s``; arrays ``(nE, ns, m)``."""
    tv = _field_traces(v_space, v, s, [("avg", "average"), ("jump", "jump")])
    tq = _field_traces(q_space, q, s, [("avg", "average"), ("jump", "normal_jump")])
    return tv["avg"], tv["jump"], tq["avg"], tq["jump"]


def tensor_traces(mesh: Mesh, v_space: BrokenSpace, v: np.ndarray, t_space: BrokenSpace,
                  t: np.ndarray, s: np.ndarray):
    """``({v}, [v] (Voigt), {t} (Voigt), [t])`` at edge parameters ``s``."""
    tv = _field_traces(v_space, v, s, [("avg", "average"), ("jump", "symmetric_jump")])
    tt = _field_traces(t_space, t, s, [("avg", "average"), ("jump", "jump")])
    return tv["avg"], tv["jump"], tt["avg"], tt["jump"]


# --------------------------------------------------------------------------
# DG identities
# --------------------------------------------------------------------------

def _edge_integral(mesh, wq, a, b, metric=None):
    w = edge_weights(mesh, wq)
    if metric is not None:
        b = b * metric
    return float(np.einsum("eq,eqm,eqm->", w, a, b))


def _volume_terms_scalar(q_space, q, v_space, v, exactness):
    tq = tabulate_volume(q_space, exactness)
    tv = tabulate_volume(v_space, exactness)
    Q = np.einsum("eci,qi->eqc", q_space.reshape(q), tq.values)
    divQ = np.einsum("eci,eqic->eq", q_space.reshape(q), tq.grads)
    V = np.einsum("ei,qi->eq", v_space.reshape(v)[:, 0], tv.values)
    gradV = np.einsum("ei,eqid->eqd", v_space.reshape(v)[:, 0], tv.grads)
    W = tq.weights
    return float(np.einsum("eq,eqd,eqd->", W, Q, gradV)), float(np.einsum("eq,eq,eq->", W, divQ, V))


def _norm(space, x, metric=None):
    return space.l2_norm(x, metric)


def scalar_identity_residual(q_space, q, v_space, v) -> float:
    """``(q, grad_h v) + (div_h q, v) - <[q], {v}> - <{q}, [v]>`` scaled by ``|q| |v| / h``."""
    mesh = q_space.mesh
    deg = q_space.degree + v_space.degree
    s, wq = edge_rule(deg + 2)
    avg_v, jump_v, avg_q, jump_q = scalar_traces(mesh, v_space, v, q_space, q, s)
    vol_grad, vol_div = _volume_terms_scalar(q_space, q, v_space, v, deg + 2)
    r = vol_grad + vol_div - _edge_integral(mesh, wq, jump_q, avg_v) - _edge_integral(mesh, wq, avg_q, jump_v)
    scale = _norm(q_space, q) * _norm(v_space, v) / mesh.h
    return abs(r) / max(scale, 1e-300)


def tensor_identity_residual(t_space, t, v_space, v, variant: str = "normal") -> float:
    """Tensor DG identity residual.

    ``variant="normal"``: ``(t, eps_h v) + (div_h t, v) - <[t], {v}> - <{t} n, [v] n>``.
    ``variant="frobenius"``: same with ``<{t}, [v]>`` under the Frobenius product in
    the last term (the boundary-splitting form).
    """
    mesh = t_space.mesh
    deg = t_space.degree + v_space.degree
    s, wq = edge_rule(deg + 2)
    avg_v, jump_v, avg_t, jump_t = tensor_traces(mesh, v_space, v, t_space, t, s)
    tt = tabulate_volume(t_space, deg + 2)
    tv = tabulate_volume(v_space, deg + 2)
    T = np.einsum("eci,qi->eqc", t_space.reshape(t), tt.values)
    divT = np.einsum("eqaj,ej->eqa", div_basis(t_space, tt), t.reshape(mesh.n_elements, -1))
    V = np.einsum("eci,qi->eqc", v_space.reshape(v), tv.values)
    epsV = np.einsum("eqsj,ej->eqs", strain_basis(v_space, tv), v.reshape(mesh.n_elements, -1))
    W = tt.weights
    vol = float(np.einsum("eq,eqs,eqs,s->", W, T, epsV, VOIGT_METRIC)) + float(np.einsum("eq,eqa,eqa->", W, divT, V))
    r = vol - _edge_integral(mesh, wq, jump_t, avg_v)
    if variant == "normal":
        N = traction_matrix(mesh.normals)
        tn = np.einsum("eas,eqs->eqa", N, avg_t)
        # [v] n equals the vector jump of v itself
        vn = np.einsum("eas,eqs->eqa", N, jump_v)
        r -= _edge_integral(mesh, wq, tn, vn)
    elif variant == "frobenius":
        r -= _edge_integral(mesh, wq, avg_t, jump_v, VOIGT_METRIC)
    else:
        raise ValueError(variant)
    scale = _norm(t_space, t, VOIGT_METRIC) * _norm(v_space, v) / mesh.h
    return abs(r) / max(scale, 1e-300)


def verify_dg_identity(mesh: Mesh, k: int, trials: int = 100, kind: str = "scalar",
                       seed: int = 0, variant: str = "normal") -> float:
    """Max scaled identity residual over random broken fields of degree ``k``."""
    rng = np.random.default_rng(seed)
    if kind == "scalar":
        fs = BrokenSpace(mesh, Kind.VECTOR2, k)
        vs = BrokenSpace(mesh, Kind.SCALAR, k)
        fn = scalar_identity_residual
        kw = {}
    elif kind == "tensor":
        fs = BrokenSpace(mesh, Kind.SYMTENSOR2, k)
        vs = BrokenSpace(mesh, Kind.VECTOR2, k)
        fn = tensor_identity_residual
        kw = {"variant": variant}
    else:
        raise ValueError(kind)
    worst = 0.0
    for _ in range(trials):
        a = rng.standard_normal(fs.ndof)
        b = rng.standard_normal(vs.ndof)
        worst = max(worst, fn(fs, a, vs, b, **kw))
    return worst


def boundary_pairing(t_space: BrokenSpace, t: np.ndarray, v_space: BrokenSpace, v: np.ndarray) -> float:
    """``sum_K <t n_K, v>_{dK}`` evaluated element by element (no jumps involved)."""
    mesh = t_space.mesh
    s, wq = edge_rule(t_space.degree + v_space.degree + 2)
    Tt, Tv = Traces(t_space, s), Traces(v_space, s)
    N = traction_matrix(mesh.normals)
    w = edge_weights(mesh, wq)
    total = 0.0
    for sign, side_t, side_v in ((1.0, Tt.one_sided(), Tv.one_sided()), (-1.0, Tt.minus_side(), Tv.minus_side())):
        tn = np.einsum("eas,eqs->eqa", N, side_t.apply(t))
        total += sign * float(np.einsum("eq,eqa,eqa->", w, tn, side_v.apply(v)))
    return total


__all__ = [
    "PenaltyParams", "Traces", "scalar_traces", "tensor_traces", "verify_dg_identity",
    "scalar_identity_residual", "tensor_identity_residual", "boundary_pairing",
    "symmetric_jump_matrix", "traction_matrix", "gamma_tensor_matrix",
]
