"""Four-field mixed DG discretization of ``c p = grad u``, ``div p = f`` with ``u = 0`` on the Dirichlet part.

Unknowns are the flux ``p`` (broken vectors), its edge correction ``p_check``
(edge vectors), the potential ``u`` (broken scalars), and its edge correction
``u_check`` (edge scalars).  The edge equations give ``p_check = -tau Pi[u]``
and ``u_check = -eta Pi[p]`` with ``Pi`` the edge L^2 projection, so by default
both are eliminated before the global solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import (SparseBuilder, div_basis, dof_owners, edge_rule, edge_unknown_trace, edge_weights,
                       moment_op, pair_edges, sparse_solve, tabulate_volume, value_basis)
from .basis import MAX_BASIS_DEGREE, tri_quadrature
from .errors import ConfigError, InvalidCoefficient
from .forms import PenaltyParams, Traces
from .mesh import Mesh
from .spaces import BrokenSpace, DegreeTuple, EdgeSpace, Kind


@dataclass
class ScalarCase:
    """Coefficient, source, and (optionally) exact solution of the scalar problem.

    ``c`` may be ``None`` (identity), a constant 2x2 array, or a callable
    returning ``(..., 2, 2)`` at physical points ``(..., 2)``.
    """

    f: Callable
    c: object = None
    u_exact: Callable | None = None
    p_exact: Callable | None = None
    grad_u: Callable | None = None
    hessian_u: Callable | None = None
    neumann: Callable | None = None
    name: str = "custom"

    def coefficient(self, X: np.ndarray) -> np.ndarray:
        shape = X.shape[:-1] + (2, 2)
        if self.c is None:
            return np.broadcast_to(np.eye(2), shape)
        if callable(self.c):
            C = np.asarray(self.c(X), float)
        else:
            C = np.broadcast_to(np.asarray(self.c, float), shape)
        return C

    def check_coefficient(self, X: np.ndarray) -> None:
        C = self.coefficient(X).reshape(-1, 2, 2)
        if not np.allclose(C, C.transpose(0, 2, 1), atol=1e-12):
            raise InvalidCoefficient("coefficient c is not symmetric")
        if np.linalg.eigvalsh(C).min() <= 0:
            raise InvalidCoefficient("coefficient c is not positive definite")

    @property
    def constant_coefficient(self) -> bool:
        return not callable(self.c)


def sine_case(c=None) -> ScalarCase:
    """``u = sin(pi x) sin(pi y)`` with ``p = c^-1 grad u`` and ``f = div p`` (constant ``c``)."""
    pi = np.pi
    Cin = np.linalg.inv(np.eye(2) if c is None else np.asarray(c, float))

    def u(X):
        return np.sin(pi * X[..., 0]) * np.sin(pi * X[..., 1])

    def grad(X):
        x, y = X[..., 0], X[..., 1]
        return np.stack([pi * np.cos(pi * x) * np.sin(pi * y), pi * np.sin(pi * x) * np.cos(pi * y)], -1)

    def hess(X):
        x, y = X[..., 0], X[..., 1]
        s = -pi**2 * np.sin(pi * x) * np.sin(pi * y)
        m = pi**2 * np.cos(pi * x) * np.cos(pi * y)
        return np.stack([np.stack([s, m], -1), np.stack([m, s], -1)], -2)

    def p(X):
        return np.einsum("ab,...b->...a", Cin, grad(X))

    def f(X):
        return np.einsum("ab,...ab->...", Cin, hess(X))

    return ScalarCase(f=f, c=c, u_exact=u, p_exact=p, grad_u=grad, hessian_u=hess, name="sine")


# --------------------------------------------------------------------------
# system
# --------------------------------------------------------------------------

@dataclass
class ScalarSpaces:
    flux: BrokenSpace
    flux_check: EdgeSpace
    disp: BrokenSpace
    disp_check: EdgeSpace

    @classmethod
    def build(cls, mesh: Mesh, alpha: DegreeTuple) -> "ScalarSpaces":
        return cls(BrokenSpace(mesh, Kind.VECTOR2, alpha.flux),
                   EdgeSpace(mesh, Kind.VECTOR2, alpha.flux_check),
                   BrokenSpace(mesh, Kind.SCALAR, alpha.disp),
                   EdgeSpace(mesh, Kind.SCALAR, alpha.disp_check))


@dataclass
class ScalarSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: dict
    mesh: Mesh
    degrees: DegreeTuple
    params: PenaltyParams
    case: ScalarCase
    spaces: ScalarSpaces
    monolithic: bool
    recovery: dict = field(default_factory=dict, repr=False)

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


@dataclass
class ScalarFourFieldSolution:
    mesh: Mesh
    degrees: DegreeTuple
    params: PenaltyParams
    case: ScalarCase
    spaces: ScalarSpaces
    p: np.ndarray
    p_check: np.ndarray
    u: np.ndarray
    u_check: np.ndarray
    n_unknowns: int = 0

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.p, self.p_check, self.u, self.u_check])


def _validate(alpha) -> DegreeTuple:
    try:
        alpha = DegreeTuple.parse(alpha)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if max(alpha) > MAX_BASIS_DEGREE - 2:
        raise ConfigError(f"degrees above {MAX_BASIS_DEGREE - 2} are not supported")
    return alpha


def _volume_blocks(spaces: ScalarSpaces, case: ScalarCase, exactness: int):
    """(c p, q) and (u, div q) element blocks, and the load (f, v)."""
    Q, V = spaces.flux, spaces.disp
    tq = tabulate_volume(Q, exactness)
    Vq = value_basis(Q, tq)                                   # (nq, 2, nd)
    C = case.coefficient(tq.points)                           # (nel, nq, 2, 2)
    case.check_coefficient(tq.points)
    CV = np.einsum("eqab,qbj->eqaj", C, Vq)
    A = np.einsum("eq,qai,eqaj->eij", tq.weights, Vq, CV, optimize=True)
    Vu = V.basis.values(tri_quadrature(exactness).points)    # (nq, nbu)
    divq = div_basis(Q, tq)[:, :, 0, :]                       # (nel, nq, nd)
    B = np.einsum("eq,eqi,qj->eij", tq.weights, divq, Vu, optimize=True)
    F = np.asarray(case.f(tq.points), float)
    load = np.einsum("eq,eq,qj->ej", tq.weights, F, Vu)
    return A, B, load


def _edge_ops(spaces: ScalarSpaces, s: np.ndarray, wq: np.ndarray):
    Tq = Traces(spaces.flux, s)
    Tv = Traces(spaces.disp, s)
    ops = {
        "avg_u": Tv.average(),
        "jump_u": Tv.jump(),
        "avg_p": Tq.average(),
        "jump_p": Tq.normal_jump(),
    }
    return ops


def assemble_scalar(mesh: Mesh, alpha, params: PenaltyParams, case: ScalarCase,
                    monolithic: bool = False, exactness: int | None = None) -> ScalarSystem:
    """Assemble the four-field system; ``monolithic=False`` eliminates the edge unknowns."""
    alpha = _validate(alpha)
    if case.neumann is not None:
        mesh = mesh.with_tags(case.neumann)
    spaces = ScalarSpaces.build(mesh, alpha)
    kmax = max(alpha)
    if exactness is None:
        exactness = min(2 * (kmax + 2) + 2, 20)
    if exactness < 2 * (alpha.flux + 1):
        raise ConfigError("quadrature exactness too low for the flux space")
    gamma = params.gamma_vector
    tau = params.tau(mesh)
    eta = params.eta(mesh)

    nP, nU = spaces.flux.ndof, spaces.disp.ndof
    nPc, nUc = spaces.flux_check.ndof, spaces.disp_check.ndof
    if monolithic:
        off = {"p": 0, "p_check": nP, "u": nP + nPc, "u_check": nP + nPc + nU}
        n = nP + nPc + nU + nUc
    else:
        off = {"p": 0, "u": nP}
        n = nP + nU
    K = SparseBuilder((n, n))
    rhs = np.zeros(n)

    # volume terms
    A, B, load = _volume_blocks(spaces, case, exactness)
    dq = spaces.flux.element_dofs()
    du = spaces.disp.element_dofs()
    K.add(dq + off["p"], dq + off["p"], A)
    K.add(dq + off["p"], du + off["u"], B)                       # (u, div q)
    K.add(du + off["u"], dq + off["p"], -B.transpose(0, 2, 1))   # -(div p, v)
    rhs[du.ravel() + off["u"]] = -load.ravel()

    # edge terms
    s, wq = edge_rule(min(2 * kmax + 2, 25))
    ops = _edge_ops(spaces, s, wq)
    w = edge_weights(mesh, wq)
    Pu, Pp = ops["avg_u"], ops["jump_p"]
    g_dot_jump_u = ops["jump_u"].mapped(gamma[None, :])          # gamma . [u]
    g_jump_p = ops["jump_p"].mapped(gamma[:, None])              # gamma [p]
    # eq. 1 (test q): -<{u} - gamma.[u], [q]>
    pair_edges(K, ops["jump_p"], Pu, w, scale=-1.0, row_offset=off["p"], col_offset=off["u"])
    pair_edges(K, ops["jump_p"], g_dot_jump_u, w, scale=1.0, row_offset=off["p"], col_offset=off["u"])
    # eq. 2 (test v): -<gamma [p], [v]> + <[p], {v}>
    pair_edges(K, ops["jump_u"], g_jump_p, w, scale=-1.0, row_offset=off["u"], col_offset=off["p"])
    pair_edges(K, ops["avg_u"], Pp, w, scale=1.0, row_offset=off["u"], col_offset=off["p"])

    Ppc = spaces.flux_check.basis.values(s)
    Puc = spaces.disp_check.basis.values(s)
    if monolithic:
        Tpc = edge_unknown_trace(spaces.flux_check, s)
        Tuc = edge_unknown_trace(spaces.disp_check, s)
        # eq. 1: -<u_check, [q]>;  eq. 2: -<p_check, [v]>
        pair_edges(K, ops["jump_p"], Tuc, w, scale=-1.0, row_offset=off["p"], col_offset=off["u_check"])
        pair_edges(K, ops["jump_u"], Tpc, w, scale=-1.0, row_offset=off["u"], col_offset=off["p_check"])
        # eq. 3: -<tau^-1 p_check + [u], q_check>
        pair_edges(K, Tpc, Tpc, edge_weights(mesh, wq, 1.0 / tau), scale=-1.0,
                   row_offset=off["p_check"], col_offset=off["p_check"])
        pair_edges(K, Tpc, ops["jump_u"], w, scale=-1.0, row_offset=off["p_check"], col_offset=off["u"])
        # eq. 4: <eta^-1 u_check + [p], v_check>
        pair_edges(K, Tuc, Tuc, edge_weights(mesh, wq, 1.0 / eta), scale=1.0,
                   row_offset=off["u_check"], col_offset=off["u_check"])
        pair_edges(K, Tuc, ops["jump_p"], w, scale=1.0, row_offset=off["u_check"], col_offset=off["p"])
        recovery = {}
    else:
        Mu = moment_op(ops["jump_u"], Ppc, wq)                    # Pi[u] onto flux_check degree
        Mp = moment_op(ops["jump_p"], Puc, wq)                    # Pi[p] onto disp_check degree
        hm = mesh.lengths[:, None] * np.ones(Ppc.shape[1])[None, :]
        hp = mesh.lengths[:, None] * np.ones(Puc.shape[1])[None, :]
        # eq. 1: -<u_check, [q]> = +eta <Pi[p], [q]>
        pair_edges(K, Mp, Mp, hp * eta[:, None], scale=1.0, row_offset=off["p"], col_offset=off["p"])
        # eq. 2: -<p_check, [v]> = +tau <Pi[u], [v]>
        pair_edges(K, Mu, Mu, hm * tau[:, None], scale=1.0, row_offset=off["u"], col_offset=off["u"])
        recovery = {"moment_jump_u": Mu, "moment_jump_p": Mp}

    return ScalarSystem(K.tocsr(), rhs, off, mesh, alpha, params, case, spaces, monolithic, recovery)


def _recover_checks(system: ScalarSystem, p: np.ndarray, u: np.ndarray):
    mesh = system.mesh
    tau = system.params.tau(mesh)
    eta = system.params.eta(mesh)
    Mu = system.recovery["moment_jump_u"]
    Mp = system.recovery["moment_jump_p"]
    # moment arrays are (nE, nb, m); edge storage is (nE, m, nb)
    jump_u = Mu.apply(u)
    jump_p = Mp.apply(p)
    p_check = (-tau[:, None, None] * jump_u).transpose(0, 2, 1).ravel()
    u_check = (-eta[:, None, None] * jump_p).transpose(0, 2, 1).ravel()
    return p_check, u_check


def solve(system: ScalarSystem) -> ScalarFourFieldSolution:
    sp_ = system.spaces
    if system.monolithic:
        blocks = [("element", sp_.flux.local_dim), ("edge", sp_.flux_check.local_dim),
                  ("element", sp_.disp.local_dim), ("edge", sp_.disp_check.local_dim)]
    else:
        blocks = [("element", sp_.flux.local_dim), ("element", sp_.disp.local_dim)]
    x = sparse_solve(system.matrix, system.rhs, owners=dof_owners(system.mesh, blocks), mesh=system.mesh)
    off = system.offsets
    p = x[off["p"]:off["p"] + sp_.flux.ndof]
    u = x[off["u"]:off["u"] + sp_.disp.ndof]
    if system.monolithic:
        p_check = x[off["p_check"]:off["p_check"] + sp_.flux_check.ndof]
        u_check = x[off["u_check"]:off["u_check"] + sp_.disp_check.ndof]
    else:
        p_check, u_check = _recover_checks(system, p, u)
    return ScalarFourFieldSolution(system.mesh, system.degrees, system.params, system.case, sp_,
                                   p.copy(), p_check, u.copy(), u_check, system.n_unknowns)


def solve_scalar(mesh: Mesh, alpha, params: PenaltyParams, case: ScalarCase,
                 monolithic: bool = False) -> ScalarFourFieldSolution:
    return solve(assemble_scalar(mesh, alpha, params, case, monolithic=monolithic))


def residuals(sol: ScalarFourFieldSolution) -> dict:
    """Relative residuals of the four equations evaluated on the monolithic operator."""
    system = assemble_scalar(sol.mesh, sol.degrees, sol.params, sol.case, monolithic=True)
    x = sol.stacked()
    r = system.matrix @ x - system.rhs
    scale = max(np.linalg.norm(system.rhs), 1e-300)
    off = system.offsets
    names = ["p", "p_check", "u", "u_check"]
    ends = [off["p_check"], off["u"], off["u_check"], system.n_unknowns]
    starts = [off[nm] for nm in names]
    eqs = {"p": "eq1", "p_check": "eq3", "u": "eq2", "u_check": "eq4"}
    return {eqs[nm]: float(np.linalg.norm(r[a:b]) / scale) for nm, a, b in zip(names, starts, ends)}


def reconstruct_phat(sol: ScalarFourFieldSolution, degree: int | None = None) -> tuple[EdgeSpace, np.ndarray]:
    """Edge flux ``{p} + gamma [p] + p_check`` projected onto (vector) edge polynomials.

    The default degree is that of the flux space, which holds every term exactly.
    """
    mesh = sol.mesh
    deg = sol.degrees.flux if degree is None else degree
    space = EdgeSpace(mesh, Kind.VECTOR2, deg)
    s, wq = edge_rule(min(2 * max(deg, sol.degrees.flux) + 2, 25))
    Tq = Traces(sol.spaces.flux, s)
    gamma = sol.params.gamma_vector
    vals = Tq.average().apply(sol.p) + Tq.normal_jump().mapped(gamma[:, None]).apply(sol.p)
    vals = vals + sol.spaces.flux_check.evaluate(sol.p_check, s)
    return space, space.project_values(vals, wq, s)
