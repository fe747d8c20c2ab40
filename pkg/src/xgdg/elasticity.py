"""Four-field mixed DG discretization of plane linear elasticity with symmetric stress.

Unknowns: stress ``sigma`` (broken symmetric tensors, Voigt ``(s11, s12, s22)``),
its edge correction ``sigma_check`` (edge symmetric tensors), displacement
``u`` (broken vectors), and its edge correction ``u_check`` (edge vectors).

Also provides the hybridized path: element-local stress/displacement solves
driven by an edge traction unknown plus broken rigid motions, and a global
system for those.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .assembly import (SparseBuilder, div_basis, dof_owners, edge_rule, edge_unknown_trace, edge_weights,
                       element_boundary,
                       moment_op, pair_edges, sparse_solve, strain_basis, tabulate_volume,
                       value_basis)
from .basis import MAX_BASIS_DEGREE, EdgeBasis, tri_quadrature
from .errors import ConfigError, InvalidCoefficient, SolverFailure
from .forms import PenaltyParams, Traces, gamma_tensor_matrix, traction_matrix
from .mesh import DIRICHLET, INTERIOR, NEUMANN, Mesh
from .spaces import (VOIGT_METRIC, BrokenSpace, DegreeTuple, EdgeSpace, Kind, rigid_motion_basis,
                     strain_of_rigid_motion)


@dataclass(frozen=True)
class ComplianceTensor:
    """``A s = (1 + nu)/E s - nu/E tr(s) I`` on symmetric 2x2 tensors."""

    E: float = 1.0
    nu: float = 0.4

    def __post_init__(self):
        if not self.E > 0:
            raise InvalidCoefficient("Young's modulus must be positive")
        if not 0.0 < self.nu < 0.5:
            raise InvalidCoefficient("Poisson ratio must lie in (0, 0.5)")

    @property
    def a(self) -> float:
        return (1.0 + self.nu) / self.E

    @property
    def b(self) -> float:
        return self.nu / self.E

    def voigt_form(self) -> np.ndarray:
        """Matrix ``K`` with ``A s : t = s^T K t`` for Voigt vectors."""
        a, b = self.a, self.b
        return a * np.diag(VOIGT_METRIC) - b * np.array([[1.0, 0, 1], [0, 0, 0], [1, 0, 1]])

    def apply(self, s: np.ndarray) -> np.ndarray:
        tr = s[..., 0] + s[..., 2]
        out = self.a * s.copy()
        out[..., 0] -= self.b * tr
        out[..., 2] -= self.b * tr
        return out

    def inverse_apply(self, e: np.ndarray) -> np.ndarray:
        """Stress from a Voigt strain."""
        a, b = self.a, self.b
        lam = b / (a * (a - 2.0 * b))
        tr = e[..., 0] + e[..., 2]
        out = e / a
        out[..., 0] += lam * tr
        out[..., 2] += lam * tr
        return out

    def eigenvalues(self) -> np.ndarray:
        """Eigenvalues of ``A`` in an orthonormal basis of symmetric tensors."""
        D = np.diag(1.0 / np.sqrt(VOIGT_METRIC))
        return np.linalg.eigvalsh(D @ self.voigt_form() @ D)


@dataclass
class ElasticCase:
    f: Callable
    compliance: ComplianceTensor = field(default_factory=ComplianceTensor)
    u_exact: Callable | None = None
    sigma_exact: Callable | None = None
    grad_u: Callable | None = None
    neumann: Callable | None = None
    name: str = "custom"


def sine_elastic_case(E: float = 1.0, nu: float = 0.4) -> ElasticCase:
    """``u = (s, s)`` with ``s = sin(pi x) sin(pi y)``; ``sigma = A^-1 eps(u)``, ``f = div sigma``."""
    A = ComplianceTensor(E, nu)
    pi = np.pi
    lam = A.b / (A.a * (A.a - 2.0 * A.b))

    def u(X):
        s = np.sin(pi * X[..., 0]) * np.sin(pi * X[..., 1])
        return np.stack([s, s], -1)

    def grad(X):
        x, y = X[..., 0], X[..., 1]
        sx = pi * np.cos(pi * x) * np.sin(pi * y)
        sy = pi * np.sin(pi * x) * np.cos(pi * y)
        row = np.stack([sx, sy], -1)
        return np.stack([row, row], -2)             # d u_i / d x_j

    def hess(X):
        # H[..., i, j, k] = d^2 u_i / dx_j dx_k
        x, y = X[..., 0], X[..., 1]
        s = -pi**2 * np.sin(pi * x) * np.sin(pi * y)
        m = pi**2 * np.cos(pi * x) * np.cos(pi * y)
        H = np.stack([np.stack([s, m], -1), np.stack([m, s], -1)], -2)
        return np.stack([H, H], -3)

    def sigma(X):
        G = grad(X)
        e = np.stack([G[..., 0, 0], 0.5 * (G[..., 0, 1] + G[..., 1, 0]), G[..., 1, 1]], -1)
        return A.inverse_apply(e)

    def f(X):
        H = hess(X)
        lap = H[..., :, 0, 0] + H[..., :, 1, 1]
        grad_div = H[..., 0, 0, :] + H[..., 1, 1, :]      # d_i (div u)
        return 0.5 * (lap + grad_div) / A.a + lam * grad_div

    return ElasticCase(f=f, compliance=A, u_exact=u, sigma_exact=sigma, grad_u=grad, name="sine")


@dataclass
class ElasticSpaces:
    stress: BrokenSpace
    stress_check: EdgeSpace
    disp: BrokenSpace
    disp_check: EdgeSpace

    @classmethod
    def build(cls, mesh: Mesh, alpha: DegreeTuple) -> "ElasticSpaces":
        return cls(BrokenSpace(mesh, Kind.SYMTENSOR2, alpha.flux),
                   EdgeSpace(mesh, Kind.SYMTENSOR2, alpha.flux_check),
                   BrokenSpace(mesh, Kind.VECTOR2, alpha.disp),
                   EdgeSpace(mesh, Kind.VECTOR2, alpha.disp_check))


@dataclass
class ElasticSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    offsets: dict
    mesh: Mesh
    degrees: DegreeTuple
    params: PenaltyParams
    case: ElasticCase
    spaces: ElasticSpaces
    monolithic: bool
    recovery: dict = field(default_factory=dict, repr=False)

    @property
    def n_unknowns(self) -> int:
        return self.matrix.shape[0]


@dataclass
class ElasticFourFieldSolution:
    mesh: Mesh
    degrees: DegreeTuple
    params: PenaltyParams
    case: ElasticCase
    spaces: ElasticSpaces
    sigma: np.ndarray
    sigma_check: np.ndarray
    u: np.ndarray
    u_check: np.ndarray
    n_unknowns: int = 0
    sigma_hat: np.ndarray | None = None

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.sigma, self.sigma_check, self.u, self.u_check])


def _validate(alpha) -> DegreeTuple:
    try:
        alpha = DegreeTuple.parse(alpha)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if max(alpha) > MAX_BASIS_DEGREE - 2:
        raise ConfigError(f"degrees above {MAX_BASIS_DEGREE - 2} are not supported")
    return alpha


def _volume_blocks(spaces: ElasticSpaces, case: ElasticCase, exactness: int):
    S, V = spaces.stress, spaces.disp
    mesh = S.mesh
    K = case.compliance.voigt_form()
    # orthonormal reference basis: element mass is det(J) * I per component
    A = mesh.dets[:, None, None] * np.kron(K, np.eye(S.nb))[None]
    ts = tabulate_volume(S, exactness)
    q = tri_quadrature(exactness)
    tv = tabulate_volume(V, exactness)
    Vu = value_basis(V, tv)                                    # (nq, 2, ndu)
    divs = div_basis(S, ts)                                    # (nel, nq, 2, nds)
    B = np.einsum("eq,eqai,qaj->eij", ts.weights, divs, Vu, optimize=True)   # (u, div t)
    F = np.asarray(case.f(ts.points), float)                   # (nel, nq, 2)
    load = np.einsum("eq,eqa,qaj->ej", ts.weights, F, Vu)
    return A, B, load


def assemble_elastic(mesh: Mesh, alpha, params: PenaltyParams, case: ElasticCase,
                     monolithic: bool = False, exactness: int | None = None) -> ElasticSystem:
    """Assemble the elasticity system; ``monolithic=False`` eliminates the edge unknowns."""
    alpha = _validate(alpha)
    if case.neumann is not None:
        mesh = mesh.with_tags(case.neumann)
    spaces = ElasticSpaces.build(mesh, alpha)
    kmax = max(alpha)
    if exactness is None:
        exactness = min(2 * (kmax + 2) + 2, 20)
    if exactness < 2 * (alpha.flux + 1):
        raise ConfigError("quadrature exactness too low for the stress space")
    gamma = params.gamma_vector
    tau = params.tau(mesh)
    eta = params.eta(mesh)

    nS, nU = spaces.stress.ndof, spaces.disp.ndof
    nSc, nUc = spaces.stress_check.ndof, spaces.disp_check.ndof
    if monolithic:
        off = {"sigma": 0, "sigma_check": nS, "u": nS + nSc, "u_check": nS + nSc + nU}
        n = nS + nSc + nU + nUc
    else:
        off = {"sigma": 0, "u": nS}
        n = nS + nU
    K = SparseBuilder((n, n))
    rhs = np.zeros(n)

    A, B, load = _volume_blocks(spaces, case, exactness)
    ds = spaces.stress.element_dofs()
    du = spaces.disp.element_dofs()
    K.add(ds + off["sigma"], ds + off["sigma"], A)
    K.add(ds + off["sigma"], du + off["u"], B)                      # (u, div t)
    K.add(du + off["u"], ds + off["sigma"], B.transpose(0, 2, 1))   # (div sigma, v)
    rhs[du.ravel() + off["u"]] = load.ravel()

    s, wq = edge_rule(min(2 * kmax + 2, 25))
    Ts = Traces(spaces.stress, s)
    Tu = Traces(spaces.disp, s)
    jump_s = Ts.jump()                 # vector
    avg_u = Tu.average()               # vector
    jump_u = Tu.symmetric_jump()       # Voigt tensor
    w = edge_weights(mesh, wq)
    N = traction_matrix(mesh.normals)                          # (nE, 2, 3)
    g_dot_n = mesh.normals @ gamma
    jump_u_n = jump_u.mapped(N).scaled(g_dot_n)                # (gamma.n) [u] n
    jump_s_g = jump_s.mapped(gamma_tensor_matrix(gamma))       # sym([sigma] gamma^T)

    so, uo = off["sigma"], off["u"]
    # eq. 1 (test t): -<{u} - (gamma.n)[u]n, [t]>
    pair_edges(K, jump_s, avg_u, w, scale=-1.0, row_offset=so, col_offset=uo)
    pair_edges(K, jump_s, jump_u_n, w, scale=1.0, row_offset=so, col_offset=uo)
    # eq. 2 (test v): -<[sigma], {v}> + <[sigma] gamma^T, [v]>
    pair_edges(K, avg_u, jump_s, w, scale=-1.0, row_offset=uo, col_offset=so)
    pair_edges(K, jump_u, jump_s_g, w, metric=VOIGT_METRIC, scale=1.0, row_offset=uo, col_offset=so)

    if monolithic:
        Tsc = edge_unknown_trace(spaces.stress_check, s)
        Tuc = edge_unknown_trace(spaces.disp_check, s)
        sco, uco = off["sigma_check"], off["u_check"]
        pair_edges(K, jump_s, Tuc, w, scale=-1.0, row_offset=so, col_offset=uco)
        pair_edges(K, jump_u, Tsc, w, metric=VOIGT_METRIC, scale=1.0, row_offset=uo, col_offset=sco)
        # eq. 3: <tau^-1 sigma_check + [u], t_check>
        pair_edges(K, Tsc, Tsc, edge_weights(mesh, wq, 1.0 / tau), metric=VOIGT_METRIC,
                   row_offset=sco, col_offset=sco)
        pair_edges(K, Tsc, jump_u, w, metric=VOIGT_METRIC, row_offset=sco, col_offset=uo)
        # eq. 4: <eta^-1 u_check + [sigma], v_check>
        pair_edges(K, Tuc, Tuc, edge_weights(mesh, wq, 1.0 / eta), row_offset=uco, col_offset=uco)
        pair_edges(K, Tuc, jump_s, w, row_offset=uco, col_offset=so)
        recovery = {}
    else:
        Psc = spaces.stress_check.basis.values(s)
        Puc = spaces.disp_check.basis.values(s)
        Mu = moment_op(jump_u, Psc, wq)
        Ms = moment_op(jump_s, Puc, wq)
        hu = mesh.lengths[:, None] * np.ones(Psc.shape[1])[None, :]
        hs = mesh.lengths[:, None] * np.ones(Puc.shape[1])[None, :]
        # eq. 1: -<u_check, [t]> = +eta <Pi[sigma], [t]>
        pair_edges(K, Ms, Ms, hs * eta[:, None], row_offset=so, col_offset=so)
        # eq. 2: <sigma_check, [v]> = -tau <Pi[u], [v]>
        pair_edges(K, Mu, Mu, hu * tau[:, None], metric=VOIGT_METRIC, scale=-1.0,
                   row_offset=uo, col_offset=uo)
        recovery = {"moment_jump_u": Mu, "moment_jump_sigma": Ms}
    return ElasticSystem(K.tocsr(), rhs, off, mesh, alpha, params, case, spaces, monolithic, recovery)


def _recover_checks(system: ElasticSystem, sigma: np.ndarray, u: np.ndarray):
    mesh = system.mesh
    tau = system.params.tau(mesh)
    eta = system.params.eta(mesh)
    ju = system.recovery["moment_jump_u"].apply(u)
    js = system.recovery["moment_jump_sigma"].apply(sigma)
    sigma_check = (-tau[:, None, None] * ju).transpose(0, 2, 1).ravel()
    u_check = (-eta[:, None, None] * js).transpose(0, 2, 1).ravel()
    return sigma_check, u_check


def solve_monolithic(system: ElasticSystem) -> ElasticFourFieldSolution:
    sp_ = system.spaces
    if system.monolithic:
        blocks = [("element", sp_.stress.local_dim), ("edge", sp_.stress_check.local_dim),
                  ("element", sp_.disp.local_dim), ("edge", sp_.disp_check.local_dim)]
    else:
        blocks = [("element", sp_.stress.local_dim), ("element", sp_.disp.local_dim)]
    x = sparse_solve(system.matrix, system.rhs, owners=dof_owners(system.mesh, blocks), mesh=system.mesh)
    off = system.offsets
    sigma = x[off["sigma"]:off["sigma"] + sp_.stress.ndof].copy()
    u = x[off["u"]:off["u"] + sp_.disp.ndof].copy()
    if system.monolithic:
        sc = x[off["sigma_check"]:off["sigma_check"] + sp_.stress_check.ndof].copy()
        uc = x[off["u_check"]:off["u_check"] + sp_.disp_check.ndof].copy()
    else:
        sc, uc = _recover_checks(system, sigma, u)
    return ElasticFourFieldSolution(system.mesh, system.degrees, system.params, system.case, sp_,
                                    sigma, sc, u, uc, system.n_unknowns)


def solve_elastic(mesh: Mesh, alpha, params: PenaltyParams, case: ElasticCase,
                  monolithic: bool = False) -> ElasticFourFieldSolution:
    return solve_monolithic(assemble_elastic(mesh, alpha, params, case, monolithic=monolithic))


def residuals(sol: ElasticFourFieldSolution) -> dict:
    """Relative residuals of the four equations on the full operator."""
    system = assemble_elastic(sol.mesh, sol.degrees, sol.params, sol.case, monolithic=True)
    r = system.matrix @ sol.stacked() - system.rhs
    scale = max(np.linalg.norm(system.rhs), 1e-300)
    off = system.offsets
    bounds = {"eq1": (off["sigma"], off["sigma_check"]), "eq3": (off["sigma_check"], off["u"]),
              "eq2": (off["u"], off["u_check"]), "eq4": (off["u_check"], system.n_unknowns)}
    return {k: float(np.linalg.norm(r[a:b]) / scale) for k, (a, b) in bounds.items()}


# --------------------------------------------------------------------------
# hybridization
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RigidMotionSpace:
    """Broken rigid motions contained in a broken vector space of degree ``k``.

    For ``k >= 1`` the basis on every element is ``(1,0), (0,1), (y,-x)``; for
    ``k = 0`` only the translations lie in the space.
    """

    mesh: Mesh
    degree: int

    @property
    def nb(self) -> int:
        return 3 if self.degree >= 1 else 2

    @property
    def ndof(self) -> int:
        return self.mesh.n_elements * self.nb

    def values(self, points: np.ndarray) -> np.ndarray:
        """``(..., nb, 2)`` at physical points."""
        return rigid_motion_basis(points)[..., :self.nb, :]

    def strain(self, coeffs: np.ndarray) -> np.ndarray:
        """Voigt symmetric gradient of each member: identically zero."""
        c = np.asarray(coeffs).reshape(-1, self.nb)
        if self.nb == 2:
            c = np.concatenate([c, np.zeros((len(c), 1))], 1)
        return strain_of_rigid_motion(c)

    def to_broken(self, space: BrokenSpace, coeffs: np.ndarray) -> np.ndarray:
        c = np.asarray(coeffs).reshape(self.mesh.n_elements, self.nb)

        def field(X):
            return np.einsum("ea,eqad->eqd", c, self.values(X))

        return space.l2_project(field, exactness=2 * space.degree + 2)


def hybrid_equivalent_params(mesh: Mesh, eta_local: np.ndarray) -> PenaltyParams:
    """Penalties of the four-field system reproduced exactly by the hybrid solve.

    With local stabilization ``eta_l`` the recovered fields solve the four-field
    system with ``eta = eta_l / 2``, ``tau = 1 / (4 eta_l)`` on interior edges,
    ``tau = 1 / (2 eta_l)`` on Dirichlet edges and ``eta = eta_l`` on Neumann
    edges (the other parameter drops out on boundary edges).
    """
    eta_l = np.asarray(eta_local, float)
    inner = mesh.tags == INTERIOR
    dirichlet = mesh.tags == DIRICHLET
    eta = np.where(inner, 0.5 * eta_l, eta_l)
    tau = np.where(inner, 0.25 / eta_l, np.where(dirichlet, 0.5 / eta_l, 0.25 / eta_l))
    return PenaltyParams(1.0, gamma=0.0, eta_edges=eta, tau_edges=tau)


def hybrid_local_eta(mesh: Mesh, params: PenaltyParams) -> np.ndarray:
    """Local stabilization whose equivalent four-field system keeps the interior ``tau``."""
    return 0.25 / params.tau(mesh)


@dataclass
class LocalProblems:
    """Batched element problems: stress/displacement as affine maps of the edge tractions.

    ``sigma_K = W_sigma[K] @ lam_K + sigma_f[K]`` and ``u_K = W_u[K] @ lam_K + u_f[K]``
    where ``lam_K`` gathers the traction coefficients of the three edges of ``K``
    (signed so that they act as ``sigma_hat n_K``).
    """

    mesh: Mesh
    degrees: DegreeTuple
    case: ElasticCase
    spaces: ElasticSpaces
    eta_local: np.ndarray
    lam_space: EdgeSpace
    rm: RigidMotionSpace
    lam_dofs: np.ndarray          # (nel, 3 * lam local)
    W_sigma: np.ndarray
    W_u: np.ndarray
    sigma_f: np.ndarray
    u_f: np.ndarray
    H: np.ndarray                 # (nel, nl, nl) global trace-continuity blocks
    C: np.ndarray                 # (nel, nl, nrm)
    g_lam: np.ndarray             # (nel, nl)
    g_rm: np.ndarray              # (nel, nrm)

    def solve(self, element: int, lam_local: np.ndarray, with_load: bool = True):
        """Local stress and displacement (orthogonal to rigid motions) on one element."""
        s = self.W_sigma[element] @ lam_local
        u = self.W_u[element] @ lam_local
        if with_load:
            s = s + self.sigma_f[element]
            u = u + self.u_f[element]
        return s, u


def build_local_problems(mesh: Mesh, alpha, params: PenaltyParams, case: ElasticCase,
                         eta_local: np.ndarray | None = None, exactness: int | None = None) -> LocalProblems:
    alpha = _validate(alpha)
    if np.any(params.gamma_vector != 0.0):
        raise ConfigError("the hybridized solve requires gamma = 0")
    if case.neumann is not None:
        mesh = mesh.with_tags(case.neumann)
    spaces = ElasticSpaces.build(mesh, alpha)
    S, V = spaces.stress, spaces.disp
    if eta_local is None:
        eta_local = params.eta(mesh)
    eta_local = np.asarray(eta_local, float)
    kmax = max(alpha)
    if exactness is None:
        exactness = min(2 * (kmax + 2) + 2, 20)
    nel = mesh.n_elements
    lam_space = EdgeSpace(mesh, Kind.VECTOR2, alpha.flux)
    rm = RigidMotionSpace(mesh, alpha.disp)

    # volume pieces
    A, _, load = _volume_blocks(spaces, case, exactness)
    tv = tabulate_volume(V, exactness)
    ts = tabulate_volume(S, exactness)
    eps = strain_basis(V, tv)                                       # (nel, nq, 3, ndu)
    Sv = value_basis(S, ts)                                         # (nq, 3, nds)
    E = np.einsum("eq,qsi,s,eqsj->eji", ts.weights, Sv, VOIGT_METRIC, eps, optimize=True)  # (sigma, eps v): rows v
    Z = rm.values(tv.points)                                        # (nel, nq, nrm, 2)
    Vu = value_basis(V, tv)                                         # (nq, 2, ndu)
    R = np.einsum("eq,qaj,eqza->ejz", tv.weights, Vu, Z)            # (z, v): rows v

    # boundary pieces
    bd = element_boundary(mesh, min(2 * kmax + 2, 25))
    s, X, sign, nK, hw, edges = bd.s, bd.points, bd.sign, bd.normals, bd.weights, bd.edges
    valsS = bd.values(S)                                            # (nel, 3, nq, nbs)
    valsV = bd.values(V)
    etaK = eta_local[edges]                                          # (nel, 3)
    Nk = traction_matrix(nK)                                         # (nel, 3, 2, 3)
    nbs, nbv = S.nb, V.nb
    # t n_K for each stress basis function: (nel, 3, nq, 2, 3*nbs)
    Tsn = np.einsum("ejas,ejqi->ejqasi", Nk, valsS).reshape(nel, 3, len(s), 2, 3 * nbs)
    Tv = np.einsum("ab,ejqi->ejqabi", np.eye(2), valsV).reshape(nel, 3, len(s), 2, 2 * nbv)
    psi = EdgeBasis(alpha.flux).values(s)                            # (nq, nbl)
    nbl = psi.shape[1]
    # traction basis from element K's viewpoint, block-diagonal over the three edges
    Lam = np.zeros((nel, 3, len(s), 2, 3, 2 * nbl))
    for j in range(3):
        Lam[:, j, :, :, j, :] = sign[:, j, None, None, None] * np.einsum(
            "ab,qi->qabi", np.eye(2), psi).reshape(len(s), 2, 2 * nbl)[None]
    Lam = Lam.reshape(nel, 3, len(s), 2, 3 * 2 * nbl)
    nl = Lam.shape[-1]
    # neumann edges carry zero traction
    neumann_edge = mesh.tags[edges] == NEUMANN
    Lam[neumann_edge] = 0.0

    def bpair(Ta, Tb, weight=None):
        w = hw if weight is None else hw * weight[..., None]
        return np.einsum("ejq,ejqai,ejqak->eik", w, Ta, Tb, optimize=True)

    Sst = bpair(Tsn, Tsn, etaK)                       # eta <s n, t n>
    Fl_s = bpair(Tsn, Lam, etaK)                      # eta <lam, t n>
    Fl_v = -bpair(Tv, Lam)                            # -<lam, v>

    nds, ndu, nrm = 3 * nbs, 2 * nbv, rm.nb
    nloc = nds + ndu + nrm
    L = np.zeros((nel, nloc, nloc))
    L[:, :nds, :nds] = A + Sst
    L[:, :nds, nds:nds + ndu] = -E.transpose(0, 2, 1)
    L[:, nds:nds + ndu, :nds] = -E
    L[:, nds:nds + ndu, nds + ndu:] = R
    L[:, nds + ndu:, nds:nds + ndu] = R.transpose(0, 2, 1)
    rhs = np.zeros((nel, nloc, nl + 1))
    rhs[:, :nds, :nl] = Fl_s
    rhs[:, nds:nds + ndu, :nl] = Fl_v
    rhs[:, nds:nds + ndu, nl] = load
    try:
        Xsol = np.linalg.solve(L, rhs)
    except np.linalg.LinAlgError as exc:
        bad = int(np.argmin(np.abs(np.linalg.det(L))))
        raise SolverFailure("singular local problem", element=bad) from exc
    W_sigma, sigma_f = Xsol[:, :nds, :nl], Xsol[:, :nds, nl]
    W_u, u_f = Xsol[:, nds:nds + ndu, :nl], Xsol[:, nds:nds + ndu, nl]

    # trace continuity:  sum_K <u_K + u0_K - eta_l (sigma_K n_K - lam_K), mu_K> = 0
    Tsn_eta = Tsn * etaK[:, :, None, None, None]
    Uw = np.einsum("ejqak,eki->ejqai", Tv, W_u) - np.einsum("ejqak,eki->ejqai", Tsn_eta, W_sigma) \
        + Lam * etaK[:, :, None, None, None]
    H = bpair(Lam, Uw)
    Uf = np.einsum("ejqak,ek->ejqa", Tv, u_f) - np.einsum("ejqak,ek->ejqa", Tsn_eta, sigma_f)
    g_lam = -np.einsum("ejq,ejqai,ejqa->ei", hw, Lam, Uf)
    Zb = rm.values(X)                                               # (nel, 3, nq, nrm, 2)
    C = np.einsum("ejq,ejqai,ejqza->eiz", hw, Lam, Zb)
    g_rm = np.einsum("eqa,eq,eqza->ez", np.asarray(case.f(tv.points), float), tv.weights, Z)

    lam_dofs = lam_space.edge_dofs()[edges].reshape(nel, -1)
    return LocalProblems(mesh, alpha, case, spaces, eta_local, lam_space, rm, lam_dofs,
                         W_sigma, W_u, sigma_f, u_f, H, C, g_lam, g_rm)


def hybrid_local_solve(local: LocalProblems, element: int, lam_local: np.ndarray):
    """Stress and displacement (orthogonal to rigid motions) on ``element`` for given tractions."""
    return local.solve(element, lam_local)


def hybrid_global_solve(local: LocalProblems) -> tuple[np.ndarray, np.ndarray]:
    """Solve for edge tractions and broken rigid motions; returns ``(lam, u0)``."""
    mesh = local.mesh
    nL = local.lam_space.ndof
    nZ = local.rm.ndof
    n = nL + nZ
    B = SparseBuilder((n, n))
    rows = local.lam_dofs
    zd = nL + np.arange(nZ).reshape(mesh.n_elements, -1)
    B.add(rows, rows, local.H)
    B.add(rows, zd, local.C)
    B.add(zd, rows, local.C.transpose(0, 2, 1))
    rhs = np.zeros(n)
    np.add.at(rhs, rows.ravel(), local.g_lam.ravel())
    rhs[nL:] = local.g_rm.ravel()
    M = B.tocsr()
    # traction dofs on Neumann edges are fixed to zero
    fixed = np.zeros(n, bool)
    neu = np.flatnonzero(mesh.tags == NEUMANN)
    if len(neu):
        fixed[local.lam_space.edge_dofs()[neu].ravel()] = True
    free = np.flatnonzero(~fixed)
    x = np.zeros(n)
    owners = dof_owners(mesh, [("edge", local.lam_space.local_dim), ("element", local.rm.nb)])
    x[free] = sparse_solve(M[free][:, free], rhs[free], owners=owners[free], mesh=mesh)
    return x[:nL], x[nL:]


def solve_hybrid(mesh: Mesh, alpha, params: PenaltyParams, case: ElasticCase,
                 eta_local: np.ndarray | None = None) -> ElasticFourFieldSolution:
    """Hybridized solve; the result is the four-field solution for
    :func:`hybrid_equivalent_params` of the local stabilization used."""
    local = build_local_problems(mesh, alpha, params, case, eta_local=eta_local)
    mesh = local.mesh
    lam, u0 = hybrid_global_solve(local)
    lamK = lam[local.lam_dofs]
    sigma = (np.einsum("eik,ek->ei", local.W_sigma, lamK) + local.sigma_f).ravel()
    uperp = (np.einsum("eik,ek->ei", local.W_u, lamK) + local.u_f).ravel()
    u = uperp + local.rm.to_broken(local.spaces.disp, u0)
    eq = hybrid_equivalent_params(mesh, local.eta_local)
    system = assemble_elastic(mesh, local.degrees, eq, case, monolithic=False)
    sc, uc = _recover_checks(system, sigma, u)
    n_unknowns = int(local.lam_space.ndof - np.count_nonzero(
        np.repeat(mesh.tags == NEUMANN, local.lam_space.local_dim)) + local.rm.ndof)
    sol = ElasticFourFieldSolution(mesh, local.degrees, eq, case, local.spaces, sigma, sc, u, uc,
                                   n_unknowns, sigma_hat=lam)
    return sol
