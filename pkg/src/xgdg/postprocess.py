"""Elementwise postprocessing of the potential / displacement to degree ``k + 2``.

Every scheme is a small constrained solve per element, written as a bordered
system ``[[G, M^T], [M, 0]]`` with ``M`` the constraint moments, so no basis of
the constrained test space is ever built.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from math import factorial

import numpy as np

from .assembly import element_boundary, strain_basis, tabulate_volume, value_basis
from .basis import dim_p, monomial_exponents, tri_quadrature
from .errors import ConfigError, SolverFailure
from .scalar import ScalarFourFieldSolution, reconstruct_phat
from .spaces import VOIGT_METRIC, BrokenSpace, Kind


class Scheme(str, enum.Enum):
    S1 = "s1"
    S2 = "s2"
    S3 = "s3"
    TAYLOR = "taylor"
    ELASTIC = "elastic"

    @classmethod
    def parse(cls, value) -> "Scheme":
        if isinstance(value, Scheme):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError as exc:
            raise ConfigError(f"unknown postprocessing scheme {value!r}") from exc

    @property
    def scalar(self) -> bool:
        return self is not Scheme.ELASTIC


@dataclass(frozen=True)
class PostprocessConfig:
    """Scheme choice plus the constraint projection used by S1/S2 (``"P0"`` or ``"Pk"``).

    ``derivative_path`` selects how Taylor coefficients read ``d^a u`` off the
    flux: ``"first"`` peels the first nonzero index, ``"average"`` averages
    over all admissible indices.
    """

    scheme: Scheme = Scheme.S1
    projection: str = "P0"
    derivative_path: str = "first"

    def __post_init__(self):
        object.__setattr__(self, "scheme", Scheme.parse(self.scheme))
        if self.projection not in ("P0", "Pk"):
            raise ConfigError("projection must be 'P0' or 'Pk'")
        if self.derivative_path not in ("first", "average"):
            raise ConfigError("derivative_path must be 'first' or 'average'")


@dataclass
class Postprocessed:
    space: BrokenSpace
    coeffs: np.ndarray
    scheme: Scheme

    def evaluate(self, ref_points: np.ndarray) -> np.ndarray:
        return self.space.evaluate(self.coeffs, ref_points)


def _bordered_solve(G: np.ndarray, M: np.ndarray, rhs: np.ndarray, cons: np.ndarray,
                    tol: float = 1e-11) -> np.ndarray:
    """Solve ``G x + M^T l = rhs``, ``M x = cons`` on every element; returns ``x``."""
    nel, n, _ = G.shape
    m = M.shape[1]
    S = np.zeros((nel, n + m, n + m))
    S[:, :n, :n] = G
    S[:, :n, n:] = M.transpose(0, 2, 1)
    S[:, n:, :n] = M
    b = np.concatenate([rhs, cons], axis=1)
    try:
        x = np.linalg.solve(S, b[..., None])[..., 0]
    except np.linalg.LinAlgError as exc:
        bad = int(np.argmin(np.abs(np.linalg.det(S))))
        raise SolverFailure("singular local postprocessing system", element=bad) from exc
    r = np.linalg.norm(np.einsum("eij,ej->ei", S, x) - b, axis=1)
    scale = np.linalg.norm(b, axis=1) + np.linalg.norm(S.reshape(nel, -1), axis=1) * np.linalg.norm(x, axis=1)
    rel = r / np.maximum(scale, 1e-300)
    if not np.all(np.isfinite(x)) or rel.max() > tol:
        raise SolverFailure("local postprocessing solve is ill-conditioned",
                            element=int(np.nanargmax(rel)))
    return x[:, :n]


def _scalar_constraints(space: BrokenSpace, uh_space: BrokenSpace, uh: np.ndarray, degree: int):
    """Moments against the first ``dim P_degree`` orthonormal functions (``P_degree`` projection)."""
    m = dim_p(degree)
    nel = space.mesh.n_elements
    dets = space.mesh.dets
    M = np.zeros((nel, m, space.nb))
    M[:, :, :m] = dets[:, None, None] * np.eye(m)[None]
    U = uh_space.reshape(uh)[:, 0, :]
    cons = np.zeros((nel, m))
    mm = min(m, uh_space.nb)
    cons[:, :mm] = dets[:, None] * U[:, :mm]
    return M, cons


def _scalar_gram(space: BrokenSpace, case, exactness, inverse: bool):
    tab = tabulate_volume(space, exactness)
    C = case.coefficient(tab.points)
    if inverse:
        C = np.linalg.inv(C)
    G = np.einsum("eq,eqia,eqab,eqjb->eij", tab.weights, tab.grads, C, tab.grads, optimize=True)
    return tab, G


def _boundary_flux_load(sol: ScalarFourFieldSolution, space: BrokenSpace, use_phat: bool, exactness: int):
    """``int_{dK} (flux . n_K) v`` for every basis function of ``space``."""
    mesh = sol.mesh
    bd = element_boundary(mesh, exactness)
    V = bd.values(space)                                      # (nel, 3, nq, nb)
    if use_phat:
        edge_space, ph = reconstruct_phat(sol)
        vals = edge_space.evaluate(ph, bd.s)[bd.edges]        # (nel, 3, nq, 2)
    else:
        nel = mesh.n_elements
        fs = sol.spaces.flux
        ref = mesh.to_reference(bd.points.reshape(nel, -1, 2), np.arange(nel))
        vals = np.einsum("eci,eqi->eqc", fs.reshape(sol.p),
                         fs.basis.values(ref)).reshape(bd.points.shape)
    flux_n = np.einsum("ejqc,ejc->ejq", vals, bd.normals)
    return np.einsum("ejq,ejq,ejqi->ei", bd.weights, flux_n, V)


def _check_scalar(sol, cfg: PostprocessConfig):
    if not isinstance(sol, ScalarFourFieldSolution):
        raise ConfigError(f"scheme {cfg.scheme.value} needs a scalar solution")


def _target_space(sol, kind: Kind) -> BrokenSpace:
    return BrokenSpace(sol.mesh, kind, sol.degrees.disp + 2)


def _volume_exactness(sol, space: BrokenSpace) -> int:
    return min(2 * max(space.degree, sol.degrees.flux) + 4, 20)


def scheme1(sol: ScalarFourFieldSolution, case=None, projection: str = "P0",
            _use_phat: bool = False) -> Postprocessed:
    """Local Neumann problem with the flux's own normal trace as boundary data."""
    cfg = PostprocessConfig(Scheme.S2 if _use_phat else Scheme.S1, projection)
    _check_scalar(sol, cfg)
    case = sol.case if case is None else case
    space = _target_space(sol, Kind.SCALAR)
    ex = _volume_exactness(sol, space)
    tab, G = _scalar_gram(space, case, ex, inverse=True)
    F = np.asarray(case.f(tab.points), float)
    rhs = -np.einsum("eq,eq,qi->ei", tab.weights, F, tab.values)
    rhs += _boundary_flux_load(sol, space, _use_phat, min(2 * space.degree + 2, 25))
    deg = 0 if projection == "P0" else sol.degrees.disp
    M, cons = _scalar_constraints(space, sol.spaces.disp, sol.u, deg)
    x = _bordered_solve(G, M, rhs, cons)
    return Postprocessed(space, x.ravel(), cfg.scheme)


def scheme2(sol: ScalarFourFieldSolution, case=None, projection: str = "P0") -> Postprocessed:
    """As :func:`scheme1` with the numerical edge flux ``{p} + gamma [p] + p_check``."""
    return scheme1(sol, case, projection, _use_phat=True)


def scheme3(sol: ScalarFourFieldSolution, case=None) -> Postprocessed:
    """Fit ``grad u*`` to ``c p_h`` elementwise, keeping the element mean of ``u_h``."""
    _check_scalar(sol, PostprocessConfig(Scheme.S3))
    case = sol.case if case is None else case
    space = _target_space(sol, Kind.SCALAR)
    ex = _volume_exactness(sol, space)
    tab = tabulate_volume(space, ex)
    G = np.einsum("eq,eqia,eqja->eij", tab.weights, tab.grads, tab.grads, optimize=True)
    q = tri_quadrature(ex)
    P = sol.spaces.flux.evaluate(sol.p, q.points)                      # (nel, nq, 2)
    CP = np.einsum("eqab,eqb->eqa", case.coefficient(tab.points), P)
    rhs = np.einsum("eq,eqa,eqia->ei", tab.weights, CP, tab.grads)
    M, cons = _scalar_constraints(space, sol.spaces.disp, sol.u, 0)
    x = _bordered_solve(G, M, rhs, cons)
    return Postprocessed(space, x.ravel(), Scheme.S3)


# --------------------------------------------------------------------------
# Taylor-expansion postprocessing
# --------------------------------------------------------------------------

def _multi_indices(order: int):
    return [(order - j, j) for j in range(order + 1)]


def _derivative_paths(a, path: str):
    idx = [i for i in range(2) if a[i] > 0]
    return idx[:1] if path == "first" else idx


def _local_monomial_fit(sol, values_fn, degree: int, exactness: int):
    """Coefficients of scaled monomials ``((x - M_K)/h_K)^g`` fitting a vector field on each element.

    Exact whenever the field is a polynomial of degree ``<= degree``.
    """
    mesh = sol.mesh
    q = tri_quadrature(exactness)
    X = mesh.to_physical(q.points)
    M = mesh.centroids
    hK = np.sqrt(np.abs(mesh.dets))[:, None]
    Y = (X - M[:, None, :]) / hK[:, :, None]
    exps = monomial_exponents(degree)
    V = np.stack([Y[..., 0] ** i * Y[..., 1] ** j for i, j in exps], -1)       # (nel, nq, nm)
    W = q.weights
    A = np.einsum("q,eqi,eqj->eij", W, V, V)
    F = values_fn(q.points, X)                                                 # (nel, nq, 2)
    b = np.einsum("q,eqi,eqc->eic", W, V, F)
    return exps, np.linalg.solve(A, b), hK[:, 0]


def _mean_derivative(exps, coef, hK, beta, sol, exactness: int):
    """Element means of ``d^beta`` of the fitted scaled-monomial expansion ``(nel, ncomp)``."""
    mesh = sol.mesh
    q = tri_quadrature(exactness)
    X = mesh.to_physical(q.points)
    Y = (X - mesh.centroids[:, None, :]) / hK[:, None, None]
    out = np.zeros(coef.shape[::2])
    for n, (i, j) in enumerate(exps):
        if i < beta[0] or j < beta[1]:
            continue
        fac = factorial(i) // factorial(i - beta[0]) * factorial(j) // factorial(j - beta[1])
        mono = Y[..., 0] ** (i - beta[0]) * Y[..., 1] ** (j - beta[1])
        mean = mono @ q.weights / q.weights.sum()
        out += (fac * mean * hK ** (-(beta[0] + beta[1])))[:, None] * coef[:, n, :]
    return out


def taylor_coefficients(sol: ScalarFourFieldSolution, case=None, path: str = "first") -> dict:
    """Element means of ``d^a u`` for ``k+1 <= |a| <= k+2``, read off ``c p_h``."""
    case = sol.case if case is None else case
    k = sol.degrees.disp
    fs = sol.spaces.flux
    deg = fs.degree if case.constant_coefficient else fs.degree + 2
    ex = min(2 * deg + 2, 20)

    def cp(ref, X):
        P = fs.evaluate(sol.p, ref)
        return np.einsum("eqab,eqb->eqa", case.coefficient(X), P)

    exps, coef, hK = _local_monomial_fit(sol, cp, deg, ex)
    out = {}
    for order in (k + 1, k + 2):
        for a in _multi_indices(order):
            vals = []
            for i in _derivative_paths(a, path):
                beta = (a[0] - (i == 0), a[1] - (i == 1))
                vals.append(_mean_derivative(exps, coef, hK, beta, sol, ex)[:, i])
            out[a] = np.mean(vals, axis=0)
    return out


def taylor_postprocess(sol: ScalarFourFieldSolution, case=None, path: str = "first") -> Postprocessed:
    """``u_h + sum_a c_a (I - P^k) phi_a`` with ``phi_a = (x - M_K)^a / a!``."""
    _check_scalar(sol, PostprocessConfig(Scheme.TAYLOR))
    k = sol.degrees.disp
    space = _target_space(sol, Kind.SCALAR)
    coeffs = taylor_coefficients(sol, case, path)
    mesh = sol.mesh
    M = mesh.centroids
    U = space.reshape(sol.spaces.disp.prolong(sol.u, space.degree)).copy()
    for a, ca in coeffs.items():
        fac = factorial(a[0]) * factorial(a[1])

        def phi(X, a=a, fac=fac):
            D = X - M[:, None, :]
            return D[..., 0] ** a[0] * D[..., 1] ** a[1] / fac

        Phi = space.reshape(space.l2_project(phi, exactness=2 * space.degree))
        Phi[:, :, :dim_p(k)] = 0.0
        U += ca[:, None, None] * Phi
    return Postprocessed(space, U.ravel(), Scheme.TAYLOR)


# --------------------------------------------------------------------------
# elasticity
# --------------------------------------------------------------------------

def elastic_postprocess(sol) -> Postprocessed:
    """Fit ``eps(u*)`` to ``A sigma_h`` elementwise, keeping the rigid-motion part of ``u_h``."""
    from .elasticity import ElasticFourFieldSolution, RigidMotionSpace

    if not isinstance(sol, ElasticFourFieldSolution):
        raise ConfigError("the elastic scheme needs an elasticity solution")
    space = _target_space(sol, Kind.VECTOR2)
    ex = _volume_exactness(sol, space)
    tab = tabulate_volume(space, ex)
    E = strain_basis(space, tab)                                          # (nel, nq, 3, nd)
    G = np.einsum("eq,eqsi,s,eqsj->eij", tab.weights, E, VOIGT_METRIC, E, optimize=True)
    q = tri_quadrature(ex)
    S = sol.spaces.stress.evaluate(sol.sigma, q.points)                  # (nel, nq, 3)
    AS = sol.case.compliance.apply(S)
    rhs = np.einsum("eq,eqs,s,eqsi->ei", tab.weights, AS, VOIGT_METRIC, E, optimize=True)
    rm = RigidMotionSpace(sol.mesh, 1)                                    # all three rigid motions
    Z = rm.values(tab.points)                                             # (nel, nq, 3, 2)
    Vb = value_basis(space, tab)                                          # (nq, 2, nd)
    M = np.einsum("eq,eqza,qai->ezi", tab.weights, Z, Vb)
    Uh = sol.spaces.disp.evaluate(sol.u, q.points)
    cons = np.einsum("eq,eqza,eqa->ez", tab.weights, Z, Uh)
    x = _bordered_solve(G, M, rhs, cons)
    return Postprocessed(space, x.ravel(), Scheme.ELASTIC)


def postprocess(sol, config: PostprocessConfig | str, case=None) -> Postprocessed:
    cfg = config if isinstance(config, PostprocessConfig) else PostprocessConfig(config)
    if cfg.scheme is Scheme.S1:
        return scheme1(sol, case, cfg.projection)
    if cfg.scheme is Scheme.S2:
        return scheme2(sol, case, cfg.projection)
    if cfg.scheme is Scheme.S3:
        return scheme3(sol, case)
    if cfg.scheme is Scheme.TAYLOR:
        return taylor_postprocess(sol, case, cfg.derivative_path)
    return elastic_postprocess(sol)
