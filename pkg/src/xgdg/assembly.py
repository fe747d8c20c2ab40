"""Shared assembly machinery: sparse triplet buffers, volume tabulations, edge traces.

Edge traces are stored as linear maps from local coefficients to values at
edge quadrature points, ``T[e, q, m, dof]``, one per incident side.  Any
jump or average is a per-edge coefficient matrix ``C[e, m, ncomp]`` lifted
onto the basis traces, so pairings become batched small matrix products.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import edge_quadrature, tri_quadrature
from .errors import SolverFailure
from .mesh import Mesh
from .spaces import BrokenSpace, EdgeSpace


class SparseBuilder:
    """Accumulates dense blocks into COO triplets, compressing to CSR in chunks.

    Duplicates are summed every ``flush_at`` buffered entries so memory stays
    proportional to the number of nonzeros, not the number of contributions.
    """

    def __init__(self, shape, flush_at: int = 4_000_000):
        self.shape = shape
        self.flush_at = flush_at
        self._idx = np.int32 if max(shape) < 2**31 - 1 else np.int64
        self._rows, self._cols, self._vals = [], [], []
        self._buffered = 0
        self._acc = None

    def add(self, rows, cols, blocks, scale=1.0):
        rows = np.asarray(rows)
        cols = np.asarray(cols)
        blocks = np.asarray(blocks)
        if rows.ndim == 1:
            rows, cols, blocks = rows[None], cols[None], blocks[None]
        if len(rows) == 0:
            return
        R = np.broadcast_to(rows[:, :, None], blocks.shape)
        C = np.broadcast_to(cols[:, None, :], blocks.shape)
        self._rows.append(R.ravel().astype(self._idx))
        self._cols.append(C.ravel().astype(self._idx))
        self._vals.append((scale * blocks).ravel())
        self._buffered += blocks.size
        if self._buffered >= self.flush_at:
            self._flush()

    def _flush(self):
        if not self._rows:
            return
        part = sp.coo_matrix((np.concatenate(self._vals),
                              (np.concatenate(self._rows), np.concatenate(self._cols))),
                             shape=self.shape).tocsr()
        self._rows, self._cols, self._vals = [], [], []
        self._buffered = 0
        self._acc = part if self._acc is None else self._acc + part

    def tocsr(self) -> sp.csr_matrix:
        self._flush()
        if self._acc is None:
            return sp.csr_matrix(self.shape)
        A, self._acc = self._acc, None
        A.sum_duplicates()
        return A


def nested_dissection(mesh: Mesh, leaf: int = 32) -> np.ndarray:
    """Element order from recursive coordinate bisection; separator layers go last."""
    nel = mesh.n_elements
    ee = mesh.edge_elements
    inner = ee[:, 1] >= 0
    G = sp.coo_matrix((np.ones(inner.sum()), (ee[inner, 0], ee[inner, 1])), shape=(nel, nel))
    G = (G + G.T).tocsr()
    C = mesh.centroids
    out = []

    def split(idx):
        if len(idx) <= leaf:
            out.append(idx)
            return
        pts = C[idx]
        d = int(np.argmax(pts.max(0) - pts.min(0)))
        cut = np.median(pts[:, d])
        a, b = idx[pts[:, d] < cut], idx[pts[:, d] >= cut]
        if len(a) == 0 or len(b) == 0:
            out.append(idx)
            return
        touch = np.asarray(G[a][:, b].sum(1)).ravel() > 0
        split(a[~touch])
        split(b)
        out.append(a[touch])

    split(np.arange(nel))
    return np.concatenate(out)


def dof_owners(mesh: Mesh, blocks) -> np.ndarray:
    """Owning element of every unknown for blocks ``[("element"|"edge", local_dim), ...]``."""
    parts = []
    for where, dim in blocks:
        if where == "element":
            parts.append(np.repeat(np.arange(mesh.n_elements), dim))
        elif where == "edge":
            parts.append(np.repeat(mesh.edge_elements[:, 0], dim))
        else:
            raise ValueError(f"unknown block location {where!r}")
    return np.concatenate(parts)


PIVOT_CHECK_NNZ = 20_000_000


def sparse_solve(A: sp.spmatrix, b: np.ndarray, check: float = 1e-10,
                 owners: np.ndarray | None = None, mesh: Mesh | None = None) -> np.ndarray:
    """Direct LU solve with a residual check.

    With ``owners`` (owning element per unknown) and ``mesh`` the unknowns are
    ordered by nested dissection of the element graph and factored in that
    order with threshold pivoting; otherwise SuperLU's COLAMD ordering is used.
    """
    A = sp.csc_matrix(A)
    perm = None
    if owners is not None and mesh is not None:
        rank = np.empty(mesh.n_elements, np.int64)
        rank[nested_dissection(mesh)] = np.arange(mesh.n_elements)
        perm = np.argsort(rank[owners], kind="stable")
        Ap = A[:, perm][perm, :].tocsc()
        opts = dict(permc_spec="NATURAL", diag_pivot_thresh=0.01)
    else:
        Ap = A
        opts = dict(permc_spec="COLAMD")
    try:
        lu = spla.splu(Ap, **opts)
    except RuntimeError as exc:  # exactly singular
        raise SolverFailure(f"sparse factorization failed: {exc}") from exc
    del Ap
    min_pivot = None
    if lu.nnz <= PIVOT_CHECK_NNZ:
        # reading U materializes a copy of the factor, so only small factors are inspected;
        # larger ones rely on SuperLU's singularity error and the residual check below
        d = np.abs(lu.U.diagonal())
        imin = int(np.argmin(d))
        min_pivot = float(d[imin])
        if d[imin] <= 1e-14 * max(d.max(), 1.0):
            eq = int(lu.perm_r.argsort()[imin])
            raise SolverFailure("sparse factorization is numerically singular",
                                min_pivot=min_pivot, equation=int(perm[eq]) if perm is not None else eq)

    def lsolve(rhs):
        if perm is None:
            return lu.solve(rhs)
        x = np.empty_like(rhs)
        x[perm] = lu.solve(rhs[perm])
        return x

    x = lsolve(b)
    nb = np.linalg.norm(b)
    if nb > 0:
        res = np.linalg.norm(A @ x - b) / nb
        if not np.isfinite(res) or res > check:
            # one step of iterative refinement before giving up
            x = x + lsolve(b - A @ x)
            res = np.linalg.norm(A @ x - b) / nb
            if not np.isfinite(res) or res > check:
                raise SolverFailure(f"relative residual {res:.2e} exceeds {check:.0e}",
                                    min_pivot=min_pivot)
    return x


# --------------------------------------------------------------------------
# volume tabulation
# --------------------------------------------------------------------------

@dataclass
class VolumeTab:
    """Basis values and physical gradients at a triangle rule."""

    weights: np.ndarray      # (nel, nq) physical weights
    points: np.ndarray       # (nel, nq, 2)
    values: np.ndarray       # (nq, nb)
    grads: np.ndarray        # (nel, nq, nb, 2)


def tabulate_volume(space: BrokenSpace, exactness: int) -> VolumeTab:
    q = tri_quadrature(exactness)
    mesh = space.mesh
    W = q.weights[None, :] * mesh.dets[:, None]
    return VolumeTab(W, mesh.to_physical(q.points), space.basis.values(q.points),
                     space.physical_grads(q.points))


def divergence_map(kind_ncomp: int) -> np.ndarray:
    """``D[c, a, d]``: component ``a`` of the divergence picks up ``d/dx_d`` of storage component ``c``."""
    if kind_ncomp == 2:
        D = np.zeros((2, 1, 2))
        D[0, 0, 0] = D[1, 0, 1] = 1.0
    elif kind_ncomp == 3:
        D = np.zeros((3, 2, 2))
        D[0, 0, 0] = 1.0           # d1 s11 -> row 1
        D[1, 0, 1] = 1.0           # d2 s12 -> row 1
        D[1, 1, 0] = 1.0           # d1 s12 -> row 2
        D[2, 1, 1] = 1.0           # d2 s22 -> row 2
    else:
        raise ValueError("divergence needs a vector or symmetric tensor")
    return D


def strain_map() -> np.ndarray:
    """``S[s, a, d]``: Voigt strain component ``s`` picks ``d/dx_d`` of displacement component ``a``."""
    S = np.zeros((3, 2, 2))
    S[0, 0, 0] = 1.0
    S[1, 0, 1] = S[1, 1, 0] = 0.5
    S[2, 1, 1] = 1.0
    return S


def div_basis(space: BrokenSpace, tab: VolumeTab) -> np.ndarray:
    """Divergence of each basis function ``(nel, nq, out_comp, ncomp*nb)``."""
    D = divergence_map(space.ncomp)
    out = np.einsum("cad,eqid->eqaci", D, tab.grads)
    ne, nq = out.shape[:2]
    return out.reshape(ne, nq, D.shape[1], -1)


def strain_basis(space: BrokenSpace, tab: VolumeTab) -> np.ndarray:
    """Voigt strain of each vector basis function ``(nel, nq, 3, 2*nb)``."""
    S = strain_map()
    out = np.einsum("sad,eqid->eqsai", S, tab.grads)
    ne, nq = out.shape[:2]
    return out.reshape(ne, nq, 3, -1)


def value_basis(space: BrokenSpace, tab: VolumeTab) -> np.ndarray:
    """Component-wise values ``(nq, ncomp, ncomp*nb)``."""
    nc = space.ncomp
    return np.einsum("ab,qi->qabi", np.eye(nc), tab.values).reshape(len(tab.values), nc, -1)


# --------------------------------------------------------------------------
# edge traces
# --------------------------------------------------------------------------

@dataclass
class TraceOp:
    """Linear map from dofs to values ``(nE, nq, m)`` at edge quadrature points."""

    plus: np.ndarray          # (nE, nq, m, nd_plus)
    minus: np.ndarray | None  # (nE, nq, m, nd_minus) or None for edge unknowns
    dofs_plus: np.ndarray     # (nE, nd_plus)
    dofs_minus: np.ndarray | None
    two_sided: np.ndarray     # (nE,) bool

    @property
    def m(self) -> int:
        return self.plus.shape[2]

    def apply(self, x: np.ndarray) -> np.ndarray:
        v = np.einsum("eqmi,ei->eqm", self.plus, x[self.dofs_plus])
        if self.minus is not None:
            vm = np.einsum("eqmi,ei->eqm", self.minus, x[self.dofs_minus])
            v = v + np.where(self.two_sided[:, None, None], vm, 0.0)
        return v

    def shifted(self, offset: int) -> "TraceOp":
        return TraceOp(self.plus, self.minus, self.dofs_plus + offset,
                       None if self.dofs_minus is None else self.dofs_minus + offset,
                       self.two_sided)

    def mapped(self, M: np.ndarray) -> "TraceOp":
        """Compose with a pointwise linear map ``M`` ``(nE, m_out, m)`` or ``(m_out, m)``."""
        M = np.asarray(M)
        sub = "om" if M.ndim == 2 else "eom"
        f = lambda T: None if T is None else np.einsum(f"{sub},eqmi->eqoi", M, T)
        return TraceOp(f(self.plus), f(self.minus), self.dofs_plus, self.dofs_minus, self.two_sided)

    def scaled(self, w: np.ndarray) -> "TraceOp":
        """Multiply by a per-edge scalar."""
        w = np.asarray(w, float)[:, None, None, None]
        return TraceOp(self.plus * w, None if self.minus is None else self.minus * w,
                       self.dofs_plus, self.dofs_minus, self.two_sided)

    def __add__(self, other: "TraceOp") -> "TraceOp":
        if self.dofs_plus is not other.dofs_plus and not np.array_equal(self.dofs_plus, other.dofs_plus):
            raise ValueError("can only add traces of the same unknown")
        minus = None
        if self.minus is not None or other.minus is not None:
            minus = (0 if self.minus is None else self.minus) + (0 if other.minus is None else other.minus)
        dm = self.dofs_minus if self.dofs_minus is not None else other.dofs_minus
        return TraceOp(self.plus + other.plus, minus, self.dofs_plus, dm, self.two_sided)

    def __neg__(self) -> "TraceOp":
        return self.scaled(-np.ones(len(self.plus)))

    def __sub__(self, other):
        return self + (-other)


class EdgeSides:
    """Basis traces of a broken space on both sides of every edge."""

    def __init__(self, space: BrokenSpace, s: np.ndarray):
        mesh = space.mesh
        self.space = space
        self.mesh = mesh
        self.s = s
        X = mesh.edge_points(s)
        L = mesh.edge_elements[:, 0]
        R = mesh.edge_elements[:, 1]
        self.two_sided = R >= 0
        Rs = np.where(self.two_sided, R, L)
        self.values_plus = space.basis.values(mesh.to_reference(X, L))      # (nE, nq, nb)
        vm = space.basis.values(mesh.to_reference(X, Rs))
        vm[~self.two_sided] = 0.0
        self.values_minus = vm
        self.dofs_plus = space.element_dofs(L)
        self.dofs_minus = space.element_dofs(Rs)

    def lift(self, coef_plus: np.ndarray, coef_minus: np.ndarray) -> TraceOp:
        """Trace with per-edge coefficient matrices ``(nE, m, ncomp)`` on each side."""
        nE, nq, nb = self.values_plus.shape
        m = coef_plus.shape[1]
        Tp = np.einsum("emc,eqi->eqmci", coef_plus, self.values_plus).reshape(nE, nq, m, -1)
        Tm = np.einsum("emc,eqi->eqmci", coef_minus, self.values_minus).reshape(nE, nq, m, -1)
        return TraceOp(Tp, Tm, self.dofs_plus, self.dofs_minus, self.two_sided)


def edge_unknown_trace(space: EdgeSpace, s: np.ndarray) -> TraceOp:
    """Values of an edge unknown, component by component ``(nE, nq, ncomp, ncomp*nb)``."""
    nE = space.mesh.n_edges
    P = space.basis.values(s)
    nc = space.ncomp
    T = np.einsum("ab,qi->qabi", np.eye(nc), P).reshape(len(s), nc, -1)
    T = np.broadcast_to(T, (nE,) + T.shape)
    return TraceOp(T, None, space.edge_dofs(), None, np.zeros(nE, bool))


def edge_rule(exactness: int):
    q = edge_quadrature(exactness)
    return q.points[:, 0], q.weights


def _gram(w, Ta, Tb):
    ne = len(Ta)
    A = (Ta * w[..., None]).reshape(ne, -1, Ta.shape[-1])
    return np.matmul(A.transpose(0, 2, 1), Tb.reshape(ne, -1, Tb.shape[-1]))


def pair_edges(builder: SparseBuilder, test: TraceOp, trial: TraceOp, weights: np.ndarray,
               metric: np.ndarray | None = None, scale: float = 1.0,
               row_offset: int = 0, col_offset: int = 0) -> None:
    """Add ``scale * sum_e <trial, test>_e`` with ``weights[e, q]`` already including ``h_e``."""
    m = test.m
    w = weights[:, :, None] if metric is None else weights[:, :, None] * metric[None, None, :]

    sides_t = [(test.plus, test.dofs_plus, None)]
    if test.minus is not None:
        sides_t.append((test.minus, test.dofs_minus, test.two_sided))
    sides_u = [(trial.plus, trial.dofs_plus, None)]
    if trial.minus is not None:
        sides_u.append((trial.minus, trial.dofs_minus, trial.two_sided))
    for Ta, ra, ma in sides_t:
        for Tb, cb, mb in sides_u:
            mask = np.ones(len(Ta), bool)
            if ma is not None:
                mask &= ma
            if mb is not None:
                mask &= mb
            if not mask.any():
                continue
            if mask.all():
                B = _gram(w, Ta, Tb)
                builder.add(ra + row_offset, cb + col_offset, B, scale)
            else:
                B = _gram(w[mask], Ta[mask], Tb[mask])
                builder.add(ra[mask] + row_offset, cb[mask] + col_offset, B, scale)


def edge_weights(mesh: Mesh, wq: np.ndarray, factor: np.ndarray | None = None) -> np.ndarray:
    """Physical edge weights ``h_e * w_q`` (times an optional per-edge factor)."""
    w = mesh.lengths[:, None] * wq[None, :]
    if factor is not None:
        w = w * np.asarray(factor)[:, None]
    return w


def moment_op(trace: TraceOp, P: np.ndarray, wq: np.ndarray) -> TraceOp:
    """Edge moments ``int_0^1 psi_j T ds``: the "quadrature axis" becomes the edge basis index.

    ``P`` holds edge basis values ``(nq, nb)``.  Pairing two moment operators with
    weights ``h_e`` gives ``<Pi a, Pi b>_e`` for the edge L^2 projection ``Pi``.
    """
    f = lambda T: None if T is None else np.einsum("q,qj,eqmi->ejmi", wq, P, T)
    return TraceOp(f(trace.plus), f(trace.minus), trace.dofs_plus, trace.dofs_minus, trace.two_sided)


@dataclass
class ElementBoundary:
    """Edge rule seen from inside each element: ``(nel, 3, nq, ...)`` arrays."""

    points: np.ndarray        # (nel, 3, nq, 2) physical points
    sign: np.ndarray          # (nel, 3): +1 where the element is the "+" side of the edge
    normals: np.ndarray       # (nel, 3, 2) outward unit normals
    weights: np.ndarray       # (nel, 3, nq) physical weights h_e w_q
    edges: np.ndarray         # (nel, 3)
    s: np.ndarray             # edge parameters

    def values(self, space: BrokenSpace) -> np.ndarray:
        """Basis values of ``space`` on the element's own edges ``(nel, 3, nq, nb)``."""
        mesh = space.mesh
        nel = mesh.n_elements
        ref = mesh.to_reference(self.points.reshape(nel, -1, 2), np.arange(nel))
        return space.basis.values(ref).reshape(nel, 3, len(self.s), -1)


def element_boundary(mesh: Mesh, exactness: int) -> ElementBoundary:
    s, wq = edge_rule(exactness)
    edges = mesh.element_edges
    X = mesh.edge_points(s)[edges]
    sign = np.where(mesh.edge_elements[edges, 0] == np.arange(mesh.n_elements)[:, None], 1.0, -1.0)
    nK = sign[..., None] * mesh.normals[edges]
    w = mesh.lengths[edges][..., None] * wq
    return ElementBoundary(X, sign, nK, w, edges, s)
