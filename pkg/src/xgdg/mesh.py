"""Uniform triangulations of the unit square and their edge topology."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

BOUNDARY = -1
DIRICHLET = 0
NEUMANN = 1
INTERIOR = 2

_TAG_NAMES = {DIRICHLET: "DIRICHLET", NEUMANN: "NEUMANN", INTERIOR: "INTERIOR"}


@dataclass(frozen=True, eq=False)
class Mesh:
    """Immutable triangle mesh with oriented edges.

    ``edges[e] = (a, b)`` with ``a < b``; the edge is parameterized from
    vertex ``a`` to vertex ``b``.  ``edge_elements[e] = (left, right)`` where
    ``left`` is the incident triangle with the smaller index (the "+" side)
    and ``right`` is ``BOUNDARY`` on the boundary.  ``normals[e]`` is the
    outward unit normal of the left triangle.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    edges: np.ndarray
    edge_elements: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    tags: np.ndarray
    level: int = 0
    element_edges: np.ndarray = field(default=None, repr=False)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def interior(self) -> np.ndarray:
        return self.edge_elements[:, 1] != BOUNDARY

    @property
    def h(self) -> float:
        return float(self.lengths.max())

    # -- element geometry ------------------------------------------------
    @cached_property
    def jacobians(self) -> np.ndarray:
        X = self.vertices[self.triangles]
        return np.stack([X[:, 1] - X[:, 0], X[:, 2] - X[:, 0]], axis=-1)

    @cached_property
    def inverse_jacobians(self) -> np.ndarray:
        return np.linalg.inv(self.jacobians)

    @cached_property
    def dets(self) -> np.ndarray:
        return np.linalg.det(self.jacobians)

    @cached_property
    def areas(self) -> np.ndarray:
        return 0.5 * self.dets

    @cached_property
    def origins(self) -> np.ndarray:
        return self.vertices[self.triangles[:, 0]]

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @cached_property
    def diameters(self) -> np.ndarray:
        X = self.vertices[self.triangles]
        d = [np.linalg.norm(X[:, i] - X[:, (i + 1) % 3], axis=1) for i in range(3)]
        return np.max(d, axis=0)

    def to_physical(self, ref_points: np.ndarray, elements=None) -> np.ndarray:
        """Map reference points ``(nq, 2)`` to physical points ``(nel, nq, 2)``."""
        J = self.jacobians if elements is None else self.jacobians[elements]
        x0 = self.origins if elements is None else self.origins[elements]
        return x0[:, None, :] + np.einsum("eij,qj->eqi", J, ref_points)

    def to_reference(self, points: np.ndarray, elements: np.ndarray) -> np.ndarray:
        """Inverse map for points ``(n, ..., 2)`` lying in ``elements`` ``(n,)``."""
        Jinv = self.inverse_jacobians[elements]
        x0 = self.origins[elements]
        shape = (len(elements),) + (1,) * (points.ndim - 2) + (2,)
        d = points - x0.reshape(shape)
        return np.einsum("eij,e...j->e...i", Jinv, d)

    def edge_points(self, s: np.ndarray) -> np.ndarray:
        """Physical points ``(n_edges, ns, 2)`` at edge parameters ``s``."""
        A = self.vertices[self.edges[:, 0]]
        B = self.vertices[self.edges[:, 1]]
        return A[:, None, :] + s[None, :, None] * (B - A)[:, None, :]

    # -- topology helpers --------------------------------------------------
    def edge_trace_frame(self, e: int):
        """``(n_plus, left, right, param)`` where ``param(s)`` maps ``[0,1]`` onto the edge."""
        a, b = self.edges[e]
        A = self.vertices[a].copy()
        B = self.vertices[b].copy()

        def param(s):
            s = np.asarray(s, float)
            return A + s[..., None] * (B - A)

        left, right = self.edge_elements[e]
        return self.normals[e].copy(), int(left), int(right), param

    def with_tags(self, neumann) -> "Mesh":
        """Copy with boundary edges for which ``neumann(midpoint)`` is true tagged NEUMANN."""
        tags = self.tags.copy()
        mids = 0.5 * (self.vertices[self.edges[:, 0]] + self.vertices[self.edges[:, 1]])
        for e in np.flatnonzero(~self.interior):
            tags[e] = NEUMANN if neumann(mids[e]) else DIRICHLET
        return Mesh(self.vertices, self.triangles, self.edges, self.edge_elements, self.normals,
                    self.lengths, tags, self.level, self.element_edges)

    def to_json(self) -> str:
        """Debug dump; schema documented in ``docs/mesh_schema.md``."""
        return json.dumps({
            "level": self.level,
            "vertices": self.vertices.tolist(),
            "triangles": self.triangles.tolist(),
            "edges": [
                {"vertices": [int(a), int(b)], "left": int(l), "right": int(r),
                 "normal": n.tolist(), "length": float(h), "tag": _TAG_NAMES[int(t)]}
                for (a, b), (l, r), n, h, t in zip(self.edges, self.edge_elements, self.normals,
                                                    self.lengths, self.tags)
            ],
        })


def _refine(verts: dict, tris: list) -> tuple[dict, list]:
    # vertex keys are exact integer coordinates on a dyadic grid
    new_verts = {}
    index = {}
    for key in verts:
        k2 = (2 * key[0], 2 * key[1])
        index[key] = new_verts.setdefault(k2, len(new_verts))
    inv = {v: k for k, v in new_verts.items()}

    def mid(i, j):
        (x1, y1), (x2, y2) = inv[i], inv[j]
        key = ((x1 + x2) // 2, (y1 + y2) // 2)
        if key not in new_verts:
            new_verts[key] = len(new_verts)
            inv[new_verts[key]] = key
        return new_verts[key]

    old_inv = {v: k for k, v in verts.items()}
    out = []
    for (a, b, c) in tris:
        a, b, c = index[old_inv[a]], index[old_inv[b]], index[old_inv[c]]
        ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
        out += [(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)]
    return new_verts, out


def from_triangles(vertices: np.ndarray, triangles: np.ndarray, level: int = 0) -> Mesh:
    """Build edge topology for a counterclockwise triangle list."""
    vertices = np.asarray(vertices, float)
    triangles = np.asarray(triangles, np.int64)
    nt = len(triangles)
    local = np.array([[0, 1], [1, 2], [2, 0]])
    pairs = triangles[:, local].reshape(-1, 2)
    keys = np.sort(pairs, axis=1)
    uniq, inv, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inv = inv.ravel()
    if counts.max() > 2:
        raise ValueError("non-manifold edge")
    owner = np.repeat(np.arange(nt), 3)
    ne = len(uniq)
    edge_elements = np.full((ne, 2), BOUNDARY, np.int64)
    order = np.lexsort((owner, inv))
    inv_s, own_s = inv[order], owner[order]
    first = np.ones(len(inv_s), bool)
    first[1:] = inv_s[1:] != inv_s[:-1]
    edge_elements[inv_s[first], 0] = own_s[first]
    edge_elements[inv_s[~first], 1] = own_s[~first]

    A = vertices[uniq[:, 0]]
    B = vertices[uniq[:, 1]]
    t = B - A
    lengths = np.linalg.norm(t, axis=1)
    n = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
    # orient n outward from the left element
    cen = vertices[triangles[edge_elements[:, 0]]].mean(axis=1)
    flip = np.einsum("ij,ij->i", n, 0.5 * (A + B) - cen) < 0
    n[flip] *= -1.0
    tags = np.where(edge_elements[:, 1] == BOUNDARY, DIRICHLET, INTERIOR)
    return Mesh(vertices, triangles, uniq, edge_elements, n, lengths, tags, level,
                inv.reshape(nt, 3))


def build_unit_square(level: int) -> Mesh:
    """Level-1 mesh: two triangles split by the north-east diagonal; each level red-refines."""
    if int(level) != level or level < 1:
        raise ValueError(f"level must be a positive integer, got {level!r}")
    verts = {(0, 0): 0, (1, 0): 1, (1, 1): 2, (0, 1): 3}
    tris = [(0, 1, 2), (0, 2, 3)]
    for _ in range(level - 1):
        verts, tris = _refine(verts, tris)
    scale = 2 ** (level - 1)
    coords = np.zeros((len(verts), 2))
    for (x, y), i in verts.items():
        coords[i] = (x / scale, y / scale)
    return from_triangles(coords, np.array(tris), level)
