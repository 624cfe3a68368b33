"""Conforming triangulations and newest-vertex bisection (NVB).

Conventions used throughout the package:

* elements are stored as vertex triples ``(v0, v1, v2)`` in counter-clockwise
  order, and the refinement edge is always the edge joining local vertices 0
  and 1; the newest vertex sits at local position 2;
* bisecting ``(v0, v1, v2)`` at the midpoint ``m`` of the refinement edge
  produces the sons ``(v2, v0, m)`` and ``(v1, v2, m)``, which again follow
  the same convention;
* refining a marked element bisects all three of its edges (three bisections,
  four sons); conformity is restored by an edge-marking fixpoint with a fuel
  limit, after which every element is rebuilt in one pass;
* vertices are append-only: refine() keeps all coarse vertex ids and appends
  the new edge midpoints in deterministic order, so coarse vertex ids remain
  valid in every descendant mesh.

On the polygonal unit-circle domain, new midpoints of boundary edges are
snapped radially onto the circle. This is the only place where the affine
midpoint structure is deliberately broken; prolongation weights stay (1/2,
1/2) for such nodes and the geometric consistency error this introduces
vanishes under refinement.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NumericalError

_uid_counter = itertools.count(1)


@dataclass
class DomainSpec:
    """Polygonal computational domain.

    kind is "unit_circle" (inscribed regular polygon with ``circle_segments``
    boundary vertices, refined vertices snapped to the circle) or "l_shape"
    (the fixed polygon (-1,1)^2 minus the closed quadrant [0,1)^2).
    """

    kind: str
    circle_segments: int = 16

    def validate(self, strict: bool = True) -> None:
        if self.kind not in ("unit_circle", "l_shape"):
            raise InputError(f"unknown domain kind: {self.kind!r}")
        if self.kind == "unit_circle":
            least = 8 if strict else 3
            if self.circle_segments < least:
                raise InputError(
                    f"circle_segments={self.circle_segments} below minimum {least}"
                )


@dataclass(eq=False)
class Triangulation:
    vertices: np.ndarray          # (nv, 2) float64
    elements: np.ndarray          # (ne, 3) int64, refinement edge = (v0, v1)
    is_boundary: np.ndarray       # (nv,) bool
    domain: DomainSpec | None = None
    level: int = 0
    uid: int = field(default_factory=lambda: next(_uid_counter))

    # lazy caches
    _edges: np.ndarray | None = field(default=None, repr=False)
    _elem_edges: np.ndarray | None = field(default=None, repr=False)
    _edge_count: np.ndarray | None = field(default=None, repr=False)
    _areas: np.ndarray | None = field(default=None, repr=False)
    _interior: np.ndarray | None = field(default=None, repr=False)
    _dof_of_vertex: np.ndarray | None = field(default=None, repr=False)
    _vertex_patches: list | None = field(default=None, repr=False)

    # -- basic sizes ---------------------------------------------------------

    @property
    def n_vertices(self) -> int:
        return self.vertices.shape[0]

    @property
    def n_elements(self) -> int:
        return self.elements.shape[0]

    # -- derived structures --------------------------------------------------

    def _build_edges(self) -> None:
        ele = self.elements
        raw = np.concatenate(
            [ele[:, [0, 1]], ele[:, [1, 2]], ele[:, [2, 0]]], axis=0
        )
        raw_sorted = np.sort(raw, axis=1)
        edges, inverse, counts = np.unique(
            raw_sorted, axis=0, return_inverse=True, return_counts=True
        )
        self._edges = edges
        ne = self.n_elements
        self._elem_edges = np.stack(
            [inverse[:ne], inverse[ne:2 * ne], inverse[2 * ne:]], axis=1
        )
        self._edge_count = counts

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (n_edges, 2)."""
        if self._edges is None:
            self._build_edges()
        return self._edges

    @property
    def elem_edges(self) -> np.ndarray:
        """Edge index of local edges (0,1), (1,2), (2,0) per element."""
        if self._elem_edges is None:
            self._build_edges()
        return self._elem_edges

    @property
    def edge_count(self) -> np.ndarray:
        if self._edge_count is None:
            self._build_edges()
        return self._edge_count

    @property
    def areas(self) -> np.ndarray:
        if self._areas is None:
            p = self.vertices[self.elements]
            d1 = p[:, 1] - p[:, 0]
            d2 = p[:, 2] - p[:, 0]
            self._areas = 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
        return self._areas

    @property
    def interior_nodes(self) -> np.ndarray:
        """Vertex ids of interior (non-boundary) vertices, ascending."""
        if self._interior is None:
            self._interior = np.flatnonzero(~self.is_boundary)
        return self._interior

    @property
    def n_dofs(self) -> int:
        return self.interior_nodes.size

    @property
    def dof_of_vertex(self) -> np.ndarray:
        """Map vertex id -> interior dof index, -1 for boundary vertices."""
        if self._dof_of_vertex is None:
            m = np.full(self.n_vertices, -1, dtype=np.int64)
            m[self.interior_nodes] = np.arange(self.interior_nodes.size)
            self._dof_of_vertex = m
        return self._dof_of_vertex

    def diameters(self) -> np.ndarray:
        p = self.vertices[self.elements]
        e0 = np.linalg.norm(p[:, 1] - p[:, 0], axis=1)
        e1 = np.linalg.norm(p[:, 2] - p[:, 1], axis=1)
        e2 = np.linalg.norm(p[:, 0] - p[:, 2], axis=1)
        return np.max(np.stack([e0, e1, e2], axis=1), axis=1)

    def mesh_size(self) -> np.ndarray:
        """Per-element size h_T = |T|^(1/2)."""
        return np.sqrt(self.areas)

    def element_patch(self, t: int) -> np.ndarray:
        """Ids of elements sharing at least one vertex with element t."""
        if not 0 <= t < self.n_elements:
            raise InputError(f"element id {t} out of range")
        if self._vertex_patches is None:
            patches: list[list[int]] = [[] for _ in range(self.n_vertices)]
            for e, tri in enumerate(self.elements):
                for v in tri:
                    patches[v].append(e)
            self._vertex_patches = patches
        out: set[int] = set()
        for v in self.elements[t]:
            out.update(self._vertex_patches[v])
        return np.array(sorted(out), dtype=np.int64)

    def skeleton_distance(self, x, t: int) -> float:
        """Distance from point x to the boundary of element t.

        x must lie in (the closure of) element t; for such points the
        distance to the mesh skeleton is attained on the element boundary.
        """
        if not 0 <= t < self.n_elements:
            raise InputError(f"element id {t} out of range")
        x = np.asarray(x, dtype=float)
        p = self.vertices[self.elements[t]]
        # barycentric containment with a small slack for round-off
        mat = np.stack([p[1] - p[0], p[2] - p[0]], axis=1)
        lam = np.linalg.solve(mat, x - p[0])
        if lam[0] < -1e-12 or lam[1] < -1e-12 or lam[0] + lam[1] > 1 + 1e-12:
            raise InputError("point lies outside the given element")
        best = np.inf
        for i in range(3):
            a, b = p[i], p[(i + 1) % 3]
            ab = b - a
            denom = float(ab @ ab)
            s = 0.0 if denom == 0.0 else float(np.clip((x - a) @ ab / denom, 0.0, 1.0))
            best = min(best, float(np.linalg.norm(x - (a + s * ab))))
        return best

    # -- integrity -----------------------------------------------------------

    def check_conformity(self) -> None:
        """Raise NumericalError if the triangulation is broken."""
        if not np.all(np.isfinite(self.vertices)):
            raise NumericalError("non-finite vertex coordinates")
        ele = self.elements
        if np.any(ele < 0) or np.any(ele >= self.n_vertices):
            raise NumericalError("element references missing vertex")
        same = (ele[:, 0] == ele[:, 1]) | (ele[:, 1] == ele[:, 2]) | (ele[:, 0] == ele[:, 2])
        if np.any(same):
            raise NumericalError("degenerate element (repeated vertex)")
        if np.any(self.areas <= 0):
            raise NumericalError("element with non-positive area (orientation broken)")
        counts = self.edge_count
        if np.any(counts > 2):
            raise NumericalError("edge shared by more than two elements")
        # interior edges shared by exactly two elements, boundary edges by one;
        # hanging nodes would show up as a vertex lying inside another
        # element's edge, which the midpoint bookkeeping of refine() excludes,
        # but guard against stale boundary flags as well
        boundary_edges = counts == 1
        bvert = np.zeros(self.n_vertices, dtype=bool)
        bvert[self.edges[boundary_edges].ravel()] = True
        if not np.array_equal(bvert, self.is_boundary):
            raise NumericalError("boundary flags inconsistent with edge incidence")

    # -- text dump -----------------------------------------------------------

    def to_text(self) -> str:
        lines = [f"{self.n_vertices} {self.n_elements}"]
        for (x, y), b in zip(self.vertices, self.is_boundary):
            lines.append(f"{x:.17g} {y:.17g} {int(b)}")
        for v0, v1, v2 in self.elements:
            lines.append(f"{v0} {v1} {v2}")
        return "\n".join(lines) + "\n"


def triangulation_from_text(text: str) -> Triangulation:
    """Inverse of Triangulation.to_text (domain information is not stored)."""
    rows = text.strip().splitlines()
    if not rows:
        raise InputError("empty mesh text")
    try:
        nv, ne = (int(tok) for tok in rows[0].split())
        vertices = np.empty((nv, 2))
        flags = np.empty(nv, dtype=bool)
        for i in range(nv):
            x, y, b = rows[1 + i].split()
            vertices[i] = (float(x), float(y))
            flags[i] = bool(int(b))
        elements = np.empty((ne, 3), dtype=np.int64)
        for j in range(ne):
            elements[j] = [int(tok) for tok in rows[1 + nv + j].split()]
    except (ValueError, IndexError) as exc:
        raise InputError(f"malformed mesh text: {exc}") from None
    return Triangulation(vertices, elements, flags)


# -- initial meshes ----------------------------------------------------------


def _orient_ccw(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    p = vertices[elements]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    area2 = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    flipped = elements.copy()
    cw = area2 < 0
    flipped[cw] = flipped[cw][:, [0, 2, 1]]
    return flipped


def _assign_refinement_edges(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    """Cyclically rotate each (ccw) element so the refinement edge (v0, v1)
    is its longest edge; ties pick the edge with the smallest opposite
    vertex id."""
    out = elements.copy()
    for i, (a, b, c) in enumerate(elements):
        pts = vertices[[a, b, c]]
        lens = np.array(
            [
                np.sum((pts[1] - pts[0]) ** 2),
                np.sum((pts[2] - pts[1]) ** 2),
                np.sum((pts[0] - pts[2]) ** 2),
            ]
        )
        opposite = np.array([c, a, b])
        best = max(range(3), key=lambda k: (lens[k], -opposite[k]))
        out[i] = np.roll(elements[i], -best)
    return out


def build_initial_mesh(domain: DomainSpec) -> Triangulation:
    """Deterministic coarse mesh for a domain spec.

    unit_circle: fan of ``circle_segments`` triangles around the origin with
    boundary vertices on the circle. l_shape: six congruent right triangles
    on the three unit squares of (-1,1)^2 minus [0,1)^2.
    """
    domain.validate(strict=False)
    if domain.kind == "unit_circle":
        k = domain.circle_segments
        theta = 2.0 * np.pi * np.arange(k) / k
        vertices = np.concatenate(
            [np.stack([np.cos(theta), np.sin(theta)], axis=1), [[0.0, 0.0]]]
        )
        elements = np.array(
            [[i, (i + 1) % k, k] for i in range(k)], dtype=np.int64
        )
    else:
        vertices = np.array(
            [
                [-1.0, -1.0], [0.0, -1.0], [1.0, -1.0],
                [-1.0, 0.0], [0.0, 0.0], [1.0, 0.0],
                [-1.0, 1.0], [0.0, 1.0],
            ]
        )
        squares = [(0, 1, 3, 4), (1, 2, 4, 5), (3, 4, 6, 7)]
        tris = []
        for v00, v10, v01, v11 in squares:
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
        elements = np.array(tris, dtype=np.int64)
    elements = _orient_ccw(vertices, elements)
    elements = _assign_refinement_edges(vertices, elements)
    mesh = Triangulation(vertices, elements, _boundary_flags(vertices, elements), domain, 0)
    mesh.check_conformity()
    return mesh


def _boundary_flags(vertices: np.ndarray, elements: np.ndarray) -> np.ndarray:
    ne = elements.shape[0]
    raw = np.concatenate(
        [elements[:, [0, 1]], elements[:, [1, 2]], elements[:, [2, 0]]], axis=0
    )
    raw_sorted = np.sort(raw, axis=1)
    edges, counts = np.unique(raw_sorted, axis=0, return_counts=True)
    flags = np.zeros(vertices.shape[0], dtype=bool)
    flags[edges[counts == 1].ravel()] = True
    return flags


# -- prolongation ------------------------------------------------------------


@dataclass(eq=False)
class Prolongation:
    """Node transfer from a coarse mesh to one of its refinements.

    Every fine vertex has one or two coarse parent vertices whose weights sum
    to one: kept vertices are their own parent with weight 1, edge midpoints
    average their edge's endpoints. ``matrix`` restricts this to interior
    nodes (zero Dirichlet data), which is the operator used by the solver and
    the estimator.
    """

    coarse_uid: int
    fine_uid: int
    parents: np.ndarray            # (n_fine_vertices, 2) int64
    weights: np.ndarray            # (n_fine_vertices, 2) float64
    sons: list                     # per coarse element: array of fine element ids
    refined: np.ndarray            # (n_coarse_elements,) bool
    midpoint_of_edge: dict         # (a, b) with a < b -> fine vertex id
    dof_matrix: object = None      # cached interior-to-interior CSR

    def apply_vertexwise(self, coarse_values: np.ndarray) -> np.ndarray:
        """Apply the transfer to values given at every coarse vertex."""
        vals = np.asarray(coarse_values, dtype=float)
        return (
            self.weights[:, 0] * vals[self.parents[:, 0]]
            + self.weights[:, 1] * vals[self.parents[:, 1]]
        )

    def matrix(self, coarse: Triangulation, fine: Triangulation):
        """Sparse interior-to-interior prolongation matrix (CSR)."""
        from scipy.sparse import csr_matrix

        if coarse.uid != self.coarse_uid or fine.uid != self.fine_uid:
            raise InputError("prolongation does not connect these meshes")
        if self.dof_matrix is not None:
            return self.dof_matrix
        cdof = coarse.dof_of_vertex
        rows, cols, vals = [], [], []
        for fdof, v in enumerate(fine.interior_nodes):
            for p, w in zip(self.parents[v], self.weights[v]):
                if w != 0.0 and cdof[p] >= 0:
                    rows.append(fdof)
                    cols.append(cdof[p])
                    vals.append(w)
        self.dof_matrix = csr_matrix(
            (vals, (rows, cols)), shape=(fine.n_dofs, coarse.n_dofs)
        )
        return self.dof_matrix


# -- refinement --------------------------------------------------------------


def refine(mesh: Triangulation, marked) -> tuple[Triangulation, Prolongation]:
    """Refine all marked elements and restore conformity.

    Each marked element has all three edges bisected (four sons). The closure
    phase iterates "an element with any split edge also splits its refinement
    edge" to a fixpoint with fuel 10 * n_elements, then rebuilds every element
    in a single deterministic pass.
    """
    marked = np.asarray(list(marked), dtype=np.int64)
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise InputError("marked element id out of range")
    marked = np.unique(marked)

    ele = mesh.elements
    ne = mesh.n_elements
    elem_edges = mesh.elem_edges
    want = np.zeros(mesh.edges.shape[0], dtype=bool)
    want[elem_edges[marked].ravel()] = True

    if not want.any():
        nv = mesh.n_vertices
        parents = np.stack([np.arange(nv, dtype=np.int64)] * 2, axis=1)
        weights = np.zeros((nv, 2))
        weights[:, 0] = 1.0
        sons = [np.array([t], dtype=np.int64) for t in range(ne)]
        ident = Prolongation(
            mesh.uid, mesh.uid, parents, weights, sons,
            np.zeros(ne, dtype=bool), {},
        )
        ident.matrix(mesh, mesh)
        return mesh, ident

    fuel = 10 * max(ne, 1)
    spent = 0
    while True:
        # refinement edge must be split whenever any edge of the element is
        have_any = want[elem_edges].any(axis=1)
        need = have_any & ~want[elem_edges[:, 0]]
        if not need.any():
            break
        want[elem_edges[need, 0]] = True
        spent += 1
        if spent > fuel:
            raise NumericalError("mesh closure exceeded fuel limit")

    # create midpoints in deterministic order (scan elements, local edges)
    verts = [mesh.vertices]
    flags = [mesh.is_boundary]
    nv = mesh.n_vertices
    midpoint = np.full(mesh.edges.shape[0], -1, dtype=np.int64)
    new_pts: list[np.ndarray] = []
    new_flags: list[bool] = []
    snap = mesh.domain is not None and mesh.domain.kind == "unit_circle"
    for t in range(ne):
        for k in range(3):
            e = elem_edges[t, k]
            if want[e] and midpoint[e] < 0:
                a, b = mesh.edges[e]
                p = 0.5 * (mesh.vertices[a] + mesh.vertices[b])
                on_boundary = mesh.edge_count[e] == 1
                if snap and on_boundary:
                    r = np.hypot(p[0], p[1])
                    if r == 0.0:
                        raise NumericalError("cannot snap midpoint at origin")
                    p = p / r
                midpoint[e] = nv + len(new_pts)
                new_pts.append(p)
                new_flags.append(bool(on_boundary))
    if new_pts:
        verts.append(np.array(new_pts))
        flags.append(np.array(new_flags, dtype=bool))
    vertices = np.concatenate(verts, axis=0)
    is_boundary = np.concatenate(flags)

    new_elements: list[tuple[int, int, int]] = []
    sons: list[np.ndarray] = []
    refined = np.zeros(ne, dtype=bool)
    for t in range(ne):
        v0, v1, v2 = ele[t]
        e01, e12, e20 = elem_edges[t]
        m01 = midpoint[e01] if want[e01] else -1
        m12 = midpoint[e12] if want[e12] else -1
        m20 = midpoint[e20] if want[e20] else -1
        base = len(new_elements)
        if m01 < 0:
            # fixpoint guarantees no other edge is split either
            new_elements.append((v0, v1, v2))
        else:
            refined[t] = True
            # first son (v2, v0, m01), split again if its refinement
            # edge (v2, v0) carries a midpoint
            if m20 >= 0:
                new_elements.append((m01, v2, m20))
                new_elements.append((v0, m01, m20))
            else:
                new_elements.append((v2, v0, m01))
            # second son (v1, v2, m01), refinement edge (v1, v2)
            if m12 >= 0:
                new_elements.append((m01, v1, m12))
                new_elements.append((v2, m01, m12))
            else:
                new_elements.append((v1, v2, m01))
        sons.append(np.arange(base, len(new_elements), dtype=np.int64))

    fine = Triangulation(
        vertices,
        np.array(new_elements, dtype=np.int64),
        is_boundary,
        mesh.domain,
        mesh.level + 1,
    )
    fine.check_conformity()

    nfv = fine.n_vertices
    parents = np.empty((nfv, 2), dtype=np.int64)
    weights = np.zeros((nfv, 2))
    parents[:nv, 0] = np.arange(nv)
    parents[:nv, 1] = np.arange(nv)
    weights[:nv, 0] = 1.0
    midpoint_of_edge = {}
    for e in np.flatnonzero(midpoint >= 0):
        a, b = mesh.edges[e]
        m = midpoint[e]
        parents[m] = (a, b)
        weights[m] = (0.5, 0.5)
        midpoint_of_edge[(int(a), int(b))] = int(m)

    prol = Prolongation(
        mesh.uid, fine.uid, parents, weights, sons, refined, midpoint_of_edge
    )
    prol.matrix(mesh, fine)
    return fine, prol


def uniform_refine(mesh: Triangulation) -> tuple[Triangulation, Prolongation]:
    """Bisect every edge: each element is replaced by its four sons."""
    return refine(mesh, np.arange(mesh.n_elements))


def new_interior_nodes(
    coarse: Triangulation, fine: Triangulation, prol: Prolongation
) -> list[np.ndarray]:
    """Per coarse element, the fine vertices that lie on it but are neither
    coarse vertices nor boundary vertices (its interior edge midpoints).
    Midpoints of shared edges appear in both adjacent elements' sets."""
    if prol.coarse_uid != coarse.uid or prol.fine_uid != fine.uid:
        raise InputError("meshes are not related by this prolongation")
    out = []
    for t in range(coarse.n_elements):
        v0, v1, v2 = coarse.elements[t]
        nodes = []
        for a, b in ((v0, v1), (v1, v2), (v2, v0)):
            key = (int(min(a, b)), int(max(a, b)))
            m = prol.midpoint_of_edge.get(key, -1)
            if m >= 0 and not fine.is_boundary[m]:
                nodes.append(m)
        out.append(np.array(sorted(nodes), dtype=np.int64))
    return out


def shape_regularity(mesh: Triangulation) -> float:
    """max_T diam(T)^2 / |T| over the mesh."""
    return float(np.max(mesh.diameters() ** 2 / mesh.areas))


def element_patch(mesh: Triangulation, t: int) -> np.ndarray:
    return mesh.element_patch(t)


def mesh_size(mesh: Triangulation, t: int) -> float:
    if not 0 <= t < mesh.n_elements:
        raise InputError(f"element id {t} out of range")
    return float(np.sqrt(mesh.areas[t]))


def skeleton_distance(mesh: Triangulation, x, t: int) -> float:
    return mesh.skeleton_distance(x, t)
