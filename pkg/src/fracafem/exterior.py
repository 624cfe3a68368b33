"""Triangulation of the shell between the domain and its enclosing ball.

The complement term of the energy form needs integrals over B \\ Omega,
with B a ball well clear of the domain. The shell is meshed in two parts:

* graded strips that follow the domain boundary: every boundary vertex
  is pushed outward along its angle bisector in geometrically growing
  steps sized by the adjacent boundary edges, so the strip elements
  refine together with the boundary elements they sit on. The innermost
  strip reuses the domain mesh's boundary vertex ids, which lets the
  pair classifier recognize touching configurations across the boundary.
* the rest, up to a 256-gon inscribed in the ball, is cut into cells by
  a square background grid, clipped, and ear-clipped into triangles.

Strip vertices created here get ids starting at mesh.n_vertices, so the
id space extends the domain mesh's.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from shapely.geometry import Polygon, box
from shapely.geometry.polygon import orient

from .errors import InputError, NumericalError
from .mesh import Triangulation

BALL_FACTOR = 1.5        # ball radius over circumscribing radius
TARGET_FACTOR = 0.2      # strip depth as a fraction of the ball radius
FIRST_STEP = 0.8         # first offset step over the local edge length
MAX_LAYERS = 12
N_BALL_SEGMENTS = 256
GRID_CELLS = 12          # background grid cells across the ball diameter


@dataclass(eq=False)
class ShellMesh:
    """Straight triangles covering ball-minus-domain, without dofs."""

    tri_pts: np.ndarray       # (n, 3, 2)
    tri_vids: np.ndarray      # (n, 3) ids; boundary row reuses mesh ids
    ball_center: np.ndarray
    ball_radius: float
    n_strip: int              # strip triangles come first

    @property
    def n_elements(self) -> int:
        return self.tri_pts.shape[0]

    def areas(self) -> np.ndarray:
        d1 = self.tri_pts[:, 1] - self.tri_pts[:, 0]
        d2 = self.tri_pts[:, 2] - self.tri_pts[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


def enclosing_ball(mesh: Triangulation):
    """Bounding-box center and 1.5x the circumscribing radius."""
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    center = 0.5 * (lo + hi)
    circ = np.max(np.linalg.norm(mesh.vertices - center, axis=1))
    return center, BALL_FACTOR * circ


def boundary_loop(mesh: Triangulation) -> np.ndarray:
    """Boundary vertex ids ordered counterclockwise around the domain."""
    count = mesh.edge_count
    lookup = {
        (int(a), int(b)): i for i, (a, b) in enumerate(mesh.edges)
    }
    succ = {}
    for t in range(mesh.n_elements):
        tri = mesh.elements[t]
        for k in range(3):
            a, b = int(tri[k]), int(tri[(k + 1) % 3])
            key = (a, b) if a < b else (b, a)
            # elements are counterclockwise, so a boundary edge traversed
            # inside its unique element runs counterclockwise around Omega
            if count[lookup[key]] == 1:
                if a in succ:
                    raise InputError("boundary is not a single loop")
                succ[a] = b
    if not succ:
        raise InputError("mesh has no boundary edges")
    start = min(succ)
    loop = [start]
    cur = succ[start]
    while cur != start:
        loop.append(cur)
        cur = succ[cur]
        if len(loop) > len(succ):
            raise InputError("boundary loop does not close")
    if len(loop) != len(succ):
        raise InputError("boundary has more than one loop")
    return np.asarray(loop, dtype=np.int64)


def _bisectors(pts: np.ndarray):
    """Unit outward bisector at each loop vertex (loop counterclockwise)."""
    nxt = np.roll(pts, -1, axis=0) - pts
    prv = pts - np.roll(pts, 1, axis=0)

    def outward(d):
        n = np.stack([d[:, 1], -d[:, 0]], axis=1)
        return n / np.linalg.norm(n, axis=1)[:, None]

    n1 = outward(prv)
    n2 = outward(nxt)
    bis = n1 + n2
    norms = np.linalg.norm(bis, axis=1)
    if np.any(norms < 1e-12):
        raise NumericalError("degenerate corner: opposite edge normals")
    return bis / norms[:, None]


def _quads_ok(inner, outer):
    """All strip quads between two rings split into positive triangles."""
    a = inner
    b = np.roll(inner, -1, axis=0)
    c = np.roll(outer, -1, axis=0)
    d = outer

    def cross(p, q, r):
        return (q[:, 0] - p[:, 0]) * (r[:, 1] - p[:, 1]) - (
            q[:, 1] - p[:, 1]
        ) * (r[:, 0] - p[:, 0])

    eps = -1e-14
    t1 = cross(a, c, b)       # counterclockwise in the complement
    t2 = cross(a, d, c)
    deg1 = _row_equal(b, c)
    deg2 = _row_equal(a, d) | _row_equal(d, c)
    return np.all((t1 > eps) | deg1) and np.all((t2 > eps) | deg2)


def _row_equal(p, q):
    return np.all(p == q, axis=1)


def build_exterior_shell(mesh: Triangulation) -> ShellMesh:
    """Mesh the shell between the domain boundary and the enclosing ball."""
    center, R = enclosing_ball(mesh)
    loop = boundary_loop(mesh)
    pts0 = mesh.vertices[loop]
    nb = loop.size
    target = TARGET_FACTOR * R

    elens = np.linalg.norm(np.roll(pts0, -1, axis=0) - pts0, axis=1)
    prev_lens = np.roll(elens, 1)
    tau = FIRST_STEP * np.minimum(elens, prev_lens)
    bis = _bisectors(pts0)

    # advance rings at per-vertex geometric distances, capped at the target
    dists = [np.zeros(nb)]
    for j in range(1, MAX_LAYERS + 1):
        d = np.minimum(tau * (2.0 ** j - 1.0), target)
        if np.all(d == dists[-1]):
            break
        dists.append(d)
    if np.any(dists[-1] < target):
        dists.append(np.full(nb, target))

    rings = [pts0]
    ring_ids = [loop.copy()]
    next_id = mesh.n_vertices
    vid_alloc = {}

    def ring_vertex_ids(d, dprev, ids_prev):
        nonlocal next_id
        ids = np.empty(nb, dtype=np.int64)
        for k in range(nb):
            if d[k] == dprev[k]:
                ids[k] = ids_prev[k]
            else:
                ids[k] = next_id
                next_id += 1
        return ids

    kept = 1
    for j in range(1, len(dists)):
        cand = pts0 + dists[j][:, None] * bis
        poly = Polygon(cand)
        if not (poly.is_valid and poly.is_simple):
            break
        if not _quads_ok(rings[-1], cand):
            break
        rings.append(cand)
        ring_ids.append(ring_vertex_ids(dists[j], dists[j - 1], ring_ids[-1]))
        kept += 1
    if kept == 1:
        raise NumericalError("no valid offset ring around the domain")

    tri_pts = []
    tri_vids = []
    for j in range(1, kept):
        a_p, d_p = rings[j - 1], rings[j]
        a_i, d_i = ring_ids[j - 1], ring_ids[j]
        for k in range(nb):
            k2 = (k + 1) % nb
            A, B = a_p[k], a_p[k2]
            D, C = d_p[k], d_p[k2]
            ia, ib, ic, idd = a_i[k], a_i[k2], d_i[k2], d_i[k]
            if not np.array_equal(B, C):
                tri_pts.append([A, C, B])
                tri_vids.append([ia, ic, ib])
            if not (np.array_equal(A, D) or np.array_equal(D, C)):
                tri_pts.append([A, D, C])
                tri_vids.append([ia, idd, ic])
    n_strip = len(tri_pts)

    # grid-covered remainder out to the 256-gon
    theta = 2.0 * np.pi * np.arange(N_BALL_SEGMENTS) / N_BALL_SEGMENTS
    ball_pts = center[None, :] + R * np.stack(
        [np.cos(theta), np.sin(theta)], axis=1
    )
    ball_poly = Polygon(ball_pts)
    outer_ring = Polygon(rings[kept - 1])
    remainder = ball_poly.difference(outer_ring)
    if remainder.area <= 0:
        raise NumericalError("offset rings escaped the enclosing ball")

    tol = 1e-9 * R

    def grid_vertex_id(p):
        nonlocal next_id
        key = (round(p[0] / tol), round(p[1] / tol))
        got = vid_alloc.get(key)
        if got is None:
            got = next_id
            vid_alloc[key] = got
            next_id += 1
        return got

    g = 2.0 * R / GRID_CELLS
    x0, y0 = center - R
    area_floor = 1e-12 * R * R
    for i in range(GRID_CELLS):
        for j in range(GRID_CELLS):
            cell = box(x0 + i * g, y0 + j * g, x0 + (i + 1) * g,
                       y0 + (j + 1) * g)
            piece = cell.intersection(remainder)
            if piece.is_empty:
                continue
            geoms = piece.geoms if hasattr(piece, "geoms") else [piece]
            for geom in geoms:
                if not isinstance(geom, Polygon) or geom.area < area_floor:
                    continue
                for tri in _ear_clip(geom, area_floor):
                    tri_pts.append(tri)
                    tri_vids.append([grid_vertex_id(p) for p in tri])

    return ShellMesh(
        tri_pts=np.asarray(tri_pts, dtype=np.float64),
        tri_vids=np.asarray(tri_vids, dtype=np.int64),
        ball_center=np.asarray(center, dtype=np.float64),
        ball_radius=float(R),
        n_strip=n_strip,
    )


def _ear_clip(poly: Polygon, area_floor: float):
    """Triangulate a simple polygon (no holes) by ear clipping."""
    ring = orient(poly, sign=1.0).exterior.coords
    pts = [np.asarray(p) for p in ring[:-1]]
    # drop repeated points that shapely sometimes leaves in
    dedup = []
    for p in pts:
        if not dedup or np.linalg.norm(p - dedup[-1]) > 1e-14:
            dedup.append(p)
    if len(dedup) > 1 and np.linalg.norm(dedup[0] - dedup[-1]) <= 1e-14:
        dedup.pop()
    pts = dedup
    out = []
    guard = 4 * len(pts) * len(pts) + 16
    while len(pts) > 3 and guard > 0:
        guard -= 1
        n = len(pts)
        clipped = False
        for i in range(n):
            a, b, c = pts[i - 1], pts[i], pts[(i + 1) % n]
            cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
            if cr <= 1e-16:
                continue
            if _any_inside(pts, i, a, b, c):
                continue
            if 0.5 * cr >= area_floor:
                out.append([a, b, c])
            del pts[i]
            clipped = True
            break
        if not clipped:
            raise NumericalError("ear clipping failed on a shell piece")
    if len(pts) == 3:
        a, b, c = pts
        cr = (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
        if 0.5 * abs(cr) >= area_floor:
            out.append([a, b, c] if cr > 0 else [a, c, b])
    return out


def _any_inside(pts, i, a, b, c):
    n = len(pts)
    skip = {(i - 1) % n, i, (i + 1) % n}
    for j in range(n):
        if j in skip:
            continue
        p = pts[j]
        d1 = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0])
        d2 = (c[0] - b[0]) * (p[1] - b[1]) - (c[1] - b[1]) * (p[0] - b[0])
        d3 = (a[0] - c[0]) * (p[1] - c[1]) - (a[1] - c[1]) * (p[0] - c[0])
        if d1 >= -1e-14 and d2 >= -1e-14 and d3 >= -1e-14:
            return True
    return False
