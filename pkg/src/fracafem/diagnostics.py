"""Weighted norms, interpolation operators, and norm-equivalence probes.

The mesh-size weight, the nodal interpolant, and a Scott-Zhang type
projection are the computable parts of the two-level analysis. The
equivalence report drives them with reproducible pseudo-random fine
functions and records the ratio statistics the theory bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from shapely.geometry import Polygon

from .assembly import FemFunction, assemble_stiffness
from .errors import InputError, NumericalError
from .mesh import Prolongation, Triangulation, uniform_refine
from .quadrature import TRI_P1, gauss01, weighted_element_integral

# Linear congruential generator for the sample functions. The constants
# are fixed so that independent implementations reproduce the exact same
# coefficient streams: x <- (1664525 x + 1013904223) mod 2^32, seed 1,
# coefficients mapped to 2 x / 2^32 - 1 in [-1, 1). One global stream is
# consumed across all samples of a report.
LCG_A = 1664525
LCG_C = 1013904223
LCG_M = 2 ** 32
LCG_SEED = 1

DEGENERATE_EPS = 1e-14

# P1 element mass matrix scaled by 12/|T|; its inverse gives the dual
# coefficients (3 phi_i - phi_j - phi_k) * 3 / |T|.
_MASS_UNIT = np.array([[2.0, 1.0, 1.0],
                       [1.0, 2.0, 1.0],
                       [1.0, 1.0, 2.0]]) / 12.0


class _Lcg:
    def __init__(self, seed: int = LCG_SEED):
        self.state = seed % LCG_M

    def next_coeff(self) -> float:
        self.state = (LCG_A * self.state + LCG_C) % LCG_M
        return 2.0 * (self.state / LCG_M) - 1.0

    def coeffs(self, n: int) -> np.ndarray:
        return np.array([self.next_coeff() for _ in range(n)])


@dataclass(eq=False)
class WeightFunction:
    """Piecewise mesh-size weight raised to the power s.

    For s <= 1/2 the value on element T is the constant h(T)^s with
    h(T) = |T|^(1/2). For s > 1/2 it is h(T)^(1/2) d(x)^(s-1/2) where d
    is the distance to the element boundary, so the weight vanishes on
    the mesh skeleton.
    """

    mesh: Triangulation
    s: float

    def __post_init__(self):
        if not 0.0 < self.s < 1.0:
            raise InputError("s must lie in (0, 1)")

    def values(self, t: int, points) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = math.sqrt(self.mesh.areas[t])
        if self.s <= 0.5:
            return np.full(pts.shape[0], h ** self.s)
        dist = np.array([self.mesh.skeleton_distance(p, t) for p in pts])
        return h ** 0.5 * dist ** (self.s - 0.5)


def _check_refinement(coarse: Triangulation, fine: Triangulation,
                      prol: Prolongation) -> None:
    if prol.coarse_uid != coarse.uid or prol.fine_uid != fine.uid:
        raise InputError("prolongation does not link the given meshes")


def _son_evaluator(fine: Triangulation, son_ids, vertex_values):
    """Return f(points) evaluating a fine P1 function on a son patch.

    Points must lie in the union of the given fine elements; each point
    is assigned to the son whose barycentric coordinates are least
    negative, which is robust on shared edges.
    """
    son_ids = np.asarray(son_ids, dtype=np.int64)
    tris = fine.vertices[fine.elements[son_ids]]        # (ns, 3, 2)
    vals = vertex_values[fine.elements[son_ids]]        # (ns, 3)
    mats = np.stack([tris[:, 1] - tris[:, 0], tris[:, 2] - tris[:, 0]],
                    axis=2)                             # (ns, 2, 2)
    inv = np.linalg.inv(mats)

    def evaluate(points):
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        rel = pts[None, :, :] - tris[:, None, 0, :]     # (ns, k, 2)
        lam12 = np.einsum("sab,skb->ska", inv, rel)     # (ns, k, 2)
        lam0 = 1.0 - lam12[..., 0] - lam12[..., 1]
        lam = np.stack([lam0, lam12[..., 0], lam12[..., 1]], axis=-1)
        score = lam.min(axis=-1)                        # (ns, k)
        pick = score.argmax(axis=0)                     # (k,)
        k = pts.shape[0]
        lam_sel = lam[pick, np.arange(k), :]            # (k, 3)
        return np.einsum("ki,ki->k", lam_sel, vals[pick])

    return evaluate


def _incenter(tri: np.ndarray) -> np.ndarray:
    a = np.linalg.norm(tri[1] - tri[2])
    b = np.linalg.norm(tri[2] - tri[0])
    c = np.linalg.norm(tri[0] - tri[1])
    return (a * tri[0] + b * tri[1] + c * tri[2]) / (a + b + c)


def _tri_area(p0, p1, p2) -> float:
    return 0.5 * abs((p1[0] - p0[0]) * (p2[1] - p0[1])
                     - (p2[0] - p0[0]) * (p1[1] - p0[1]))


def _piece_integral(sub, dist, alpha: float, g2, tol: float,
                    floor: float = 0.0) -> float:
    """int over a triangle of d(x)^alpha g2(x) with d affine, d >= 0.

    The triangle is assumed to intersect {d = 0} at most along one edge
    or at one vertex; the map is chosen so the singular factor becomes a
    pure power of one coordinate, leaving a smooth remainder. The rule
    size doubles until two successive values agree to the tolerance,
    where `floor` is an absolute slack so that pieces carrying a
    negligible share of the element total converge immediately.
    """
    dv = np.array([dist(p) for p in sub])
    scale = max(dv.max(), 1e-300)
    on = dv <= 1e-10 * scale
    dv = np.where(on, 0.0, dv)
    n_on = int(on.sum())
    area = _tri_area(*sub)
    if area <= 0.0:
        return 0.0
    if n_on == 3:
        raise NumericalError("degenerate singular piece")

    if n_on == 2:
        i = int(np.flatnonzero(on)[0])
        j = int(np.flatnonzero(on)[1])
        k = 3 - i - j
        order = (i, j, k)
        mode = "edge"
    elif n_on == 1:
        i = int(np.flatnonzero(on)[0])
        order = (i, (i + 1) % 3, (i + 2) % 3)
        mode = "vertex"
    else:
        order = (0, 1, 2)
        mode = "plain"
    p0, p1, apex = (sub[q] for q in order)
    d0, d1, d2 = (dv[q] for q in order)
    grade = min(8.0, max(1.0, 4.0 / (1.0 + alpha)))

    def value(n: int) -> float:
        xi, wxi = gauss01(n)
        tau, wtau = gauss01(n)
        if mode == "plain":
            t, dt = xi, wxi
        else:
            t = xi ** grade
            dt = grade * xi ** (grade - 1.0) * wxi
        if mode == "vertex":
            # x = (1-t) p0 + t ((1-tau) p1 + tau apex); d(p0) = 0
            edge = (1.0 - tau)[:, None] * p1[None, :] \
                + tau[:, None] * apex[None, :]
            X = (1.0 - t)[:, None, None] * p0[None, None, :] \
                + t[:, None, None] * edge[None, :, :]
            dedge = (1.0 - tau) * d1 + tau * d2
            dvals = t[:, None] * dedge[None, :]
            jac = 2.0 * area * t
        else:
            # x = (1-t) E(tau) + t apex with E on the (p0, p1) edge
            E = p0[None, :] + tau[:, None] * (p1 - p0)[None, :]
            X = (1.0 - t)[:, None, None] * E[None, :, :] \
                + t[:, None, None] * apex[None, None, :]
            dE = (1.0 - tau) * d0 + tau * d1
            dvals = (1.0 - t)[:, None] * dE[None, :] + t[:, None] * d2
            jac = 2.0 * area * (1.0 - t)
        pts = X.reshape(-1, 2)
        gv = np.asarray(g2(pts), dtype=float).reshape(n, n)
        with np.errstate(divide="ignore"):
            wfac = np.where(dvals > 0.0, dvals ** alpha, 0.0)
        inner = np.sum(gv * wfac * wtau[None, :], axis=1)
        return float(np.sum(inner * jac * dt))

    prev = value(8)
    if tol is None:            # crude single-rule estimate
        return prev
    for n in (16, 32, 64):
        cur = value(n)
        if abs(cur - prev) <= max(tol * abs(cur), floor):
            return cur
        prev = cur
    raise NumericalError(
        f"piece integral did not reach relative tolerance {tol:g}")


def _graded_son_integral(coarse_tri: np.ndarray, son_tris, g2,
                         alpha: float, tol: float) -> float:
    """int over the coarse element of dist(x, its boundary)^alpha g2(x).

    g2 only needs to be smooth per son, so the element is cut into
    nearest-edge fans intersected with sons; each convex piece is
    triangulated from its centroid and handled by the singular piece
    rule against the fixed edge line of its fan.
    """
    inc = _incenter(coarse_tri)
    pieces = []
    for k in range(3):
        e0, e1 = coarse_tri[k], coarse_tri[(k + 1) % 3]
        tang = e1 - e0
        nrm = np.array([-tang[1], tang[0]])
        nrm /= np.linalg.norm(nrm)
        third = coarse_tri[(k + 2) % 3]
        if float(nrm @ (third - e0)) < 0.0:
            nrm = -nrm
        dist = lambda p, n=nrm, o=e0: float(n @ (np.asarray(p) - o))
        fan = Polygon([e0, e1, inc])
        for son in son_tris:
            piece = fan.intersection(Polygon(son))
            if piece.is_empty or piece.area < 1e-14 * fan.area:
                continue
            geoms = getattr(piece, "geoms", [piece])
            for geom in geoms:
                if not isinstance(geom, Polygon):
                    continue
                ring = np.asarray(geom.exterior.coords[:-1], dtype=float)
                cen = ring.mean(axis=0)
                m = ring.shape[0]
                for i in range(m):
                    sub = np.array([cen, ring[i], ring[(i + 1) % m]])
                    if _tri_area(*sub) < 1e-16 * fan.area:
                        continue
                    pieces.append((sub, dist))
    # a crude first pass fixes the element scale; pieces below it in
    # magnitude need no relative resolution of their own
    crude = sum(abs(_piece_integral(sub, dist, alpha, g2, None))
                for sub, dist in pieces)
    floor = 1e-3 * tol * (crude + 1e-300)
    return sum(_piece_integral(sub, dist, alpha, g2, tol, floor)
               for sub, dist in pieces)


def weighted_l2_norm(coarse: Triangulation, s: float, fine: Triangulation,
                     prol: Prolongation, g: FemFunction, sign: int,
                     tol: float = 1e-5) -> float:
    """|| h~^(sign*s) g ||_{L2} for a piecewise linear g on the refinement.

    For s <= 1/2 the weight is constant per coarse element and the norm
    is assembled exactly from son mass matrices. For s > 1/2 the graded
    fan rule integrates d(x)^(sign*(2s-1)) g(x)^2 per coarse element to
    the given relative tolerance; the exponent stays integrable for
    every s in (0, 1), and an exponent at or below -1 is rejected.
    """
    if sign not in (1, -1):
        raise InputError("sign must be +1 or -1")
    if not 0.0 < s < 1.0:
        raise InputError("s must lie in (0, 1)")
    _check_refinement(coarse, fine, prol)
    if g.mesh_uid != fine.uid:
        raise InputError("g does not live on the fine mesh")

    vv = g.vertex_values(fine)
    areas = coarse.areas
    fine_areas = fine.areas
    total = 0.0
    if s <= 0.5:
        for t in range(coarse.n_elements):
            acc = 0.0
            for son in prol.sons[t]:
                c = vv[fine.elements[son]]
                acc += fine_areas[son] * float(c @ _MASS_UNIT @ c)
            h2s = areas[t] ** (sign * s)        # h^(2 sign s), h = area^(1/2)
            total += h2s * acc
        return math.sqrt(total)

    alpha = sign * (2.0 * s - 1.0)
    if alpha <= -1.0:
        raise InputError(f"weight exponent {alpha} is not integrable")
    for t in range(coarse.n_elements):
        sons = prol.sons[t]
        if not np.any(vv[fine.elements[sons]]):
            continue
        gfun = _son_evaluator(fine, sons, vv)
        gg = lambda pts: gfun(pts) ** 2
        tri = coarse.vertices[coarse.elements[t]]
        son_tris = fine.vertices[fine.elements[np.asarray(sons)]]
        part = _graded_son_integral(tri, son_tris, gg, alpha, tol)
        total += areas[t] ** (0.5 * sign) * part
    return math.sqrt(total)


def nodal_interpolation(coarse: Triangulation, fine: Triangulation,
                        g: FemFunction) -> FemFunction:
    """Interpolate a fine function at the coarse interior nodes."""
    if g.mesh_uid != fine.uid:
        raise InputError("g does not live on the fine mesh")
    if fine.n_vertices < coarse.n_vertices or not np.array_equal(
            fine.vertices[: coarse.n_vertices], coarse.vertices):
        raise InputError("fine mesh does not refine the coarse mesh")
    vv = g.vertex_values(fine)
    nodes = coarse.interior_nodes
    coeffs = np.zeros(coarse.n_dofs)
    coeffs[coarse.dof_of_vertex[nodes]] = vv[nodes]
    return FemFunction(coarse.uid, coeffs)


def scott_zhang(coarse: Triangulation, fine: Triangulation,
                prol: Prolongation, g: FemFunction) -> FemFunction:
    """Project a fine function by averaging with P1 dual functions.

    Each coarse interior node z is assigned the lowest-id coarse element
    containing it; the coefficient is the exact integral over that
    element of g against the biorthogonal dual of the hat of z. The
    integral is assembled per fine son with an order-2 rule, which is
    exact for the quadratic integrand.
    """
    _check_refinement(coarse, fine, prol)
    if g.mesh_uid != fine.uid:
        raise InputError("g does not live on the fine mesh")
    vv = g.vertex_values(fine)

    averaging = np.full(coarse.n_vertices, -1, dtype=np.int64)
    for e in range(coarse.n_elements - 1, -1, -1):
        averaging[coarse.elements[e]] = e

    ref, wts = TRI_P1
    bary = np.column_stack([1.0 - ref.sum(axis=1), ref[:, 0], ref[:, 1]])
    coeffs = np.zeros(coarse.n_dofs)
    for v in coarse.interior_nodes:
        t = int(averaging[v])
        tri_ids = coarse.elements[t]
        tri = coarse.vertices[tri_ids]
        loc = int(np.flatnonzero(tri_ids == v)[0])
        area = coarse.areas[t]
        # dual weights of the hat at v in the element's local basis
        dual = np.full(3, -1.0)
        dual[loc] = 3.0
        dual *= 3.0 / area

        mat = np.stack([tri[1] - tri[0], tri[2] - tri[0]], axis=1)
        inv = np.linalg.inv(mat)
        acc = 0.0
        for son in prol.sons[t]:
            sp = fine.vertices[fine.elements[son]]
            gs = vv[fine.elements[son]]
            pts = bary @ sp                       # physical rule points
            gvals = bary @ gs                     # P1 exact on the son
            rel = pts - tri[0]
            lam12 = rel @ inv.T
            lam = np.column_stack(
                [1.0 - lam12.sum(axis=1), lam12[:, 0], lam12[:, 1]])
            dvals = lam @ dual
            acc += fine.areas[son] * float(np.sum(wts * dvals * gvals))
        coeffs[coarse.dof_of_vertex[v]] = acc
    return FemFunction(coarse.uid, coeffs)


@dataclass
class EquivalenceReport:
    s: float
    r_min: float
    r_max: float
    q_min: float
    q_max: float
    n_r_samples: int
    n_q_nodes: int
    r_values: list
    q_values: list


def equivalence_report(coarse: Triangulation, s: float, sample_count: int,
                       quad_order: int = 7, rng: _Lcg | None = None
                       ) -> EquivalenceReport:
    """Ratio statistics for the interpolation and hat-norm equivalences.

    For reproducible pseudo-random fine functions v this computes
    r(v) = ||h~^{-s}(1-I)v|| / ||h~^{-s}(1-J)v||, and for every new fine
    interior node z the ratio q(z) of the energy norm of the fine hat to
    its weighted L2 norm. Samples where both r-norms fall below 1e-14
    are skipped; if every sample degenerates the report fails.
    """
    if sample_count < 1:
        raise InputError("sample_count must be at least 1")
    if rng is None:
        rng = _Lcg()
    fine, prol = uniform_refine(coarse)
    pmat = prol.matrix(coarse, fine)
    A_f = assemble_stiffness(fine, s, quad_order)
    diag = A_f.matrix.diagonal() if hasattr(A_f.matrix, "diagonal") \
        else np.diag(A_f.matrix)

    r_values = []
    for _ in range(sample_count):
        c = rng.coeffs(fine.n_dofs)
        v = FemFunction(fine.uid, c)
        iv = nodal_interpolation(coarse, fine, v)
        jv = scott_zhang(coarse, fine, prol, v)
        res_i = FemFunction(fine.uid, c - pmat @ iv.coefficients)
        res_j = FemFunction(fine.uid, c - pmat @ jv.coefficients)
        num = weighted_l2_norm(coarse, s, fine, prol, res_i, -1)
        den = weighted_l2_norm(coarse, s, fine, prol, res_j, -1)
        if num < DEGENERATE_EPS and den < DEGENERATE_EPS:
            continue
        r_values.append(num / den if den > 0.0 else math.inf)
    if not r_values:
        raise NumericalError("all equivalence samples degenerated")

    q_values = []
    new_nodes = [int(z) for z in fine.interior_nodes
                 if z >= coarse.n_vertices]
    for z in new_nodes:
        dof = int(fine.dof_of_vertex[z])
        hat = np.zeros(fine.n_dofs)
        hat[dof] = 1.0
        den = weighted_l2_norm(coarse, s, fine, prol,
                               FemFunction(fine.uid, hat), -1)
        q_values.append(math.sqrt(float(diag[dof])) / den
                        if den > 0.0 else math.inf)
    return EquivalenceReport(
        s=s,
        r_min=min(r_values), r_max=max(r_values),
        q_min=min(q_values) if q_values else math.nan,
        q_max=max(q_values) if q_values else math.nan,
        n_r_samples=len(r_values), n_q_nodes=len(q_values),
        r_values=r_values, q_values=q_values,
    )


def write_reports(reports, path) -> None:
    """CSV rows `quantity,min,max,mesh_level` for a list of level reports.

    `reports` holds (mesh_level, EquivalenceReport) pairs.
    """
    with open(path, "w", newline="") as fh:
        fh.write("quantity,min,max,mesh_level\n")
        for level, rep in reports:
            fh.write("r,%.17g,%.17g,%d\n" % (rep.r_min, rep.r_max, level))
            fh.write("q,%.17g,%.17g,%d\n" % (rep.q_min, rep.q_max, level))
