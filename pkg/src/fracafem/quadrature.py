"""Quadrature for the kernel |x-y|^(-2-2s): regular rules, singular pair
rules, the exterior tail, and graded weighted integrals.

Touching element pairs are handled by relative-coordinate changes of
variables that cancel the kernel singularity:

* identical pair: substituting z = y - x collapses the four-dimensional
  integral, because P1 hat differences on a single triangle depend on z
  alone. The z-domain (a hexagon) is split into three symmetric sectors,
  the radial integral has the closed form B(2-2s, 3), and only a smooth
  one-dimensional angular integral per sector is left to Gauss quadrature;
* shared edge: both triangles are written over the common edge, x =
  alpha*A + (1-alpha)*E(beta), y = gamma*B + (1-gamma)*E(delta). With w =
  beta - delta, the singular set is the corner alpha = gamma = w = 0; a
  three-way Duffy split on max(alpha, gamma, w), mirrored for each sign of
  w, gives six subregions on [0,1]^4 where the integrand times the map
  Jacobian behaves like xi^(2-2s);
* shared vertex: x = P + a*X(b), y = P + c*Y(d) and a two-way Duffy split
  on max(a, c), giving xi^(3-2s) behaviour on [0,1]^4.

In all three cases the remaining xi power is graded away by xi = u^2.
Disjoint pairs use tensorized Gauss rules; the assembly module additionally
grades far pairs with small symmetric triangle rules by separation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError
from . import nbcore


def gauss01(n: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(int(n))
    return 0.5 * (x + 1.0), 0.5 * w


def singular_axis_points(order: int) -> int:
    """Points per axis for the Duffy rules: even, at least order."""
    if order < 1:
        raise InputError(f"quadrature order must be >= 1, got {order}")
    return 2 * ((int(order) + 1) // 2)


# -- triangle rules ----------------------------------------------------------
# barycentric (lambda1, lambda2) coordinates, weights summing to 1; a rule
# integrates f over T as area(T) * sum(w * f(x)).

TRI_P1 = (
    np.array([[2.0 / 3.0, 1.0 / 6.0], [1.0 / 6.0, 2.0 / 3.0],
              [1.0 / 6.0, 1.0 / 6.0]]),
    np.array([1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]),
)

_D6A = 0.445948490915965
_D6B = 0.091576213509771
TRI_P2 = (
    np.array(
        [
            [_D6A, _D6A], [_D6A, 1.0 - 2.0 * _D6A], [1.0 - 2.0 * _D6A, _D6A],
            [_D6B, _D6B], [_D6B, 1.0 - 2.0 * _D6B], [1.0 - 2.0 * _D6B, _D6B],
        ]
    ),
    np.array([0.223381589678011] * 3 + [0.109951743655322] * 3),
)

_D7A = 0.470142064105115
_D7B = 0.101286507323456
TRI_P3 = (
    np.array(
        [
            [1.0 / 3.0, 1.0 / 3.0],
            [_D7A, _D7A], [_D7A, 1.0 - 2.0 * _D7A], [1.0 - 2.0 * _D7A, _D7A],
            [_D7B, _D7B], [_D7B, 1.0 - 2.0 * _D7B], [1.0 - 2.0 * _D7B, _D7B],
        ]
    ),
    np.array([9.0 / 40.0] + [0.132394152788506] * 3 + [0.125939180544827] * 3),
)


def collapsed_tri_rule(n: int):
    """n x n Gauss rule on the triangle via the collapsed square."""
    u, wu = gauss01(n)
    v, wv = gauss01(n)
    U, V = np.meshgrid(u, v, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    lam1 = U.ravel()
    lam2 = (V * (1.0 - U)).ravel()
    w = (WU * WV * (1.0 - U)).ravel() * 2.0
    return np.stack([lam1, lam2], axis=1), w


def stacked_far_rules(order: int):
    """Rule table for the far-pair separation ladder.

    Rung 0: far (3 points), 1: medium (6), 2: near (7), 3: almost touching
    (collapsed tensor with two points per axis fewer than the singular
    rules). Returns (points, weights, offsets).
    """
    n_tens = max(2, singular_axis_points(order) - 2)
    rules = [TRI_P1, TRI_P2, TRI_P3, collapsed_tri_rule(n_tens)]
    pts = np.concatenate([r[0] for r in rules], axis=0)
    wts = np.concatenate([r[1] for r in rules])
    offs = np.zeros(len(rules) + 1, dtype=np.int64)
    for k, r in enumerate(rules):
        offs[k + 1] = offs[k] + r[1].size
    return pts, wts, offs


# -- pair classification -----------------------------------------------------


@dataclass(frozen=True)
class PairConfig:
    """Vertex correspondence of an element pair.

    kind: identical | shared_edge | shared_vertex | disjoint.
    perm_a, perm_b: local vertex orderings bringing each triangle into the
    canonical frame of its kind (edge: (P0, P1, apex) with P0 the smaller
    shared id; vertex: (P, next, next)).
    node_ids: global ids indexing the rows of local_pair_matrix.
    """

    kind: str
    perm_a: tuple
    perm_b: tuple
    node_ids: tuple


def classify_pair(ids_a, ids_b) -> PairConfig:
    """Classify a pair of elements given as global vertex id triples."""
    ia = tuple(int(v) for v in ids_a)
    ib = tuple(int(v) for v in ids_b)
    shared = sorted(set(ia) & set(ib))
    if len(set(ia)) != 3 or len(set(ib)) != 3:
        raise InputError("element with repeated vertex ids")
    if len(shared) == 3:
        if ia != ib:
            # same vertex set in different order never occurs in one mesh
            raise InputError("elements share all vertices but differ")
        return PairConfig("identical", (0, 1, 2), (0, 1, 2), ia)
    if len(shared) == 2:
        p0, p1 = shared
        pa = (ia.index(p0), ia.index(p1))
        pa = pa + tuple(k for k in range(3) if k not in pa)
        pb = (ib.index(p0), ib.index(p1))
        pb = pb + tuple(k for k in range(3) if k not in pb)
        nodes = (p0, p1, ia[pa[2]], ib[pb[2]])
        return PairConfig("shared_edge", pa, pb, nodes)
    if len(shared) == 1:
        p = shared[0]
        ka = ia.index(p)
        kb = ib.index(p)
        pa = (ka, (ka + 1) % 3, (ka + 2) % 3)
        pb = (kb, (kb + 1) % 3, (kb + 2) % 3)
        nodes = (p, ia[pa[1]], ia[pa[2]], ib[pb[1]], ib[pb[2]])
        return PairConfig("shared_vertex", pa, pb, nodes)
    return PairConfig("disjoint", (0, 1, 2), (0, 1, 2), ia + ib)


def _area(tri):
    d1 = tri[1] - tri[0]
    d2 = tri[2] - tri[0]
    return 0.5 * (d1[0] * d2[1] - d1[1] * d2[0])


def local_pair_matrix(tri_a, tri_b, s, config: PairConfig, order: int = 7):
    """C(2,s)/2 times the interaction integral of the pair's distinct hats.

    tri_a, tri_b: (3, 2) vertex coordinates matching the id triples the
    config was built from. Rows/columns follow config.node_ids.
    """
    from .assembly import fractional_constant

    if not 0.0 < s < 1.0:
        raise InputError(f"s must be in (0, 1), got {s}")
    tri_a = np.asarray(tri_a, dtype=float)
    tri_b = np.asarray(tri_b, dtype=float)
    area_a = _area(tri_a)
    area_b = _area(tri_b)
    if abs(area_a) < 1e-300 or abs(area_b) < 1e-300:
        raise InputError("degenerate element in pair integral")
    n = singular_axis_points(order)
    gx, gw = gauss01(n)
    half_c = 0.5 * fractional_constant(s)
    smode = nbcore.kernel_mode(s)

    if config.kind == "identical":
        M = nbcore.identical_pair(tri_a, abs(area_a), s, smode, gx, gw)
    elif config.kind == "shared_edge":
        A = tri_a[list(config.perm_a)]
        B = tri_b[list(config.perm_b)]
        M = nbcore.edge_pair(
            A[0], A[1], A[2], B[2], abs(area_a), abs(area_b), s, smode, gx, gw
        )
    elif config.kind == "shared_vertex":
        A = tri_a[list(config.perm_a)]
        B = tri_b[list(config.perm_b)]
        M = nbcore.vertex_pair(
            A[0], A[1], A[2], B[1], B[2],
            abs(area_a), abs(area_b), s, smode, gx, gw,
        )
    elif config.kind == "disjoint":
        pts, wts = collapsed_tri_rule(n)
        M = nbcore.disjoint_pair(
            tri_a, tri_b, abs(area_a), abs(area_b), s, smode, pts, wts
        )
    else:
        raise InputError(f"unknown pair kind {config.kind!r}")
    return half_c * M


# -- exterior tail -----------------------------------------------------------


def exterior_tail(x, center, radius, s, n_angles: int = 64) -> float:
    """psi_B(x) = integral of |x-y|^(-2-2s) over the complement of the ball.

    Polar coordinates around x reduce the integral to
    (1/(2s)) * int_0^{2pi} r_B(x, theta)^(-2s) dtheta with r_B the ray
    length to the sphere, which has a closed form; the angular integral is
    done by Gauss quadrature.
    """
    if not 0.0 < s < 1.0:
        raise InputError(f"s must be in (0, 1), got {s}")
    x = np.asarray(x, dtype=float)
    c = np.asarray(center, dtype=float)
    d = x - c
    if d @ d >= radius * radius:
        raise InputError("point lies on or outside the ball")
    t, w = gauss01(int(n_angles))
    theta = 2.0 * np.pi * t
    ct, st = np.cos(theta), np.sin(theta)
    proj = d[0] * ct + d[1] * st
    r_b = -proj + np.sqrt(radius * radius - (d @ d) + proj * proj)
    return float((2.0 * np.pi / (2.0 * s)) * np.sum(w * r_b ** (-2.0 * s)))


# -- graded weighted element integrals ---------------------------------------


def _incenter(tri):
    a = np.linalg.norm(tri[1] - tri[2])
    b = np.linalg.norm(tri[2] - tri[0])
    c = np.linalg.norm(tri[0] - tri[1])
    return (a * tri[0] + b * tri[1] + c * tri[2]) / (a + b + c)


def weighted_element_integral(tri, g, alpha, tol: float = 1e-6,
                              n_start: int = 8) -> float:
    """int_T dist(x, boundary T)^alpha g(x) dx by graded quadrature.

    The triangle is split at the incenter into three edge fans; on each fan
    the boundary distance equals t*r exactly in the coordinates
    x = (1-t)*E(tau) + t*I, so the only singular factor is t^alpha, graded
    by t = xi^p. The rule size is increased until two successive values
    agree to the relative tolerance.
    """
    if alpha <= -1.0:
        raise InputError(f"exponent {alpha} is not integrable")
    tri = np.asarray(tri, dtype=float)
    area = _area(tri)
    if abs(area) < 1e-300:
        raise InputError("degenerate element")
    inc = _incenter(tri)
    r = 2.0 * abs(area) / (
        np.linalg.norm(tri[1] - tri[2])
        + np.linalg.norm(tri[2] - tri[0])
        + np.linalg.norm(tri[0] - tri[1])
    )
    p = min(8.0, max(1.0, 4.0 / (1.0 + alpha)))

    def value(n):
        xi, wxi = gauss01(n)
        tau, wtau = gauss01(n)
        t = xi ** p
        dt = p * xi ** (p - 1.0) * wxi
        total = 0.0
        for k in range(3):
            e0, e1 = tri[k], tri[(k + 1) % 3]
            elen = np.linalg.norm(e1 - e0)
            # x = (1-t) E(tau) + t I, |jacobian| = (1-t) |e| r
            E = e0[None, :] + tau[:, None] * (e1 - e0)[None, :]
            X = (1.0 - t)[:, None, None] * E[None, :, :] + (
                t[:, None, None] * inc[None, None, :]
            )
            gv = np.asarray(g(X.reshape(-1, 2)), dtype=float)
            if gv.ndim == 0:
                gv = np.full(n * n, float(gv))
            gv = gv.reshape(n, n)
            w2 = (t * r) ** alpha * (1.0 - t) * dt
            total += elen * r * np.sum(w2[:, None] * wtau[None, :] * gv)
        return total

    prev = value(n_start)
    n = n_start
    for _ in range(3):
        n = n + n // 2 + 2
        cur = value(n)
        if abs(cur - prev) <= tol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise NumericalError(
        f"weighted integral did not reach relative tolerance {tol}"
    )
