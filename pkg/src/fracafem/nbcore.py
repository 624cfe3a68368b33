"""Compiled kernels for pair integrals and full-matrix assembly.

Everything here is serial numba code operating on plain float64/int64
arrays; the deterministic pair order (a ascending, b ascending from a)
makes assembled matrices reproducible bit for bit on a given machine.

The changes of variables implemented by the *_pair functions are derived
and documented in quadrature.py; this module contains their loop bodies.
"""

from __future__ import annotations

import numpy as np
from numba import njit


def kernel_mode(s: float) -> int:
    """Select a square-root fast path for quarter-integer s."""
    if s == 0.25:
        return 1
    if s == 0.5:
        return 2
    if s == 0.75:
        return 3
    return 0


@njit(cache=True, inline="always")
def _kern(r2, s, mode):
    # |x-y|^(-2-2s) as a function of the squared distance
    if mode == 1:
        return 1.0 / (r2 * np.sqrt(np.sqrt(r2)))
    if mode == 2:
        return 1.0 / (r2 * np.sqrt(r2))
    if mode == 3:
        return 1.0 / (r2 * np.sqrt(r2) * np.sqrt(np.sqrt(r2)))
    return r2 ** (-1.0 - s)


@njit(cache=True, inline="always")
def _pow_m2s(v, s, mode):
    # v^(-2s) for the exterior tail
    if mode == 1:
        return 1.0 / np.sqrt(v)
    if mode == 2:
        return 1.0 / v
    if mode == 3:
        return 1.0 / (v * np.sqrt(v))
    return v ** (-2.0 * s)


# -- identical pair ----------------------------------------------------------

# half-hexagon sector corners of the relative-coordinate domain
_SECTORS = np.array(
    [
        [[1.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [-1.0, 1.0]],
        [[1.0, 0.0], [1.0, -1.0]],
    ]
)

# reference hat gradients
_GHAT = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])


@njit(cache=True)
def identical_pair_into(tri, area, s, mode, gx, gw, M):
    """Self-interaction matrix of one triangle's three hats (no prefactor).

    The radial direction is integrated exactly: int_0^1 xi^(1-2s)(1-xi)^2
    dxi = B(2-2s, 3), leaving one smooth angular integral per sector.
    """
    a11 = tri[1, 0] - tri[0, 0]
    a21 = tri[1, 1] - tri[0, 1]
    a12 = tri[2, 0] - tri[0, 0]
    a22 = tri[2, 1] - tri[0, 1]
    beta = 2.0 / ((2.0 - 2.0 * s) * (3.0 - 2.0 * s) * (4.0 - 2.0 * s))
    scale = 4.0 * area * area * beta
    for i in range(3):
        for j in range(3):
            M[i, j] = 0.0
    for sec in range(3):
        c1x = _SECTORS[sec, 0, 0]
        c1y = _SECTORS[sec, 0, 1]
        c2x = _SECTORS[sec, 1, 0]
        c2y = _SECTORS[sec, 1, 1]
        for k in range(gx.size):
            eta = gx[k]
            cx = (1.0 - eta) * c1x + eta * c2x
            cy = (1.0 - eta) * c1y + eta * c2y
            px = a11 * cx + a12 * cy
            py = a21 * cx + a22 * cy
            r2 = px * px + py * py
            kv = _kern(r2, s, mode) * gw[k] * scale
            g0 = _GHAT[0, 0] * cx + _GHAT[0, 1] * cy
            g1 = _GHAT[1, 0] * cx + _GHAT[1, 1] * cy
            g2 = _GHAT[2, 0] * cx + _GHAT[2, 1] * cy
            M[0, 0] += kv * g0 * g0
            M[0, 1] += kv * g0 * g1
            M[0, 2] += kv * g0 * g2
            M[1, 1] += kv * g1 * g1
            M[1, 2] += kv * g1 * g2
            M[2, 2] += kv * g2 * g2
    M[1, 0] = M[0, 1]
    M[2, 0] = M[0, 2]
    M[2, 1] = M[1, 2]


# -- shared edge -------------------------------------------------------------


@njit(cache=True)
def edge_pair_into(P0, P1, Aa, Ab, area_a, area_b, s, mode, gx, gw, M):
    """Interaction matrix over the slots (P0, P1, apex_a, apex_b).

    x = alpha*Aa + (1-alpha)*E(beta), y = gamma*Ab + (1-gamma)*E(delta),
    E(t) = (1-t)P0 + tP1. Six Duffy subregions on max(alpha, gamma,
    beta-delta) and the mirror family delta > beta; radial variable graded
    by xi = u^2.
    """
    for i in range(4):
        for j in range(4):
            M[i, j] = 0.0
    base = 4.0 * area_a * area_b
    n = gx.size
    for fam in range(2):
        for case in range(3):
            for iu in range(n):
                u = gx[iu]
                xi = u * u
                wxi = 2.0 * u * gw[iu]
                for it in range(n):
                    t = gx[it]
                    wt = gw[it]
                    for iv in range(n):
                        v = gx[iv]
                        wv = gw[iv]
                        if case == 0:
                            alpha = xi
                            gamma = xi * t
                            wrel = xi * v
                            jmap = xi * xi * (1.0 - wrel)
                        elif case == 1:
                            gamma = xi
                            alpha = xi * t
                            wrel = xi * v
                            jmap = xi * xi * (1.0 - wrel)
                        else:
                            wrel = xi
                            alpha = xi * t
                            gamma = xi * v
                            jmap = xi * xi * (1.0 - xi)
                        for ib in range(n):
                            bb = gx[ib]
                            wb = gw[ib]
                            if case == 2:
                                beta = xi + (1.0 - xi) * bb
                            else:
                                beta = wrel + (1.0 - wrel) * bb
                            delta = beta - wrel
                            if fam == 1:
                                tmp = beta
                                beta = delta
                                delta = tmp
                            ex = (1.0 - beta) * P0[0] + beta * P1[0]
                            ey = (1.0 - beta) * P0[1] + beta * P1[1]
                            xq = alpha * Aa[0] + (1.0 - alpha) * ex
                            yq = alpha * Aa[1] + (1.0 - alpha) * ey
                            fx = (1.0 - delta) * P0[0] + delta * P1[0]
                            fy = (1.0 - delta) * P0[1] + delta * P1[1]
                            xr = gamma * Ab[0] + (1.0 - gamma) * fx
                            yr = gamma * Ab[1] + (1.0 - gamma) * fy
                            dx = xq - xr
                            dy = yq - yr
                            r2 = dx * dx + dy * dy
                            kv = _kern(r2, s, mode)
                            wgt = (
                                base
                                * (1.0 - alpha)
                                * (1.0 - gamma)
                                * jmap
                                * wxi
                                * wt
                                * wv
                                * wb
                                * kv
                            )
                            d0 = (1.0 - alpha) * (1.0 - beta) - (
                                1.0 - gamma
                            ) * (1.0 - delta)
                            d1 = (1.0 - alpha) * beta - (1.0 - gamma) * delta
                            d2 = alpha
                            d3 = -gamma
                            M[0, 0] += wgt * d0 * d0
                            M[0, 1] += wgt * d0 * d1
                            M[0, 2] += wgt * d0 * d2
                            M[0, 3] += wgt * d0 * d3
                            M[1, 1] += wgt * d1 * d1
                            M[1, 2] += wgt * d1 * d2
                            M[1, 3] += wgt * d1 * d3
                            M[2, 2] += wgt * d2 * d2
                            M[2, 3] += wgt * d2 * d3
                            M[3, 3] += wgt * d3 * d3
    for i in range(4):
        for j in range(i + 1, 4):
            M[j, i] = M[i, j]


# -- shared vertex -----------------------------------------------------------


@njit(cache=True)
def vertex_pair_into(P, V1a, V2a, V1b, V2b, area_a, area_b, s, mode,
                     gx, gw, M):
    """Interaction matrix over the slots (P, V1a, V2a, V1b, V2b).

    x = P + a*X(b), y = P + c*Y(d) with X, Y edge interpolations; two
    Duffy subregions on max(a, c), measure 4|Ta||Tb| a c da db dc dd =
    4|Ta||Tb| xi^3 eta per region, graded by xi = u^2.
    """
    for i in range(5):
        for j in range(5):
            M[i, j] = 0.0
    base = 4.0 * area_a * area_b
    n = gx.size
    e1ax = V1a[0] - P[0]
    e1ay = V1a[1] - P[1]
    e2ax = V2a[0] - P[0]
    e2ay = V2a[1] - P[1]
    e1bx = V1b[0] - P[0]
    e1by = V1b[1] - P[1]
    e2bx = V2b[0] - P[0]
    e2by = V2b[1] - P[1]
    for reg in range(2):
        for iu in range(n):
            u = gx[iu]
            xi = u * u
            wxi = 2.0 * u * gw[iu]
            for ie in range(n):
                eta = gx[ie]
                we = gw[ie]
                if reg == 0:
                    av = xi
                    cv = xi * eta
                else:
                    cv = xi
                    av = xi * eta
                jmap = xi * xi * xi * eta
                for ib in range(n):
                    b = gx[ib]
                    wb = gw[ib]
                    xbx = (1.0 - b) * e1ax + b * e2ax
                    xby = (1.0 - b) * e1ay + b * e2ay
                    xq = P[0] + av * xbx
                    yq = P[1] + av * xby
                    for idd in range(n):
                        d = gx[idd]
                        wd = gw[idd]
                        ydx = (1.0 - d) * e1bx + d * e2bx
                        ydy = (1.0 - d) * e1by + d * e2by
                        xr = P[0] + cv * ydx
                        yr = P[1] + cv * ydy
                        dx = xq - xr
                        dy = yq - yr
                        r2 = dx * dx + dy * dy
                        kv = _kern(r2, s, mode)
                        wgt = base * jmap * wxi * we * wb * wd * kv
                        d0 = cv - av           # (1-a) - (1-c)
                        d1 = av * (1.0 - b)
                        d2 = av * b
                        d3 = -cv * (1.0 - d)
                        d4 = -cv * d
                        M[0, 0] += wgt * d0 * d0
                        M[0, 1] += wgt * d0 * d1
                        M[0, 2] += wgt * d0 * d2
                        M[0, 3] += wgt * d0 * d3
                        M[0, 4] += wgt * d0 * d4
                        M[1, 1] += wgt * d1 * d1
                        M[1, 2] += wgt * d1 * d2
                        M[1, 3] += wgt * d1 * d3
                        M[1, 4] += wgt * d1 * d4
                        M[2, 2] += wgt * d2 * d2
                        M[2, 3] += wgt * d2 * d3
                        M[2, 4] += wgt * d2 * d4
                        M[3, 3] += wgt * d3 * d3
                        M[3, 4] += wgt * d3 * d4
                        M[4, 4] += wgt * d4 * d4
    for i in range(5):
        for j in range(i + 1, 5):
            M[j, i] = M[i, j]


# -- disjoint pair -----------------------------------------------------------


@njit(cache=True)
def disjoint_pair_into(ta, tb, area_a, area_b, s, mode, pa, wa, pb, wb,
                       lam_a, lam_b, kr, kc, G, M):
    """Interaction matrix over (a0, a1, a2, b0, b1, b2) for separated pairs.

    The difference form splits into an x-only block (kernel row sums), a
    y-only block (column sums), and a cross block; lam_*, kr, kc, G are
    caller-provided work buffers of matching sizes.
    """
    na = wa.size
    nb = wb.size
    for p in range(na):
        l1 = pa[p, 0]
        l2 = pa[p, 1]
        lam_a[p, 0] = 1.0 - l1 - l2
        lam_a[p, 1] = l1
        lam_a[p, 2] = l2
    for q in range(nb):
        l1 = pb[q, 0]
        l2 = pb[q, 1]
        lam_b[q, 0] = 1.0 - l1 - l2
        lam_b[q, 1] = l1
        lam_b[q, 2] = l2
    for i in range(3):
        for j in range(3):
            G[i, j] = 0.0
    for p in range(na):
        kr[p] = 0.0
    for q in range(nb):
        kc[q] = 0.0
    for p in range(na):
        xq = (
            lam_a[p, 0] * ta[0, 0] + lam_a[p, 1] * ta[1, 0]
            + lam_a[p, 2] * ta[2, 0]
        )
        yq = (
            lam_a[p, 0] * ta[0, 1] + lam_a[p, 1] * ta[1, 1]
            + lam_a[p, 2] * ta[2, 1]
        )
        for q in range(nb):
            xr = (
                lam_b[q, 0] * tb[0, 0] + lam_b[q, 1] * tb[1, 0]
                + lam_b[q, 2] * tb[2, 0]
            )
            yr = (
                lam_b[q, 0] * tb[0, 1] + lam_b[q, 1] * tb[1, 1]
                + lam_b[q, 2] * tb[2, 1]
            )
            dx = xq - xr
            dy = yq - yr
            r2 = dx * dx + dy * dy
            kw = _kern(r2, s, mode) * wa[p] * wb[q]
            kr[p] += kw
            kc[q] += kw
            for i in range(3):
                gi = kw * lam_a[p, i]
                G[i, 0] += gi * lam_b[q, 0]
                G[i, 1] += gi * lam_b[q, 1]
                G[i, 2] += gi * lam_b[q, 2]
    scale = area_a * area_b
    for i in range(6):
        for j in range(6):
            M[i, j] = 0.0
    for i in range(3):
        for j in range(i, 3):
            acc_a = 0.0
            for p in range(na):
                acc_a += lam_a[p, i] * lam_a[p, j] * kr[p]
            M[i, j] = scale * acc_a
            acc_b = 0.0
            for q in range(nb):
                acc_b += lam_b[q, i] * lam_b[q, j] * kc[q]
            M[3 + i, 3 + j] = scale * acc_b
    for i in range(3):
        for j in range(3):
            M[i, 3 + j] = -scale * G[i, j]
            M[3 + j, i] = M[i, 3 + j]
    for i in range(6):
        for j in range(i + 1, 6):
            M[j, i] = M[i, j]


# -- exterior tail (compiled form) -------------------------------------------


@njit(cache=True, inline="always")
def _psi_ball(x, y, cx, cy, R, ct, st, wt, s, mode):
    dx = x - cx
    dy = y - cy
    dd = dx * dx + dy * dy
    acc = 0.0
    for k in range(ct.size):
        proj = dx * ct[k] + dy * st[k]
        rb = -proj + np.sqrt(R * R - dd + proj * proj)
        acc += wt[k] * _pow_m2s(rb, s, mode)
    return acc * 2.0 * np.pi / (2.0 * s)


# -- public single-pair wrappers ---------------------------------------------


def identical_pair(tri, area, s, mode, gx, gw):
    M = np.empty((3, 3))
    identical_pair_into(tri, area, s, mode, gx, gw, M)
    return M


def edge_pair(P0, P1, Aa, Ab, area_a, area_b, s, mode, gx, gw):
    M = np.empty((4, 4))
    edge_pair_into(P0, P1, Aa, Ab, area_a, area_b, s, mode, gx, gw, M)
    return M


def vertex_pair(P, V1a, V2a, V1b, V2b, area_a, area_b, s, mode, gx, gw):
    M = np.empty((5, 5))
    vertex_pair_into(P, V1a, V2a, V1b, V2b, area_a, area_b, s, mode, gx, gw, M)
    return M


def disjoint_pair(ta, tb, area_a, area_b, s, mode, pts, wts):
    M = np.empty((6, 6))
    na = wts.size
    disjoint_pair_into(
        ta, tb, area_a, area_b, s, mode, pts, wts, pts, wts,
        np.empty((na, 3)), np.empty((na, 3)),
        np.empty(na), np.empty(na), np.empty((3, 3)), M,
    )
    return M


# -- full assembly -----------------------------------------------------------


@njit(cache=True)
def assemble_into(tri_pts, tri_vids, tri_dofs, n_omega, s, mode, cpref,
                  gx, gw, far_pts, far_w, far_offs, mass_pts, mass_w,
                  ball_cx, ball_cy, ball_R, psi_ct, psi_st, psi_wt, A):
    """Fill A with the Galerkin matrix of the nonlocal form.

    Elements [0, n_omega) triangulate the domain and carry dofs; elements
    from n_omega on triangulate a shell of the complement and carry none.
    Pair (a, b) enumeration: a over domain elements, b from a upward, so
    every unordered domain pair and every domain-shell pair is visited
    once. Prefactor per pair: cpref/2 on the diagonal, cpref otherwise
    (the off-diagonal factor 2 accounts for both orders; shell pairs enter
    the complement term at full weight by the same rule).

    The per-element mass term with the ball tail psi_B is added for domain
    elements along the way.
    """
    nt = tri_pts.shape[0]
    n_far = far_offs.size - 1

    areas = np.empty(nt)
    cx = np.empty(nt)
    cy = np.empty(nt)
    rad = np.empty(nt)
    diam = np.empty(nt)
    for t in range(nt):
        x0 = tri_pts[t, 0, 0]
        y0 = tri_pts[t, 0, 1]
        x1 = tri_pts[t, 1, 0]
        y1 = tri_pts[t, 1, 1]
        x2 = tri_pts[t, 2, 0]
        y2 = tri_pts[t, 2, 1]
        areas[t] = 0.5 * abs((x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0))
        cx[t] = (x0 + x1 + x2) / 3.0
        cy[t] = (y0 + y1 + y2) / 3.0
        r2m = 0.0
        for k in range(3):
            ddx = tri_pts[t, k, 0] - cx[t]
            ddy = tri_pts[t, k, 1] - cy[t]
            rr = ddx * ddx + ddy * ddy
            if rr > r2m:
                r2m = rr
        rad[t] = np.sqrt(r2m)
        e0 = (x1 - x0) ** 2 + (y1 - y0) ** 2
        e1 = (x2 - x1) ** 2 + (y2 - y1) ** 2
        e2 = (x0 - x2) ** 2 + (y0 - y2) ** 2
        m = e0
        if e1 > m:
            m = e1
        if e2 > m:
            m = e2
        diam[t] = np.sqrt(m)

    # work buffers
    M6 = np.empty((6, 6))
    nmax = far_offs[n_far] - far_offs[n_far - 1]
    lam_a = np.empty((nmax, 3))
    lam_b = np.empty((nmax, 3))
    kr = np.empty(nmax)
    kc = np.empty(nmax)
    G33 = np.empty((3, 3))
    slots = np.empty(6, dtype=np.int64)

    # mass term with the exterior tail
    for t in range(n_omega):
        for q in range(mass_w.size):
            l1 = mass_pts[q, 0]
            l2 = mass_pts[q, 1]
            l0 = 1.0 - l1 - l2
            xq = (
                l0 * tri_pts[t, 0, 0] + l1 * tri_pts[t, 1, 0]
                + l2 * tri_pts[t, 2, 0]
            )
            yq = (
                l0 * tri_pts[t, 0, 1] + l1 * tri_pts[t, 1, 1]
                + l2 * tri_pts[t, 2, 1]
            )
            psi = _psi_ball(
                xq, yq, ball_cx, ball_cy, ball_R, psi_ct, psi_st, psi_wt,
                s, mode,
            )
            wq = cpref * areas[t] * mass_w[q] * psi
            for i in range(3):
                di = tri_dofs[t, i]
                if di < 0:
                    continue
                li = l0 if i == 0 else (l1 if i == 1 else l2)
                for j in range(3):
                    dj = tri_dofs[t, j]
                    if dj < 0:
                        continue
                    lj = l0 if j == 0 else (l1 if j == 1 else l2)
                    A[di, dj] += wq * li * lj

    # pair sweep
    for a in range(n_omega):
        for b in range(a, nt):
            # shared-vertex pattern by global ids
            n_shared = 0
            sa0 = -1
            sa1 = -1
            sb0 = -1
            sb1 = -1
            for i in range(3):
                va = tri_vids[a, i]
                for j in range(3):
                    if va == tri_vids[b, j]:
                        if n_shared == 0:
                            sa0 = i
                            sb0 = j
                        elif n_shared == 1:
                            sa1 = i
                            sb1 = j
                        n_shared += 1
                        break

            pref = 0.5 * cpref if a == b else cpref

            if a == b:
                identical_pair_into(
                    tri_pts[a], areas[a], s, mode, gx, gw, M6[:3, :3]
                )
                nslots = 3
                for i in range(3):
                    slots[i] = tri_dofs[a, i]
            elif n_shared == 2:
                # order the shared pair by global id
                if tri_vids[a, sa0] > tri_vids[a, sa1]:
                    tmpi = sa0
                    sa0 = sa1
                    sa1 = tmpi
                    tmpi = sb0
                    sb0 = sb1
                    sb1 = tmpi
                apex_a = 3 - sa0 - sa1
                apex_b = 3 - sb0 - sb1
                edge_pair_into(
                    tri_pts[a, sa0], tri_pts[a, sa1],
                    tri_pts[a, apex_a], tri_pts[b, apex_b],
                    areas[a], areas[b], s, mode, gx, gw, M6[:4, :4],
                )
                nslots = 4
                slots[0] = tri_dofs[a, sa0]
                slots[1] = tri_dofs[a, sa1]
                slots[2] = tri_dofs[a, apex_a]
                slots[3] = tri_dofs[b, apex_b]
            elif n_shared == 1:
                v1a = (sa0 + 1) % 3
                v2a = (sa0 + 2) % 3
                v1b = (sb0 + 1) % 3
                v2b = (sb0 + 2) % 3
                vertex_pair_into(
                    tri_pts[a, sa0], tri_pts[a, v1a], tri_pts[a, v2a],
                    tri_pts[b, v1b], tri_pts[b, v2b],
                    areas[a], areas[b], s, mode, gx, gw, M6[:5, :5],
                )
                nslots = 5
                slots[0] = tri_dofs[a, sa0]
                slots[1] = tri_dofs[a, v1a]
                slots[2] = tri_dofs[a, v2a]
                slots[3] = tri_dofs[b, v1b]
                slots[4] = tri_dofs[b, v2b]
            else:
                gap = np.sqrt(
                    (cx[a] - cx[b]) ** 2 + (cy[a] - cy[b]) ** 2
                ) - rad[a] - rad[b]
                dmax = diam[a] if diam[a] > diam[b] else diam[b]
                rho = gap / dmax
                if rho > 4.0:
                    rung = 0
                elif rho > 2.0:
                    rung = 1
                elif rho > 1.2:
                    rung = 2
                else:
                    rung = 3
                lo = far_offs[rung]
                hi = far_offs[rung + 1]
                disjoint_pair_into(
                    tri_pts[a], tri_pts[b], areas[a], areas[b], s, mode,
                    far_pts[lo:hi], far_w[lo:hi], far_pts[lo:hi],
                    far_w[lo:hi], lam_a, lam_b, kr, kc, G33, M6,
                )
                nslots = 6
                for i in range(3):
                    slots[i] = tri_dofs[a, i]
                    slots[3 + i] = tri_dofs[b, i]

            for i in range(nslots):
                di = slots[i]
                if di < 0:
                    continue
                A[di, di] += pref * M6[i, i]
                for j in range(i + 1, nslots):
                    dj = slots[j]
                    if dj < 0:
                        continue
                    v = pref * M6[i, j]
                    A[di, dj] += v
                    A[dj, di] += v


@njit(cache=True)
def psi_ball_values(pts, cx, cy, R, ct, st, wt, s, mode):
    out = np.empty(pts.shape[0])
    for k in range(pts.shape[0]):
        out[k] = _psi_ball(
            pts[k, 0], pts[k, 1], cx, cy, R, ct, st, wt, s, mode
        )
    return out
