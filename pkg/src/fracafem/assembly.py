"""Galerkin assembly for the fractional energy form.

The bilinear form splits into the principal-value double integral over
Omega x Omega and a complement term. With B a ball containing Omega, the
complement term is C(2,s) * int_Omega phi_i phi_j psi_Omega with

    psi_Omega(x) = psi_B(x) + int_{B \\ Omega} |x-y|^(-2-2s) dy.

psi_B has a closed angular form (quadrature.exterior_tail); the shell
B \\ Omega is triangulated by exterior.build_exterior_shell and its
elements enter the same pair sweep as domain elements, carrying no
degrees of freedom. Shell elements that touch the boundary share vertex
ids with the domain mesh, so touching pairs get the singular rules.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .mesh import Prolongation, Triangulation
from . import nbcore
from . import quadrature


def fractional_constant(s: float, d: int = 2) -> float:
    """Normalization C(d,s) = 2^(2s) s Gamma(d/2+s) / (pi^(d/2) Gamma(1-s))."""
    if d != 2:
        raise InputError("only d = 2 is supported")
    if not (isinstance(s, (int, float)) and 0.0 < s < 1.0):
        raise InputError("s must lie in (0, 1)")
    return (
        2.0 ** (2.0 * s) * s * math.gamma(1.0 + s)
        / (math.pi * math.gamma(1.0 - s))
    )


@dataclass(eq=False)
class EnergyMatrix:
    """Dense symmetric Galerkin matrix on the interior nodes of one mesh."""

    matrix: np.ndarray
    mesh_uid: int
    s: float
    quad_order: int

    @property
    def n_dofs(self) -> int:
        return self.matrix.shape[0]


@dataclass(eq=False)
class FemFunction:
    """Coefficients on interior nodes; boundary values are implicitly zero."""

    mesh_uid: int
    coefficients: np.ndarray

    def vertex_values(self, mesh: Triangulation) -> np.ndarray:
        """Values at every vertex of the mesh, zero on the boundary."""
        if mesh.uid != self.mesh_uid:
            raise InputError("function does not live on this mesh")
        vals = np.zeros(mesh.n_vertices)
        vals[mesh.interior_nodes] = self.coefficients
        return vals


_PSI_ANGLES = 64


def _angular_table(n: int = _PSI_ANGLES):
    gx, gw = quadrature.gauss01(n)
    theta = 2.0 * np.pi * gx
    return np.cos(theta), np.sin(theta), gw.copy()


def assemble_stiffness(mesh: Triangulation, s: float,
                       quad_order: int = 7) -> EnergyMatrix:
    """Assemble the dense interior-node matrix of the energy form.

    The element-pair enumeration is fixed (row index ascending, column
    from the row upward, shell elements after domain elements), so the
    result is deterministic for identical inputs.
    """
    if not (isinstance(s, (int, float)) and 0.0 < s < 1.0):
        raise InputError("s must lie in (0, 1)")
    if quad_order < 1:
        raise InputError("quadrature order must be at least 1")
    mesh.check_conformity()

    from .exterior import build_exterior_shell

    shell = build_exterior_shell(mesh)

    n_omega = mesh.n_elements
    omega_pts = mesh.vertices[mesh.elements]
    tri_pts = np.concatenate([omega_pts, shell.tri_pts], axis=0)
    tri_vids = np.concatenate([mesh.elements, shell.tri_vids], axis=0)
    dof = mesh.dof_of_vertex
    omega_dofs = dof[mesh.elements]
    shell_dofs = np.full(shell.tri_vids.shape, -1, dtype=np.int64)
    tri_dofs = np.concatenate([omega_dofs, shell_dofs], axis=0)

    n_ax = quadrature.singular_axis_points(quad_order)
    gx, gw = quadrature.gauss01(n_ax)
    far_pts, far_w, far_offs = quadrature.stacked_far_rules(quad_order)
    mass_pts, mass_w = quadrature.TRI_P3
    ct, st, wt = _angular_table()

    cpref = fractional_constant(s)
    smode = nbcore.kernel_mode(s)
    A = np.zeros((mesh.n_dofs, mesh.n_dofs))
    nbcore.assemble_into(
        np.ascontiguousarray(tri_pts, dtype=np.float64),
        np.ascontiguousarray(tri_vids, dtype=np.int64),
        np.ascontiguousarray(tri_dofs, dtype=np.int64),
        n_omega, float(s), smode, cpref, gx, gw,
        far_pts, far_w, far_offs,
        np.ascontiguousarray(mass_pts), np.ascontiguousarray(mass_w),
        shell.ball_center[0], shell.ball_center[1], shell.ball_radius,
        ct, st, wt, A,
    )
    return EnergyMatrix(A, mesh.uid, float(s), int(quad_order))


def assemble_load(mesh: Triangulation, f, order: int = 4) -> np.ndarray:
    """Load vector b[z] = (f, phi_z) over the interior nodes.

    ``f`` is called with an (k, 2) array of points and must return the k
    values (a scalar is broadcast, so constant lambdas work).
    """
    if order < 1:
        raise InputError("quadrature order must be at least 1")
    pts, wts = quadrature.collapsed_tri_rule(order)
    lam = np.column_stack([1.0 - pts[:, 0] - pts[:, 1], pts[:, 0], pts[:, 1]])
    coords = mesh.vertices[mesh.elements]            # (nt, 3, 2)
    quad_xy = np.einsum("qk,tkd->tqd", lam, coords)  # (nt, nq, 2)
    nt, nq = quad_xy.shape[:2]
    fv = np.asarray(f(quad_xy.reshape(-1, 2)), dtype=float)
    if fv.ndim == 0:
        fv = np.full(nt * nq, float(fv))
    if fv.shape != (nt * nq,):
        raise InputError("f must return one value per evaluation point")
    fv = fv.reshape(nt, nq)
    areas = np.abs(mesh.areas)
    # contribution of element t to node k: |T| sum_q w_q f_q lam_q[k]
    contrib = np.einsum("tq,qk,t->tk", fv * wts[None, :], lam, areas)
    b = np.zeros(mesh.n_dofs)
    dofs = mesh.dof_of_vertex[mesh.elements]
    inside = dofs >= 0
    np.add.at(b, dofs[inside], contrib[inside])
    return b


def energy_norm_sq(A: EnergyMatrix, v: FemFunction) -> float:
    """The squared energy norm v^T A v."""
    if v.mesh_uid != A.mesh_uid:
        raise InputError("function and matrix live on different meshes")
    c = np.asarray(v.coefficients, dtype=float)
    if c.shape != (A.n_dofs,):
        raise InputError("coefficient count does not match the matrix")
    return float(c @ A.matrix @ c)


def cross_pairing(A_fine: EnergyMatrix, P: Prolongation,
                  v_coarse: FemFunction, z_fine: int) -> float:
    """Pair a coarse function against one fine-level hat in energy.

    Returns row ``z_fine`` of A_fine applied to the prolonged coefficient
    vector of ``v_coarse``.
    """
    if A_fine.mesh_uid != P.fine_uid:
        raise InputError("matrix does not live on the prolongation's fine mesh")
    if v_coarse.mesh_uid != P.coarse_uid:
        raise InputError("function does not live on the coarse mesh")
    pm = P.dof_matrix
    if pm is None:
        raise InputError("prolongation carries no interior transfer matrix")
    c = np.asarray(v_coarse.coefficients, dtype=float)
    if c.shape != (pm.shape[1],):
        raise InputError("coefficient count does not match the prolongation")
    if not 0 <= z_fine < A_fine.n_dofs:
        raise InputError("fine node index out of range")
    return float(A_fine.matrix[z_fine] @ (pm @ c))
