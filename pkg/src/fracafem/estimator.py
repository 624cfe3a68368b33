"""Two-level error indicators and Dörfler marking.

One AFEM estimate step refines the current mesh uniformly, assembles the
fine system once, and measures for every new interior node z the scaled
residual

    tau(z) = |b_fine[z] - (A_fine P u)[z]| / sqrt(A_fine[z, z]),

the energy norm of the Galerkin projection of the two-level error onto
the span of the fine hat at z. Per-element totals follow the convention
that a midpoint shared by two elements counts toward both.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .assembly import (EnergyMatrix, FemFunction, assemble_load,
                       assemble_stiffness)
from .errors import InputError
from .mesh import Prolongation, Triangulation, new_interior_nodes, \
    uniform_refine
from .solver import DEFAULT_TOL, solve_spd


@dataclass(eq=False)
class IndicatorSet:
    """Node and element indicators for one coarse mesh."""

    mesh_uid: int
    node_ids: np.ndarray       # fine vertex id per new interior node
    node_tau: np.ndarray       # tau(z), same order
    elem_tau_sq: np.ndarray    # (n_coarse_elements,)
    total_sq: float

    @property
    def total(self) -> float:
        return float(np.sqrt(self.total_sq))


@dataclass(eq=False)
class EstimateData:
    """Everything the AFEM loop needs from one estimate step."""

    indicators: IndicatorSet
    fine_mesh: Triangulation
    prolongation: Prolongation
    fine_matrix: EnergyMatrix
    fine_load: np.ndarray
    fine_solution: FemFunction
    identity_deviation: float


def two_level_estimate(mesh: Triangulation, u: FemFunction, f, s: float,
                       quad_order: int = 7,
                       solver_tol: float = DEFAULT_TOL) -> EstimateData:
    """Indicators of the coarse solution u against the uniform refinement.

    Also solves the fine system and reports how far the residual form of
    tau deviates from the projection form a(u_fine - u, phi_z)/|||phi_z|||
    computed from the same matrix. The deviation is measured relative to
    the largest indicator numerator, since individual indicators may be
    arbitrarily small.
    """
    if u.mesh_uid != mesh.uid:
        raise InputError("solution does not live on this mesh")
    fine, prol = uniform_refine(mesh)
    A_f = assemble_stiffness(fine, s, quad_order)
    b_f = assemble_load(fine, f)
    P = prol.dof_matrix
    pu = P @ u.coefficients

    resid = b_f - A_f.matrix @ pu
    diag = np.diag(A_f.matrix)

    u_f = solve_spd(A_f, b_f, solver_tol)
    proj = A_f.matrix @ (u_f.coefficients - pu)

    # new interior nodes: fine vertices beyond the coarse mesh's id range
    fine_dofs = np.flatnonzero(fine.dof_of_vertex >= 0)
    new_mask = fine_dofs >= mesh.n_vertices
    node_ids = fine_dofs[new_mask]
    rows = fine.dof_of_vertex[node_ids]

    scale = np.sqrt(diag[rows])
    tau = np.abs(resid[rows]) / scale
    tau_proj = np.abs(proj[rows]) / scale
    denom = np.max(tau) if tau.size and np.max(tau) > 0 else 1.0
    identity_dev = float(np.max(np.abs(tau - tau_proj)) / denom) if tau.size \
        else 0.0

    tau_of_vertex = np.zeros(fine.n_vertices)
    tau_of_vertex[node_ids] = tau
    per_elem = new_interior_nodes(mesh, fine, prol)
    elem_tau_sq = np.array([
        float(np.sum(tau_of_vertex[ids] ** 2)) for ids in per_elem
    ])
    ind = IndicatorSet(
        mesh_uid=mesh.uid,
        node_ids=node_ids,
        node_tau=tau,
        elem_tau_sq=elem_tau_sq,
        total_sq=float(elem_tau_sq.sum()),
    )
    return EstimateData(
        indicators=ind,
        fine_mesh=fine,
        prolongation=prol,
        fine_matrix=A_f,
        fine_load=b_f,
        fine_solution=u_f,
        identity_deviation=identity_dev,
    )


def subset_total(ind: IndicatorSet, elements) -> float:
    """tau over a subset of elements: sqrt of the partial square sum."""
    elements = np.asarray(list(elements), dtype=np.int64)
    n = ind.elem_tau_sq.size
    if elements.size and (elements.min() < 0 or elements.max() >= n):
        raise InputError("element id outside the indicator set")
    if np.unique(elements).size != elements.size:
        raise InputError("duplicate element ids")
    return float(np.sqrt(ind.elem_tau_sq[elements].sum()))


def doerfler_mark(ind: IndicatorSet, theta: float):
    """Minimal-cardinality set M with tau(M)^2 >= theta * tau^2.

    Returns (element ids, converged). Elements are sorted by indicator
    descending with ties by id ascending, and the shortest qualifying
    prefix is taken, which is a minimal set. The threshold uses the
    cumulative sum's own total so that theta = 1 always terminates.
    ``converged`` signals that every indicator is zero.
    """
    if not 0.0 < theta <= 1.0:
        raise InputError("theta must lie in (0, 1]")
    tau_sq = ind.elem_tau_sq
    if not tau_sq.size or tau_sq.max() <= 0.0:
        return np.empty(0, dtype=np.int64), True
    order = np.lexsort((np.arange(tau_sq.size), -tau_sq))
    csum = np.cumsum(tau_sq[order])
    target = theta * csum[-1]
    k = int(np.searchsorted(csum, target)) + 1
    k = min(k, int(np.count_nonzero(tau_sq)))
    return np.sort(order[:k]), False


def write_indicators(ind: IndicatorSet, path) -> None:
    """Dump per-element squared indicators as CSV."""
    with open(path, "w", newline="") as fh:
        fh.write("element_id,tau_sq\n")
        for t, v in enumerate(ind.elem_tau_sq):
            fh.write("%d,%.17g\n" % (t, v))
