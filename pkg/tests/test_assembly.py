"""Stiffness assembly contracts: constants, loads, nesting, pairing."""

import math

import numpy as np
import pytest

from fracafem.assembly import (EnergyMatrix, FemFunction, assemble_load,
                               assemble_stiffness, cross_pairing,
                               energy_norm_sq, fractional_constant)
from fracafem.errors import InputError
from fracafem.mesh import (DomainSpec, Triangulation, build_initial_mesh,
                           refine, uniform_refine)
from fracafem.solver import solve_spd

C_QUARTER = 0.08324198387542507      # 2^0.5 * 0.25 * gamma(1.25) / (pi * gamma(0.75))


def test_fractional_constant_values():
    assert fractional_constant(0.25) == pytest.approx(C_QUARTER, rel=1e-13)
    assert fractional_constant(0.5) == pytest.approx(1.0 / (2.0 * math.pi),
                                                     rel=1e-13)
    # the two-gamma form evaluated directly
    s = 0.7
    expect = 2.0 ** (2 * s) * s * math.gamma(1.0 + s) \
        / (math.pi * math.gamma(1.0 - s))
    assert fractional_constant(s) == pytest.approx(expect, rel=1e-13)


def test_fractional_constant_validation():
    with pytest.raises(InputError):
        fractional_constant(0.0)
    with pytest.raises(InputError):
        fractional_constant(1.0)
    with pytest.raises(InputError):
        fractional_constant(0.5, d=3)


def _square_with_center():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0],
                      [0.5, 0.5]])
    elems = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]],
                     dtype=np.int64)
    bnd = np.array([True, True, True, True, False])
    mesh = Triangulation(verts, elems, bnd)
    mesh.check_conformity()
    return mesh


def test_load_vector_hand_value():
    mesh = _square_with_center()
    b = assemble_load(mesh, lambda p: np.ones(p.shape[0]))
    # single interior hat over four quarter-area triangles
    assert b.shape == (1,)
    assert b[0] == pytest.approx(1.0 / 3.0, rel=1e-14)


def test_load_vector_linearity():
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    mesh, _ = refine(mesh, np.arange(mesh.n_elements))
    f1 = lambda p: np.ones(p.shape[0])
    f2 = lambda p: p[:, 0] - 0.25 * p[:, 1]
    b1 = assemble_load(mesh, f1)
    b2 = assemble_load(mesh, f2)
    b12 = assemble_load(mesh, lambda p: f1(p) + f2(p))
    assert np.allclose(b12, b1 + b2, rtol=1e-13, atol=1e-16)


@pytest.fixture(scope="module")
def lshape_pair():
    coarse = build_initial_mesh(DomainSpec("l_shape"))
    coarse, _ = refine(coarse, np.arange(coarse.n_elements))
    fine, prol = uniform_refine(coarse)
    s = 0.5
    A_c = assemble_stiffness(coarse, s)
    A_f = assemble_stiffness(fine, s)
    return coarse, fine, prol, A_c, A_f, s


def test_symmetry_and_spd(lshape_pair):
    _, _, _, A_c, A_f, _ = lshape_pair
    for A in (A_c, A_f):
        M = A.matrix
        scale = np.abs(M).max()
        assert np.abs(M - M.T).max() <= 1e-13 * scale
        w = np.linalg.eigvalsh(M)
        assert w.min() > 0.0


def test_nesting_under_prolongation(lshape_pair):
    coarse, fine, prol, A_c, A_f, _ = lshape_pair
    P = prol.matrix(coarse, fine).toarray()
    galerkin = P.T @ A_f.matrix @ P
    scale = np.abs(A_c.matrix).max()
    assert np.abs(galerkin - A_c.matrix).max() <= 1e-3 * scale


def test_galerkin_orthogonality_of_residual(lshape_pair):
    coarse, fine, prol, A_c, A_f, _ = lshape_pair
    f = lambda p: np.ones(p.shape[0])
    b_c = assemble_load(coarse, f)
    b_f = assemble_load(fine, f)
    u_c = solve_spd(A_c, b_c)
    P = prol.matrix(coarse, fine)
    resid_fine = b_f - A_f.matrix @ (P @ u_c.coefficients)
    lifted = P.T @ resid_fine
    direct = b_c - A_c.matrix @ u_c.coefficients
    scale = np.abs(b_c).max()
    assert np.abs(direct).max() <= 1e-10 * scale
    assert np.abs(lifted - direct).max() <= 1e-3 * scale


def test_cross_pairing_unfolds_matrix_action(lshape_pair):
    coarse, fine, prol, _, A_f, _ = lshape_pair
    rng = np.random.default_rng(11)
    v = FemFunction(coarse.uid, rng.standard_normal(coarse.n_dofs))
    P = prol.matrix(coarse, fine)
    expect = A_f.matrix @ (P @ v.coefficients)
    for z in range(fine.n_dofs):
        assert cross_pairing(A_f, prol, v, z) == pytest.approx(
            expect[z], rel=1e-12, abs=1e-15)


def test_cross_pairing_validation(lshape_pair):
    coarse, fine, prol, A_c, A_f, _ = lshape_pair
    prol.matrix(coarse, fine)
    v = FemFunction(coarse.uid, np.zeros(coarse.n_dofs))
    with pytest.raises(InputError):
        cross_pairing(A_f, prol, v, fine.n_dofs)       # index out of range
    with pytest.raises(InputError):
        cross_pairing(A_f, prol,
                      FemFunction(coarse.uid, np.zeros(coarse.n_dofs + 1)),
                      0)
    with pytest.raises(InputError):
        cross_pairing(A_c, prol, v, 0)                 # wrong matrix mesh


def test_energy_norm_sq_contracts(lshape_pair):
    coarse, _, _, A_c, _, _ = lshape_pair
    rng = np.random.default_rng(5)
    c = rng.standard_normal(coarse.n_dofs)
    u = FemFunction(coarse.uid, c)
    val = energy_norm_sq(A_c, u)
    assert val == pytest.approx(float(c @ A_c.matrix @ c), rel=1e-14)
    assert val > 0.0
    u2 = FemFunction(coarse.uid, 2.0 * c)
    assert energy_norm_sq(A_c, u2) == pytest.approx(4.0 * val, rel=1e-13)
    with pytest.raises(InputError):
        energy_norm_sq(A_c, FemFunction(coarse.uid + 999, c))
    with pytest.raises(InputError):
        energy_norm_sq(A_c, FemFunction(coarse.uid, c[:-1]))


def test_entry_decay_with_separation():
    mesh = build_initial_mesh(DomainSpec("unit_circle"))
    for _ in range(2):
        mesh, _ = refine(mesh, np.arange(mesh.n_elements))
    A = assemble_stiffness(mesh, 0.5)
    nodes = mesh.interior_nodes
    pos = mesh.vertices[nodes]
    dof = mesh.dof_of_vertex[nodes]
    d01 = np.linalg.norm(pos - pos[0], axis=1)
    near = int(np.argsort(d01)[1])
    far = int(np.argmax(d01))
    a_near = abs(A.matrix[dof[0], dof[near]])
    a_far = abs(A.matrix[dof[0], dof[far]])
    assert a_far < a_near


def test_assemble_stiffness_validation():
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    with pytest.raises(InputError):
        assemble_stiffness(mesh, 1.5)
    with pytest.raises(InputError):
        assemble_stiffness(mesh, 0.5, quad_order=0)


def test_fem_function_vertex_values(lshape_pair):
    coarse, _, _, _, _, _ = lshape_pair
    c = np.arange(1.0, coarse.n_dofs + 1.0)
    u = FemFunction(coarse.uid, c)
    vv = u.vertex_values(coarse)
    assert vv.shape == (coarse.n_vertices,)
    assert np.all(vv[coarse.is_boundary] == 0.0)
    nodes = coarse.interior_nodes
    assert np.array_equal(vv[nodes], c[coarse.dof_of_vertex[nodes]])
