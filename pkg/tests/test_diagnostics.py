"""Weighted norms, interpolation operators, and the equivalence report."""

import math

import numpy as np
import pytest

from fracafem.assembly import FemFunction
from fracafem.diagnostics import (
    WeightFunction,
    _graded_son_integral,
    _Lcg,
    equivalence_report,
    nodal_interpolation,
    scott_zhang,
    weighted_l2_norm,
    write_reports,
)
from fracafem.errors import InputError
from fracafem.mesh import (
    DomainSpec,
    Triangulation,
    build_initial_mesh,
    uniform_refine,
)
from fracafem.quadrature import weighted_element_integral


# Unit square split along the diagonal, every vertex on the boundary.
# One uniform refinement produces the criss-cross pattern: 8 sons of
# area 1/8 all meeting at the center (0.5, 0.5), which is the only
# interior node of the fine mesh.
@pytest.fixture(scope="module")
def square_bubble():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    elems = np.array([[2, 0, 1], [0, 2, 3]], dtype=np.int64)
    coarse = Triangulation(
        vertices=verts, elements=elems, is_boundary=np.ones(4, dtype=bool)
    )
    fine, prol = uniform_refine(coarse)
    assert fine.n_dofs == 1
    assert np.allclose(fine.vertices[4], [0.5, 0.5])
    # the center vertex belongs to every son, so the hat there covers
    # the whole square and integrates to son_area / 6 per son
    for sons in prol.sons:
        for son in sons:
            assert 4 in fine.elements[son]
    g = FemFunction(fine.uid, np.ones(1))
    return coarse, fine, prol, g


def test_lcg_stream_frozen():
    got = _Lcg().coeffs(5)
    want = [
        -0.527088949456811,
        -0.2614586525596678,
        0.008484064601361752,
        0.40976652735844254,
        -0.8989127427339554,
    ]
    assert np.allclose(got, want, rtol=0, atol=1e-16)
    # one global stream: a fresh generator repeats it exactly
    assert np.array_equal(got, _Lcg().coeffs(5))


def test_weight_function_values():
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    h = math.sqrt(mesh.areas[0])
    w_small = WeightFunction(mesh, 0.4)
    pts = mesh.vertices[mesh.elements[0]].mean(axis=0)
    assert w_small.values(0, pts) == pytest.approx(h ** 0.4, rel=1e-14)
    w_big = WeightFunction(mesh, 0.75)
    tri = mesh.vertices[mesh.elements[0]]
    d = mesh.skeleton_distance(pts, 0)
    assert w_big.values(0, pts) == pytest.approx(
        h ** 0.5 * d ** 0.25, rel=1e-12
    )
    # the weight vanishes on the element boundary for s > 1/2
    edge_mid = 0.5 * (tri[0] + tri[1])
    assert w_big.values(0, edge_mid)[0] == pytest.approx(0.0, abs=1e-12)
    for bad in (0.0, 1.0, -0.3):
        with pytest.raises(InputError):
            WeightFunction(mesh, bad)


def test_weighted_norm_exact_small_s(square_bubble):
    coarse, fine, prol, g = square_bubble
    # int g^2 = 1/12 per coarse element, weight (1/2)^(sign s) exactly
    got_neg = weighted_l2_norm(coarse, 0.4, fine, prol, g, -1)
    assert got_neg == pytest.approx(math.sqrt(2.0 ** 0.4 / 6.0), rel=1e-13)
    got_pos = weighted_l2_norm(coarse, 0.4, fine, prol, g, 1)
    assert got_pos == pytest.approx(math.sqrt(2.0 ** -0.4 / 6.0), rel=1e-13)


def test_weighted_norm_graded_oracle(square_bubble):
    coarse, fine, prol, g = square_bubble
    # reference values from adaptive double quadrature of
    # h int_T d(x)^(1-2s) g(x)^2 dx at absolute tolerance 1e-10
    got75 = weighted_l2_norm(coarse, 0.75, fine, prol, g, -1)
    assert got75 == pytest.approx(1.0285593979873813, rel=1e-6)
    got60 = weighted_l2_norm(coarse, 0.60, fine, prol, g, -1)
    assert got60 == pytest.approx(0.6353994790713087, rel=1e-6)


def test_weighted_norm_zero_and_scaling(square_bubble):
    coarse, fine, prol, _ = square_bubble
    zero = FemFunction(fine.uid, np.zeros(1))
    assert weighted_l2_norm(coarse, 0.75, fine, prol, zero, -1) == 0.0
    g1 = FemFunction(fine.uid, np.array([0.6]))
    g3 = FemFunction(fine.uid, np.array([1.8]))
    n1 = weighted_l2_norm(coarse, 0.7, fine, prol, g1, -1)
    n3 = weighted_l2_norm(coarse, 0.7, fine, prol, g3, -1)
    assert n3 == pytest.approx(3.0 * n1, rel=1e-9)


def test_weighted_norm_validation(square_bubble):
    coarse, fine, prol, g = square_bubble
    with pytest.raises(InputError):
        weighted_l2_norm(coarse, 0.5, fine, prol, g, 0)
    with pytest.raises(InputError):
        weighted_l2_norm(coarse, 1.5, fine, prol, g, -1)
    other = build_initial_mesh(DomainSpec("l_shape"))
    with pytest.raises(InputError):
        weighted_l2_norm(other, 0.5, fine, prol, g, -1)
    stranger = FemFunction(coarse.uid, np.zeros(0))
    with pytest.raises(InputError):
        weighted_l2_norm(coarse, 0.5, fine, prol, stranger, -1)


def test_graded_rule_cone_identity():
    # int_T d(x, boundary)^a dx = 2 |T| r^a / ((1+a)(2+a)) with r the
    # inradius, by summing the three nearest-edge fans
    tri = np.array([[0.0, 0.0], [2.0, 0.0], [0.0, 3.0]])
    area = 3.0
    r = 2.0 * area / (5.0 + math.sqrt(13.0))
    alpha = -0.5
    want = 2.0 * area * r ** alpha / ((1.0 + alpha) * (2.0 + alpha))
    ones = lambda pts: np.ones(pts.shape[0])
    got = _graded_son_integral(tri, [tri], ones, alpha, 1e-6)
    assert got == pytest.approx(want, rel=1e-5)
    ref = weighted_element_integral(tri, ones, alpha)
    assert ref == pytest.approx(want, rel=1e-5)


@pytest.fixture(scope="module")
def lshape_pair():
    coarse, _ = uniform_refine(build_initial_mesh(DomainSpec("l_shape")))
    fine, prol = uniform_refine(coarse)
    return coarse, fine, prol


def test_nodal_interpolation_reproduces(lshape_pair):
    coarse, fine, prol = lshape_pair
    assert coarse.n_dofs > 0
    rng = np.random.default_rng(11)
    c = rng.standard_normal(coarse.n_dofs)
    pmat = prol.matrix(coarse, fine)
    lifted = FemFunction(fine.uid, pmat @ c)
    back = nodal_interpolation(coarse, fine, lifted)
    assert np.allclose(back.coefficients, c, rtol=0, atol=1e-14)
    # a hat at a vertex new to the fine mesh interpolates to zero
    new_interior = [z for z in fine.interior_nodes if z >= coarse.n_vertices]
    hat = np.zeros(fine.n_dofs)
    hat[fine.dof_of_vertex[new_interior[0]]] = 1.0
    out = nodal_interpolation(coarse, fine, FemFunction(fine.uid, hat))
    assert np.all(out.coefficients == 0.0)
    with pytest.raises(InputError):
        nodal_interpolation(coarse, fine, FemFunction(coarse.uid, c))


def test_scott_zhang_reproduces(lshape_pair):
    coarse, fine, prol = lshape_pair
    rng = np.random.default_rng(12)
    c = rng.standard_normal(coarse.n_dofs)
    pmat = prol.matrix(coarse, fine)
    lifted = FemFunction(fine.uid, pmat @ c)
    back = scott_zhang(coarse, fine, prol, lifted)
    # the dual functions are biorthogonal to the hats and the order-2
    # rule is exact for the quadratic integrand, so this is an identity
    assert np.allclose(back.coefficients, c, rtol=1e-12, atol=1e-13)


def test_scott_zhang_linearity(lshape_pair):
    coarse, fine, prol = lshape_pair
    rng = np.random.default_rng(13)
    a = rng.standard_normal(fine.n_dofs)
    b = rng.standard_normal(fine.n_dofs)
    fa = scott_zhang(coarse, fine, prol, FemFunction(fine.uid, a))
    fb = scott_zhang(coarse, fine, prol, FemFunction(fine.uid, b))
    fab = scott_zhang(
        coarse, fine, prol, FemFunction(fine.uid, 2.0 * a - 0.5 * b)
    )
    assert np.allclose(
        fab.coefficients,
        2.0 * fa.coefficients - 0.5 * fb.coefficients,
        rtol=1e-12, atol=1e-13,
    )


def test_equivalence_report_deterministic():
    coarse, _ = uniform_refine(build_initial_mesh(DomainSpec("l_shape")))
    rep1 = equivalence_report(coarse, 0.5, 3, quad_order=5)
    rep2 = equivalence_report(coarse, 0.5, 3, quad_order=5)
    assert rep1.r_values == rep2.r_values
    assert rep1.q_values == rep2.q_values
    assert rep1.n_r_samples == len(rep1.r_values) == 3
    assert rep1.n_q_nodes == len(rep1.q_values) > 0
    assert rep1.r_min == min(rep1.r_values)
    assert rep1.r_max == max(rep1.r_values)
    assert rep1.q_min == min(rep1.q_values)
    assert rep1.q_max == max(rep1.q_values)
    assert all(v > 0 and math.isfinite(v) for v in rep1.r_values)
    assert all(v > 0 and math.isfinite(v) for v in rep1.q_values)


def test_equivalence_report_trivial_coarse():
    # the level-0 L-shape has no interior nodes, so both interpolants
    # vanish and every ratio collapses to exactly one
    coarse = build_initial_mesh(DomainSpec("l_shape"))
    rep = equivalence_report(coarse, 0.5, 2, quad_order=3)
    assert rep.r_values == [1.0, 1.0]
    with pytest.raises(InputError):
        equivalence_report(coarse, 0.5, 0)


def test_write_reports_format(tmp_path):
    from fracafem.diagnostics import EquivalenceReport

    rep = EquivalenceReport(
        s=0.5, r_min=0.5, r_max=2.0, q_min=1.25, q_max=4.0,
        n_r_samples=2, n_q_nodes=2, r_values=[0.5, 2.0],
        q_values=[1.25, 4.0],
    )
    path = tmp_path / "diag.csv"
    write_reports([(0, rep), (1, rep)], path)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == "quantity,min,max,mesh_level"
    assert lines[1] == "r,0.5,2,0"
    assert lines[2] == "q,1.25,4,0"
    assert lines[3] == "r,0.5,2,1"
    assert len(lines) == 5
