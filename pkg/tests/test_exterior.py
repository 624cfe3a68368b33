"""Shell mesh around the domain: coverage, orientation, id bookkeeping."""

import numpy as np
import pytest
from shapely.geometry import Polygon

from fracafem.errors import InputError
from fracafem.exterior import (
    BALL_FACTOR,
    ShellMesh,
    boundary_loop,
    build_exterior_shell,
    enclosing_ball,
)
from fracafem.mesh import DomainSpec, build_initial_mesh, uniform_refine


def _domain_area(mesh):
    return float(np.sum(mesh.areas))


def _meshes():
    circle = build_initial_mesh(DomainSpec("unit_circle"))
    lshape = build_initial_mesh(DomainSpec("l_shape"))
    lshape1, _ = uniform_refine(lshape)
    return [circle, lshape, lshape1]


@pytest.mark.parametrize("mesh", _meshes(), ids=["circle0", "lshape0",
                                                 "lshape1"])
def test_shell_covers_complement(mesh):
    shell = build_exterior_shell(mesh)
    areas = shell.areas()
    assert np.all(areas > 0.0)
    # the shell triangles plus the domain tile the 256-gon in the ball,
    # up to the sliver between that polygon and the true circle
    theta = 2.0 * np.pi * np.arange(256) / 256
    ball = Polygon(
        shell.ball_center[None, :]
        + shell.ball_radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    )
    want = ball.area - _domain_area(mesh)
    got = float(np.sum(areas))
    assert got == pytest.approx(want, rel=1e-12)


def test_strip_reuses_boundary_ids():
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    shell = build_exterior_shell(mesh)
    assert shell.n_strip > 0
    strip_ids = shell.tri_vids[: shell.n_strip]
    inner = strip_ids[strip_ids < mesh.n_vertices]
    # every boundary vertex shows up in the innermost strip ring
    loop = boundary_loop(mesh)
    assert set(inner.tolist()) == set(loop.tolist())
    # and the points stored for those ids are the mesh's own vertices
    pts = shell.tri_pts[: shell.n_strip].reshape(-1, 2)
    flat = strip_ids.reshape(-1)
    sel = flat < mesh.n_vertices
    assert np.allclose(pts[sel], mesh.vertices[flat[sel]])
    # vertices created by the shell extend the id space, no collisions
    assert shell.tri_vids.max() >= mesh.n_vertices


def test_boundary_loop_lshape():
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    loop = boundary_loop(mesh)
    # all eight vertices of the level-0 L-shape lie on the boundary
    assert sorted(loop.tolist()) == list(range(8))
    pts = mesh.vertices[loop]
    # shoelace area positive means counterclockwise
    x, y = pts[:, 0], pts[:, 1]
    area2 = np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
    assert area2 > 0
    assert area2 == pytest.approx(2.0 * 3.0, rel=1e-14)


def test_boundary_loop_counts_refined():
    mesh, _ = uniform_refine(build_initial_mesh(DomainSpec("unit_circle")))
    loop = boundary_loop(mesh)
    interior = set(mesh.interior_nodes.tolist())
    assert len(set(loop.tolist())) == loop.size
    assert not interior.intersection(loop.tolist())
    assert loop.size + len(interior) == mesh.n_vertices


def test_enclosing_ball_geometry():
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    center, radius = enclosing_ball(mesh)
    lo = mesh.vertices.min(axis=0)
    hi = mesh.vertices.max(axis=0)
    assert np.allclose(center, 0.5 * (lo + hi))
    circ = np.max(np.linalg.norm(mesh.vertices - center, axis=1))
    assert radius == pytest.approx(BALL_FACTOR * circ, rel=1e-14)
    # every domain vertex is strictly inside the ball
    assert circ < radius


def test_boundary_loop_rejects_closed_surface():
    # two triangles glued along every edge leave no boundary; we fake the
    # simplest failing case with a mesh missing boundary edges by feeding
    # a shell built from a valid mesh instead, so just check the guard on
    # an empty successor map via a doubled element list
    mesh = build_initial_mesh(DomainSpec("l_shape"))
    shell = build_exterior_shell(mesh)
    assert isinstance(shell, ShellMesh)
    with pytest.raises(InputError):
        boundary_loop(_closed_fake())


def _closed_fake():
    """Tetrahedron boundary flattened: every edge shared by two elements."""
    from fracafem.mesh import Triangulation

    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.5, 1.0], [0.5, 0.4]])
    elems = np.array(
        [[0, 1, 3], [1, 2, 3], [2, 0, 3], [0, 2, 1]], dtype=np.int64
    )
    return Triangulation(
        vertices=verts, elements=elems, is_boundary=np.zeros(4, dtype=bool)
    )
