import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from sparselg.contact import (
    Binding,
    Box,
    Capsule,
    HalfSpace,
    Motion,
    Obstacle,
    Sphere,
    TriangleMeshShape,
    detect,
    gap_eval,
    linearize,
    orthonormal_tangents,
)
from sparselg.fem import box_tet_mesh

FLOOR = Obstacle(HalfSpace([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]), mu=0.4)


# detection


def test_detect_halfspace():
    pairs = detect(np.array([[0.3, 0.2, -0.1]]), [FLOOR], 0.0)
    assert len(pairs) == 1
    assert pairs[0].gap == pytest.approx(-0.1)
    np.testing.assert_array_equal(pairs[0].normal, [0.0, 0.0, 1.0])
    assert pairs[0].mu == 0.4


def test_detect_outside_margin():
    assert detect(np.array([[0.0, 0.0, 1.0]]), [FLOOR], 0.5) == []


def test_detect_sphere():
    r = 0.2
    ball = Obstacle(Sphere(np.array([1.0, 0.0, 0.0]), r))
    direction = np.array([1.0, 2.0, -2.0]) / 3.0
    x = np.array([1.0, 0.0, 0.0]) + 0.9 * r * direction
    (pair,) = detect(x[None], [ball], 0.0)
    assert pair.gap == pytest.approx(-0.1 * r)
    np.testing.assert_allclose(pair.normal, direction, atol=1e-15)


def test_detect_nearest_obstacle_wins_and_skips_pins():
    wall = Obstacle(HalfSpace([0.0, 0.0, 0.0], [1.0, 0.0, 0.0]))
    x = np.array([[0.05, 0.0, 0.01], [0.01, 0.0, 0.05], [0.0, 0.0, 0.0]])
    pairs = detect(x, [FLOOR, wall], 0.1, skip=np.array([2]))
    assert [(p.vertex, p.obstacle) for p in pairs] == [(0, 0), (1, 1)]


def test_detect_expansion_widens_margin():
    x = np.array([[0.0, 0.0, 0.2]])
    assert detect(x, [FLOOR], 0.1) == []
    assert len(detect(x, [FLOOR], 0.1, expansion=np.array([0.15]))) == 1


def test_min_separation_shifts_gap():
    (pair,) = detect(np.array([[0.0, 0.0, 0.0]]), [FLOOR], 0.01, min_separation=0.002)
    assert pair.gap == pytest.approx(-0.002)


def test_negative_margin_rejected():
    with pytest.raises(ValueError):
        detect(np.zeros((1, 3)), [FLOOR], -1.0)


def test_negative_friction_rejected():
    with pytest.raises(ValueError):
        Obstacle(HalfSpace([0, 0, 0], [0, 0, 1]), mu=-0.1)


# shapes


def test_box_sdf():
    box = Box(np.array([0.1, 0.2, 0.3]))
    p = np.array([[0.0, 0.0, 0.5], [0.2, 0.3, 0.0], [0.05, 0.0, 0.0]])
    d, n = box.local_sdf(p)
    np.testing.assert_allclose(d, [0.2, np.hypot(0.1, 0.1), -0.05])
    np.testing.assert_allclose(n[0], [0, 0, 1])
    np.testing.assert_allclose(n[1], [np.sqrt(0.5), np.sqrt(0.5), 0])
    np.testing.assert_allclose(n[2], [1, 0, 0])


def test_capsule_sdf():
    cap = Capsule(np.array([0.0, -1.0, 0.0]), np.array([0.0, 1.0, 0.0]), 0.1)
    d, n = cap.local_sdf(np.array([[0.3, 0.5, 0.0], [0.0, 1.5, 0.0], [0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(d, [0.2, 0.4, -0.1])
    np.testing.assert_allclose(n[0], [1, 0, 0])
    np.testing.assert_allclose(n[1], [0, 1, 0])
    assert abs(n[2] @ [0, 1, 0]) < 1e-15


def test_triangle_mesh_matches_box(rng):
    mesh = box_tet_mesh((2.0, 2.0, 2.0), (1, 1, 1), origin=(-1.0, -1.0, -1.0))
    tri = TriangleMeshShape(mesh.vertices, mesh.faces)
    box = Box(np.ones(3))
    p = rng.uniform(-2.0, 2.0, size=(200, 3))
    d_mesh, _ = tri.local_sdf(p)
    d_box, _ = box.local_sdf(p)
    np.testing.assert_allclose(d_mesh, d_box, atol=1e-12)


def test_moving_obstacle_pose_and_velocity():
    motion = Motion.keyframes([0, 10], [[0.0, 0.0, 0.0], [0.1, 0.0, 0.0]])
    ob = Obstacle(HalfSpace([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]), motion=motion)
    R, t = motion.pose(5)
    np.testing.assert_allclose(t, [0.05, 0, 0])
    np.testing.assert_allclose(R, np.eye(3))
    v = ob.point_velocity(np.zeros((1, 3)), 5, 0.01)
    np.testing.assert_allclose(v, [[1.0, 0.0, 0.0]])
    _, t_after = motion.pose(20)
    np.testing.assert_allclose(t_after, [0.1, 0, 0])


def test_rotating_keyframes_slerp():
    q1 = Rotation.from_euler("z", 90, degrees=True).as_quat()  # x, y, z, w
    motion = Motion.keyframes([0, 2], np.zeros((2, 3)), [[1, 0, 0, 0], np.r_[q1[3], q1[:3]]])
    R, _ = motion.pose(1)
    np.testing.assert_allclose(R, Rotation.from_euler("z", 45, degrees=True).as_matrix(), atol=1e-14)


def test_bad_keyframes():
    with pytest.raises(ValueError):
        Motion.keyframes([0, 0], np.zeros((2, 3)))


# tangents


def test_tangents_for_z_normal():
    t1, t2 = orthonormal_tangents(np.array([0.0, 0.0, 1.0]))
    np.testing.assert_array_equal(t1, [1.0, 0.0, 0.0])
    np.testing.assert_array_equal(t2, [0.0, 1.0, 0.0])


def test_tangent_frames_orthonormal(rng):
    n = rng.standard_normal((10_000, 3))
    n /= np.linalg.norm(n, axis=1)[:, None]
    t1, t2 = orthonormal_tangents(n)
    assert np.max(np.abs(np.einsum("ij,ij->i", t1, n))) <= 1e-12
    assert np.max(np.abs(np.einsum("ij,ij->i", t2, n))) <= 1e-12
    assert np.max(np.abs(np.einsum("ij,ij->i", t1, t2))) <= 1e-12
    np.testing.assert_allclose(np.einsum("ij,ij->i", np.cross(t1, t2), n), 1.0, atol=1e-12)


def test_tangents_reject_non_unit():
    with pytest.raises(ValueError):
        orthonormal_tangents(np.array([0.0, 0.0, 2.0]))
    with pytest.raises(ValueError):
        orthonormal_tangents(np.zeros(3))


# linearization


def test_normal_row_construction():
    x = np.array([[0.0, 0.0, 1.0], [0.0, 0.0, -0.01]])
    cs = linearize(detect(x, [FLOOR], 0.05), [], x, 0.01)
    assert cs.n_c == 1 and cs.n_b == 0
    np.testing.assert_array_equal(cs.J_n.toarray(), [[0, 0, 0, 0, 0, 1]])
    np.testing.assert_array_equal(cs.J_f.toarray(), [[0, 0, 0, 1, 0, 0], [0, 0, 0, 0, 1, 0]])
    np.testing.assert_array_equal(cs.d_f, [0.0, 0.0])


def test_binding_rows():
    x = np.zeros((3, 3))
    q = np.array([0.1, -0.2, 0.3])
    cs = linearize([], [Binding(1, q)], x, 0.01)
    assert cs.n_b == 3
    np.testing.assert_array_equal(cs.J_b.toarray()[:, 3:6], np.eye(3))
    np.testing.assert_array_equal(cs.d_b, q)
    np.testing.assert_array_equal(cs.e_b, 0.0)
    y_b, _, _ = gap_eval(cs, x)
    np.testing.assert_array_equal(y_b, -q)


def test_binding_validation():
    with pytest.raises(ValueError):
        Binding(0, np.zeros(3), compliance=-1.0)
    with pytest.raises(IndexError):
        linearize([], [Binding(5, np.zeros(3))], np.zeros((2, 3)), 0.01)


def _scene(rng, m=40):
    x = rng.uniform(-0.05, 0.05, size=(m, 3))
    obstacles = [
        FLOOR,
        Obstacle(Sphere(np.array([0.0, 0.0, -0.05]), 0.06), mu=0.2),
        Obstacle(HalfSpace([0.03, 0.0, 0.0], [-1.0, 0.0, 0.0])),
    ]
    return x, obstacles


def test_gaps_reproduce_detection(rng):
    x, obstacles = _scene(rng)
    pairs = detect(x, obstacles, 0.02, min_separation=0.001)
    cs = linearize(pairs, [], x, 0.01)
    assert cs.n_c > 5
    _, y_n, hyd_f = gap_eval(cs, x)
    np.testing.assert_allclose(y_n, [p.gap for p in cs.pairs], atol=1e-12)
    np.testing.assert_array_equal(hyd_f, 0.0)


def test_jacobian_rows_are_directions(rng):
    x, obstacles = _scene(rng)
    cs = linearize(detect(x, obstacles, 0.02), [], x, 0.01)
    for j, p in enumerate(cs.pairs):
        for ax in range(3):
            e = np.zeros(cs.n_dofs)
            e[3 * p.vertex + ax] = 1.0
            col = cs.J @ e
            assert col[cs.sl_n][j] == p.normal[ax]
            assert col[cs.sl_f][2 * j] == p.t1[ax]
            assert col[cs.sl_f][2 * j + 1] == p.t2[ax]


def test_ordering_is_deterministic(rng):
    x, obstacles = _scene(rng)
    pairs = detect(x, obstacles, 0.02)
    shuffled = [pairs[i] for i in rng.permutation(len(pairs))]
    a = linearize(pairs, [], x, 0.01)
    b = linearize(shuffled + shuffled[:3], [], x, 0.01)
    keys = [(p.vertex, p.obstacle) for p in a.pairs]
    assert keys == sorted(keys)
    assert keys == [(p.vertex, p.obstacle) for p in b.pairs]
    assert (a.J != b.J).nnz == 0


def test_vertex_on_plane_gap_is_minus_separation():
    x = np.array([[0.2, 0.1, 0.0]])
    cs = linearize(detect(x, [FLOOR], 0.01, min_separation=0.003), [], x, 0.01)
    _, y_n, _ = gap_eval(cs, x)
    assert y_n[0] == pytest.approx(-0.003)


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.1, 0.1), st.floats(0.0, 2 * np.pi), st.floats(0.0, 1.0))
def test_tangential_displacement_maps_to_slide(delta, azimuth, tilt):
    n = np.array([np.sin(tilt) * np.cos(azimuth), np.sin(tilt) * np.sin(azimuth), np.cos(tilt)])
    ob = Obstacle(HalfSpace([0.0, 0.0, 0.0], n))
    x = np.zeros((1, 3))
    cs = linearize(detect(x, [ob], 0.01), [], x, 0.01)
    t1 = cs.pairs[0].t1
    _, y_n, hyd_f = gap_eval(cs, x + delta * t1)
    assert hyd_f[0] == pytest.approx(delta, abs=1e-15)
    assert abs(hyd_f[1]) <= 1e-15
    assert abs(y_n[0]) <= 1e-15


def test_moving_obstacle_slide_rate():
    h = 0.01
    motion = Motion.keyframes([0, 100], [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    belt = Obstacle(HalfSpace([0.0, 0.0, 0.0], [0.0, 0.0, 1.0]), motion=motion, mu=0.5)
    x = np.zeros((1, 3))
    cs = linearize(detect(x, [belt], 0.01, frame=10, h=h), [], x, h)
    np.testing.assert_allclose(cs.d_f, [1.0, 0.0])
    # a vertex carried along with the belt has zero relative sliding
    _, _, hyd_f = gap_eval(cs, x + [h * 1.0, 0.0, 0.0])
    np.testing.assert_allclose(hyd_f, 0.0, atol=1e-15)


def test_gap_eval_dimension_check():
    x = np.zeros((1, 3))
    cs = linearize(detect(x, [FLOOR], 0.01), [], x, 0.01)
    with pytest.raises(ValueError):
        gap_eval(cs, np.zeros(6))
