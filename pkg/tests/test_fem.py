import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from sparselg.fem import (
    DegenerateElementError,
    FemModel,
    GlobalSystem,
    Material,
    MaterialKind,
    Mesh,
    assemble_rhs,
    box_tet_mesh,
    build_full_system,
    build_system,
    cloth_mesh,
    elastic_matrix,
    energy_eval,
    load_mesh,
    mass_matrix,
    predict,
    project_arap,
    project_corotational,
    project_neohookean,
    psi,
    psi_gradient,
    read_obj,
    read_tetgen,
    tet_mesh,
    write_obj,
    write_tetgen,
)

KINDS = [MaterialKind.ARAP, MaterialKind.COROTATIONAL, MaterialKind.NEOHOOKEAN]
UNIT_TET = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])


def single_tet(kind="arap", E=1e5, nu=0.3):
    return FemModel.from_mesh(tet_mesh(UNIT_TET, [[0, 1, 2, 3]]), Material(kind, 1000.0, E, nu))


def point_cloud(m, mass=2.0):
    mesh = Mesh(np.zeros((m, 3)), np.zeros((0, 4), dtype=np.int64), np.zeros((0, 3), dtype=np.int64))
    return FemModel.from_mesh(mesh, Material("arap", 1000.0, 1e5, 0.3), vertex_mass=mass)


def random_F(rng, n, cols=3, min_det=0.05):
    out = []
    while len(out) < n:
        F = rng.uniform(0.5, 1.5, size=(3, cols))
        if cols == 3 and np.linalg.det(F) <= min_det:
            continue
        out.append(F)
    return np.array(out)


# materials


def test_lame_parameters():
    m = Material("neohookean", 1000.0, 1e5, 0.25)
    assert m.mu == pytest.approx(4e4)
    assert m.lam == pytest.approx(4e4)


@pytest.mark.parametrize("bad", [dict(poisson=0.5), dict(youngs=-1.0), dict(density=0.0)])
def test_material_validation(bad):
    args = dict(kind="arap", density=1000.0, youngs=1e5, poisson=0.3) | bad
    with pytest.raises(ValueError):
        Material(**args)


@pytest.mark.parametrize("kind", KINDS)
def test_psi_gradient_finite_difference(rng, kind):
    mu, lam = 3.0, 5.0
    h = 1e-5
    for F in random_F(rng, 20):
        g = psi_gradient(kind, F, mu, lam)
        fd = np.zeros_like(F)
        for idx in np.ndindex(F.shape):
            dF = np.zeros_like(F)
            dF[idx] = h
            fd[idx] = (psi(kind, F + dF, mu, lam) - psi(kind, F - dF, mu, lam)) / (2 * h)
        assert np.linalg.norm(fd - g) <= 1e-4 * np.linalg.norm(g)


@pytest.mark.parametrize("kind", KINDS)
def test_psi_gradient_finite_difference_membrane(rng, kind):
    mu, lam = 3.0, 5.0
    h = 1e-5
    for F in random_F(rng, 20, cols=2):
        g = psi_gradient(kind, F, mu, lam)
        fd = np.zeros_like(F)
        for idx in np.ndindex(F.shape):
            dF = np.zeros_like(F)
            dF[idx] = h
            fd[idx] = (psi(kind, F + dF, mu, lam) - psi(kind, F - dF, mu, lam)) / (2 * h)
        assert np.linalg.norm(fd - g) <= 1e-4 * np.linalg.norm(g)


@pytest.mark.parametrize("kind", KINDS)
def test_rest_and_rotations_have_zero_energy(kind):
    R = Rotation.from_rotvec([0.3, -1.1, 0.4]).as_matrix()
    assert psi(kind, np.eye(3), 2.0, 3.0) == pytest.approx(0.0, abs=1e-14)
    assert psi(kind, R, 2.0, 3.0) == pytest.approx(0.0, abs=1e-13)


# projections


def test_project_arap_examples():
    assert np.allclose(project_arap(np.eye(3)), np.eye(3), atol=1e-15)
    Rz = Rotation.from_euler("z", 30, degrees=True).as_matrix()
    np.testing.assert_allclose(project_arap(Rz), Rz, atol=1e-14)
    np.testing.assert_allclose(project_arap(np.diag([2.0, 0.5, 1.0])), np.eye(3), atol=1e-14)


def test_project_arap_is_optimal(rng):
    S = Rotation.random(1000, rng=rng).as_matrix()
    for F in random_F(rng, 10, min_det=0.0):
        R = project_arap(F)
        assert np.linalg.norm(R.T @ R - np.eye(3)) <= 1e-10
        assert abs(np.linalg.det(R) - 1.0) <= 1e-10
        best = np.linalg.norm(F - R)
        assert np.all(best <= np.linalg.norm(F[None] - S, axis=(1, 2)))


def test_project_arap_membrane_frame(rng):
    F = rng.uniform(0.5, 1.5, size=(3, 2))
    P = project_arap(F)
    np.testing.assert_allclose(P.T @ P, np.eye(2), atol=1e-12)


def test_corotational_projection_examples():
    R = Rotation.from_rotvec([0.2, 0.5, -0.3]).as_matrix()
    np.testing.assert_allclose(project_corotational(R, 1.0, 0.0, 2.0), R, atol=1e-10)
    np.testing.assert_allclose(project_corotational(np.eye(3), 1.0, 1.0, 2.0), np.eye(3), atol=1e-12)
    F = np.diag([1.2, 1.0, 1.0])
    p = project_corotational(F, 1.0, 1.0, 20.0)
    gap = np.linalg.norm(F - np.eye(3))
    assert 0 < np.linalg.norm(p - F) < gap
    assert 0 < np.linalg.norm(p - np.eye(3)) < gap


def test_neohookean_projection_examples():
    R = Rotation.from_rotvec([-0.4, 0.1, 0.9]).as_matrix()
    np.testing.assert_allclose(project_neohookean(np.eye(3), 1.0, 2.0, 2.0), np.eye(3), atol=1e-12)
    np.testing.assert_allclose(project_neohookean(R, 1.0, 2.0, 2.0), R, atol=1e-10)
    F = np.diag([2.0, 1.0, 1.0])
    dist = [np.linalg.norm(project_neohookean(F, 1.0, 2.0, w) - F) for w in (10.0, 100.0, 1000.0)]
    assert dist[0] > dist[1] > dist[2] > 0
    assert dist[2] < 1e-2


@pytest.mark.parametrize("kind", [MaterialKind.COROTATIONAL, MaterialKind.NEOHOOKEAN])
def test_projection_is_stationary(rng, kind):
    mu, lam, w = 1.0, 4.0, 2.0
    F = random_F(rng, 50, min_det=0.3)
    proj = project_corotational if kind is MaterialKind.COROTATIONAL else project_neohookean
    p, stats = proj(F, mu, lam, w, return_stats=True)
    grad = w * (p - F) + psi_gradient(kind, p, mu, lam)
    assert np.max(np.linalg.norm(grad, axis=(1, 2))) <= 1e-6 * w
    assert stats.n_unconverged == 0


# model construction and deformation gradients


def test_deformation_gradient_examples():
    model = single_tet()
    X = UNIT_TET
    R = Rotation.from_rotvec([0.1, 0.7, -0.2]).as_matrix()
    np.testing.assert_allclose(model.deformation_gradient(0, X), np.eye(3), atol=1e-15)
    np.testing.assert_allclose(model.deformation_gradient(0, X @ R.T), R, atol=1e-14)
    np.testing.assert_allclose(model.deformation_gradient(0, 2 * X), 2 * np.eye(3), atol=1e-14)


def test_cloth_rest_gradient_is_orthonormal_frame():
    model = FemModel.from_mesh(cloth_mesh((0.2, 0.1), (4, 2)), Material("neohookean", 1000.0, 1e5, 0.3))
    F = model.deformation_gradients(model.mesh.vertices)
    np.testing.assert_allclose(np.einsum("eki,ekj->eij", F, F), np.broadcast_to(np.eye(2), (F.shape[0], 2, 2)), atol=1e-12)


def test_degenerate_element_rejected():
    flat = UNIT_TET.copy()
    flat[3] = [0.5, 0.5, 0.0]
    mesh = Mesh(flat, np.array([[0, 1, 2, 3]]), np.zeros((0, 3), dtype=np.int64))
    with pytest.raises(DegenerateElementError):
        FemModel.from_mesh(mesh, Material("arap", 1000.0, 1e5, 0.3))


def test_lumped_mass_and_weights():
    model = single_tet("arap", E=1e5, nu=0.25)
    vol = 1.0 / 6.0
    np.testing.assert_allclose(model.mass, np.full(4, 1000.0 * vol / 4))
    assert model.weight[0] == pytest.approx(2 * 4e4 * vol)


def test_translation_invariance(rng):
    model = FemModel.from_mesh(box_tet_mesh((0.1, 0.1, 0.1), (2, 2, 2)), Material("neohookean", 1000.0, 1e5, 0.3))
    x = model.mesh.vertices + 0.01 * rng.standard_normal(model.mesh.vertices.shape)
    shifted = x + np.array([0.25, -1.5, 3.0])
    F0, F1 = model.deformation_gradients(x), model.deformation_gradients(shifted)
    np.testing.assert_allclose(F1, F0, rtol=0, atol=1e-12)
    p0, _ = model.local_step(F0)
    p1, _ = model.local_step(F1)
    np.testing.assert_allclose(p1, p0, rtol=0, atol=1e-10)
    assert model.elastic_energy(shifted) == pytest.approx(model.elastic_energy(x), rel=1e-10)


def test_multi_material_model():
    a = box_tet_mesh((0.1, 0.1, 0.1), (1, 1, 1))
    b = a.transformed(translation=[1.0, 0, 0])
    soft, stiff = Material("arap", 1000.0, 1e4, 0.3), Material("neohookean", 500.0, 1e6, 0.3)
    model, offsets = FemModel.from_meshes([(a, soft), (b, stiff)])
    assert list(offsets) == [0, a.n_vertices]
    ne = a.elements.shape[0]
    np.testing.assert_allclose(model.weight[:ne] * stiff.mu, model.weight[ne:] * soft.mu)
    x = model.mesh.vertices * 1.1
    expected = FemModel.from_mesh(a, soft).elastic_energy(a.vertices * 1.1) + FemModel.from_mesh(b, stiff).elastic_energy(b.vertices * 1.1)
    assert model.elastic_energy(x) == pytest.approx(expected, rel=1e-12)


# global system


def test_system_without_elements_is_mass():
    model = point_cloud(3)
    A = build_system(model, 0.01)
    np.testing.assert_array_equal(A.toarray(), mass_matrix(model).toarray())


def test_single_tet_system():
    model = single_tet().with_weights(1.0)
    A = build_full_system(model, 1.0).toarray()
    GtG = elastic_matrix(model).toarray()
    np.testing.assert_allclose(A, mass_matrix(model).toarray() + GtG, atol=1e-12)
    np.testing.assert_allclose(A, A.T, atol=0)
    np.testing.assert_allclose(GtG.sum(axis=1), 0.0, atol=1e-12)


def test_pinned_rows_are_identity():
    model = single_tet().with_pins([0])
    A = build_system(model, 0.01).toarray()
    np.testing.assert_array_equal(A[:3, :3], np.eye(3))
    assert np.all(A[:3, 3:] == 0) and np.all(A[3:, :3] == 0)


def test_build_system_rejects_bad_step():
    with pytest.raises(ValueError):
        build_system(single_tet(), 0.0)


def test_predict_examples():
    mass = np.array([2.0])
    x = np.array([[0.3, -0.2, 1.0]])
    np.testing.assert_array_equal(predict(x, np.zeros((1, 3)), np.zeros((1, 3)), 0.1, mass), x)
    s = predict(np.zeros((1, 3)), np.array([[0.0, 0.0, 1.0]]), np.zeros((1, 3)), 0.1, mass)
    np.testing.assert_allclose(s, [[0.0, 0.0, 0.1]])
    s = predict(np.zeros((1, 3)), np.zeros((1, 3)), np.array([[0.0, 0.0, -19.62]]), 0.1, mass)
    assert s[0, 2] == pytest.approx(-0.0981, rel=1e-14)


def test_rhs_without_elements_is_mass_times_s(rng):
    model = point_cloud(4, mass=np.array([1.0, 2.0, 3.0, 4.0]))
    s = rng.standard_normal((4, 3))
    np.testing.assert_allclose(assemble_rhs(model, s, np.zeros((0, 3, 3)), 0.01), (model.mass[:, None] * s).ravel())


def test_single_element_fixed_point(rng):
    model = single_tet()
    system = GlobalSystem.build(model, 0.01)
    x = UNIT_TET + 0.05 * rng.standard_normal((4, 3))
    p = model.deformation_gradients(x)
    out = system.solve(assemble_rhs(model, x, p, 0.01))
    np.testing.assert_allclose(out, x.ravel(), atol=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_local_global_fixed_point(rng, kind):
    h = 0.01
    model = FemModel.from_mesh(box_tet_mesh((0.1, 0.1, 0.1), (2, 2, 2)), Material(kind, 1000.0, 1e5, 0.3))
    system = GlobalSystem.build(model, h)
    x = model.mesh.vertices + 0.003 * rng.standard_normal(model.mesh.vertices.shape)
    assert np.all(np.linalg.det(model.deformation_gradients(x)) > 0)
    p, _ = model.local_step(model.deformation_gradients(x))
    elastic = assemble_rhs(model, np.zeros_like(x), p, h)
    # choose s so that x solves the global step for these projections
    s = ((system.A @ x.ravel() - elastic) / np.repeat(model.mass, 3)).reshape(-1, 3)
    p2, _ = model.local_step(model.deformation_gradients(x))
    x1 = system.solve(assemble_rhs(model, s, p2, h))
    np.testing.assert_allclose(x1, x.ravel(), atol=1e-9)


def test_impose_moves_pins():
    model = FemModel.from_mesh(box_tet_mesh((0.1, 0.1, 0.1), (1, 1, 1)), Material("arap", 1000.0, 1e5, 0.3), pins=[0, 1])
    system = GlobalSystem.build(model, 0.01)
    x = model.mesh.vertices.copy()
    targets = x[[0, 1]] + [0.0, 0.0, 0.01]
    s = x.copy()
    s[[0, 1]] = targets
    p = model.deformation_gradients(x)
    out = system.solve(system.impose(assemble_rhs(model, s, p, 0.01), targets)).reshape(-1, 3)
    np.testing.assert_allclose(out[[0, 1]], targets, atol=1e-15)


# energy


@pytest.mark.parametrize("kind", KINDS)
def test_energy_examples(rng, kind):
    model = FemModel.from_mesh(box_tet_mesh((0.1, 0.1, 0.1), (2, 2, 2)), Material(kind, 1000.0, 1e5, 0.3))
    X = model.mesh.vertices
    h = 0.01
    assert energy_eval(model, X, X, h) == pytest.approx(0.0, abs=1e-12)
    delta = 1e-3 * rng.standard_normal(X.shape)
    expected = 0.5 / h**2 * np.sum(model.mass[:, None] * delta**2)
    assert energy_eval(model, X, X + delta, h) == pytest.approx(expected, rel=1e-10)
    R = Rotation.from_rotvec([0.4, 0.2, -0.9]).as_matrix()
    xr = X @ R.T
    assert energy_eval(model, xr, xr, h) == pytest.approx(0.0, abs=1e-9)


# mesh I/O


def test_obj_round_trip(tmp_path):
    V = np.array([[0.1, 0.2, 1 / 3], [1.0, 0.0, 0.0], [np.pi, 1e-17, -2.5]])
    F = np.array([[0, 1, 2]])
    write_obj(tmp_path / "t.obj", V, F)
    lines = (tmp_path / "t.obj").read_text().splitlines()
    assert sum(ln.startswith("v ") for ln in lines) == 3
    assert sum(ln.startswith("f ") for ln in lines) == 1
    V2, F2 = read_obj(tmp_path / "t.obj")
    assert np.array_equal(V2, V) and np.array_equal(F2, F)
    mesh = load_mesh(tmp_path / "t.obj")
    assert mesh.kind == "tri"


def test_obj_quad_is_split(tmp_path):
    (tmp_path / "q.obj").write_text("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1/1 2/2 3/3 4/4\n")
    _, F = read_obj(tmp_path / "q.obj")
    assert F.tolist() == [[0, 1, 2], [0, 2, 3]]


@pytest.mark.parametrize("base", [0, 1])
def test_tetgen_round_trip(tmp_path, base):
    mesh = box_tet_mesh((0.1, 0.2, 0.3), (1, 2, 1))
    node, ele = write_tetgen(tmp_path / "bar", mesh.vertices, mesh.elements, base=base)
    V, T = read_tetgen(node, ele)
    assert np.array_equal(V, mesh.vertices)
    assert np.array_equal(T, mesh.elements)
    loaded = load_mesh(ele)
    assert loaded.kind == "tet" and loaded.elements.shape == mesh.elements.shape


def test_tet_mesh_orients_elements():
    mesh = tet_mesh(UNIT_TET, [[0, 2, 1, 3]])
    e = mesh.vertices[mesh.elements[0, 1:]] - mesh.vertices[mesh.elements[0, 0]]
    assert np.linalg.det(e) > 0
    assert mesh.faces.shape == (4, 3)


def test_box_surface_is_closed():
    mesh = box_tet_mesh((1.0, 1.0, 1.0), (2, 2, 2))
    edges = np.sort(np.concatenate([mesh.faces[:, [0, 1]], mesh.faces[:, [1, 2]], mesh.faces[:, [2, 0]]]), axis=1)
    _, counts = np.unique(edges, axis=0, return_counts=True)
    assert np.all(counts == 2)


def test_unknown_mesh_format(tmp_path):
    with pytest.raises(ValueError):
        load_mesh(tmp_path / "x.stl")
