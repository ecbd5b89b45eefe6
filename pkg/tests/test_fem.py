import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from driftlab import diskmesh, fem
from driftlab.fem import CellVectorField, CompatibilityError, DomainError, ScalarField


def cot_stiffness(mesh):
    """Dense stiffness from the cotangent formula, built edge by edge."""
    n = mesh.n_vertices
    K = np.zeros((n, n))
    for tri in mesh.triangles:
        for a in range(3):
            i, j, k = tri[(a + 1) % 3], tri[(a + 2) % 3], tri[a]
            u = mesh.vertices[i] - mesh.vertices[k]
            v = mesh.vertices[j] - mesh.vertices[k]
            cot = np.dot(u, v) / abs(u[0] * v[1] - u[1] * v[0])
            K[i, j] -= 0.5 * cot
            K[j, i] -= 0.5 * cot
            K[i, i] += 0.5 * cot
            K[j, j] += 0.5 * cot
    return K


@pytest.mark.parametrize("level", [0, 1, 2])
def test_stiffness_matches_cotangent_formula(meshes, level):
    m = meshes(level)
    np.testing.assert_allclose(fem.assemble_stiffness(m).toarray(), cot_stiffness(m), atol=1e-13)


def test_stiffness_structure(meshes):
    m = meshes(3)
    K = fem.assemble_stiffness(m)
    assert abs(K - K.T).max() < 1e-14
    np.testing.assert_allclose(K @ np.ones(m.n_vertices), 0.0, atol=1e-13)
    # energy of a linear function is |grad|^2 times the polygon area
    x = m.vertices[:, 0]
    assert x @ (K @ x) == pytest.approx(m.areas.sum(), rel=1e-13)
    eig = np.linalg.eigvalsh(K.toarray())
    assert abs(eig[0]) < 1e-12 and eig[1] > 1e-3


def test_dirichlet_eigenvalue_oracle(meshes):
    """Smallest Dirichlet eigenvalue approaches j_{0,1}^2 from above."""
    m = meshes(3)
    inner = m.interior_vertices
    K = fem.assemble_stiffness(m).toarray()[np.ix_(inner, inner)]
    M = fem.mass_matrix(m).toarray()[np.ix_(inner, inner)]
    from scipy.linalg import eigh

    lam = eigh(K, M, eigvals_only=True)[0]
    assert 5.7831 < lam < 5.7831 * 1.05


def test_mass_matrices(meshes):
    m = meshes(3)
    M = fem.mass_matrix(m)
    one = np.ones(m.n_vertices)
    assert one @ (M @ one) == pytest.approx(m.areas.sum(), rel=1e-14)
    np.testing.assert_allclose(M @ one, fem.lumped_mass(m), rtol=1e-13)


def test_stiffness_rejects_nonpositive_coefficient(meshes):
    m = meshes(1)
    c = np.ones(m.n_triangles)
    c[3] = 0.0
    with pytest.raises(DomainError):
        fem.assemble_stiffness(m, c)


def test_gradient_of_affine_is_exact(meshes):
    m = meshes(2)
    u = fem.interpolate(m, lambda x, y: 3 * x - 2 * y + 1)
    np.testing.assert_allclose(fem.gradient(u).values, np.tile([3.0, -2.0], (m.n_triangles, 1)), atol=1e-12)


def test_perp_identities(meshes, rng):
    m = meshes(2)
    u = ScalarField(m, rng.normal(size=m.n_vertices))
    g = fem.gradient(u)
    np.testing.assert_allclose(fem.perp(fem.perp(g)).values, -g.values)
    np.testing.assert_allclose(fem.perp(g).dot(g), 0.0, atol=1e-12)


def test_weak_divergence_is_adjoint_of_gradient(meshes, rng):
    m = meshes(3)
    g = CellVectorField(m, rng.normal(size=(m.n_triangles, 2)))
    u = ScalarField(m, rng.normal(size=m.n_vertices))
    lhs = fem.weak_divergence(g) @ u.values
    rhs = -np.sum(fem.gradient(u).dot(g) * m.areas)
    assert lhs == pytest.approx(rhs, rel=1e-12)


def test_divergence_load_of_constant_field_vanishes(meshes):
    m = meshes(3)
    g = CellVectorField(m, np.tile([0.7, -1.3], (m.n_triangles, 1)))
    np.testing.assert_allclose(fem.divergence_load(g), 0.0, atol=1e-13)


def test_divergence_theorem(meshes):
    m = meshes(4)
    b = fem.sample_cells(m, lambda x, y: (x, y))
    # the trace uses the adjacent cell value, so the total is within O(h) of 2 pi
    assert abs(fem.divergence_load(b).sum() - 2 * np.pi) < np.pi * m.h
    assert fem.boundary_integral(m, fem.boundary_trace(b)) == pytest.approx(fem.divergence_load(b).sum(), rel=1e-13)


def test_dirichlet_quadratic(meshes):
    errs, hs = [], []
    for level in (3, 4, 5):
        m = meshes(level)
        w = fem.solve_dirichlet(m, fem.cell_load(m, np.full(m.n_triangles, 4.0)))
        exact = fem.interpolate(m, lambda x, y: 1 - x * x - y * y)
        assert np.max(np.abs(w.values - exact.values)) <= 0.25 * m.h**2
        errs.append(fem.l2(w - exact))
        hs.append(m.h)
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert 1.8 <= order <= 2.2


def test_dirichlet_harmonic_data(meshes):
    m = meshes(3)
    w = fem.solve_dirichlet(m, np.zeros(m.n_vertices), lambda x, y: 2 * x - y + 0.5)
    np.testing.assert_allclose(w.values, 2 * m.vertices[:, 0] - m.vertices[:, 1] + 0.5, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(a=st.floats(-5, 5), b=st.floats(-5, 5))
def test_dirichlet_linearity(meshes, a, b):
    m = meshes(2)
    f1 = fem.cell_load(m, np.ones(m.n_triangles))
    f2 = fem.cell_load(m, m.centroids[:, 0])
    w1, w2 = fem.solve_dirichlet(m, f1), fem.solve_dirichlet(m, f2)
    w = fem.solve_dirichlet(m, a * f1 + b * f2)
    np.testing.assert_allclose(w.values, a * w1.values + b * w2.values, atol=1e-8 * (1 + abs(a) + abs(b)))


def test_neumann_recovers_x(meshes):
    m = meshes(4)
    g = diskmesh.boundary_geometry(m)
    w = fem.solve_neumann(m, np.zeros(m.n_vertices), g.normal[:, 0])
    np.testing.assert_allclose(w.values, m.vertices[:, 0] - fem.mean(fem.interpolate(m, lambda x, y: x)), atol=1e-8)
    assert abs(fem.integrate(w)) < 1e-12


def test_neumann_incompatible_data_raises(meshes):
    m = meshes(2)
    with pytest.raises(CompatibilityError) as info:
        fem.solve_neumann(m, np.zeros(m.n_vertices), 1.0)
    assert info.value.defect == pytest.approx(fem.boundary_integral(m, 1.0))


def test_neumann_constant_source_with_balancing_flux(meshes):
    # -Δw = 1, ∂w/∂ν = -1/2 has solution -r^2/4 + const
    m = meshes(4)
    w = fem.solve_neumann(m, fem.cell_load(m, np.ones(m.n_triangles)), -0.5, compat_tol=0.05)
    r2 = np.sum(m.vertices**2, axis=1)
    exact = -r2 / 4
    exact = exact - fem.mean(ScalarField(m, exact))
    assert fem.l2(w - ScalarField(m, exact)) < 5e-3


def test_norms(meshes):
    m = meshes(4)
    one = ScalarField(m, np.ones(m.n_vertices))
    n = fem.norms(one)
    assert n["l2"] == pytest.approx(np.sqrt(m.areas.sum()))
    assert n["linf"] == 1.0 and n["h1"] == 0.0
    x = fem.interpolate(m, lambda x, y: x)
    assert fem.h1(x) == pytest.approx(np.sqrt(m.areas.sum()))
    assert fem.l2(x) == pytest.approx(np.sqrt(np.pi / 4), rel=1e-2)


def test_evaluate_reproduces_affine(meshes, rng):
    m = meshes(3)
    u = fem.interpolate(m, lambda x, y: 1 + 2 * x - 3 * y)
    r = np.sqrt(rng.uniform(0, 0.95**2, 200))
    t = rng.uniform(0, 2 * np.pi, 200)
    pts = np.column_stack([r * np.cos(t), r * np.sin(t)])
    np.testing.assert_allclose(fem.evaluate(u, pts), 1 + 2 * pts[:, 0] - 3 * pts[:, 1], atol=1e-12)


def test_field_round_trip(meshes, tmp_path, rng):
    m = meshes(2)
    s = ScalarField(m, rng.normal(size=m.n_vertices))
    v = CellVectorField(m, rng.normal(size=(m.n_triangles, 2)))
    d = rng.normal(size=m.n_vertices)
    fem.write_field(s, tmp_path / "s")
    fem.write_field(v, tmp_path / "v")
    fem.write_field(d, tmp_path / "d", kind="dual")
    np.testing.assert_array_equal(fem.read_field(m, tmp_path / "s").values, s.values)
    np.testing.assert_array_equal(fem.read_field(m, tmp_path / "v").values, v.values)
    np.testing.assert_array_equal(fem.read_field(m, tmp_path / "d"), d)


def test_field_parse_error_names_line(meshes, tmp_path):
    m = meshes(0)
    p = tmp_path / "bad"
    p.write_text("diskfield v1\nvector 6\n1 2\n3 4\n5 oops\n")
    with pytest.raises(ValueError, match=":5:"):
        fem.read_field(m, p)


def test_fields_reject_bad_shapes(meshes):
    m = meshes(1)
    with pytest.raises(ValueError):
        ScalarField(m, np.zeros(3))
    with pytest.raises(ValueError):
        CellVectorField(m, np.full((m.n_triangles, 2), np.nan))
