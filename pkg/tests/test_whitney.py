import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

import primal_hodge.whitney as whitney
from primal_hodge.exterior_core import Simplex, ext_deriv, l2_inner
from primal_hodge.mesh import betti1, generate, level_mesh, refine
from primal_hodge.whitney import (
    build_space,
    curl_cr_to_p0,
    differential_matrix,
    discrete_harmonic_forms,
    format_matrix,
    gradient_incidence,
    hodge_decomposition_check,
    local_mass_matrices,
    mass_matrix,
    parse_matrix,
    whitney_cell_values,
)


@pytest.fixture(scope="module")
def square2():
    return generate("unit_square", 2)


def test_dof_counts(square2):
    assert build_space(square2, "edgeWhitney1").ndofs == 16
    assert build_space(square2, "crouzeixRaviart0").ndofs == 8
    assert build_space(square2, "lagrangeP1").ndofs == 9
    assert build_space(square2, "piecewiseP0").ndofs == 8
    with pytest.raises(ValueError):
        build_space(square2, "raviartThomas")


def test_whitney_unit_tangential_moment():
    mesh = generate("lshape", 4)
    space = build_space(mesh, "edgeWhitney1")
    s, w = np.polynomial.legendre.leggauss(3)
    t = 0.5 * (s + 1)
    for tri in (0, 7, 13):
        basis = space.local_basis(tri)
        for j in range(3):
            e = mesh.edges[mesh.tri_edges[tri, j]]
            a, b = mesh.vertices[e[0]], mesh.vertices[e[1]]
            pts = a + t[:, None] * (b - a)
            moment = 0.5 * np.sum(w * (basis[j](pts) @ (b - a)))
            assert moment == pytest.approx(1.0, abs=1e-13)


def test_tangential_continuity_at_midpoints():
    mesh = generate("square_with_hole", 3)
    space = build_space(mesh, "edgeWhitney1")
    for e in mesh.interior_edges[:40]:
        t0, t1 = mesh.edge_triangles[e]
        a, b = mesh.vertices[mesh.edges[e]]
        mid = 0.5 * (a + b)
        tang = b - a
        vals = []
        for t in (t0, t1):
            j = int(np.flatnonzero(mesh.tri_edges[t] == e)[0])
            vals.append(space.local_basis(t)[j](mid) @ tang)
        assert vals[0] == pytest.approx(vals[1], abs=1e-13)


def test_differential_matrices(square2):
    P1 = build_space(square2, "lagrangeP1")
    W1 = build_space(square2, "edgeWhitney1")
    P0 = build_space(square2, "piecewiseP0")
    d0 = differential_matrix(P1, W1)
    d1 = differential_matrix(W1, P0)
    assert abs(d1 @ d0).max() == 0.0
    row = d0[5].toarray().ravel()
    a, b = square2.edges[5]
    assert row[a] == -1 and row[b] == 1 and np.count_nonzero(row) == 2
    assert np.linalg.matrix_rank(d0.toarray()) == square2.num_vertices - 1
    # integer incidence behind d1
    scaled = (sp.diags(square2.areas) @ d1).toarray()
    assert np.allclose(scaled, np.round(scaled)) and set(np.unique(np.round(scaled))) <= {-1, 0, 1}
    with pytest.raises(ValueError):
        differential_matrix(P1, P0)


def test_gradient_of_p1_is_whitney_combination():
    # grad of a P1 function equals the Whitney field with coefficients d0 @ p
    mesh = generate("lshape", 4)
    rng = np.random.default_rng(0)
    p = rng.normal(size=mesh.num_vertices)
    u = gradient_incidence(mesh) @ p
    const, rot = whitney_cell_values(mesh, u)
    grad = np.einsum("fi,fic->fc", p[mesh.triangles], mesh.bary_gradients)
    assert np.allclose(const, grad, atol=1e-12)
    assert np.allclose(rot, 0, atol=1e-10)


def test_p0_and_p1_mass(square2):
    M0 = mass_matrix(build_space(square2, "piecewiseP0")).toarray()
    assert np.allclose(M0, np.diag(square2.areas))
    ref = generate("unit_square", 2)
    loc = local_mass_matrices(build_space(ref, "lagrangeP1"))[0]
    area = ref.areas[0]
    assert loc[0, 0] == pytest.approx(area / 6)
    assert loc[0, 1] == pytest.approx(area / 12)


@pytest.mark.parametrize("kind", ["lagrangeP1", "edgeWhitney1", "crouzeixRaviart0"])
def test_local_mass_matches_polyform_route(kind):
    mesh = generate("square_with_hole", 3)
    space = build_space(mesh, kind)
    loc = local_mass_matrices(space)
    for t in (0, 11, 50):
        T = Simplex(mesh.corners[t])
        basis = space.local_basis(t)
        signs = space.cell_signs[t]
        ref = np.array([[l2_inner(a, b, T) for b in basis] for a in basis]) * np.outer(signs, signs)
        assert np.allclose(loc[t], ref, rtol=1e-11, atol=1e-11 * np.abs(ref).max())


@pytest.mark.parametrize("kind", ["lagrangeP1", "edgeWhitney1", "crouzeixRaviart0", "piecewiseP0"])
def test_mass_spd(kind):
    for mesh in (generate("unit_square", 4), generate("square_with_hole", 3)):
        M = mass_matrix(build_space(mesh, kind)).toarray()
        assert np.allclose(M, M.T)
        assert np.linalg.eigvalsh(M)[0] > 0


def test_rot_of_whitney_matches_polyform():
    mesh = generate("unit_square", 3)
    space = build_space(mesh, "edgeWhitney1")
    D1 = differential_matrix(space, build_space(mesh, "piecewiseP0"))
    t = 4
    for j, e in enumerate(mesh.tri_edges[t]):
        form = space.local_basis(t)[j]
        rot = ext_deriv(form).component((1, 2))
        assert rot(mesh.centroids[t]) == pytest.approx(D1[t, e], rel=1e-12)


def test_harmonic_forms_dimensions():
    assert len(discrete_harmonic_forms(generate("unit_square", 4))) == 0
    assert len(discrete_harmonic_forms(generate("lshape", 4))) == 0
    for m in (3, 4):
        mesh = generate("square_with_hole", m)
        H = discrete_harmonic_forms(mesh)
        assert len(H) == betti1(mesh) == 1


def test_harmonic_forms_defining_conditions():
    mesh = generate("square_with_hole", 3)
    H = discrete_harmonic_forms(mesh)
    W1 = build_space(mesh, "edgeWhitney1")
    M1 = mass_matrix(W1)
    d1 = differential_matrix(W1, build_space(mesh, "piecewiseP0"))
    u = H.coefficients[:, 0]
    assert np.abs(d1 @ u).max() <= 1e-10
    assert np.abs(gradient_incidence(mesh).T @ (M1 @ u)).max() <= 1e-10
    assert u @ (M1 @ u) == pytest.approx(1.0, rel=1e-12)


def test_harmonic_sparse_route_agrees(monkeypatch):
    mesh = generate("square_with_hole", 3)
    dense = discrete_harmonic_forms(mesh)
    monkeypatch.setattr(whitney, "DENSE_LIMIT", 10)
    sparse = discrete_harmonic_forms(mesh)
    M1 = mass_matrix(build_space(mesh, "edgeWhitney1"))
    overlap = dense.coefficients.T @ (M1 @ sparse.coefficients)
    assert abs(overlap[0, 0]) == pytest.approx(1.0, abs=1e-8)


def test_harmonic_form_is_circulating():
    # the harmonic field of the annulus has nonzero circulation around the hole
    mesh = generate("square_with_hole", 3)
    vals = discrete_harmonic_forms(mesh).cell_values()[0]
    c = mesh.centroids - 1.5
    tangential = c[:, 0] * vals[:, 1] - c[:, 1] * vals[:, 0]
    assert np.all(np.sign(tangential) == np.sign(tangential[0]))


@pytest.mark.parametrize(
    "domain,m", [("unit_square", 2), ("unit_square", 8), ("lshape", 4), ("lshape", 8), ("square_with_hole", 3)]
)
def test_hodge_decomposition(domain, m):
    mesh = generate(domain, m)
    report = hodge_decomposition_check(mesh)
    assert report.rank_gradients == mesh.num_vertices - 1
    assert report.harmonic_dim == betti1(mesh)
    assert report.rank_curls == len(mesh.interior_edges)
    assert report.rank_sum == 2 * mesh.num_triangles
    assert report.max_orthogonality <= 1e-10
    assert report.ok()


def test_hodge_unit_square_counts(square2):
    r = hodge_decomposition_check(square2)
    assert (r.rank_gradients, r.harmonic_dim, r.rank_curls, r.total_dim) == (8, 0, 8, 16)


def test_whitney_cr_duality():
    # sum_T <rot u, eta> - <u, curl eta> vanishes for Whitney u and CR0 eta
    mesh = generate("square_with_hole", 3)
    W1 = build_space(mesh, "edgeWhitney1")
    rng = np.random.default_rng(5)
    u = rng.normal(size=W1.ndofs)
    eta = rng.normal(size=len(mesh.interior_edges))
    const, rot = whitney_cell_values(mesh, u)
    cr = build_space(mesh, "crouzeixRaviart0")
    eta_loc = np.where(cr.cell_dofs >= 0, eta[np.maximum(cr.cell_dofs, 0)], 0.0)
    eta_mean = eta_loc.sum(axis=1) / 3.0  # mean of 1 - 2 lambda_j is 1/3
    lhs = np.sum(rot * eta_mean * mesh.areas)
    curl = (curl_cr_to_p0(mesh) @ eta).reshape(-1, 2)
    # the Whitney field is its centroid value plus a mean-free part, and curl eta is constant per cell
    rhs = np.sum(np.einsum("fc,fc->f", const, curl) * mesh.areas)
    assert lhs == pytest.approx(rhs, abs=1e-10 * max(abs(lhs), 1))


def test_whitney_poincare_constant_bounded():
    # smallest nonzero generalized singular value of d1 against the Whitney mass
    ratios = []
    mesh = level_mesh("unit_square", 2)
    for _ in range(3):
        W1 = build_space(mesh, "edgeWhitney1")
        M1 = mass_matrix(W1).toarray()
        D1 = differential_matrix(W1, build_space(mesh, "piecewiseP0"))
        K = (D1.T @ sp.diags(mesh.areas) @ D1).toarray()
        w = scipy.linalg.eigh(K, M1, eigvals_only=True)
        w = w[w > 1e-8 * w[-1]]
        ratios.append(1 / np.sqrt(w[0]))
        mesh = refine(mesh)
    assert max(ratios) / min(ratios) < 1.2


def test_matrix_dump_round_trip(tmp_path):
    M = mass_matrix(build_space(generate("unit_square", 2), "edgeWhitney1"))
    text = format_matrix(M)
    rows, cols, nnz = map(int, text.splitlines()[0].split())
    assert (rows, cols, nnz) == (16, 16, M.nnz)
    again = parse_matrix(text)
    assert (again != M).nnz == 0
    path = tmp_path / "m.txt"
    whitney.dump_matrix(M, path)
    assert path.read_text() == text
